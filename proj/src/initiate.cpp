#include "fracount/initiate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "fracount/logistic.hpp"

namespace fracount::initiate {
namespace {

constexpr double kRidge = 1e-4;

Mat erroneous_design(const std::vector<PersonRecord>& pd,
                     const std::vector<std::size_t>& rows) {
  const int d = rows.empty() ? 0 : static_cast<int>(pd[rows[0]].covariates.size());
  Mat x(rows.size(), d + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(i, 0) = 1.0;
    x.row(i).tail(d) = pd[rows[i]].covariates.transpose();
  }
  return x;
}

std::vector<double> predict_theta(const ParamState& model,
                                  const std::vector<PersonRecord>& pd) {
  std::vector<double> theta(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k) {
    Vec x(pd[k].covariates.size() + 1);
    x[0] = 1.0;
    x.tail(pd[k].covariates.size()) = pd[k].covariates;
    theta[k] = logit::BinaryLogit::predict(model.beta_hat, x);
  }
  return theta;
}

ParamState fit_erroneous(Mat x, Eigen::VectorXi y, Vec weights) {
  logit::BinaryLogit lik(std::move(x), std::move(y), std::move(weights));
  logit::NewtonOptions opts;
  opts.ridge = kRidge;
  auto fit = logit::maximize(lik, Vec::Zero(lik.dim()), std::nullopt, opts);
  ParamState st;
  st.beta_hat = fit.beta;
  st.sigma_hat = fit.cov;
  st.kind = "erroneous";
  st.ridge = kRidge;
  st.converged = fit.converged;
  return st;
}

// theta scaled by one national factor towards sum(theta) = target, clipped
double scale_theta(std::vector<double>& theta, double target, double* factor_out) {
  double cur = std::accumulate(theta.begin(), theta.end(), 0.0);
  double factor = 1.0;
  if (target <= 0.0) {
    factor = 0.0;
  } else if (cur > 0.0) {
    factor = target / cur;
  }
  double sum = 0.0;
  for (auto& t : theta) {
    t = std::clamp(t * factor, 0.0, 1.0);
    sum += t;
  }
  if (factor_out) *factor_out = factor;
  return target - sum;  // residual after clipping
}

}  // namespace

ParamState fit_placement(const std::vector<PersonRecord>& core) {
  std::vector<logit::PlacementObs> obs;
  for (const auto& rec : core) {
    auto o = logit::placement_obs(rec);
    if (o) obs.push_back(std::move(*o));
  }
  if (obs.empty()) throw InitiationError("fit_placement: empty core, nothing is labelled");
  const int d_a = static_cast<int>(obs[0].address_features.cols());
  const int d_z = static_cast<int>(obs[0].z.size());
  logit::PlacementLogit lik(std::move(obs), d_a, d_z);
  if (static_cast<int>(lik.observations().size()) < lik.dim())
    throw InitiationError("fit_placement: under-identified, " +
                          std::to_string(lik.observations().size()) + " labelled records for " +
                          std::to_string(lik.dim()) + " parameters");
  logit::NewtonOptions opts;
  opts.ridge = kRidge;
  auto fit = logit::maximize(lik, Vec::Zero(lik.dim()), std::nullopt, opts);
  ParamState st;
  st.beta_hat = fit.beta;
  st.sigma_hat = fit.cov;
  st.kind = "placement";
  st.ridge = kRidge;
  st.converged = fit.converged;
  return st;
}

FractionalCounter predict_counter(const ParamState& placement, const PersonRecord& rec) {
  Vec p = logit::PlacementLogit::probabilities(placement.beta_hat, rec.address_features,
                                               rec.covariates);
  FractionalCounter c;
  c.mu = p.head(rec.q());
  c.xi = p[rec.q()];
  return c;
}

std::vector<double> apply_erroneous(const ParamState& erroneous,
                                    const std::vector<PersonRecord>& pd) {
  return predict_theta(erroneous, pd);
}

std::vector<double> default_inscope_score(const std::vector<PersonRecord>& pd) {
  std::vector<std::size_t> core_rows;
  for (std::size_t k = 0; k < pd.size(); ++k)
    if (pd[k].core) core_rows.push_back(k);
  if (core_rows.empty()) throw InitiationError("default_inscope_score: empty core");
  const int d = static_cast<int>(pd[core_rows[0]].covariates.size());
  Vec mean = Vec::Zero(d);
  for (auto k : core_rows) mean += pd[k].covariates;
  mean /= static_cast<double>(core_rows.size());
  Mat cov = Mat::Identity(d, d) * 1e-6;
  for (auto k : core_rows) {
    Vec c = pd[k].covariates - mean;
    cov.noalias() += c * c.transpose() / static_cast<double>(core_rows.size());
  }
  Eigen::LDLT<Mat> ldlt(cov);
  std::vector<double> score(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k) {
    Vec c = pd[k].covariates - mean;
    score[k] = -c.dot(ldlt.solve(c));
  }
  return score;
}

std::vector<double> estimate_theta_subset(const std::vector<PersonRecord>& pd, double n_hat,
                                          const std::vector<double>& score,
                                          ParamState* model_out) {
  if (score.size() != pd.size())
    throw std::invalid_argument("estimate_theta_subset: score size mismatch");
  std::int64_t core_in = 0;
  std::vector<std::size_t> non_core;
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (pd[k].core)
      ++core_in;
    else
      non_core.push_back(k);
  }
  std::int64_t budget = static_cast<std::int64_t>(std::llround(n_hat)) - core_in;
  if (budget < 0)
    throw InitiationError("estimate_theta_subset: census estimate below core in-scope count");
  std::sort(non_core.begin(), non_core.end(),
            [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<std::size_t> rows;
  std::vector<int> label;  // 1 = erroneous
  for (std::size_t k = 0; k < pd.size(); ++k)
    if (pd[k].core) {
      rows.push_back(k);
      label.push_back(0);
    }
  for (std::size_t i = 0; i < non_core.size(); ++i) {
    rows.push_back(non_core[i]);
    label.push_back(static_cast<std::int64_t>(i) < budget ? 0 : 1);
  }
  Eigen::VectorXi y(label.size());
  for (std::size_t i = 0; i < label.size(); ++i) y[i] = label[i];
  auto model = fit_erroneous(erroneous_design(pd, rows), y, {});
  if (model_out) *model_out = model;
  return predict_theta(model, pd);
}

std::vector<double> estimate_theta_hypercube(const std::vector<PersonRecord>& pd,
                                             const Hypercube& hypercube,
                                             std::vector<std::string>* warnings) {
  if (!hypercube.cell_of)
    throw std::invalid_argument("estimate_theta_hypercube: missing cell function");
  std::map<int, double> count;
  for (const auto& rec : pd) count[hypercube.cell_of(rec)] += 1.0;
  std::map<int, double> theta_cell;
  for (const auto& [cell, cnt] : count) {
    auto it = hypercube.estimate.find(cell);
    if (it == hypercube.estimate.end()) {
      theta_cell[cell] = 0.0;
      if (warnings)
        warnings->push_back("hypercube cell " + std::to_string(cell) +
                            " has no estimate; theta set to 0");
    } else {
      theta_cell[cell] = std::max(0.0, 1.0 - it->second / cnt);
    }
  }
  if (warnings)
    for (const auto& [cell, est] : hypercube.estimate)
      if (!count.count(cell))
        warnings->push_back("hypercube cell " + std::to_string(cell) + " is empty in the PD");
  std::vector<double> theta(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k) theta[k] = theta_cell[hypercube.cell_of(pd[k])];
  return theta;
}

std::vector<double> estimate_theta_sample(const std::vector<PersonRecord>& pd,
                                          const ThetaSample& sample,
                                          std::vector<std::string>* warnings,
                                          ParamState* model_out) {
  if (sample.indices.size() != sample.pi.size() ||
      sample.indices.size() != sample.in_scope.size())
    throw std::invalid_argument("estimate_theta_sample: ragged sample");
  std::vector<std::size_t> rows;
  std::vector<int> label;
  std::vector<double> weight;
  for (std::size_t k = 0; k < pd.size(); ++k)
    if (pd[k].core) {
      rows.push_back(k);
      label.push_back(0);
      weight.push_back(1.0);
    }
  for (std::size_t i = 0; i < sample.indices.size(); ++i) {
    if (!(sample.pi[i] > 0.0))
      throw std::invalid_argument("estimate_theta_sample: zero inclusion probability");
    rows.push_back(sample.indices[i]);
    label.push_back(sample.in_scope[i] ? 0 : 1);
    weight.push_back(1.0 / sample.pi[i]);
  }
  if (sample.indices.empty() && warnings)
    warnings->push_back("theta sample is empty; falling back to a core-only fit");
  if (rows.empty()) throw InitiationError("estimate_theta_sample: no labelled records at all");
  Eigen::VectorXi y(label.size());
  Vec w(weight.size());
  for (std::size_t i = 0; i < label.size(); ++i) {
    y[i] = label[i];
    w[i] = weight[i];
  }
  auto model = fit_erroneous(erroneous_design(pd, rows), y, w);
  if (model_out) *model_out = model;
  return predict_theta(model, pd);
}

BenchmarkReport benchmark(std::vector<FractionalCounter>& counters,
                          const std::vector<PersonRecord>& pd,
                          const std::vector<Locality>& localities,
                          const BenchmarkTargets& targets, const BenchmarkOptions& opts) {
  if (counters.size() != pd.size())
    throw std::invalid_argument("benchmark: one counter per record required");
  const std::size_t m = localities.size();
  if (targets.locality.size() != m)
    throw std::invalid_argument("benchmark: one target per locality required");

  BenchmarkReport rep;
  {
    std::vector<double> theta(counters.size());
    for (std::size_t k = 0; k < counters.size(); ++k) theta[k] = counters[k].theta;
    rep.theta_residual =
        scale_theta(theta, targets.n_p - targets.n_hat_national, &rep.theta_factor);
    for (std::size_t k = 0; k < counters.size(); ++k) counters[k].theta = theta[k];
  }

  auto locality_index = [&](AddressId a) {
    for (std::size_t i = 0; i < m; ++i)
      if (localities[i].contains(a)) return static_cast<int>(i);
    throw std::invalid_argument("benchmark: address in no locality");
  };
  // cache address -> locality per person
  std::vector<std::vector<int>> loc_of(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k) {
    loc_of[k].resize(pd[k].q());
    for (int j = 0; j < pd[k].q(); ++j) loc_of[k][j] = locality_index(pd[k].sol_addresses[j]);
  }

  auto current = [&]() {
    std::vector<double> cur(m, 0.0);
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const double w = 1.0 - counters[k].theta;
      for (int j = 0; j < pd[k].q(); ++j) cur[loc_of[k][j]] += w * counters[k].mu[j];
    }
    return cur;
  };

  // feasibility: compare targets with the attainable mass
  {
    double total_weight = 0.0;
    std::vector<double> attainable(m, 0.0);
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const double w = 1.0 - counters[k].theta;
      total_weight += w;
      std::vector<bool> seen(m, false);
      for (int j = 0; j < pd[k].q(); ++j)
        if (!seen[loc_of[k][j]]) {
          seen[loc_of[k][j]] = true;
          attainable[loc_of[k][j]] += w;
        }
    }
    double target_sum = std::accumulate(targets.locality.begin(), targets.locality.end(), 0.0);
    if (target_sum > total_weight + 1e-9)
      throw InitiationError("benchmark infeasible: locality targets sum to " +
                            std::to_string(target_sum) + " but attainable mass is " +
                            std::to_string(total_weight));
    for (std::size_t i = 0; i < m; ++i)
      if (targets.locality[i] > attainable[i] + 1e-9)
        throw InitiationError("benchmark infeasible: locality " + std::to_string(i + 1) +
                              " target " + std::to_string(targets.locality[i]) +
                              " exceeds attainable mass " + std::to_string(attainable[i]));
  }

  rep.pre_totals = current();
  const double tol = opts.rel_tol * std::max(1.0, targets.n_hat_national);
  for (int it = 0; it < opts.max_iter; ++it) {
    rep.iterations = it + 1;
    auto cur = current();
    std::vector<double> factor(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
      if (targets.locality[i] <= 0.0) {
        factor[i] = 0.0;
      } else if (cur[i] <= 0.0) {
        throw InitiationError("benchmark infeasible: locality " + std::to_string(i + 1) +
                              " has zero mass but positive target");
      } else {
        factor[i] = targets.locality[i] / cur[i];
      }
    }
    for (std::size_t k = 0; k < pd.size(); ++k) {
      auto& c = counters[k];
      for (int j = 0; j < pd[k].q(); ++j) c.mu[j] *= factor[loc_of[k][j]];
      double s = c.mu.sum();
      if (s > 1.0) {
        c.mu /= s;
        c.xi = 0.0;
      } else {
        c.xi = 1.0 - s;
      }
    }
    cur = current();
    rep.max_violation = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      rep.max_violation = std::max(rep.max_violation, std::abs(cur[i] - targets.locality[i]));
    if (rep.max_violation < tol) {
      rep.converged = true;
      rep.post_totals = cur;
      return rep;
    }
  }
  rep.post_totals = current();
  return rep;
}

double dual_system_estimate(std::int64_t n1, std::int64_t n2, std::int64_t n12) {
  if (n12 < 1) throw std::invalid_argument("dual_system_estimate: n12 must be >= 1");
  if (n12 > std::min(n1, n2))
    throw std::invalid_argument("dual_system_estimate: n12 exceeds a list count");
  return static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n12);
}

InitiationResult initiate_all(const std::vector<PersonRecord>& pd,
                              const synth::CensusResult& census,
                              const std::vector<Locality>& localities, ThetaMethod method,
                              const Hypercube* hypercube, const ThetaSample* sample) {
  InitiationResult res;
  std::vector<PersonRecord> core;
  for (const auto& rec : pd)
    if (rec.core) core.push_back(rec);
  if (core.empty())
    throw InitiationError("initiate_all: empty core (link rate too low?); cannot fit models");

  res.placement = fit_placement(core);
  res.counters.reserve(pd.size());
  for (const auto& rec : pd) res.counters.push_back(predict_counter(res.placement, rec));

  std::vector<double> theta;
  switch (method) {
    case ThetaMethod::Subset:
      theta = estimate_theta_subset(pd, census.n_hat_national, default_inscope_score(pd),
                                    &res.erroneous);
      break;
    case ThetaMethod::Hypercube:
      if (!hypercube) throw std::invalid_argument("initiate_all: hypercube required");
      theta = estimate_theta_hypercube(pd, *hypercube, &res.warnings);
      break;
    case ThetaMethod::Sample:
      if (!sample) throw std::invalid_argument("initiate_all: theta sample required");
      theta = estimate_theta_sample(pd, *sample, &res.warnings, &res.erroneous);
      break;
  }
  for (std::size_t k = 0; k < pd.size(); ++k) res.counters[k].theta = theta[k];

  // locality targets: census shares applied to the placed mass that remains
  // after the national theta constraint, so the displaced mass is preserved
  std::vector<double> theta_scaled = theta;
  scale_theta(theta_scaled, static_cast<double>(census.n_p) - census.n_hat_national, nullptr);
  double placed_total = 0.0;
  for (std::size_t k = 0; k < pd.size(); ++k)
    placed_total += (1.0 - theta_scaled[k]) * res.counters[k].mu.sum();
  BenchmarkTargets targets;
  targets.n_hat_national = census.n_hat_national;
  targets.n_p = static_cast<double>(census.n_p);
  targets.locality.resize(localities.size());
  for (std::size_t i = 0; i < localities.size(); ++i)
    targets.locality[i] =
        census.n_hat_national > 0 ? census.n_hat[i] / census.n_hat_national * placed_total : 0.0;
  res.report = benchmark(res.counters, pd, localities, targets);
  res.undercoverage_diagnostic = static_cast<double>(census.n_l - census.n_c);
  return res;
}

}  // namespace fracount::initiate
