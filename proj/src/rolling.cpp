#include "fracount/rolling.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include <Eigen/Cholesky>

namespace fracount::rolling {

LabelledSet partition_labels(const std::vector<PersonRecord>& pd,
                             const synth::UpdateBatch& batch) {
  std::unordered_set<PersonId> in_survey(batch.survey_ids.begin(), batch.survey_ids.end());
  std::unordered_set<PersonId> in_refresh(batch.refreshed_ids.begin(),
                                          batch.refreshed_ids.end());
  LabelledSet out;
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (in_survey.count(pd[k].id))
      out.survey.push_back(k);
    else if (in_refresh.count(pd[k].id))
      out.refreshed.push_back(k);
    else if (pd[k].label)
      out.stale.push_back(k);
  }
  return out;
}

ParamState ebp_update(const ParamState& state, const logit::LogLikelihood* lik,
                      const EbpOptions& opts, EbpReport* report) {
  ParamState next = state;
  next.epoch = state.epoch + 1;
  if (!lik) {
    if (report) *report = EbpReport{};
    return next;  // no updated observations: prior carried forward
  }
  if (lik->dim() != state.beta_hat.size())
    throw std::invalid_argument("ebp_update: likelihood/state dimension mismatch");
  logit::GaussianPrior prior;
  prior.mean = state.beta_hat;
  prior.cov = state.sigma_hat;
  if (opts.drift_inflation > 0.0)
    prior.cov.diagonal().array() += opts.drift_inflation;
  logit::NewtonOptions nopts;
  nopts.max_iter = opts.max_iter;
  nopts.grad_tol = opts.grad_tol;
  auto fit = logit::maximize(*lik, state.beta_hat, prior, nopts);
  if (!fit.converged)
    throw std::runtime_error("ebp_update: no convergence after " +
                             std::to_string(fit.iterations) + " iterations, |grad| = " +
                             std::to_string(fit.grad_norm));
  next.beta_hat = fit.beta;
  next.sigma_hat = fit.cov;
  next.converged = fit.converged;
  if (report) {
    report->converged = fit.converged;
    report->iterations = fit.iterations;
    report->grad_norm = fit.grad_norm;
  }
  return next;
}

ParamState ebp_update_placement(const ParamState& state,
                                const std::vector<PersonRecord>& d_records,
                                const EbpOptions& opts, EbpReport* report) {
  std::vector<logit::PlacementObs> obs;
  for (const auto& rec : d_records) {
    auto o = logit::placement_obs(rec);
    if (o) obs.push_back(std::move(*o));
  }
  if (obs.empty()) return ebp_update(state, nullptr, opts, report);
  const int d_a = static_cast<int>(obs[0].address_features.cols());
  const int d_z = static_cast<int>(obs[0].z.size());
  logit::PlacementLogit lik(std::move(obs), d_a, d_z);
  return ebp_update(state, &lik, opts, report);
}

std::vector<FractionalCounter> apply_model(const ParamState& state,
                                           const std::vector<PersonRecord>& pd,
                                           int beta_draws, RngStream* rng) {
  std::vector<Vec> betas;
  if (beta_draws > 0) {
    if (!rng) throw std::invalid_argument("apply_model: beta_draws > 0 needs an rng");
    Eigen::LLT<Mat> llt(state.sigma_hat +
                        1e-12 * Mat::Identity(state.sigma_hat.rows(), state.sigma_hat.cols()));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("apply_model: sigma_hat is not positive semi-definite");
    Mat l = llt.matrixL();
    for (int s = 0; s < beta_draws; ++s) {
      Vec z(state.beta_hat.size());
      for (int j = 0; j < z.size(); ++j) z[j] = rng->normal();
      betas.push_back(state.beta_hat + l * z);
    }
  } else {
    betas.push_back(state.beta_hat);
  }

  std::vector<FractionalCounter> counters;
  counters.reserve(pd.size());
  for (const auto& rec : pd) {
    if (rec.covariates.size() + rec.address_features.cols() + 1 != state.beta_hat.size())
      throw std::invalid_argument("apply_model: covariate dimension mismatch for record " +
                                  std::to_string(rec.id));
    Vec p = Vec::Zero(rec.q() + 1);
    for (const auto& b : betas)
      p += logit::PlacementLogit::probabilities(b, rec.address_features, rec.covariates);
    p /= static_cast<double>(betas.size());
    FractionalCounter c;
    c.mu = p.head(rec.q());
    c.xi = p[rec.q()];
    counters.push_back(std::move(c));
  }
  return counters;
}

ResidencyState residency_update(const ResidencyState& state, const Vec& x_scores) {
  if (state.d < 0.0 || state.g < 0.0 || state.d + state.g > 1.0)
    throw std::invalid_argument("residency_update: need d >= 0, g >= 0, d + g <= 1");
  if (x_scores.size() != state.r.size())
    throw std::invalid_argument("residency_update: score length mismatch");
  for (int k = 0; k < x_scores.size(); ++k)
    if (!(x_scores[k] >= 0.0 && x_scores[k] <= 1.0))
      throw std::invalid_argument("residency_update: scores must lie in [0,1]");
  ResidencyState next = state;
  next.r = state.d * state.r + state.g * x_scores;
  next.epoch = state.epoch + 1;
  return next;
}

std::vector<double> dbe_update(const std::vector<double>& counts,
                               const DbeComponents& components,
                               std::vector<std::string>* warnings) {
  const std::size_t m = counts.size();
  if (components.births.size() != m || components.deaths.size() != m ||
      components.net_internal.size() != m || components.net_external.size() != m)
    throw std::invalid_argument("dbe_update: component length mismatch");
  std::vector<double> next(m);
  for (std::size_t i = 0; i < m; ++i) {
    next[i] = counts[i] + components.births[i] - components.deaths[i] +
              components.net_internal[i] + components.net_external[i];
    if (next[i] < 0.0 && warnings)
      warnings->push_back("dbe_update: locality " + std::to_string(i + 1) +
                          " count went negative (" + std::to_string(next[i]) + ")");
  }
  return next;
}

std::vector<double> carry_weights(const std::vector<double>& weights,
                                  const std::vector<int>& locality,
                                  const std::vector<std::pair<std::size_t, int>>& moves) {
  if (weights.size() != locality.size())
    throw std::invalid_argument("carry_weights: weights/locality size mismatch");
  // pre-move mean weight per locality
  std::vector<double> sum, cnt;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    int loc = locality[k];
    if (loc < 1) throw std::invalid_argument("carry_weights: bad locality id");
    if (static_cast<std::size_t>(loc) > sum.size()) {
      sum.resize(loc, 0.0);
      cnt.resize(loc, 0.0);
    }
    sum[loc - 1] += weights[k];
    cnt[loc - 1] += 1.0;
  }
  std::vector<double> out = weights;
  for (const auto& [idx, dest] : moves) {
    if (idx >= out.size()) throw std::invalid_argument("carry_weights: bad record index");
    if (dest < 1 || static_cast<std::size_t>(dest) > sum.size() || cnt[dest - 1] == 0.0)
      throw std::invalid_argument("carry_weights: unknown destination locality " +
                                  std::to_string(dest));
    out[idx] = sum[dest - 1] / cnt[dest - 1];
  }
  return out;
}

}  // namespace fracount::rolling
