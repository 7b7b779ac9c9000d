#include "fracount/counting.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace fracount::counting {
namespace {

int locality_of(AddressId a, const std::vector<Locality>& localities) {
  for (const auto& loc : localities)
    if (loc.contains(a)) return loc.index;
  throw std::invalid_argument("counting: address " + std::to_string(a) +
                              " belongs to no locality");
}

void check_sizes(const std::vector<PersonRecord>& pd,
                 const std::vector<FractionalCounter>& counters) {
  if (pd.size() != counters.size())
    throw std::invalid_argument("counting: one counter per record required");
}

// mu' delta(a_k in A_i) for every locality at once
std::vector<double> placed_mass(const PersonRecord& rec, const Vec& mu,
                                const std::vector<Locality>& localities) {
  std::vector<double> mass(localities.size(), 0.0);
  for (int j = 0; j < rec.q(); ++j)
    mass[locality_of(rec.sol_addresses[j], localities) - 1] += mu[j];
  return mass;
}

}  // namespace

Eigen::VectorXi classify(const PersonRecord& record, const FractionalCounter& counter,
                         TieRule) {
  if (counter.mu.size() == 0) throw std::invalid_argument("classify: empty mu");
  if (counter.mu.size() != record.q())
    throw std::invalid_argument("classify: mu length does not match q");
  int best = 0;
  for (int j = 1; j < counter.mu.size(); ++j)
    if (counter.mu[j] > counter.mu[best]) best = j;  // ties keep the lowest index
  Eigen::VectorXi y = Eigen::VectorXi::Zero(record.q());
  y[best] = 1;
  return y;
}

CountEstimate count_classifier(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities) {
  check_sizes(pd, counters);
  CountEstimate est;
  est.method = CountMethod::Classifier;
  est.totals.assign(localities.size(), 0.0);
  est.variances.assign(localities.size(), 0.0);
  for (std::size_t k = 0; k < pd.size(); ++k) {
    auto y = classify(pd[k], counters[k]);
    for (int j = 0; j < pd[k].q(); ++j)
      if (y[j]) est.totals[locality_of(pd[k].sol_addresses[j], localities) - 1] += 1.0;
  }
  return est;
}

CountEstimate count_fractional(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities,
                               const FractionalOptions& opts) {
  check_sizes(pd, counters);
  CountEstimate est;
  est.method = CountMethod::Fractional;
  est.totals.assign(localities.size(), 0.0);
  est.variances.assign(localities.size(), 0.0);
  // per-family sums of standard deviations, for the perfectly-correlated bound
  std::vector<std::map<std::int64_t, double>> family_sd(localities.size());
  for (std::size_t k = 0; k < pd.size(); ++k) {
    auto mass = placed_mass(pd[k], counters[k].mu, localities);
    for (std::size_t i = 0; i < localities.size(); ++i) {
      est.totals[i] += mass[i];
      double v = mass[i] * (1.0 - mass[i]);
      if (opts.cluster_by_family && pd[k].family >= 0)
        family_sd[i][pd[k].family] += std::sqrt(std::max(0.0, v));
      else
        est.variances[i] += v;
    }
  }
  if (opts.cluster_by_family)
    for (std::size_t i = 0; i < localities.size(); ++i)
      for (const auto& [fam, sd] : family_sd[i]) est.variances[i] += sd * sd;
  return est;
}

CountEstimate count_with_theta(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities,
                               const ThetaOptions& opts) {
  check_sizes(pd, counters);
  const std::size_t m = localities.size();
  CountEstimate est;
  est.method = CountMethod::FractionalTheta;
  est.totals.assign(m, 0.0);
  est.variances.assign(m, 0.0);

  auto stratum_of = [&](const PersonRecord& rec) {
    return opts.stratum ? opts.stratum(rec) : 0;
  };

  // pass 1: placed mass per (stratum, locality) for the xi allocation shares
  std::map<int, std::vector<double>> stratum_mass;
  std::vector<std::vector<double>> person_mass(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k) {
    person_mass[k] = placed_mass(pd[k], counters[k].mu, localities);
    auto& sm = stratum_mass[stratum_of(pd[k])];
    if (sm.empty()) sm.assign(m, 0.0);
    double w = 1.0 - counters[k].theta;
    for (std::size_t i = 0; i < m; ++i) sm[i] += w * person_mass[k][i];
  }

  for (std::size_t k = 0; k < pd.size(); ++k) {
    const double w = 1.0 - counters[k].theta;
    std::vector<double> p(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) p[i] = w * person_mass[k][i];
    const double displaced = w * counters[k].xi;
    if (displaced > 0.0) {
      if (opts.allocation == XiAllocation::SeparateRow) {
        est.unplaced += displaced;
      } else {
        const auto& sm = stratum_mass[stratum_of(pd[k])];
        double total = 0.0;
        for (double v : sm) total += v;
        for (std::size_t i = 0; i < m; ++i)
          p[i] += displaced * (total > 0.0 ? sm[i] / total : 1.0 / static_cast<double>(m));
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      est.totals[i] += p[i];
      est.variances[i] += p[i] * (1.0 - p[i]);
    }
  }
  return est;
}

SocialTotal social_total(const std::vector<PersonRecord>& pd,
                         const std::vector<FractionalCounter>& counters,
                         const Locality& locality, double attribute_variance) {
  check_sizes(pd, counters);
  if (attribute_variance < 0.0)
    throw std::invalid_argument("social_total: negative attribute variance");
  SocialTotal out;
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (!std::isfinite(pd[k].register_attribute))
      throw std::invalid_argument("social_total: missing attribute for record " +
                                  std::to_string(pd[k].id));
    double mu_hat = 0.0;
    for (int j = 0; j < pd[k].q(); ++j)
      if (locality.contains(pd[k].sol_addresses[j])) mu_hat += counters[k].mu[j];
    const double eps = pd[k].register_attribute;
    out.total += mu_hat * eps;
    // V(mu_hat*eps_hat - delta*eps) with delta ~ Bernoulli(mu_hat) independent
    // of the attribute error
    out.variance += eps * eps * mu_hat * (1.0 - mu_hat) + mu_hat * attribute_variance;
  }
  return out;
}

void export_count_csv(const CountEstimate& est, const std::string& path,
                      std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  const char* method = est.method == CountMethod::Classifier     ? "classifier"
                       : est.method == CountMethod::Fractional   ? "fractional"
                                                                 : "fractional_theta";
  out << "# config_hash=" << config_hash << "\n";
  out << "locality_id,method,estimate,variance\n";
  out.precision(12);
  for (std::size_t i = 0; i < est.totals.size(); ++i)
    out << (i + 1) << ',' << method << ',' << est.totals[i] << ',' << est.variances[i] << "\n";
  if (est.unplaced > 0.0) out << "unplaced," << method << ',' << est.unplaced << ",0\n";
}

}  // namespace fracount::counting
