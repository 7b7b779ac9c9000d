#include "fracount/audit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace fracount::audit {
namespace {

// SRS without replacement via partial Fisher-Yates
std::vector<std::size_t> srs_indices(std::vector<std::size_t> pool, std::int64_t n,
                                     RngStream& rng) {
  for (std::int64_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

AuditSample draw_srs(const std::vector<PersonRecord>& pd, const SrsDesign& design,
                     RngStream& rng) {
  if (design.n < 1 || design.n > static_cast<std::int64_t>(pd.size()))
    throw std::invalid_argument("draw_srs: n must lie in [1, |pd|]");
  std::vector<std::size_t> pool(pd.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  AuditSample s;
  s.indices = srs_indices(std::move(pool), design.n, rng);
  s.pi.assign(s.indices.size(),
              static_cast<double>(design.n) / static_cast<double>(pd.size()));
  return s;
}

AuditSample draw_stratified(const std::vector<PersonRecord>& pd,
                            const StratifiedDesign& design, RngStream& rng) {
  if (!design.stratum_of) throw std::invalid_argument("draw_stratified: missing stratum map");
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < pd.size(); ++i) strata[design.stratum_of(pd[i])].push_back(i);
  AuditSample s;
  for (const auto& [stratum, n_h] : design.n_per_stratum) {
    auto it = strata.find(stratum);
    if (it == strata.end() || it->second.empty())
      throw std::invalid_argument("draw_stratified: empty stratum " + std::to_string(stratum));
    if (n_h < 1 || n_h > static_cast<std::int64_t>(it->second.size()))
      throw std::invalid_argument("draw_stratified: bad sample size for stratum " +
                                  std::to_string(stratum));
    double pi = static_cast<double>(n_h) / static_cast<double>(it->second.size());
    for (auto idx : srs_indices(it->second, n_h, rng)) {
      s.indices.push_back(idx);
      s.pi.push_back(pi);
    }
  }
  return s;
}

AuditEstimate estimate_mean(const std::vector<PersonRecord>& pd, const AuditSample& sample,
                            const std::function<double(const PersonRecord&)>& y) {
  if (sample.indices.size() != sample.pi.size())
    throw std::invalid_argument("estimate_mean: ragged sample");
  if (sample.indices.size() < 2)
    throw std::invalid_argument("estimate_mean: need n >= 2 for a variance estimate");
  const double big_n = static_cast<double>(pd.size());

  AuditEstimate est;
  // Horvitz-Thompson mean; variance by treating each constant-pi group as an
  // SRS stratum of size n_h / pi_h
  struct Group {
    std::vector<double> ys;
    double pi = 0.0;
  };
  std::map<double, Group> groups;
  for (std::size_t i = 0; i < sample.indices.size(); ++i) {
    if (!(sample.pi[i] > 0.0))
      throw std::invalid_argument("estimate_mean: zero inclusion probability");
    double yi = y(pd[sample.indices[i]]);
    est.theta_hat += yi / sample.pi[i];
    auto& g = groups[sample.pi[i]];
    g.pi = sample.pi[i];
    g.ys.push_back(yi);
  }
  est.theta_hat /= big_n;

  for (const auto& [pi, g] : groups) {
    const double n_h = static_cast<double>(g.ys.size());
    const double cap_n_h = n_h / pi;
    if (pi >= 1.0) continue;  // census stratum contributes no variance
    if (g.ys.size() < 2)
      throw std::invalid_argument("estimate_mean: a design stratum has n < 2");
    double mean = 0.0;
    for (double v : g.ys) mean += v;
    mean /= n_h;
    double s2 = 0.0;
    for (double v : g.ys) s2 += (v - mean) * (v - mean);
    s2 /= (n_h - 1.0);
    est.v_hat += (cap_n_h / big_n) * (cap_n_h / big_n) * (1.0 - pi) * s2 / n_h;
  }
  return est;
}

double mse_estimate(double theta_star, double theta_hat, double v_hat) {
  if (!std::isfinite(theta_star) || !std::isfinite(theta_hat) || !std::isfinite(v_hat))
    throw std::invalid_argument("mse_estimate: non-finite input");
  const double d = theta_star - theta_hat;
  return d * d - v_hat;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TestResult test_h0(double theta_star, double theta_hat, double v_hat, double alpha) {
  if (v_hat < 0.0) throw std::invalid_argument("test_h0: negative variance");
  TestResult r;
  if (v_hat == 0.0) {
    if (theta_star == theta_hat) {
      r.z = 0.0;
      r.p_value = 1.0;
      r.reject = false;
    } else {
      r.z = std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
      r.reject = true;
      r.degenerate = true;
    }
    return r;
  }
  r.z = (theta_star - theta_hat) / std::sqrt(v_hat);
  r.p_value = 2.0 * (1.0 - normal_cdf(std::abs(r.z)));
  r.reject = r.p_value < alpha;
  return r;
}

void append_audit_csv(const std::vector<AuditResult>& rows, const std::string& path,
                      std::uint64_t config_hash) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(12);
  if (fresh) {
    out << "# config_hash=" << config_hash << "\n";
    out << "scenario,epoch,estimator,theta_star,theta_hat,v_hat,mse_hat,z,p\n";
  }
  for (const auto& r : rows)
    out << r.scenario << ',' << r.epoch << ',' << r.estimator << ',' << r.theta_star << ','
        << r.theta_hat << ',' << r.v_hat << ',' << r.mse_hat << ',' << r.z << ',' << r.p_value
        << "\n";
}

}  // namespace fracount::audit
