#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fracount/rng.hpp"
#include "fracount/types.hpp"

namespace fracount::audit {

struct AuditSample {
  std::vector<std::size_t> indices;  // into the PD
  std::vector<double> pi;            // exact inclusion probabilities
};

struct SrsDesign {
  std::int64_t n = 0;
};

struct StratifiedDesign {
  std::function<int(const PersonRecord&)> stratum_of;
  std::vector<std::pair<int, std::int64_t>> n_per_stratum;
};

AuditSample draw_srs(const std::vector<PersonRecord>& pd, const SrsDesign& design,
                     RngStream& rng);
AuditSample draw_stratified(const std::vector<PersonRecord>& pd,
                            const StratifiedDesign& design, RngStream& rng);

// Design-based estimate of a population mean from audited ground truth.
// y(k) is what the audit observes for record k (e.g. delta(out of scope)).
struct AuditEstimate {
  double theta_hat = 0.0;
  double v_hat = 0.0;
};

AuditEstimate estimate_mean(const std::vector<PersonRecord>& pd, const AuditSample& sample,
                            const std::function<double(const PersonRecord&)>& y);

// exactly (theta* - theta_hat)^2 - V_hat; negative values are information
double mse_estimate(double theta_star, double theta_hat, double v_hat);

struct TestResult {
  double z = 0.0;
  double p_value = 1.0;
  bool reject = false;
  bool degenerate = false;  // V_hat = 0 with theta* != theta_hat
};

TestResult test_h0(double theta_star, double theta_hat, double v_hat, double alpha);

struct AuditResult {
  std::string scenario;
  int epoch = 0;
  std::string estimator;
  double theta_star = 0.0;
  double theta_hat = 0.0;
  double v_hat = 0.0;
  double mse_hat = 0.0;
  double z = 0.0;
  double p_value = 0.0;
};

void append_audit_csv(const std::vector<AuditResult>& rows, const std::string& path,
                      std::uint64_t config_hash);

double normal_cdf(double x);

}  // namespace fracount::audit
