#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fracount/synthworld.hpp"
#include "fracount/types.hpp"

namespace fracount::initiate {

struct InitiationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multinomial placement model over (listed addresses..., displaced), fitted on
// the fully labelled core under non-informative selection.
ParamState fit_placement(const std::vector<PersonRecord>& core);

// (mu, xi) for one record from a fitted placement model; theta left at 0
FractionalCounter predict_counter(const ParamState& placement, const PersonRecord& rec);

// theta for every record from a fitted erroneous model (design: [1, z_k])
std::vector<double> apply_erroneous(const ParamState& erroneous,
                                    const std::vector<PersonRecord>& pd);

// Mahalanobis-style in-scope plausibility score relative to the core
// covariate distribution; higher = more plausibly in scope.
std::vector<double> default_inscope_score(const std::vector<PersonRecord>& pd);

// option 1: label the top-ranked non-core records in-scope until the census
// estimate is met, then fit a logistic erroneous model on z
std::vector<double> estimate_theta_subset(const std::vector<PersonRecord>& pd, double n_hat,
                                          const std::vector<double>& score,
                                          ParamState* model_out = nullptr);

struct Hypercube {
  std::function<int(const PersonRecord&)> cell_of;
  std::map<int, double> estimate;  // estimated in-scope population per cell
};

// option 2: theta constant within hypercube cells, max(0, 1 - estimate/count)
std::vector<double> estimate_theta_hypercube(const std::vector<PersonRecord>& pd,
                                             const Hypercube& hypercube,
                                             std::vector<std::string>* warnings = nullptr);

struct ThetaSample {
  std::vector<std::size_t> indices;  // into pd, drawn from P \ P_c
  std::vector<double> pi;            // inclusion probabilities
  std::vector<bool> in_scope;        // observed delta(k in U)
};

// option 3: inclusion-probability-weighted logistic fit on core + sample
std::vector<double> estimate_theta_sample(const std::vector<PersonRecord>& pd,
                                          const ThetaSample& sample,
                                          std::vector<std::string>* warnings = nullptr,
                                          ParamState* model_out = nullptr);

struct BenchmarkTargets {
  std::vector<double> locality;  // per-locality placed-mass targets
  double n_hat_national = 0.0;   // census estimate N-hat
  double n_p = 0.0;              // PD size
};

struct BenchmarkReport {
  int iterations = 0;
  double max_violation = 0.0;
  double theta_factor = 1.0;
  double theta_residual = 0.0;  // unmet part of sum(theta) = N_p - N-hat after clipping
  std::vector<double> pre_totals;
  std::vector<double> post_totals;
  bool converged = false;
};

struct BenchmarkOptions {
  double rel_tol = 1e-13;  // relative to N-hat; tight so a second pass is a no-op
  int max_iter = 200;
};

// Iterative proportional scaling of (1-theta)-weighted placed mass to the
// locality targets, with per-person renormalization onto the simplex; theta
// scaled nationally by a single clipped factor.
BenchmarkReport benchmark(std::vector<FractionalCounter>& counters,
                          const std::vector<PersonRecord>& pd,
                          const std::vector<Locality>& localities,
                          const BenchmarkTargets& targets, const BenchmarkOptions& opts = {});

double dual_system_estimate(std::int64_t n1, std::int64_t n2, std::int64_t n12);

enum class ThetaMethod { Subset, Hypercube, Sample };

struct InitiationResult {
  std::vector<FractionalCounter> counters;
  ParamState placement;
  ParamState erroneous;
  BenchmarkReport report;
  // census persons not reachable through the PD, reported, not corrected
  double undercoverage_diagnostic = 0.0;
  std::vector<std::string> warnings;
};

// Full census-time initiation: placement fit on the core, theta by the chosen
// method, then benchmarking to the census estimates.
InitiationResult initiate_all(const std::vector<PersonRecord>& pd,
                              const synth::CensusResult& census,
                              const std::vector<Locality>& localities,
                              ThetaMethod method = ThetaMethod::Subset,
                              const Hypercube* hypercube = nullptr,
                              const ThetaSample* sample = nullptr);

}  // namespace fracount::initiate
