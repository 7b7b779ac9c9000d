#pragma once

#include <vector>

#include "fracount/logistic.hpp"
#include "fracount/synthworld.hpp"
#include "fracount/types.hpp"

namespace fracount::rolling {

// indices into the PD; pairwise disjoint, union = labelled set L_t
struct LabelledSet {
  std::vector<std::size_t> survey;     // S_t: known inclusion probabilities
  std::vector<std::size_t> refreshed;  // B_t: updated register labels
  std::vector<std::size_t> stale;      // A_t: labels carried from t-1
};

// Survey membership dominates: a record in both S_t and B_t goes to S_t.
LabelledSet partition_labels(const std::vector<PersonRecord>& pd,
                             const synth::UpdateBatch& batch);

struct EbpOptions {
  int max_iter = 100;
  double grad_tol = 1e-8;
  // added to the prior covariance diagonal when the generating coefficients
  // follow a known random walk; 0 = the plain carried-forward prior
  double drift_inflation = 0.0;
};

struct EbpReport {
  bool converged = true;
  int iterations = 0;
  double grad_norm = 0.0;
};

// Posterior mode + inverse curvature (Laplace summary) of
//   sum_k log f(y_k | x_k, beta) + log phi(beta; beta_{t-1}, sigma_{t-1}).
// A null likelihood (empty D_t) carries the prior forward unchanged.
ParamState ebp_update(const ParamState& state, const logit::LogLikelihood* lik,
                      const EbpOptions& opts = {}, EbpReport* report = nullptr);

// EBP step on the placement model from the labelled records of D_t
ParamState ebp_update_placement(const ParamState& state,
                                const std::vector<PersonRecord>& d_records,
                                const EbpOptions& opts = {}, EbpReport* report = nullptr);

// Counters for all of P_t from a fitted placement state. beta_draws > 0
// propagates coefficient uncertainty by averaging over draws from
// N(beta_hat, sigma_hat).
std::vector<FractionalCounter> apply_model(const ParamState& state,
                                           const std::vector<PersonRecord>& pd,
                                           int beta_draws = 0, RngStream* rng = nullptr);

// ---- baselines ----

struct ResidencyState {
  Vec r;             // R(k, t) per person, in [0,1]
  double d = 0.7;    // stability rate
  double g = 0.3;    // signs-of-life rate
  double tau = 0.5;  // counting threshold
  int epoch = 0;
};

// R(k,t) = d * R(k,t-1) + g * X(k,t-1)
ResidencyState residency_update(const ResidencyState& state, const Vec& x_scores);

inline double theta_from_residency(double r) { return 1.0 - r; }

struct DbeComponents {
  std::vector<double> births, deaths, net_internal, net_external;
};

// N_{i,t} = N_{i,t-1} + B - D + netI + netE; negative results reported
std::vector<double> dbe_update(const std::vector<double>& counts,
                               const DbeComponents& components,
                               std::vector<std::string>* warnings = nullptr);

// Israeli weight carrying: movers adopt the pre-move mean weight of their
// destination locality, everyone else keeps their weight.
std::vector<double> carry_weights(const std::vector<double>& weights,
                                  const std::vector<int>& locality,  // 1-based, per record
                                  const std::vector<std::pair<std::size_t, int>>& moves);

}  // namespace fracount::rolling
