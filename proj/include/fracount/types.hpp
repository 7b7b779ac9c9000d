#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fracount {

using PersonId = std::int64_t;
using AddressId = std::int32_t;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr AddressId kNoAddress = -1;

struct Locality {
  int index = 0;                           // 1-based
  AddressId first_address = 0;             // admissible set is the contiguous
  AddressId last_address = 0;              // range [first_address, last_address]
  bool contains(AddressId a) const { return a >= first_address && a <= last_address; }
};

struct TruePerson {
  PersonId id = 0;
  bool alive_in_scope = false;
  AddressId true_address = kNoAddress;  // kNoAddress iff not in scope
  Vec covariates;
  double attribute = 0.0;  // value of interest for social-statistics totals
};

struct WorldEvents {
  std::int64_t births = 0;
  std::int64_t deaths = 0;
  std::int64_t immigration = 0;
  std::int64_t emigration = 0;
  std::int64_t moves = 0;
  // per-locality flow components, aggregated exactly from individual events
  std::vector<double> births_i, deaths_i, net_internal_i, net_external_i;
};

struct WorldTruth {
  std::vector<TruePerson> persons;
  std::vector<Locality> localities;
  int time = 0;

  int locality_of(AddressId a) const;
  std::int64_t in_scope_count() const;
  std::vector<double> true_counts() const;  // N_i
};

// Ground-truth placement status of a PD record; also the payload of an
// observed label once census/survey/register reveals it.
struct TruthLabel {
  bool in_scope = false;
  bool displaced = false;        // in scope but true address not among a_k
  int address_index = -1;        // 0-based position in sol_addresses, -1 if displaced/out
};

struct PersonRecord {
  PersonId id = 0;
  std::vector<AddressId> sol_addresses;  // a_k, pairwise distinct, size q_k >= 1
  Mat address_features;                  // q_k rows, one feature vector per address
  Vec covariates;                        // z_k
  double register_attribute = 0.0;       // eps-hat
  std::int64_t family = -1;              // shared id for cluster variance, -1 = none
  bool core = false;
  std::optional<TruthLabel> label;       // observed (labelled) truth
  TruthLabel truth;                      // simulator-only ground truth

  int q() const { return static_cast<int>(sol_addresses.size()); }
};

struct FractionalCounter {
  Vec mu;              // placement distribution given in scope, length q_k
  double xi = 0.0;     // displacement probability given in scope
  double theta = 0.0;  // erroneous-enumeration probability

  double simplex_residual() const { return mu.sum() + xi - 1.0; }
};

// Fitted parametric model: coefficient estimate with covariance, carried
// across epochs as the prior of the next update.
struct ParamState {
  Vec beta_hat;
  Mat sigma_hat;
  int epoch = 0;
  std::string kind;  // "placement" or "erroneous"
  double ridge = 0.0;
  bool converged = true;
};

enum class CountMethod { Classifier, Fractional, FractionalTheta };

struct CountEstimate {
  std::vector<double> totals;     // per locality
  std::vector<double> variances;  // per locality
  CountMethod method = CountMethod::Fractional;
  double unplaced = 0.0;  // xi mass kept out of localities (separate-row mode)
};

}  // namespace fracount
