#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace fracount {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario parameters, grouped by the pipeline stage that consumes them.
// Parsed from an INI-style key-value file (see docs/config.md).
struct ScenarioConfig {
  std::string name = "default";

  // world
  std::int64_t n = 1000;         // target population size N
  int m = 4;                     // number of localities
  int addresses_per_locality = 25;
  int covariate_dim = 3;
  std::uint64_t seed = 1;

  // pd derivation
  double erroneous_rate = 0.0;    // |P \ U| / |P|
  double missing_rate = 0.0;      // under-coverage of U
  double displacement_rate = 0.0; // P(adr_k not in a_k | in scope)
  double mean_sol_multiplicity = 1.5;
  double neighbour_prob = 0.7;    // displaced addresses drawn from a neighbour locality
  double erroneous_shift = 1.0;   // covariate mean shift of out-of-scope records
  double attribute_noise_sd = 0.0;

  // census
  // kept below 1 so the theta budget (census estimate minus core count)
  // stays positive under census noise
  double link_rate = 0.95;
  double census_noise_cv = 0.005;

  // dynamics per epoch
  double move_rate = 0.0;
  double birth_rate = 0.0;
  double death_rate = 0.0;
  double emigration_rate = 0.0;
  double immigration_rate = 0.0;
  double register_update_rate = 0.0;  // fraction of PD refreshed into B_t
  double coverage_fraction = 0.0;     // survey S_t sampling fraction
  double drift_sigma = 0.0;           // random-walk step sd of the generating beta

  // rolling
  double residency_d = 0.7;
  double residency_g = 0.3;
  double residency_tau = 0.5;
  int residency_sources = 27;
  int roll_every = 1;
  int benchmark_every = 1;

  // tree
  double hoeffding_delta = 1e-4;
  int min_leaf = 30;
  double tree_eta = 0.05;
  double tree_bound = 0.1;
  double half_life = 1e300;  // effectively no ageing by default
  double accept_margin = 0.02;

  // audit
  std::string audit_design = "srs";
  int audit_n = 200;
  double audit_alpha = 0.05;

  // run
  int replicates = 1;
  int epochs = 5;
  int jobs = 1;
  std::string out_dir = "out";

  void validate() const;                 // throws ConfigError
  std::string canonical_text() const;    // sorted section.key=value lines
  std::uint64_t hash() const;            // FNV-1a of canonical_text()
};

ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig load_config(const std::string& path);
ScenarioConfig preset_config(const std::string& name);  // "latvia-like", "estonia-like"

std::uint64_t fnv1a64(const std::string& s);

}  // namespace fracount
