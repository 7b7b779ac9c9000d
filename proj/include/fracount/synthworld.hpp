#pragma once

#include <string>
#include <vector>

#include "fracount/config.hpp"
#include "fracount/rng.hpp"
#include "fracount/types.hpp"

namespace fracount::synth {

struct CensusResult {
  std::int64_t n_l = 0;          // census enumerations
  std::int64_t n_c = 0;          // linked to PD (the core)
  std::int64_t n_p = 0;          // PD size
  std::vector<double> n_hat;     // census population estimate per locality
  double n_hat_national = 0.0;
};

// Raw material for one rolling epoch: a coverage-survey draw with known
// inclusion probability, register-refreshed records, and the event log.
struct UpdateBatch {
  std::vector<PersonId> survey_ids;
  double survey_pi = 0.0;
  std::vector<PersonId> refreshed_ids;
  WorldEvents events;
};

WorldTruth generate_world(const ScenarioConfig& cfg);

std::vector<PersonRecord> derive_pd(const WorldTruth& world, const ScenarioConfig& cfg);

// Marks the linked core and attaches census labels; perturbs true counts into
// the census estimate N-hat.
CensusResult simulate_census(const WorldTruth& world, std::vector<PersonRecord>& pd,
                             double link_rate, const ScenarioConfig& cfg);

// Advances world and PD one epoch in place and returns the update batch.
UpdateBatch step_world(WorldTruth& world, std::vector<PersonRecord>& pd,
                       const ScenarioConfig& cfg);

// Redraws each record's ground truth from its own counter (used by scenarios
// where the counters are the generating model): theta -> out of scope,
// xi -> displaced, otherwise a placement drawn from mu.
void assign_truth_from_counters(std::vector<PersonRecord>& pd,
                                const std::vector<FractionalCounter>& counters,
                                RngStream& rng);

void export_world_csv(const WorldTruth& world, const std::string& path,
                      std::uint64_t config_hash);
void export_pd_csv(const std::vector<PersonRecord>& pd, const std::string& path,
                   std::uint64_t config_hash);

}  // namespace fracount::synth
