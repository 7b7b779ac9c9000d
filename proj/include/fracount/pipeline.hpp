#pragma once

#include <map>
#include <string>
#include <vector>

#include "fracount/audit.hpp"
#include "fracount/config.hpp"
#include "fracount/types.hpp"

namespace fracount::pipeline {

inline constexpr const char* kVersion = "fracount 1.0";

struct RunManifest {
  std::string scenario;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int replicates = 1;
  std::string version = kVersion;
  std::string out_dir;
};

void write_manifest(const RunManifest& manifest, const std::string& path);

struct EpochResult {
  int epoch = 0;
  std::vector<double> truth;  // N_i at this epoch
  // per-method per-locality estimates: fractional, classifier, dbe,
  // residency, tree
  std::map<std::string, std::vector<double>> counts;
  std::size_t n_survey = 0, n_refreshed = 0, n_stale = 0;
  double beta_step_norm = 0.0;
  double trace_sigma = 0.0;
  double tree_delta_eps = 0.0;
  double tree_delta_m = 0.0;
};

struct ReplicateResult {
  int replicate = 0;
  std::vector<EpochResult> epochs;
  audit::AuditResult audit_row;
  std::int64_t pd_size = 0;
  std::int64_t true_n = 0;
};

enum class Stage { Simulate, Initiate, Full };

// Runs one deterministic replicate: generate -> initiate -> roll/count/audit.
// Artifacts for the given stage land in out_dir when write_artifacts is set.
ReplicateResult run_replicate(const ScenarioConfig& cfg, int replicate, Stage stage,
                              bool write_artifacts, const std::string& out_dir);

// Subcommands: simulate, initiate, roll, count, audit, report. Returns the
// process exit code (0 ok, 3 runtime error); replicates run with cfg.jobs
// threads and are merged in replicate order.
int run_pipeline(const ScenarioConfig& cfg, const std::string& subcommand);

// Per-locality RMSE/bias comparison across >= 2 completed runs (reads their
// summary.csv); throws on mismatched scenarios.
int compare_methods(const std::vector<std::string>& dirs, const std::string& out_path);

}  // namespace fracount::pipeline
