#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fracount/pipeline.hpp"

using namespace fracount;
namespace fs = std::filesystem;

namespace {

ScenarioConfig tiny_cfg() {
  ScenarioConfig cfg;
  cfg.name = "tiny";
  cfg.n = 800;
  cfg.m = 3;
  cfg.seed = 99;
  cfg.erroneous_rate = 0.05;
  cfg.epochs = 2;
  cfg.register_update_rate = 0.2;
  cfg.coverage_fraction = 0.05;
  cfg.move_rate = 0.02;
  cfg.birth_rate = 0.01;
  cfg.death_rate = 0.01;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("run_replicate is deterministic") {
  auto cfg = tiny_cfg();
  auto a = pipeline::run_replicate(cfg, 0, pipeline::Stage::Full, false, "");
  auto b = pipeline::run_replicate(cfg, 0, pipeline::Stage::Full, false, "");
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t t = 0; t < a.epochs.size(); ++t) {
    for (const auto& [method, counts] : a.epochs[t].counts) {
      const auto& other = b.epochs[t].counts.at(method);
      for (std::size_t i = 0; i < counts.size(); ++i) CHECK(counts[i] == other[i]);
    }
  }
  CHECK(a.audit_row.theta_hat == b.audit_row.theta_hat);
  // distinct replicates see distinct worlds
  auto c = pipeline::run_replicate(cfg, 1, pipeline::Stage::Full, false, "");
  bool any_diff = false;
  for (const auto& [method, counts] : c.epochs[0].counts)
    for (std::size_t i = 0; i < counts.size(); ++i)
      any_diff |= counts[i] != a.epochs[0].counts.at(method)[i];
  CHECK(any_diff);
}

TEST_CASE("every artifact carries the config hash header") {
  auto cfg = tiny_cfg();
  cfg.replicates = 1;
  cfg.out_dir = (fs::temp_directory_path() / "fracount_test_artifacts").string();
  fs::remove_all(cfg.out_dir);
  REQUIRE(pipeline::run_pipeline(cfg, "report") == 0);
  REQUIRE(pipeline::run_pipeline(cfg, "simulate") == 0);
  REQUIRE(pipeline::run_pipeline(cfg, "initiate") == 0);
  const std::string tag = "# config_hash=" + std::to_string(cfg.hash());
  int checked = 0;
  for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
    if (entry.path().extension() != ".csv" && entry.path().extension() != ".model") continue;
    auto text = slurp(entry.path());
    CHECK(text.find(tag) != std::string::npos);
    ++checked;
  }
  CHECK(checked >= 5);
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("compare detects identical runs and rejects mismatched scenarios") {
  auto cfg = tiny_cfg();
  cfg.replicates = 2;
  auto dir1 = (fs::temp_directory_path() / "fracount_cmp1").string();
  auto dir2 = (fs::temp_directory_path() / "fracount_cmp2").string();
  auto dir3 = (fs::temp_directory_path() / "fracount_cmp3").string();
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
  cfg.out_dir = dir1;
  REQUIRE(pipeline::run_pipeline(cfg, "report") == 0);
  cfg.out_dir = dir2;
  REQUIRE(pipeline::run_pipeline(cfg, "report") == 0);

  auto out = (fs::temp_directory_path() / "fracount_cmp.csv").string();
  REQUIRE(pipeline::compare_methods({dir1, dir2}, out) == 0);
  // identical runs -> every bias/rmse pair agrees
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);  // header
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    REQUIRE(fields.size() == 7);
    CHECK(fields[3] == fields[5]);  // bias_0 == bias_1
    CHECK(fields[4] == fields[6]);  // rmse_0 == rmse_1
    ++rows;
  }
  CHECK(rows > 0);

  auto other = tiny_cfg();
  other.name = "other";
  other.replicates = 2;
  other.out_dir = dir3;
  REQUIRE(pipeline::run_pipeline(other, "report") == 0);
  CHECK_THROWS(pipeline::compare_methods({dir1, dir3}, out));
  CHECK_THROWS(pipeline::compare_methods({dir1}, out));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
  fs::remove(out);
}
