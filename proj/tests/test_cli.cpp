#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(FRACOUNT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("simulate twice under a fixed seed produces identical bytes") {
  auto d1 = fs::temp_directory_path() / "fracount_cli_a";
  auto d2 = fs::temp_directory_path() / "fracount_cli_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  std::string base = "simulate --preset latvia-like --replicates 1 --seed 7 --out ";
  REQUIRE(run_cli(base + d1.string()) == 0);
  REQUIRE(run_cli(base + d2.string()) == 0);
  for (const char* name : {"world_r0.csv", "pd_r0.csv"}) {
    CAPTURE(name);
    CHECK(slurp(d1 / name) == slurp(d2 / name));
    CHECK(!slurp(d1 / name).empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("report artifacts are byte-identical across job counts") {
  auto d1 = fs::temp_directory_path() / "fracount_cli_j1";
  auto d2 = fs::temp_directory_path() / "fracount_cli_j4";
  fs::remove_all(d1);
  fs::remove_all(d2);
  std::string base =
      "report --preset estonia-like --replicates 4 --seed 11 ";
  REQUIRE(run_cli(base + "--jobs 1 --out " + d1.string()) == 0);
  REQUIRE(run_cli(base + "--jobs 4 --out " + d2.string()) == 0);
  CHECK(slurp(d1 / "summary.csv") == slurp(d2 / "summary.csv"));
  CHECK(slurp(d1 / "counts.csv") == slurp(d2 / "counts.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("report schema matches the documented columns") {
  auto d = fs::temp_directory_path() / "fracount_cli_schema";
  fs::remove_all(d);
  REQUIRE(run_cli("report --preset default --replicates 2 --seed 5 --out " + d.string()) == 0);
  std::ifstream in(d / "summary.csv");
  std::string line;
  std::getline(in, line);  // hash comment
  CHECK(line.rfind("# config_hash=", 0) == 0);
  std::getline(in, line);
  CHECK(line == "scenario,method,epoch,locality,mean_estimate,mean_truth,bias,mc_se,rmse");
  fs::remove_all(d);
}

TEST_CASE("exit codes distinguish config and runtime failures") {
  CHECK(run_cli("count --config /definitely/not/a/file.cfg") == 2);
  CHECK(run_cli("count --preset not-a-preset") == 2);
  CHECK(run_cli("compare /no/such/dir1 /no/such/dir2 --out /dev/null") == 3);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("config file round trip through the cli") {
  auto d = fs::temp_directory_path() / "fracount_cli_cfg";
  fs::remove_all(d);
  auto cfg_path = fs::temp_directory_path() / "fracount_cli_test.cfg";
  {
    std::ofstream out(cfg_path);
    out << "[scenario]\nname = cfgtest\n[world]\nn = 500\nm = 2\nseed = 3\n"
        << "[pd]\nerroneous_rate = 0.04\n[run]\nepochs = 1\n";
  }
  REQUIRE(run_cli("count --config " + cfg_path.string() + " --replicates 1 --out " +
                  d.string()) == 0);
  CHECK(fs::exists(d / "counts.csv"));
  // bad key -> config error
  {
    std::ofstream out(cfg_path, std::ios::app);
    out << "[world]\nwidgets = 9\n";
  }
  CHECK(run_cli("count --config " + cfg_path.string()) == 2);
  fs::remove_all(d);
  fs::remove(cfg_path);
}
