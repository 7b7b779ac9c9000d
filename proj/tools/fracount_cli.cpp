#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fracount/config.hpp"
#include "fracount/pipeline.hpp"

namespace {

// single-line machine-readable diagnostics on stderr
int fail(const char* kind, const std::string& what, int code) {
  std::fprintf(stderr, "error kind=%s detail=\"%s\"\n", kind, what.c_str());
  return code;
}

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "scenario config file (INI-style)");
  cmd->add_option("--preset", o.preset, "built-in scenario: default, latvia-like, estonia-like");
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("--replicates", o.replicates, "override the replicate count");
  cmd->add_option("--jobs", o.jobs, "worker threads for replicates");
  cmd->add_option("--out", o.out_dir, "output directory");
}

fracount::ScenarioConfig resolve(const CommonOpts& o) {
  fracount::ScenarioConfig cfg;
  if (!o.config_path.empty())
    cfg = fracount::load_config(o.config_path);
  else if (!o.preset.empty())
    cfg = fracount::preset_config(o.preset);
  else
    cfg = fracount::preset_config("default");
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicates) cfg.replicates = *o.replicates;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fracount: fractional counting for register-based population statistics"};
  app.set_version_flag("--version", fracount::pipeline::kVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> pipeline_subs = {"simulate", "initiate", "roll",
                                            "count",    "audit",    "report"};
  for (const auto& name : pipeline_subs) {
    auto* cmd = app.add_subcommand(name, "run the " + name + " stage");
    add_common(cmd, opts);
  }

  std::vector<std::string> compare_dirs;
  std::string compare_out = "comparison.csv";
  auto* cmp = app.add_subcommand("compare", "per-locality RMSE/bias table across runs");
  cmp->add_option("dirs", compare_dirs, "completed run directories (>= 2)")->required();
  cmp->add_option("--out", compare_out, "comparison table path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    return fail("usage", e.what(), 2);
  }

  try {
    if (cmp->parsed()) return fracount::pipeline::compare_methods(compare_dirs, compare_out);
    const std::string sub = app.get_subcommands().front()->get_name();
    fracount::ScenarioConfig cfg;
    try {
      cfg = resolve(opts);
    } catch (const std::exception& e) {
      return fail("config", e.what(), 2);
    }
    return fracount::pipeline::run_pipeline(cfg, sub);
  } catch (const fracount::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 3);
  }
}
