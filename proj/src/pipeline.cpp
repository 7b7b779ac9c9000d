#include "fracount/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "fracount/counting.hpp"
#include "fracount/initiate.hpp"
#include "fracount/model_io.hpp"
#include "fracount/rolling.hpp"
#include "fracount/synthworld.hpp"
#include "fracount/treeroll.hpp"

namespace fracount::pipeline {
namespace {

namespace fs = std::filesystem;

ScenarioConfig replicate_cfg(const ScenarioConfig& cfg, int replicate) {
  ScenarioConfig c = cfg;
  c.seed = splitmix64(splitmix64(cfg.seed) ^ (1000003ULL * static_cast<std::uint64_t>(replicate + 1)));
  return c;
}

std::string rep_path(const std::string& out_dir, const std::string& stem, int replicate,
                     const std::string& ext) {
  return out_dir + "/" + stem + "_r" + std::to_string(replicate) + ext;
}

// binary {in-scope, erroneous} training set: core records plus subset-style
// pseudo labels on the non-core, mirroring the theta initiation
std::vector<treeroll::Observation> erroneous_tree_data(const std::vector<PersonRecord>& pd,
                                                       double n_hat) {
  auto score = initiate::default_inscope_score(pd);
  std::int64_t core_in = 0;
  std::vector<std::size_t> non_core;
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (pd[k].core)
      ++core_in;
    else
      non_core.push_back(k);
  }
  std::int64_t budget = static_cast<std::int64_t>(std::llround(n_hat)) - core_in;
  std::sort(non_core.begin(), non_core.end(),
            [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<treeroll::Observation> obs;
  obs.reserve(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k)
    if (pd[k].core)
      obs.push_back({pd[k].id, pd[k].covariates, 0, 0.0});
  for (std::size_t i = 0; i < non_core.size(); ++i) {
    int label = static_cast<std::int64_t>(i) < std::max<std::int64_t>(budget, 0) ? 0 : 1;
    obs.push_back({pd[non_core[i]].id, pd[non_core[i]].covariates, label, 0.0});
  }
  return obs;
}

std::vector<double> residency_counts(const std::vector<PersonRecord>& pd,
                                     const std::vector<FractionalCounter>& counters,
                                     const Vec& r, double tau,
                                     const std::vector<Locality>& localities) {
  std::vector<double> counts(localities.size(), 0.0);
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (r[static_cast<int>(k)] < tau) continue;
    auto y = counting::classify(pd[k], counters[k]);
    for (int j = 0; j < pd[k].q(); ++j)
      if (y[j])
        for (std::size_t i = 0; i < localities.size(); ++i)
          if (localities[i].contains(pd[k].sol_addresses[j])) counts[i] += 1.0;
  }
  return counts;
}

rolling::DbeComponents components_from_events(const WorldEvents& ev) {
  rolling::DbeComponents c;
  c.births = ev.births_i;
  c.deaths = ev.deaths_i;
  c.net_internal = ev.net_internal_i;
  c.net_external = ev.net_external_i;
  return c;
}

struct SummaryKey {
  std::string method;
  int epoch = 0;
  int locality = 0;
  bool operator<(const SummaryKey& o) const {
    return std::tie(method, epoch, locality) < std::tie(o.method, o.epoch, o.locality);
  }
};

struct SummaryCell {
  double sum_err = 0.0, sum_sq_err = 0.0, sum_est = 0.0, sum_truth = 0.0;
  int n = 0;
};

}  // namespace

void write_manifest(const RunManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# config_hash=" << manifest.config_hash << "\n";
  out << "scenario=" << manifest.scenario << "\n";
  out << "config_hash=" << manifest.config_hash << "\n";
  out << "seed=" << manifest.seed << "\n";
  out << "replicates=" << manifest.replicates << "\n";
  out << "version=" << manifest.version << "\n";
  out << "out_dir=" << manifest.out_dir << "\n";
}

ReplicateResult run_replicate(const ScenarioConfig& cfg, int replicate, Stage stage,
                              bool write_artifacts, const std::string& out_dir) {
  const auto cfg_r = replicate_cfg(cfg, replicate);
  const std::uint64_t hash = cfg.hash();
  ReplicateResult res;
  res.replicate = replicate;

  auto world = synth::generate_world(cfg_r);
  auto pd = synth::derive_pd(world, cfg_r);
  auto census = synth::simulate_census(world, pd, cfg_r.link_rate, cfg_r);
  res.pd_size = static_cast<std::int64_t>(pd.size());
  res.true_n = world.in_scope_count();

  if (write_artifacts && stage == Stage::Simulate) {
    synth::export_world_csv(world, rep_path(out_dir, "world", replicate, ".csv"), hash);
    synth::export_pd_csv(pd, rep_path(out_dir, "pd", replicate, ".csv"), hash);
  }
  if (stage == Stage::Simulate) return res;

  auto init = initiate::initiate_all(pd, census, world.localities);
  if (write_artifacts && stage == Stage::Initiate) {
    model_io::save_param_state(init.placement,
                               rep_path(out_dir, "placement", replicate, ".model"), hash);
    model_io::save_param_state(init.erroneous,
                               rep_path(out_dir, "erroneous", replicate, ".model"), hash);
    model_io::save_counters_csv(pd, init.counters,
                                rep_path(out_dir, "counters", replicate, ".csv"), hash);
  }
  if (stage == Stage::Initiate) return res;

  ParamState placement = init.placement;
  auto counters = init.counters;
  std::vector<double> theta(counters.size());
  for (std::size_t k = 0; k < counters.size(); ++k) theta[k] = counters[k].theta;

  treeroll::TreeOptions topts;
  topts.hoeffding_delta = cfg_r.hoeffding_delta;
  topts.min_leaf = cfg_r.min_leaf;
  topts.half_life = cfg_r.half_life;
  auto tree = treeroll::grow_initial(erroneous_tree_data(pd, census.n_hat_national), 2, topts);

  Vec resid(pd.size());
  for (std::size_t k = 0; k < pd.size(); ++k)
    resid[static_cast<int>(k)] = 1.0 - counters[k].theta;
  rolling::ResidencyState rstate{resid, cfg_r.residency_d, cfg_r.residency_g,
                                 cfg_r.residency_tau, 0};

  std::vector<double> dbe = world.true_counts();
  RngStream aux(cfg_r.seed, 77);

  auto record_epoch = [&](int t, const synth::UpdateBatch* batch, double beta_step,
                          const treeroll::UpdateReport* tree_rep) {
    EpochResult er;
    er.epoch = t;
    er.truth = world.true_counts();
    auto with_theta = counters;
    for (std::size_t k = 0; k < with_theta.size(); ++k) with_theta[k].theta = theta[k];
    er.counts["fractional"] =
        counting::count_with_theta(pd, with_theta, world.localities).totals;
    er.counts["classifier"] = counting::count_classifier(pd, with_theta, world.localities).totals;
    er.counts["dbe"] = dbe;
    er.counts["residency"] =
        residency_counts(pd, with_theta, rstate.r, rstate.tau, world.localities);
    auto tree_counters = counters;
    auto theta_tree = treeroll::tree_theta(tree, pd);
    for (std::size_t k = 0; k < tree_counters.size(); ++k)
      tree_counters[k].theta = theta_tree[k];
    er.counts["tree"] = counting::count_with_theta(pd, tree_counters, world.localities).totals;
    if (batch) {
      auto ls = rolling::partition_labels(pd, *batch);
      er.n_survey = ls.survey.size();
      er.n_refreshed = ls.refreshed.size();
      er.n_stale = ls.stale.size();
    }
    er.beta_step_norm = beta_step;
    er.trace_sigma = placement.sigma_hat.trace();
    if (tree_rep) {
      er.tree_delta_eps = tree_rep->delta_eps;
      er.tree_delta_m = tree_rep->delta_m;
    }
    res.epochs.push_back(std::move(er));
  };

  record_epoch(0, nullptr, 0.0, nullptr);

  for (int t = 1; t <= cfg_r.epochs; ++t) {
    auto batch = synth::step_world(world, pd, cfg_r);
    auto ls = rolling::partition_labels(pd, batch);
    std::vector<PersonRecord> d_records;
    for (auto k : ls.survey) d_records.push_back(pd[k]);
    for (auto k : ls.refreshed) d_records.push_back(pd[k]);

    double beta_step = 0.0;
    if (cfg_r.roll_every > 0 && t % cfg_r.roll_every == 0) {
      auto next = rolling::ebp_update_placement(placement, d_records);
      beta_step = (next.beta_hat - placement.beta_hat).norm();
      placement = next;
    }
    counters = rolling::apply_model(placement, pd);
    theta = initiate::apply_erroneous(init.erroneous, pd);

    std::vector<treeroll::Observation> d_obs;
    std::unordered_map<PersonId, bool> in_d;
    for (const auto& rec : d_records) {
      in_d[rec.id] = true;
      if (rec.label)
        d_obs.push_back({rec.id, rec.covariates, rec.label->in_scope ? 0 : 1,
                         static_cast<double>(t)});
    }
    std::vector<Vec> non_updated;
    for (const auto& rec : pd)
      if (!in_d.count(rec.id)) non_updated.push_back(rec.covariates);
    treeroll::RollOptions ropts;
    ropts.bound = cfg_r.tree_bound;
    ropts.eta = cfg_r.tree_eta;
    ropts.accept_margin = cfg_r.accept_margin;
    ropts.now = static_cast<double>(t);
    auto [next_tree, tree_rep] = treeroll::roll_tree(tree, d_obs, non_updated, ropts);
    tree = std::move(next_tree);

    // residency: composite sign-of-life score from the configured sources
    Vec r_cur(pd.size());
    for (std::size_t k = 0; k < pd.size(); ++k)
      r_cur[static_cast<int>(k)] = static_cast<int>(k) < rstate.r.size()
                                       ? rstate.r[static_cast<int>(k)]
                                       : 1.0 - theta[k];
    rstate.r = r_cur;
    Vec x_scores(pd.size());
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const double fire = pd[k].truth.in_scope ? 0.6 : 0.08;
      int hits = 0;
      for (int s = 0; s < cfg_r.residency_sources; ++s) hits += aux.bernoulli(fire) ? 1 : 0;
      x_scores[static_cast<int>(k)] =
          static_cast<double>(hits) / static_cast<double>(cfg_r.residency_sources);
    }
    rstate = rolling::residency_update(rstate, x_scores);

    dbe = rolling::dbe_update(dbe, components_from_events(batch.events));

    // re-benchmark the counters to the rolled demographic-balance totals at
    // the configured frequency; an infeasible target set leaves the epoch's
    // counters un-benchmarked rather than aborting the replicate
    if (cfg_r.benchmark_every > 0 && t % cfg_r.benchmark_every == 0) {
      for (std::size_t k = 0; k < counters.size(); ++k) counters[k].theta = theta[k];
      const double n_hat_roll = std::accumulate(dbe.begin(), dbe.end(), 0.0);
      if (n_hat_roll > 0.0) {
        const double need = static_cast<double>(pd.size()) - n_hat_roll;
        double theta_sum = std::accumulate(theta.begin(), theta.end(), 0.0);
        const double f = theta_sum > 0.0 ? std::max(0.0, need / theta_sum) : 0.0;
        double placed = 0.0;
        for (std::size_t k = 0; k < pd.size(); ++k)
          placed += (1.0 - std::min(1.0, f * theta[k])) * counters[k].mu.sum();
        initiate::BenchmarkTargets tg;
        tg.n_hat_national = n_hat_roll;
        tg.n_p = static_cast<double>(pd.size());
        tg.locality.resize(dbe.size());
        for (std::size_t i = 0; i < dbe.size(); ++i)
          tg.locality[i] = dbe[i] / n_hat_roll * placed;
        try {
          initiate::benchmark(counters, pd, world.localities, tg);
          for (std::size_t k = 0; k < counters.size(); ++k) theta[k] = counters[k].theta;
        } catch (const initiate::InitiationError&) {
          // infeasible; keep the model-based counters for this epoch
        }
      }
    }
    record_epoch(t, &batch, beta_step, &tree_rep);
  }

  // audit of the register-based erroneous rate at the final epoch
  {
    double theta_star = 0.0;
    for (double th : theta) theta_star += th;
    theta_star /= static_cast<double>(pd.size());
    auto y = [](const PersonRecord& rec) { return rec.truth.in_scope ? 0.0 : 1.0; };
    audit::AuditSample sample;
    if (cfg_r.audit_design == "stratified") {
      audit::StratifiedDesign d;
      d.stratum_of = [](const PersonRecord& rec) { return rec.core ? 0 : 1; };
      std::int64_t n_core = 0, n_non = 0;
      for (const auto& rec : pd) (rec.core ? n_core : n_non) += 1;
      // non-core gets the heavier representation
      std::int64_t n_non_s = std::min<std::int64_t>(n_non, (2 * cfg_r.audit_n) / 3);
      std::int64_t n_core_s = std::min<std::int64_t>(n_core, cfg_r.audit_n - n_non_s);
      d.n_per_stratum = {{0, std::max<std::int64_t>(2, n_core_s)},
                         {1, std::max<std::int64_t>(2, n_non_s)}};
      sample = audit::draw_stratified(pd, d, aux);
    } else {
      audit::SrsDesign d;
      d.n = std::min<std::int64_t>(cfg_r.audit_n, static_cast<std::int64_t>(pd.size()));
      sample = audit::draw_srs(pd, d, aux);
    }
    auto est = audit::estimate_mean(pd, sample, y);
    auto test = audit::test_h0(theta_star, est.theta_hat, est.v_hat, cfg_r.audit_alpha);
    res.audit_row = {cfg.name,       cfg_r.epochs,  "erroneous_rate",
                     theta_star,     est.theta_hat, est.v_hat,
                     audit::mse_estimate(theta_star, est.theta_hat, est.v_hat),
                     test.z,         test.p_value};
  }
  return res;
}

namespace {

std::vector<ReplicateResult> run_all(const ScenarioConfig& cfg, Stage stage,
                                     bool write_artifacts) {
  std::vector<ReplicateResult> results(cfg.replicates);
  const int jobs = std::max(1, std::min(cfg.jobs, cfg.replicates));
  if (jobs == 1) {
    for (int r = 0; r < cfg.replicates; ++r)
      results[r] = run_replicate(cfg, r, stage, write_artifacts, cfg.out_dir);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j]() {
        try {
          for (int r = next.fetch_add(1); r < cfg.replicates; r = next.fetch_add(1))
            results[r] = run_replicate(cfg, r, stage, write_artifacts, cfg.out_dir);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return results;
}

void write_rolling_log(const std::vector<ReplicateResult>& results, const std::string& path,
                       std::uint64_t hash) {
  std::ofstream out(path);
  out.precision(12);
  out << "# config_hash=" << hash << "\n";
  out << "replicate,epoch,n_survey,n_refreshed,n_stale,beta_step_norm,trace_sigma,"
         "tree_delta_eps,tree_delta_m\n";
  for (const auto& r : results)
    for (const auto& e : r.epochs)
      out << r.replicate << ',' << e.epoch << ',' << e.n_survey << ',' << e.n_refreshed << ','
          << e.n_stale << ',' << e.beta_step_norm << ',' << e.trace_sigma << ','
          << e.tree_delta_eps << ',' << e.tree_delta_m << "\n";
}

void write_counts(const std::vector<ReplicateResult>& results, const std::string& path,
                  std::uint64_t hash) {
  std::ofstream out(path);
  out.precision(12);
  out << "# config_hash=" << hash << "\n";
  out << "replicate,epoch,locality,method,estimate,truth\n";
  for (const auto& r : results)
    for (const auto& e : r.epochs)
      for (const auto& [method, counts] : e.counts)
        for (std::size_t i = 0; i < counts.size(); ++i)
          out << r.replicate << ',' << e.epoch << ',' << (i + 1) << ',' << method << ','
              << counts[i] << ',' << e.truth[i] << "\n";
}

void write_summary(const std::vector<ReplicateResult>& results, const std::string& path,
                   std::uint64_t hash, const std::string& scenario) {
  std::map<SummaryKey, SummaryCell> cells;
  for (const auto& r : results)
    for (const auto& e : r.epochs)
      for (const auto& [method, counts] : e.counts)
        for (std::size_t i = 0; i < counts.size(); ++i) {
          auto& c = cells[SummaryKey{method, e.epoch, static_cast<int>(i + 1)}];
          double err = counts[i] - e.truth[i];
          c.sum_err += err;
          c.sum_sq_err += err * err;
          c.sum_est += counts[i];
          c.sum_truth += e.truth[i];
          ++c.n;
        }
  std::ofstream out(path);
  out.precision(12);
  out << "# config_hash=" << hash << "\n";
  out << "scenario,method,epoch,locality,mean_estimate,mean_truth,bias,mc_se,rmse\n";
  for (const auto& [key, c] : cells) {
    double n = static_cast<double>(c.n);
    double bias = c.sum_err / n;
    double var = c.n > 1 ? (c.sum_sq_err - n * bias * bias) / (n - 1.0) : 0.0;
    out << scenario << ',' << key.method << ',' << key.epoch << ',' << key.locality << ','
        << c.sum_est / n << ',' << c.sum_truth / n << ',' << bias << ','
        << std::sqrt(std::max(0.0, var) / n) << ',' << std::sqrt(c.sum_sq_err / n) << "\n";
  }
}

}  // namespace

int run_pipeline(const ScenarioConfig& cfg, const std::string& subcommand) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::uint64_t hash = cfg.hash();
  RunManifest manifest{cfg.name, hash, cfg.seed, cfg.replicates, kVersion, cfg.out_dir};
  write_manifest(manifest, cfg.out_dir + "/manifest.txt");

  if (subcommand == "simulate") {
    run_all(cfg, Stage::Simulate, true);
    return 0;
  }
  if (subcommand == "initiate") {
    run_all(cfg, Stage::Initiate, true);
    return 0;
  }
  if (subcommand == "roll") {
    auto results = run_all(cfg, Stage::Full, false);
    write_rolling_log(results, cfg.out_dir + "/rolling_log.csv", hash);
    return 0;
  }
  if (subcommand == "count") {
    auto results = run_all(cfg, Stage::Full, false);
    write_counts(results, cfg.out_dir + "/counts.csv", hash);
    return 0;
  }
  if (subcommand == "audit") {
    auto results = run_all(cfg, Stage::Full, false);
    std::vector<audit::AuditResult> rows;
    for (const auto& r : results) rows.push_back(r.audit_row);
    audit::append_audit_csv(rows, cfg.out_dir + "/audit.csv", hash);
    return 0;
  }
  if (subcommand == "report") {
    auto results = run_all(cfg, Stage::Full, false);
    write_counts(results, cfg.out_dir + "/counts.csv", hash);
    write_summary(results, cfg.out_dir + "/summary.csv", hash, cfg.name);
    return 0;
  }
  throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

int compare_methods(const std::vector<std::string>& dirs, const std::string& out_path) {
  if (dirs.size() < 2)
    throw std::invalid_argument("compare_methods: need at least two result directories");
  struct Row {
    double bias = 0.0, rmse = 0.0;
  };
  std::vector<std::map<std::string, Row>> runs;
  std::vector<std::string> scenarios;
  for (const auto& dir : dirs) {
    std::ifstream in(dir + "/summary.csv");
    if (!in) throw std::runtime_error("compare_methods: missing summary.csv in " + dir);
    std::map<std::string, Row> rows;
    std::string line, scenario;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("scenario,", 0) == 0) continue;
      std::istringstream ls(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ls, field, ',')) fields.push_back(field);
      if (fields.size() != 9) throw std::runtime_error("compare_methods: malformed summary row");
      scenario = fields[0];
      rows[fields[1] + "," + fields[2] + "," + fields[3]] =
          Row{std::stod(fields[6]), std::stod(fields[8])};
    }
    runs.push_back(std::move(rows));
    scenarios.push_back(scenario);
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (scenarios[i] != scenarios[0])
      throw std::runtime_error("compare_methods: mismatched scenarios '" + scenarios[0] +
                               "' vs '" + scenarios[i] + "'");
    if (runs[i].size() != runs[0].size())
      throw std::runtime_error("compare_methods: result grids do not align");
    for (const auto& [key, row] : runs[0])
      if (!runs[i].count(key))
        throw std::runtime_error("compare_methods: missing cell " + key + " in run " +
                                 std::to_string(i));
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out.precision(12);
  out << "method,epoch,locality";
  for (std::size_t i = 0; i < runs.size(); ++i) out << ",bias_" << i << ",rmse_" << i;
  out << "\n";
  for (const auto& [key, row0] : runs[0]) {
    out << key;
    for (const auto& run : runs) {
      const auto& row = run.at(key);
      out << ',' << row.bias << ',' << row.rmse;
    }
    out << "\n";
  }
  return 0;
}

}  // namespace pipeline
