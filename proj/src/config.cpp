#include "fracount/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace fracount {
namespace {

struct Field {
  std::string key;  // "section.name"
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

const std::vector<Field>& fields() {
#define F_DBL(sect, name, member)                                              \
  Field{sect "." name, [](const ScenarioConfig& c) { return fmt_double(c.member); }, \
        [](ScenarioConfig& c, const std::string& v) { c.member = to_double(sect "." name, v); }}
#define F_INT(sect, name, member)                                              \
  Field{sect "." name, [](const ScenarioConfig& c) { return std::to_string(c.member); }, \
        [](ScenarioConfig& c, const std::string& v) {                          \
          c.member = static_cast<decltype(c.member)>(to_int(sect "." name, v)); }}
#define F_STR(sect, name, member)                                              \
  Field{sect "." name, [](const ScenarioConfig& c) { return c.member; },       \
        [](ScenarioConfig& c, const std::string& v) { c.member = v; }}
  static const std::vector<Field> table = {
      F_STR("scenario", "name", name),
      F_INT("world", "n", n),
      F_INT("world", "m", m),
      F_INT("world", "addresses_per_locality", addresses_per_locality),
      F_INT("world", "covariate_dim", covariate_dim),
      F_INT("world", "seed", seed),
      F_DBL("pd", "erroneous_rate", erroneous_rate),
      F_DBL("pd", "missing_rate", missing_rate),
      F_DBL("pd", "displacement_rate", displacement_rate),
      F_DBL("pd", "mean_sol_multiplicity", mean_sol_multiplicity),
      F_DBL("pd", "neighbour_prob", neighbour_prob),
      F_DBL("pd", "erroneous_shift", erroneous_shift),
      F_DBL("pd", "attribute_noise_sd", attribute_noise_sd),
      F_DBL("census", "link_rate", link_rate),
      F_DBL("census", "noise_cv", census_noise_cv),
      F_DBL("dynamics", "move_rate", move_rate),
      F_DBL("dynamics", "birth_rate", birth_rate),
      F_DBL("dynamics", "death_rate", death_rate),
      F_DBL("dynamics", "emigration_rate", emigration_rate),
      F_DBL("dynamics", "immigration_rate", immigration_rate),
      F_DBL("dynamics", "register_update_rate", register_update_rate),
      F_DBL("dynamics", "coverage_fraction", coverage_fraction),
      F_DBL("dynamics", "drift_sigma", drift_sigma),
      F_DBL("rolling", "residency_d", residency_d),
      F_DBL("rolling", "residency_g", residency_g),
      F_DBL("rolling", "residency_tau", residency_tau),
      F_INT("rolling", "residency_sources", residency_sources),
      F_INT("rolling", "roll_every", roll_every),
      F_INT("rolling", "benchmark_every", benchmark_every),
      F_DBL("tree", "hoeffding_delta", hoeffding_delta),
      F_INT("tree", "min_leaf", min_leaf),
      F_DBL("tree", "eta", tree_eta),
      F_DBL("tree", "bound", tree_bound),
      F_DBL("tree", "half_life", half_life),
      F_DBL("tree", "accept_margin", accept_margin),
      F_STR("audit", "design", audit_design),
      F_INT("audit", "n", audit_n),
      F_DBL("audit", "alpha", audit_alpha),
      F_INT("run", "replicates", replicates),
      F_INT("run", "epochs", epochs),
      F_INT("run", "jobs", jobs),
      F_STR("run", "out_dir", out_dir),
  };
#undef F_DBL
#undef F_INT
#undef F_STR
  return table;
}

void check_rate(const char* what, double v) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ConfigError(std::string("config: ") + what + " must lie in [0,1]");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n < 0) throw ConfigError("config: world.n must be >= 0");
  if (m < 1) throw ConfigError("config: world.m must be >= 1");
  if (addresses_per_locality < 1)
    throw ConfigError("config: world.addresses_per_locality must be >= 1");
  check_rate("pd.erroneous_rate", erroneous_rate);
  check_rate("pd.missing_rate", missing_rate);
  check_rate("pd.displacement_rate", displacement_rate);
  check_rate("pd.neighbour_prob", neighbour_prob);
  check_rate("census.link_rate", link_rate);
  check_rate("dynamics.move_rate", move_rate);
  check_rate("dynamics.birth_rate", birth_rate);
  check_rate("dynamics.death_rate", death_rate);
  check_rate("dynamics.emigration_rate", emigration_rate);
  check_rate("dynamics.immigration_rate", immigration_rate);
  check_rate("dynamics.register_update_rate", register_update_rate);
  check_rate("dynamics.coverage_fraction", coverage_fraction);
  if (mean_sol_multiplicity < 1.0)
    throw ConfigError("config: pd.mean_sol_multiplicity must be >= 1");
  if (residency_d < 0 || residency_g < 0 || residency_d + residency_g > 1.0)
    throw ConfigError("config: rolling requires d >= 0, g >= 0, d+g <= 1");
  if (audit_design != "srs" && audit_design != "stratified")
    throw ConfigError("config: audit.design must be 'srs' or 'stratified'");
  if (replicates < 1) throw ConfigError("config: run.replicates must be >= 1");
  if (jobs < 1) throw ConfigError("config: run.jobs must be >= 1");
}

std::string ScenarioConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  // execution plumbing (parallelism, artifact placement) never changes the
  // statistical scenario, so it stays out of the reproducibility hash
  for (const auto& f : fields())
    if (f.key != "run.jobs" && f.key != "run.out_dir") kv[f.key] = f.get(*this);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ScenarioConfig::hash() const { return fnv1a64(canonical_text()); }

ScenarioConfig parse_config_text(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
    std::string key = trim(line.substr(0, eq));
    // keys may be written either as [section] + name or fully qualified
    if (key.find('.') == std::string::npos) key = section + "." + key;
    std::string val = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) {
      if (f.key == key) {
        f.set(cfg, val);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig cfg;
  cfg.name = name;
  if (name == "latvia-like") {
    // register overcount of ~7%: |P|/N = 1/(1 - r) with r = |P\U|/|P|
    cfg.n = 10000;
    cfg.m = 8;
    cfg.erroneous_rate = 0.07 / 1.07;
    cfg.displacement_rate = 0.02;
    cfg.mean_sol_multiplicity = 1.6;
    cfg.erroneous_shift = 1.5;
    cfg.link_rate = 0.95;
  } else if (name == "estonia-like") {
    cfg.n = 10000;
    cfg.m = 8;
    cfg.erroneous_rate = 0.05;
    cfg.residency_d = 0.7;
    cfg.residency_g = 0.3;
    cfg.residency_tau = 0.5;
    cfg.residency_sources = 27;
    cfg.register_update_rate = 0.3;
    cfg.link_rate = 0.95;
  } else if (name == "default") {
    // defaults as declared
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace fracount
