#include "fracount/synthworld.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace fracount {

int WorldTruth::locality_of(AddressId a) const {
  for (const auto& loc : localities)
    if (loc.contains(a)) return loc.index;
  throw std::invalid_argument("address " + std::to_string(a) + " belongs to no locality");
}

std::int64_t WorldTruth::in_scope_count() const {
  std::int64_t n = 0;
  for (const auto& p : persons) n += p.alive_in_scope ? 1 : 0;
  return n;
}

std::vector<double> WorldTruth::true_counts() const {
  std::vector<double> n(localities.size(), 0.0);
  for (const auto& p : persons)
    if (p.alive_in_scope) n[locality_of(p.true_address) - 1] += 1.0;
  return n;
}

}  // namespace fracount

namespace fracount::synth {
namespace {

// rng stream ids per purpose; epoch streams start at kStepStream
constexpr std::uint64_t kWorldStream = 1;
constexpr std::uint64_t kPdStream = 2;
constexpr std::uint64_t kCensusStream = 3;
constexpr std::uint64_t kStepStream = 1000;

AddressId universe_size(const ScenarioConfig& cfg) {
  return static_cast<AddressId>(cfg.m) * cfg.addresses_per_locality;
}

int draw_multiplicity(const ScenarioConfig& cfg, RngStream& rng) {
  int q = 1 + rng.poisson(cfg.mean_sol_multiplicity - 1.0);
  return std::min(q, 5);
}

// Two features per listed address: a recency score and a source count, both
// shifted upward for the address that is actually true.
void fill_address_features(PersonRecord& rec, RngStream& rng) {
  const int q = rec.q();
  rec.address_features.resize(q, 2);
  for (int j = 0; j < q; ++j) {
    bool is_true = (j == rec.truth.address_index);
    rec.address_features(j, 0) = rng.normal(is_true ? 1.0 : 0.0, 0.5);
    rec.address_features(j, 1) = 1.0 + rng.poisson(is_true ? 1.0 : 0.3);
  }
}

AddressId draw_other_address(const ScenarioConfig& cfg, AddressId avoid, int home_locality,
                             RngStream& rng) {
  const AddressId total = universe_size(cfg);
  for (;;) {
    AddressId a;
    if (cfg.m > 1 && rng.bernoulli(cfg.neighbour_prob)) {
      int neighbour = home_locality % cfg.m + 1;  // 1-based ring
      a = static_cast<AddressId>((neighbour - 1) * cfg.addresses_per_locality +
                                 rng.index(cfg.addresses_per_locality));
    } else {
      a = static_cast<AddressId>(rng.index(total));
    }
    if (a != avoid) return a;
  }
}

// Builds the SoL-address vector and ground-truth placement for one in-scope
// person; displaced means the true address is left out of a_k.
void build_addresses(PersonRecord& rec, AddressId true_address, int home_locality,
                     const ScenarioConfig& cfg, RngStream& rng) {
  const int q = draw_multiplicity(cfg, rng);
  bool displaced = rng.bernoulli(cfg.displacement_rate);
  std::unordered_set<AddressId> seen;
  rec.sol_addresses.clear();
  if (!displaced) {
    rec.sol_addresses.push_back(true_address);
    seen.insert(true_address);
  }
  while (static_cast<int>(rec.sol_addresses.size()) < q) {
    AddressId a = draw_other_address(cfg, true_address, home_locality, rng);
    if (seen.insert(a).second) rec.sol_addresses.push_back(a);
  }
  std::shuffle(rec.sol_addresses.begin(), rec.sol_addresses.end(), rng.engine());
  rec.truth.in_scope = true;
  rec.truth.displaced = displaced;
  rec.truth.address_index = -1;
  if (!displaced) {
    auto it = std::find(rec.sol_addresses.begin(), rec.sol_addresses.end(), true_address);
    rec.truth.address_index = static_cast<int>(it - rec.sol_addresses.begin());
  }
}

PersonRecord make_record(const TruePerson& person, int home_locality,
                         const ScenarioConfig& cfg, RngStream& rng) {
  PersonRecord rec;
  rec.id = person.id;
  rec.covariates = person.covariates;
  for (int j = 0; j < rec.covariates.size(); ++j)
    rec.covariates[j] += rng.normal(0.0, 0.1);  // register proxy of x_k
  rec.register_attribute = person.attribute + rng.normal(0.0, cfg.attribute_noise_sd);
  build_addresses(rec, person.true_address, home_locality, cfg, rng);
  fill_address_features(rec, rng);
  return rec;
}

PersonRecord make_erroneous_record(PersonId id, const ScenarioConfig& cfg, RngStream& rng) {
  PersonRecord rec;
  rec.id = id;
  rec.covariates.resize(cfg.covariate_dim);
  for (int j = 0; j < cfg.covariate_dim; ++j)
    rec.covariates[j] = rng.normal(cfg.erroneous_shift, 1.0);
  rec.register_attribute = 0.0;
  const int q = draw_multiplicity(cfg, rng);
  std::unordered_set<AddressId> seen;
  while (static_cast<int>(rec.sol_addresses.size()) < q) {
    AddressId a = static_cast<AddressId>(rng.index(universe_size(cfg)));
    if (seen.insert(a).second) rec.sol_addresses.push_back(a);
  }
  rec.truth = TruthLabel{false, false, -1};
  fill_address_features(rec, rng);
  return rec;
}

void refresh_truth(PersonRecord& rec, const std::unordered_map<PersonId, const TruePerson*>& by_id) {
  auto it = by_id.find(rec.id);
  if (it == by_id.end() || !it->second->alive_in_scope) {
    rec.truth = TruthLabel{false, false, -1};
    return;
  }
  rec.truth.in_scope = true;
  auto pos = std::find(rec.sol_addresses.begin(), rec.sol_addresses.end(),
                       it->second->true_address);
  if (pos == rec.sol_addresses.end()) {
    rec.truth.displaced = true;
    rec.truth.address_index = -1;
  } else {
    rec.truth.displaced = false;
    rec.truth.address_index = static_cast<int>(pos - rec.sol_addresses.begin());
  }
}

}  // namespace

WorldTruth generate_world(const ScenarioConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed, kWorldStream);
  WorldTruth world;
  world.time = 0;
  world.localities.resize(cfg.m);
  for (int i = 0; i < cfg.m; ++i) {
    world.localities[i].index = i + 1;
    world.localities[i].first_address = static_cast<AddressId>(i * cfg.addresses_per_locality);
    world.localities[i].last_address =
        static_cast<AddressId>((i + 1) * cfg.addresses_per_locality - 1);
  }
  world.persons.reserve(cfg.n);
  for (std::int64_t k = 0; k < cfg.n; ++k) {
    TruePerson p;
    p.id = k + 1;
    p.alive_in_scope = true;
    p.true_address = static_cast<AddressId>(rng.index(universe_size(cfg)));
    p.covariates.resize(cfg.covariate_dim);
    for (int j = 0; j < cfg.covariate_dim; ++j) p.covariates[j] = rng.normal();
    p.attribute = 1.0 + 0.5 * (cfg.covariate_dim > 0 ? p.covariates[0] : 0.0) + rng.normal(0, 0.2);
    world.persons.push_back(std::move(p));
  }
  return world;
}

std::vector<PersonRecord> derive_pd(const WorldTruth& world, const ScenarioConfig& cfg) {
  RngStream rng(cfg.seed, kPdStream);
  std::vector<PersonRecord> pd;
  PersonId next_err_id = -1;  // erroneous records get negative ids
  // erroneous-per-included rate chosen so E(|P\U| / |P|) equals the config rate
  const double err_p = cfg.erroneous_rate >= 1.0
                           ? 1.0
                           : std::min(1.0, cfg.erroneous_rate / (1.0 - cfg.erroneous_rate));
  for (const auto& person : world.persons) {
    if (!person.alive_in_scope) continue;
    if (rng.bernoulli(cfg.missing_rate)) continue;
    int home = world.locality_of(person.true_address);
    pd.push_back(make_record(person, home, cfg, rng));
    if (rng.bernoulli(err_p)) pd.push_back(make_erroneous_record(next_err_id--, cfg, rng));
  }
  return pd;
}

CensusResult simulate_census(const WorldTruth& world, std::vector<PersonRecord>& pd,
                             double link_rate, const ScenarioConfig& cfg) {
  if (!(link_rate >= 0.0 && link_rate <= 1.0))
    throw std::invalid_argument("simulate_census: link_rate must lie in [0,1]");
  RngStream rng(cfg.seed, kCensusStream);
  CensusResult res;
  res.n_l = world.in_scope_count();
  res.n_p = static_cast<std::int64_t>(pd.size());
  for (auto& rec : pd) {
    rec.core = false;
    if (rec.truth.in_scope && rng.bernoulli(link_rate)) {
      rec.core = true;
      rec.label = rec.truth;
      ++res.n_c;
    }
  }
  const double cv = cfg.census_noise_cv;
  const double sigma = cv > 0 ? std::sqrt(std::log1p(cv * cv)) : 0.0;
  auto truth = world.true_counts();
  res.n_hat.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double factor = sigma > 0 ? std::exp(sigma * rng.normal() - 0.5 * sigma * sigma) : 1.0;
    res.n_hat[i] = truth[i] * factor;
    res.n_hat_national += res.n_hat[i];
  }
  return res;
}

UpdateBatch step_world(WorldTruth& world, std::vector<PersonRecord>& pd,
                       const ScenarioConfig& cfg) {
  RngStream rng(cfg.seed, kStepStream + static_cast<std::uint64_t>(world.time));
  UpdateBatch batch;
  auto& ev = batch.events;
  ev.births_i.assign(cfg.m, 0.0);
  ev.deaths_i.assign(cfg.m, 0.0);
  ev.net_internal_i.assign(cfg.m, 0.0);
  ev.net_external_i.assign(cfg.m, 0.0);

  const std::int64_t n_before = world.in_scope_count();
  PersonId max_id = 0;
  for (const auto& p : world.persons) max_id = std::max(max_id, p.id);

  for (auto& p : world.persons) {
    if (!p.alive_in_scope) continue;
    int loc = world.locality_of(p.true_address);
    if (rng.bernoulli(cfg.death_rate)) {
      p.alive_in_scope = false;
      p.true_address = kNoAddress;
      ++ev.deaths;
      ev.deaths_i[loc - 1] += 1.0;
      continue;
    }
    if (rng.bernoulli(cfg.emigration_rate)) {
      p.alive_in_scope = false;
      p.true_address = kNoAddress;
      ++ev.emigration;
      ev.net_external_i[loc - 1] -= 1.0;
      continue;
    }
    if (rng.bernoulli(cfg.move_rate)) {
      AddressId dst = p.true_address;
      while (dst == p.true_address)
        dst = static_cast<AddressId>(rng.index(universe_size(cfg)));
      int dst_loc = world.locality_of(dst);
      p.true_address = dst;
      ++ev.moves;
      if (dst_loc != loc) {
        ev.net_internal_i[loc - 1] -= 1.0;
        ev.net_internal_i[dst_loc - 1] += 1.0;
      }
    }
  }

  auto add_person = [&](bool external) {
    TruePerson p;
    p.id = ++max_id;
    p.alive_in_scope = true;
    p.true_address = static_cast<AddressId>(rng.index(universe_size(cfg)));
    p.covariates.resize(cfg.covariate_dim);
    for (int j = 0; j < cfg.covariate_dim; ++j) p.covariates[j] = rng.normal();
    p.attribute = 1.0 + 0.5 * (cfg.covariate_dim > 0 ? p.covariates[0] : 0.0) + rng.normal(0, 0.2);
    int loc = world.locality_of(p.true_address);
    if (external) {
      ++ev.immigration;
      ev.net_external_i[loc - 1] += 1.0;
    } else {
      ++ev.births;
      ev.births_i[loc - 1] += 1.0;
    }
    if (!rng.bernoulli(cfg.missing_rate)) {
      pd.push_back(make_record(p, loc, cfg, rng));
      pd.back().truth.in_scope = true;
    }
    world.persons.push_back(std::move(p));
  };
  const int n_births = rng.poisson(cfg.birth_rate * static_cast<double>(n_before));
  const int n_imm = rng.poisson(cfg.immigration_rate * static_cast<double>(n_before));
  for (int i = 0; i < n_births; ++i) add_person(false);
  for (int i = 0; i < n_imm; ++i) add_person(true);

  std::unordered_map<PersonId, const TruePerson*> by_id;
  by_id.reserve(world.persons.size());
  for (const auto& p : world.persons) by_id[p.id] = &p;
  for (auto& rec : pd) refresh_truth(rec, by_id);

  // register refresh (B_t candidates): new address vector and a fresh label
  for (auto& rec : pd) {
    if (!rng.bernoulli(cfg.register_update_rate)) continue;
    auto it = by_id.find(rec.id);
    if (it != by_id.end() && it->second->alive_in_scope) {
      int home = world.locality_of(it->second->true_address);
      build_addresses(rec, it->second->true_address, home, cfg, rng);
      fill_address_features(rec, rng);
    }
    rec.label = rec.truth;
    batch.refreshed_ids.push_back(rec.id);
  }

  // coverage survey (S_t): Bernoulli sample with known inclusion probability
  batch.survey_pi = cfg.coverage_fraction;
  for (auto& rec : pd) {
    if (rng.bernoulli(cfg.coverage_fraction)) {
      rec.label = rec.truth;
      batch.survey_ids.push_back(rec.id);
    }
  }

  ++world.time;
  return batch;
}

void assign_truth_from_counters(std::vector<PersonRecord>& pd,
                                const std::vector<FractionalCounter>& counters,
                                RngStream& rng) {
  if (pd.size() != counters.size())
    throw std::invalid_argument("assign_truth_from_counters: size mismatch");
  for (std::size_t k = 0; k < pd.size(); ++k) {
    const auto& c = counters[k];
    auto& t = pd[k].truth;
    if (rng.bernoulli(c.theta)) {
      t = TruthLabel{false, false, -1};
      continue;
    }
    t.in_scope = true;
    if (rng.bernoulli(c.xi)) {
      t.displaced = true;
      t.address_index = -1;
      continue;
    }
    t.displaced = false;
    double u = rng.uniform() * c.mu.sum();
    double acc = 0.0;
    t.address_index = pd[k].q() - 1;
    for (int j = 0; j < c.mu.size(); ++j) {
      acc += c.mu[j];
      if (u <= acc) {
        t.address_index = j;
        break;
      }
    }
  }
}

void export_world_csv(const WorldTruth& world, const std::string& path,
                      std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# config_hash=" << config_hash << "\n";
  out << "id,alive_in_scope,true_address,locality,attribute\n";
  for (const auto& p : world.persons) {
    out << p.id << ',' << (p.alive_in_scope ? 1 : 0) << ',' << p.true_address << ','
        << (p.alive_in_scope ? world.locality_of(p.true_address) : 0) << ',' << p.attribute
        << "\n";
  }
}

void export_pd_csv(const std::vector<PersonRecord>& pd, const std::string& path,
                   std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# config_hash=" << config_hash << "\n";
  out << "id,q,addresses,core,label_in_scope,label_displaced,label_address_index\n";
  for (const auto& rec : pd) {
    out << rec.id << ',' << rec.q() << ',';
    for (int j = 0; j < rec.q(); ++j) out << (j ? ";" : "") << rec.sol_addresses[j];
    out << ',' << (rec.core ? 1 : 0) << ',';
    if (rec.label)
      out << (rec.label->in_scope ? 1 : 0) << ',' << (rec.label->displaced ? 1 : 0) << ','
          << rec.label->address_index;
    else
      out << ",,";
    out << "\n";
  }
}

}  // namespace fracount::synth
