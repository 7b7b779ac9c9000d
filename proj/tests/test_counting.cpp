#include <doctest.h>

#include <cmath>
#include <vector>

#include "fracount/counting.hpp"
#include "fracount/rng.hpp"

using namespace fracount;

namespace {

// two localities: addresses 0-9 and 10-19
std::vector<Locality> two_localities() {
  return {Locality{1, 0, 9}, Locality{2, 10, 19}};
}

PersonRecord make_person(PersonId id, std::vector<AddressId> addrs) {
  PersonRecord rec;
  rec.id = id;
  rec.sol_addresses = std::move(addrs);
  rec.address_features = Mat::Zero(rec.q(), 2);
  rec.covariates = Vec::Zero(2);
  return rec;
}

FractionalCounter make_counter(std::vector<double> mu, double xi = 0.0, double theta = 0.0) {
  FractionalCounter c;
  c.mu = Eigen::Map<Vec>(mu.data(), static_cast<int>(mu.size()));
  c.xi = xi;
  c.theta = theta;
  return c;
}

// the three-person fixture with non-degenerate placement probabilities
struct Fixture3 {
  std::vector<PersonRecord> pd;
  std::vector<FractionalCounter> counters;
  Fixture3() {
    pd = {make_person(1, {1, 12}), make_person(2, {2, 15}), make_person(3, {3, 11})};
    counters = {make_counter({0.6, 0.4}), make_counter({0.3, 0.7}), make_counter({0.5, 0.5})};
  }
};

}  // namespace

TEST_CASE("classify follows argmax with lowest-index ties") {
  auto rec = make_person(1, {1, 12});
  CHECK(counting::classify(rec, make_counter({1.0, 0.0}))[0] == 1);
  CHECK(counting::classify(rec, make_counter({0.3, 0.7}))[1] == 1);
  auto tie = counting::classify(rec, make_counter({0.5, 0.5}));
  CHECK(tie[0] == 1);
  CHECK(tie[1] == 0);
  FractionalCounter empty;
  CHECK_THROWS(counting::classify(rec, empty));
}

TEST_CASE("classifier count equals brute-force majority vote") {
  Fixture3 f;
  auto est = counting::count_classifier(f.pd, f.counters, two_localities());
  // hand enumeration: p1 -> L1, p2 -> L2, p3 tie -> L1
  CHECK(est.totals[0] == doctest::Approx(2.0));
  CHECK(est.totals[1] == doctest::Approx(1.0));
  CHECK(est.method == CountMethod::Classifier);
}

TEST_CASE("fractional count matches single-person arithmetic") {
  auto pd = std::vector<PersonRecord>{make_person(1, {1, 12})};
  auto counters = std::vector<FractionalCounter>{make_counter({0.6, 0.4})};
  auto est = counting::count_fractional(pd, counters, two_localities());
  CHECK(est.totals[0] == doctest::Approx(0.6));
  CHECK(est.totals[1] == doctest::Approx(0.4));
  CHECK(est.variances[0] == doctest::Approx(0.24));
  CHECK(est.variances[1] == doctest::Approx(0.24));
}

TEST_CASE("fractional count equals enumeration over all placement outcomes") {
  Fixture3 f;
  auto est = counting::count_fractional(f.pd, f.counters, two_localities());

  // independent oracle: enumerate all 2^3 joint placements
  double e1 = 0.0, e2 = 0.0, m2_1 = 0.0, m2_2 = 0.0;
  for (int mask = 0; mask < 8; ++mask) {
    double p = 1.0;
    int c1 = 0, c2 = 0;
    for (int k = 0; k < 3; ++k) {
      int pick = (mask >> k) & 1;  // 0 = first address, 1 = second
      p *= pick ? 1.0 - f.counters[k].mu[0] : f.counters[k].mu[0];
      AddressId a = f.pd[k].sol_addresses[pick];
      (a <= 9 ? c1 : c2) += 1;
    }
    e1 += p * c1;
    e2 += p * c2;
    m2_1 += p * c1 * c1;
    m2_2 += p * c2 * c2;
  }
  CHECK(est.totals[0] == doctest::Approx(e1).epsilon(1e-12));
  CHECK(est.totals[1] == doctest::Approx(e2).epsilon(1e-12));
  // hand values frozen: 1.4 / 1.6, variance 0.70 each
  CHECK(est.totals[0] == doctest::Approx(1.4));
  CHECK(est.totals[1] == doctest::Approx(1.6));
  CHECK(est.variances[0] == doctest::Approx(m2_1 - e1 * e1).epsilon(1e-12));
  CHECK(est.variances[0] == doctest::Approx(0.70));
  CHECK(est.variances[1] == doctest::Approx(0.70));
}

TEST_CASE("degenerate counters make classifier and fractional counts identical") {
  auto pd = std::vector<PersonRecord>{make_person(1, {1, 12}), make_person(2, {14})};
  auto counters =
      std::vector<FractionalCounter>{make_counter({0.0, 1.0}), make_counter({1.0})};
  auto frac = counting::count_fractional(pd, counters, two_localities());
  auto cls = counting::count_classifier(pd, counters, two_localities());
  for (int i = 0; i < 2; ++i) {
    CHECK(frac.totals[i] == doctest::Approx(cls.totals[i]));
    CHECK(frac.variances[i] == doctest::Approx(0.0));
  }
}

TEST_CASE("family clusters inflate the variance bound") {
  auto pd = std::vector<PersonRecord>{make_person(1, {1, 12}), make_person(2, {2, 13})};
  pd[0].family = pd[1].family = 7;
  auto counters =
      std::vector<FractionalCounter>{make_counter({0.5, 0.5}), make_counter({0.5, 0.5})};
  counting::FractionalOptions opts;
  opts.cluster_by_family = true;
  auto clustered = counting::count_fractional(pd, counters, two_localities(), opts);
  auto indep = counting::count_fractional(pd, counters, two_localities());
  // perfectly-correlated block: (sd1 + sd2)^2 = 1.0 vs independent 0.5
  CHECK(indep.variances[0] == doctest::Approx(0.5));
  CHECK(clustered.variances[0] == doctest::Approx(1.0));
}

TEST_CASE("count_with_theta matches the four-person hand computation") {
  std::vector<PersonRecord> pd = {make_person(1, {1, 12}), make_person(2, {2}),
                                  make_person(3, {13}), make_person(4, {4, 15})};
  std::vector<FractionalCounter> counters = {
      make_counter({0.5, 0.3}, 0.2, 0.1), make_counter({0.6}, 0.4, 0.5),
      make_counter({0.9}, 0.1, 0.0), make_counter({0.2, 0.7}, 0.1, 0.25)};
  auto est = counting::count_with_theta(pd, counters, two_localities());
  // frozen hand values: placed mass (0.90, 1.695), xi mass 0.555 allocated
  // proportionally -> (1.0924855491, 2.0575144509), national total 3.15
  CHECK(est.totals[0] == doctest::Approx(1.09248554913295).epsilon(1e-10));
  CHECK(est.totals[1] == doctest::Approx(2.05751445086705).epsilon(1e-10));
  CHECK(est.totals[0] + est.totals[1] == doctest::Approx(3.15).epsilon(1e-12));

  // independent oracle: national expectation over (erroneous, placement)
  // outcomes is sum_k (1-theta_k) since every in-scope person counts somewhere
  double national = 0.0;
  for (const auto& c : counters) national += 1.0 - c.theta;
  CHECK(est.totals[0] + est.totals[1] == doctest::Approx(national).epsilon(1e-12));

  counting::ThetaOptions sep;
  sep.allocation = counting::XiAllocation::SeparateRow;
  auto est2 = counting::count_with_theta(pd, counters, two_localities(), sep);
  CHECK(est2.totals[0] == doctest::Approx(0.90).epsilon(1e-12));
  CHECK(est2.totals[1] == doctest::Approx(1.695).epsilon(1e-12));
  CHECK(est2.unplaced == doctest::Approx(0.555).epsilon(1e-12));
}

TEST_CASE("count_with_theta limits") {
  Fixture3 f;
  for (auto& c : f.counters) c.theta = 1.0;
  auto est = counting::count_with_theta(f.pd, f.counters, two_localities());
  CHECK(est.totals[0] == doctest::Approx(0.0));
  CHECK(est.totals[1] == doctest::Approx(0.0));

  Fixture3 g;  // theta = 0 -> identical to count_fractional
  auto with = counting::count_with_theta(g.pd, g.counters, two_localities());
  auto frac = counting::count_fractional(g.pd, g.counters, two_localities());
  CHECK(with.totals[0] == doctest::Approx(frac.totals[0]));
  CHECK(with.totals[1] == doctest::Approx(frac.totals[1]));
}

TEST_CASE("social total reduces to the fractional count for unit attributes") {
  Fixture3 f;
  for (auto& rec : f.pd) rec.register_attribute = 1.0;
  auto locs = two_localities();
  auto frac = counting::count_fractional(f.pd, f.counters, locs);
  auto t1 = counting::social_total(f.pd, f.counters, locs[0]);
  auto t2 = counting::social_total(f.pd, f.counters, locs[1]);
  CHECK(t1.total == doctest::Approx(frac.totals[0]));
  CHECK(t2.total == doctest::Approx(frac.totals[1]));

  f.pd[1].register_attribute = std::nan("");
  CHECK_THROWS(counting::social_total(f.pd, f.counters, locs[0]));
}

TEST_CASE("social total expectation matches the enumeration oracle") {
  Fixture3 f;
  f.pd[0].register_attribute = 2.0;
  f.pd[1].register_attribute = -1.0;
  f.pd[2].register_attribute = 0.5;
  auto locs = two_localities();
  auto t1 = counting::social_total(f.pd, f.counters, locs[0]);
  // E[sum_k eps_k delta_k(L1)] = sum_k eps_k mu_k(L1)
  double expect = 2.0 * 0.6 + (-1.0) * 0.3 + 0.5 * 0.5;
  CHECK(t1.total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("unknown address is rejected") {
  auto pd = std::vector<PersonRecord>{make_person(1, {55})};
  auto counters = std::vector<FractionalCounter>{make_counter({1.0})};
  CHECK_THROWS(counting::count_fractional(pd, counters, two_localities()));
}
