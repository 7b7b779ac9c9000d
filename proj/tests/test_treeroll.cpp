#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "fracount/rng.hpp"
#include "fracount/treeroll.hpp"

using namespace fracount;
using treeroll::Observation;

namespace {

Vec feat(double x) { return Vec::Constant(1, x); }

// labels 0 for x <= 0, 1 for x > 0, with optional noise
std::vector<Observation> separable(int n, RngStream& rng, double flip = 0.0) {
  std::vector<Observation> out;
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform() * 2.0 - 1.0;
    int label = x > 0.0 ? 1 : 0;
    if (flip > 0 && rng.bernoulli(flip)) label = 1 - label;
    out.push_back({i + 1, feat(x), label, 0.0});
  }
  return out;
}

}  // namespace

TEST_CASE("pure-label input grows a single leaf") {
  RngStream rng(1, 1);
  std::vector<Observation> data;
  for (int i = 0; i < 100; ++i) data.push_back({i + 1, feat(rng.normal()), 1, 0.0});
  auto tree = treeroll::grow_initial(data, 2);
  CHECK(tree.nodes().size() == 1);
  auto p = tree.predict(feat(0.3));
  CHECK(p[1] > 0.99);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(treeroll::grow_initial({}, 2));
}

TEST_CASE("separable data installs one split near the boundary") {
  RngStream rng(2, 2);
  auto data = separable(4000, rng);
  auto tree = treeroll::grow_initial(data, 2);
  REQUIRE(tree.nodes().size() >= 3);
  const auto& root = tree.nodes()[0];
  CHECK_FALSE(root.is_leaf());
  CHECK(root.feature == 0);
  CHECK(std::abs(root.threshold) < 0.05);
  CHECK(tree.predict(feat(-0.5))[0] > 0.95);
  CHECK(tree.predict(feat(0.5))[1] > 0.95);
}

TEST_CASE("tree-generated data is recovered within 0.02 L1 on a probe set") {
  RngStream rng(3, 3);
  // generator: two-level tree on one feature, thresholds -0.3 and 0.4
  auto gen_probs = [](double x) {
    Vec p(2);
    if (x <= -0.3)
      p << 0.9, 0.1;
    else if (x <= 0.4)
      p << 0.2, 0.8;
    else
      p << 0.7, 0.3;
    return p;
  };
  std::vector<Observation> data;
  for (int i = 0; i < 40000; ++i) {
    double x = rng.uniform() * 2.0 - 1.0;
    data.push_back({i + 1, feat(x), rng.bernoulli(gen_probs(x)[1]) ? 1 : 0, 0.0});
  }
  auto tree = treeroll::grow_initial(data, 2);
  // mean L1 distance over a probe grid is the fidelity measure
  double total = 0.0;
  for (int i = 0; i <= 200; ++i) {
    double x = -0.99 + 1.98 * i / 200.0;
    total += (tree.predict(feat(x)) - gen_probs(x)).cwiseAbs().sum();
  }
  CHECK(total / 201.0 < 0.02);
}

TEST_CASE("hoeffding guard blocks weak-signal splits until evidence suffices") {
  // labels are Bernoulli(0.4) left of zero and Bernoulli(0.6) right of zero:
  // the true gain is 1 - H(0.6) ~ 0.029 bits
  auto weak = [](int n, RngStream& rng) {
    std::vector<Observation> out;
    for (int i = 0; i < n; ++i) {
      double x = rng.uniform() * 2.0 - 1.0;
      int label = rng.bernoulli(x > 0.0 ? 0.6 : 0.4) ? 1 : 0;
      out.push_back(Observation{i + 1, feat(x), label, 0.0});
    }
    return out;
  };
  treeroll::TreeOptions opts;
  opts.hoeffding_delta = 1e-10;
  opts.min_leaf = 5;
  RngStream rng(4, 4);
  // n = 300 gives eps = sqrt(ln(1e10)/600) ~ 0.20, far above the gain
  auto small_tree = treeroll::grow_initial(weak(300, rng), 2, opts);
  CHECK(small_tree.nodes().size() == 1);
  // n = 40000 gives eps ~ 0.017, below the gain, so the split is released
  auto big_tree = treeroll::grow_initial(weak(40000, rng), 2, opts);
  CHECK(big_tree.nodes().size() >= 3);
}

TEST_CASE("stale evidence weights") {
  CHECK(treeroll::stale_evidence_weight(5.0, 1e300) == doctest::Approx(1.0));
  CHECK(treeroll::stale_evidence_weight(0.0, 10.0) == doctest::Approx(1.0));
  CHECK(treeroll::stale_evidence_weight(10.0, 10.0) == doctest::Approx(0.5));
  CHECK(treeroll::stale_evidence_weight(20.0, 10.0) == doctest::Approx(0.25));
  CHECK(treeroll::stale_evidence_weight(-1.0, 10.0) == doctest::Approx(1.0));
  CHECK_THROWS(treeroll::stale_evidence_weight(1.0, -10.0));
  // hand-computed weighted counts: ages 0, 10, 20 with half-life 10
  std::vector<Observation> obs = {{1, feat(0), 0, 20.0}, {2, feat(0), 1, 10.0},
                                  {3, feat(0), 1, 0.0}};
  auto counts = treeroll::weighted_counts(obs, 2, 20.0, 10.0);
  CHECK(counts[0] == doctest::Approx(1.0));
  CHECK(counts[1] == doctest::Approx(0.5 + 0.25));
}

TEST_CASE("roll_tree with empty data returns the identical tree and a zero report") {
  RngStream rng(5, 5);
  auto tree = treeroll::grow_initial(separable(2000, rng), 2);
  auto [next, rep] = treeroll::roll_tree(tree, {}, {}, {});
  CHECK(rep.delta_eps == 0.0);
  CHECK(rep.delta_m == 0.0);
  CHECK_FALSE(rep.accepted);
  CHECK(next.nodes().size() == tree.nodes().size());
  for (double x : {-0.7, -0.1, 0.2, 0.9})
    CHECK((next.predict(feat(x)) - tree.predict(feat(x))).cwiseAbs().sum() == 0.0);

  treeroll::RollOptions bad;
  bad.bound = -0.5;
  CHECK_THROWS(treeroll::roll_tree(tree, {}, {}, bad));
}

TEST_CASE("stationary stream leaves the model unchanged") {
  RngStream rng(6, 6);
  auto tree = treeroll::grow_initial(separable(4000, rng, 0.1), 2);
  auto d_t = separable(400, rng, 0.1);
  std::vector<Vec> non_updated;
  for (int i = 0; i < 500; ++i) non_updated.push_back(feat(rng.uniform() * 2 - 1));
  treeroll::RollOptions opts;
  opts.accept_margin = 0.02;
  auto [next, rep] = treeroll::roll_tree(tree, d_t, non_updated, opts);
  CHECK(std::abs(rep.delta_eps) < 0.05);
  CHECK_FALSE(rep.accepted);
}

TEST_CASE("planted shift is learned and the edit is local to the shifted region") {
  RngStream rng(7, 7);
  // a short half-life lets the epoch-1 evidence outweigh the epoch-0 history
  treeroll::TreeOptions topts;
  topts.half_life = 0.2;
  auto tree = treeroll::grow_initial(separable(6000, rng), 2, topts);
  // concept shift: labels flip for x > 0.5 only
  std::vector<Observation> d_t;
  for (int i = 0; i < 1200; ++i) {
    double x = rng.uniform() * 2.0 - 1.0;
    int label = x > 0.0 ? 1 : 0;
    if (x > 0.5) label = 0;
    d_t.push_back({i + 1, feat(x), label, 1.0});
  }
  std::vector<Vec> non_updated;
  for (int i = 0; i < 2000; ++i) non_updated.push_back(feat(rng.uniform() * 2 - 1));
  treeroll::RollOptions opts;
  opts.bound = 1.0;  // unconstrained
  opts.now = 1.0;
  auto [next, rep] = treeroll::roll_tree(tree, d_t, non_updated, opts);
  CHECK(rep.accepted);
  CHECK(rep.delta_eps > 0.0);
  CHECK(next.predict(feat(0.8))[0] > 0.5);            // shifted region re-learned
  CHECK((next.predict(feat(-0.5)) - tree.predict(feat(-0.5))).cwiseAbs().sum() <
        0.05);  // unshifted region untouched

  // binding bound: no admissible edit
  treeroll::RollOptions tight = opts;
  tight.bound = 0.0;
  auto [same, rep0] = treeroll::roll_tree(tree, d_t, non_updated, tight);
  CHECK_FALSE(rep0.accepted);
  for (double x : {-0.7, 0.2, 0.8})
    CHECK((same.predict(feat(x)) - tree.predict(feat(x))).cwiseAbs().sum() == 0.0);
}

TEST_CASE("accepted updates respect the churn bound over random streams") {
  RngStream rng(8, 8);
  for (int rep_i = 0; rep_i < 25; ++rep_i) {
    auto tree = treeroll::grow_initial(separable(1500, rng, 0.05), 2);
    std::vector<Observation> d_t;
    double flip_region = rng.uniform() * 2.0 - 1.0;
    for (int i = 0; i < 400; ++i) {
      double x = rng.uniform() * 2.0 - 1.0;
      int label = x > 0.0 ? 1 : 0;
      if (x > flip_region && rng.bernoulli(0.7)) label = 1 - label;
      d_t.push_back({i + 1, feat(x), label, 1.0});
    }
    std::vector<Vec> non_updated;
    for (int i = 0; i < 600; ++i) non_updated.push_back(feat(rng.uniform() * 2 - 1));
    treeroll::RollOptions opts;
    opts.bound = rng.uniform();
    opts.now = 1.0;
    auto [next, report] = treeroll::roll_tree(tree, d_t, non_updated, opts);
    if (report.accepted) CHECK(report.delta_m <= opts.bound + 1e-12);
  }
}

TEST_CASE("tree counters mask positions beyond each record's address count") {
  RngStream rng(9, 9);
  // three-class tree over (position 1, position 2, displaced)
  std::vector<Observation> data;
  for (int i = 0; i < 3000; ++i) {
    double x = rng.normal();
    int label = x < -0.5 ? 0 : (x < 0.5 ? 1 : 2);
    data.push_back({i + 1, feat(x), label, 0.0});
  }
  auto tree = treeroll::grow_initial(data, 3);
  std::vector<PersonRecord> pd(2);
  pd[0].id = 1;
  pd[0].sol_addresses = {0, 1};
  pd[0].covariates = feat(0.0);
  pd[1].id = 2;
  pd[1].sol_addresses = {0};  // q=1: position 2 must be masked out
  pd[1].covariates = feat(0.0);
  pd[0].address_features = Mat::Zero(2, 2);
  pd[1].address_features = Mat::Zero(1, 2);
  auto counters = treeroll::tree_counters(tree, pd);
  CHECK(std::abs(counters[0].simplex_residual()) < 1e-12);
  CHECK(std::abs(counters[1].simplex_residual()) < 1e-12);
  CHECK(counters[0].mu.size() == 2);
  CHECK(counters[1].mu.size() == 1);
  // hand trace: the leaf at x=0 predicts class 1 most; with q=1 that mass
  // moves into the renormalized (mu, xi)
  auto leaf_p = tree.predict(feat(0.0));
  CHECK(counters[0].mu[1] == doctest::Approx(leaf_p[1]).epsilon(1e-9));
  double mass = leaf_p[0] + leaf_p[2];
  CHECK(counters[1].mu[0] == doctest::Approx(leaf_p[0] / mass).epsilon(1e-9));
}

TEST_CASE("tree save/load round-trips predictions and evidence") {
  RngStream rng(10, 10);
  auto tree = treeroll::grow_initial(separable(3000, rng, 0.05), 2);
  std::string path = "tree_roundtrip.txt";
  treeroll::save_tree(tree, path);
  auto loaded = treeroll::load_tree(path);
  REQUIRE(loaded.nodes().size() == tree.nodes().size());
  for (double x : {-0.9, -0.3, 0.1, 0.6, 0.95})
    CHECK((loaded.predict(feat(x)) - tree.predict(feat(x))).cwiseAbs().sum() < 1e-12);
  std::remove(path.c_str());
}
