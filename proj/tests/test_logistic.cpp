#include <doctest.h>

#include <cmath>

#include "fracount/logistic.hpp"
#include "fracount/rng.hpp"

using namespace fracount;

namespace {

// independent log prediction function for the 1-D grid oracle:
// log prod_k f(y_k | x_k, b) + log phi(b; m, s^2), additive constants dropped
double log_pred_1d(double b, const Mat& x, const Eigen::VectorXi& y, double m, double s2) {
  double ll = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    double eta = b * x(i, 0);
    double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += y[i] * eta - log1pe;
  }
  return ll - 0.5 * (b - m) * (b - m) / s2;
}

struct Sim1d {
  Mat x;
  Eigen::VectorXi y;
};

Sim1d simulate_1d(double beta, int n, RngStream& rng) {
  Sim1d s;
  s.x.resize(n, 1);
  s.y.resize(n);
  for (int i = 0; i < n; ++i) {
    s.x(i, 0) = rng.normal();
    double p = 1.0 / (1.0 + std::exp(-beta * s.x(i, 0)));
    s.y[i] = rng.bernoulli(p) ? 1 : 0;
  }
  return s;
}

}  // namespace

TEST_CASE("binary logistic MLE recovers the generating coefficient") {
  RngStream rng(11, 1);
  auto sim = simulate_1d(0.8, 20000, rng);
  logit::BinaryLogit lik(sim.x, sim.y, Vec());
  auto fit = logit::maximize(lik, Vec::Zero(1), std::nullopt, {});
  REQUIRE(fit.converged);
  double se = std::sqrt(fit.cov(0, 0));
  CHECK(std::abs(fit.beta[0] - 0.8) < 3.0 * se);
}

TEST_CASE("posterior mode and curvature match the dense-grid oracle") {
  RngStream rng(5, 2);
  auto sim = simulate_1d(0.5, 50, rng);
  logit::GaussianPrior prior;
  prior.mean = Vec::Constant(1, 0.2);
  prior.cov = Mat::Constant(1, 1, 0.5);
  logit::BinaryLogit lik(sim.x, sim.y, Vec());
  auto fit = logit::maximize(lik, prior.mean, prior, {});
  REQUIRE(fit.converged);

  // dense grid argmax, then variance by finite differences at the grid mode
  const double lo = -3.0, hi = 3.0;
  const int grid_n = 600001;
  const double h = (hi - lo) / (grid_n - 1);
  double best = lo;
  double best_v = -1e300;
  for (int i = 0; i < grid_n; ++i) {
    double b = lo + i * h;
    double v = log_pred_1d(b, sim.x, sim.y, prior.mean[0], prior.cov(0, 0));
    if (v > best_v) {
      best_v = v;
      best = b;
    }
  }
  double d2 = (log_pred_1d(best + h, sim.x, sim.y, prior.mean[0], prior.cov(0, 0)) -
               2.0 * best_v +
               log_pred_1d(best - h, sim.x, sim.y, prior.mean[0], prior.cov(0, 0))) /
              (h * h);
  double grid_var = -1.0 / d2;
  CHECK(std::abs(fit.beta[0] - best) < 1e-3);
  CHECK(std::abs(fit.cov(0, 0) - grid_var) < 1e-3);
}

TEST_CASE("diffuse prior reproduces the likelihood-only fit") {
  RngStream rng(7, 3);
  auto sim = simulate_1d(-0.4, 500, rng);
  logit::BinaryLogit lik(sim.x, sim.y, Vec());
  auto mle = logit::maximize(lik, Vec::Zero(1), std::nullopt, {});
  logit::GaussianPrior diffuse;
  diffuse.mean = Vec::Zero(1);
  diffuse.cov = Mat::Constant(1, 1, 1e10);
  auto post = logit::maximize(lik, Vec::Zero(1), diffuse, {});
  CHECK(std::abs(post.beta[0] - mle.beta[0]) < 1e-6);
}

TEST_CASE("placement logit probabilities are a softmax over alternatives") {
  // beta = [gamma(2); alpha; eta(2)]
  Vec beta(5);
  beta << 1.0, -0.5, 0.3, 0.2, -0.1;
  Mat u(2, 2);
  u << 0.5, 1.0, -0.2, 0.4;
  Vec z(2);
  z << 1.5, -0.7;
  auto p = logit::PlacementLogit::probabilities(beta, u, z);
  REQUIRE(p.size() == 3);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // direct evaluation of the stated scores
  Vec scores(3);
  scores[0] = 0.5 * 1.0 + 1.0 * -0.5;
  scores[1] = -0.2 * 1.0 + 0.4 * -0.5;
  scores[2] = 0.3 + 0.2 * 1.5 + (-0.1) * -0.7;
  Vec ref = scores.array().exp();
  ref /= ref.sum();
  for (int j = 0; j < 3; ++j) CHECK(p[j] == doctest::Approx(ref[j]).epsilon(1e-12));
}

TEST_CASE("placement logit gradient matches finite differences") {
  RngStream rng(3, 4);
  std::vector<logit::PlacementObs> obs;
  for (int i = 0; i < 20; ++i) {
    logit::PlacementObs o;
    int q = 1 + static_cast<int>(rng.index(3));
    o.address_features.resize(q, 2);
    for (int r = 0; r < q; ++r)
      for (int c = 0; c < 2; ++c) o.address_features(r, c) = rng.normal();
    o.z.resize(2);
    o.z << rng.normal(), rng.normal();
    o.outcome = static_cast<int>(rng.index(q + 1));
    obs.push_back(o);
  }
  logit::PlacementLogit lik(obs, 2, 2);
  Vec beta(5);
  beta << 0.3, -0.2, 0.1, 0.4, -0.5;
  Vec grad(5);
  lik.eval(beta, &grad, nullptr);
  const double h = 1e-6;
  for (int j = 0; j < 5; ++j) {
    Vec bp = beta, bm = beta;
    bp[j] += h;
    bm[j] -= h;
    double fd = (lik.eval(bp, nullptr, nullptr) - lik.eval(bm, nullptr, nullptr)) / (2 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("prior shrinkage holds in the Mahalanobis norm on random fixtures") {
  RngStream rng(19, 5);
  int holds = 0;
  for (int rep = 0; rep < 100; ++rep) {
    auto sim = simulate_1d(rng.normal(), 40, rng);
    logit::BinaryLogit lik(sim.x, sim.y, Vec());
    logit::GaussianPrior prior;
    prior.mean = Vec::Constant(1, rng.normal());
    prior.cov = Mat::Constant(1, 1, 0.1 + rng.uniform());
    auto post = logit::maximize(lik, prior.mean, prior, {});
    auto mle = logit::maximize(lik, prior.mean, std::nullopt, {.ridge = 1e-8});
    double prec = 1.0 / prior.cov(0, 0);
    double d_post = (post.beta[0] - prior.mean[0]) * (post.beta[0] - prior.mean[0]) * prec;
    double d_mle = (mle.beta[0] - prior.mean[0]) * (mle.beta[0] - prior.mean[0]) * prec;
    if (d_post <= d_mle + 1e-10) ++holds;
  }
  CHECK(holds == 100);
}
