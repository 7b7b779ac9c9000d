#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "fracount/types.hpp"

namespace fracount::logit {

// Log-likelihood with analytic gradient and Hessian, maximized by damped Newton.
class LogLikelihood {
 public:
  virtual ~LogLikelihood() = default;
  virtual int dim() const = 0;
  // returns log-likelihood; fills grad/hess when non-null
  virtual double eval(const Vec& beta, Vec* grad, Mat* hess) const = 0;
};

struct GaussianPrior {
  Vec mean;
  Mat cov;
  Mat precision() const;  // pseudo-safe inverse via LDLT
};

struct NewtonOptions {
  int max_iter = 100;
  double grad_tol = 1e-8;
  double ridge = 0.0;  // quadratic penalty, also stabilizes separation
};

struct FitResult {
  Vec beta;
  Mat cov;  // inverse negative curvature at the mode
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  double objective = 0.0;
  double ridge = 0.0;
};

// Maximizes loglik (+ log prior if given) by damped Newton with step halving.
FitResult maximize(const LogLikelihood& lik, const Vec& start,
                   const std::optional<GaussianPrior>& prior = std::nullopt,
                   const NewtonOptions& opts = {});

// ---- binary logistic regression ----

class BinaryLogit : public LogLikelihood {
 public:
  BinaryLogit(Mat x, Eigen::VectorXi y, Vec weights = {});
  int dim() const override { return static_cast<int>(x_.cols()); }
  double eval(const Vec& beta, Vec* grad, Mat* hess) const override;
  static double predict(const Vec& beta, const Vec& x);

 private:
  Mat x_;
  Eigen::VectorXi y_;
  Vec w_;
};

// ---- conditional-logit placement model ----
//
// Alternatives for record k: its q_k listed addresses, scored gamma'u_{kj}
// from per-address features, plus a "displaced" alternative scored
// alpha + eta'z_k. beta = [gamma; alpha; eta].

struct PlacementObs {
  Mat address_features;  // q x d_a
  Vec z;
  int outcome = 0;  // 0..q-1 = address position, q = displaced
  double weight = 1.0;
};

class PlacementLogit : public LogLikelihood {
 public:
  PlacementLogit(std::vector<PlacementObs> obs, int d_address, int d_z);
  int dim() const override { return d_a_ + 1 + d_z_; }
  double eval(const Vec& beta, Vec* grad, Mat* hess) const override;

  // probabilities over (address positions..., displaced); length q+1
  static Vec probabilities(const Vec& beta, const Mat& address_features, const Vec& z);

  const std::vector<PlacementObs>& observations() const { return obs_; }

 private:
  std::vector<PlacementObs> obs_;
  int d_a_;
  int d_z_;
};

// observed placement outcome of a labelled record, or nullopt when the label
// cannot feed the placement model (out of scope)
std::optional<PlacementObs> placement_obs(const PersonRecord& rec);

}  // namespace fracount::logit
