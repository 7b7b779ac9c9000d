#include "fracount/logistic.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace fracount::logit {

Mat GaussianPrior::precision() const {
  Eigen::LDLT<Mat> ldlt(cov);
  if (ldlt.info() != Eigen::Success)
    throw std::invalid_argument("GaussianPrior: covariance not decomposable");
  return ldlt.solve(Mat::Identity(cov.rows(), cov.cols()));
}

namespace {

double penalized(const LogLikelihood& lik, const Vec& beta,
                 const std::optional<GaussianPrior>& prior, const Mat* prior_prec,
                 double ridge, Vec* grad, Mat* hess) {
  double obj = lik.eval(beta, grad, hess);
  if (prior) {
    Vec d = beta - prior->mean;
    Vec pd = (*prior_prec) * d;
    obj -= 0.5 * d.dot(pd);
    if (grad) *grad -= pd;
    if (hess) *hess -= *prior_prec;
  }
  if (ridge > 0.0) {
    obj -= 0.5 * ridge * beta.squaredNorm();
    if (grad) *grad -= ridge * beta;
    if (hess) hess->diagonal().array() -= ridge;
  }
  return obj;
}

}  // namespace

FitResult maximize(const LogLikelihood& lik, const Vec& start,
                   const std::optional<GaussianPrior>& prior, const NewtonOptions& opts) {
  const int p = lik.dim();
  if (start.size() != p) throw std::invalid_argument("maximize: start has wrong dimension");
  Mat prior_prec;
  if (prior) {
    if (prior->mean.size() != p) throw std::invalid_argument("maximize: prior dim mismatch");
    prior_prec = prior->precision();
  }

  FitResult res;
  res.ridge = opts.ridge;
  Vec beta = start;
  Vec grad(p);
  Mat hess(p, p);
  double obj = penalized(lik, beta, prior, &prior_prec, opts.ridge, &grad, &hess);
  // gradient entries accumulate rounding noise proportional to the objective
  // magnitude, so the tolerance is relative to it
  auto tol = [&](double o) { return opts.grad_tol * std::max(1.0, std::abs(o)); };

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    res.grad_norm = grad.norm();
    if (res.grad_norm < tol(obj)) {
      res.converged = true;
      break;
    }
    Mat neg_h = -hess;
    // keep the step direction well defined even at flat spots
    Eigen::LDLT<Mat> ldlt(neg_h);
    Vec step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      step = ldlt.solve(grad);
    } else {
      neg_h.diagonal().array() += 1e-6 + std::abs(neg_h.diagonal().minCoeff());
      step = neg_h.ldlt().solve(grad);
    }
    // Newton decrement: the attainable objective gain; once it falls below
    // the tolerance no further numerically meaningful progress is possible
    if (0.5 * grad.dot(step) < tol(obj)) {
      res.converged = true;
      break;
    }
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      Vec cand = beta + scale * step;
      double cand_obj = penalized(lik, cand, prior, &prior_prec, opts.ridge, nullptr, nullptr);
      if (std::isfinite(cand_obj) && cand_obj >= obj - 1e-14) {
        beta = cand;
        obj = cand_obj;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;  // stalled, report current gradient norm
    obj = penalized(lik, beta, prior, &prior_prec, opts.ridge, &grad, &hess);
  }

  res.grad_norm = grad.norm();
  if (res.grad_norm < tol(obj)) res.converged = true;
  res.beta = beta;
  res.objective = obj;
  Mat neg_h = -hess;
  Eigen::LDLT<Mat> ldlt(neg_h);
  res.cov = ldlt.solve(Mat::Identity(p, p));
  return res;
}

// ---- binary logistic ----

BinaryLogit::BinaryLogit(Mat x, Eigen::VectorXi y, Vec weights)
    : x_(std::move(x)), y_(std::move(y)), w_(std::move(weights)) {
  if (x_.rows() != y_.size()) throw std::invalid_argument("BinaryLogit: x/y size mismatch");
  if (w_.size() == 0) w_ = Vec::Ones(x_.rows());
  if (w_.size() != x_.rows()) throw std::invalid_argument("BinaryLogit: weight size mismatch");
}

double BinaryLogit::predict(const Vec& beta, const Vec& x) {
  return 1.0 / (1.0 + std::exp(-beta.dot(x)));
}

double BinaryLogit::eval(const Vec& beta, Vec* grad, Mat* hess) const {
  const auto n = x_.rows();
  double ll = 0.0;
  if (grad) grad->setZero(beta.size());
  if (hess) hess->setZero(beta.size(), beta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = x_.row(i).dot(beta);
    // log(1+exp(eta)) computed stably
    const double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    const double p = 1.0 / (1.0 + std::exp(-eta));
    ll += w_[i] * (y_[i] * eta - log1pe);
    if (grad) *grad += w_[i] * (y_[i] - p) * x_.row(i).transpose();
    if (hess) hess->noalias() -= w_[i] * p * (1.0 - p) * x_.row(i).transpose() * x_.row(i);
  }
  return ll;
}

// ---- conditional logit ----

PlacementLogit::PlacementLogit(std::vector<PlacementObs> obs, int d_address, int d_z)
    : obs_(std::move(obs)), d_a_(d_address), d_z_(d_z) {
  for (const auto& o : obs_) {
    if (o.address_features.cols() != d_a_)
      throw std::invalid_argument("PlacementLogit: address feature dim mismatch");
    if (o.z.size() != d_z_) throw std::invalid_argument("PlacementLogit: z dim mismatch");
    if (o.outcome < 0 || o.outcome > o.address_features.rows())
      throw std::invalid_argument("PlacementLogit: outcome out of range");
  }
}

Vec PlacementLogit::probabilities(const Vec& beta, const Mat& address_features, const Vec& z) {
  const int q = static_cast<int>(address_features.rows());
  const int d_a = static_cast<int>(address_features.cols());
  Vec scores(q + 1);
  scores.head(q) = address_features * beta.head(d_a);
  scores[q] = beta[d_a] + beta.tail(z.size()).dot(z);
  const double mx = scores.maxCoeff();
  Vec p = (scores.array() - mx).exp();
  p /= p.sum();
  return p;
}

double PlacementLogit::eval(const Vec& beta, Vec* grad, Mat* hess) const {
  const int p = dim();
  double ll = 0.0;
  if (grad) grad->setZero(p);
  if (hess) hess->setZero(p, p);
  for (const auto& o : obs_) {
    const int q = static_cast<int>(o.address_features.rows());
    Vec probs = probabilities(beta, o.address_features, o.z);
    ll += o.weight * std::log(std::max(probs[o.outcome], 1e-300));
    if (!grad && !hess) continue;
    // design row per alternative: [u_j, 0, 0] for addresses, [0, 1, z] displaced
    Mat w(q + 1, p);
    w.setZero();
    w.block(0, 0, q, o.address_features.cols()) = o.address_features;
    w(q, o.address_features.cols()) = 1.0;
    w.row(q).tail(o.z.size()) = o.z.transpose();
    Vec mean_w = w.transpose() * probs;
    if (grad) *grad += o.weight * (w.row(o.outcome).transpose() - mean_w);
    if (hess) {
      Mat second = Mat::Zero(p, p);
      for (int j = 0; j <= q; ++j)
        second.noalias() += probs[j] * w.row(j).transpose() * w.row(j);
      hess->noalias() -= o.weight * (second - mean_w * mean_w.transpose());
    }
  }
  return ll;
}

std::optional<PlacementObs> placement_obs(const PersonRecord& rec) {
  if (!rec.label || !rec.label->in_scope) return std::nullopt;
  PlacementObs o;
  o.address_features = rec.address_features;
  o.z = rec.covariates;
  o.outcome = rec.label->displaced ? rec.q() : rec.label->address_index;
  if (o.outcome < 0 || o.outcome > rec.q()) return std::nullopt;
  return o;
}

}  // namespace fracount::logit
