#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/subspace.hpp"

namespace osdr {

// Which argument the predictive coefficients pair with: coefficients over the
// low-dimensional features beta (so the subspace direction is driven by the
// sample), or ambient coefficients over the lifted features U*beta (so it is
// driven by the coefficients themselves).
enum class Formulation { low_dim, ambient };

// Logistic link with the exponent clamped so exp never overflows.
inline double sigmoid_clamped(double z) {
  z = std::clamp(z, -700.0, 700.0);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---- single-response linear regression -------------------------------------

struct LinearLowDimParams {
  Eigen::VectorXd a;  // slopes over beta = U^T x
  double b = 0.0;
};

struct LinearAmbientParams {
  Eigen::VectorXd c;  // ambient slopes, applied to U beta
  double e = 0.0;
};

inline double linear_predict(const LinearLowDimParams& p, const Subspace& u,
                             const Eigen::VectorXd& x) {
  return p.a.dot(u.basis().transpose() * x) + p.b;
}

inline double linear_predict(const LinearAmbientParams& p, const Subspace& u,
                             const Eigen::VectorXd& beta) {
  return p.c.dot(u.basis() * beta) + p.e;
}

// Loss gradient of the squared error, packaged as a rank-one triplet: the
// left factor is the out-of-subspace part of the sample, the right factor the
// slopes, and sigma carries -(y - yhat) |r| |w|.
inline RankOneDirection linear_direction(const LinearLowDimParams& p,
                                         const Subspace& u,
                                         const Eigen::VectorXd& x, double y) {
  const double resid = y - linear_predict(p, u, x);
  const Eigen::VectorXd r = residual(u, x);
  return {-resid * r.norm() * p.a.norm(), r, p.a};
}

inline RankOneDirection linear_direction(const LinearAmbientParams& p,
                                         const Subspace& u,
                                         const Eigen::VectorXd& beta,
                                         double y) {
  const double resid = y - linear_predict(p, u, beta);
  const Eigen::VectorXd r = residual(u, p.c);
  return {-resid * r.norm() * beta.norm(), r, beta};
}

inline void linear_param_update(LinearLowDimParams& p, const Subspace& u,
                                const Eigen::VectorXd& x, double y,
                                double mu) {
  const double resid = y - linear_predict(p, u, x);
  p.a += mu * resid * (u.basis().transpose() * x);
  p.b += mu * resid;
}

inline void linear_param_update(LinearAmbientParams& p, const Subspace& u,
                                const Eigen::VectorXd& beta, double y,
                                double mu) {
  const double resid = y - linear_predict(p, u, beta);
  p.c += mu * resid * (u.basis() * beta);
  p.e += mu * resid;
}

// ---- logistic regression ---------------------------------------------------

struct LogisticLowDimParams {
  Eigen::VectorXd a;
  double b = 0.0;
};

struct LogisticAmbientParams {
  Eigen::VectorXd c;
  double e = 0.0;
};

inline double logistic_predict(const LogisticLowDimParams& p,
                               const Subspace& u, const Eigen::VectorXd& x) {
  return sigmoid_clamped(p.a.dot(u.basis().transpose() * x) + p.b);
}

inline double logistic_predict(const LogisticAmbientParams& p,
                               const Subspace& u,
                               const Eigen::VectorXd& beta) {
  return sigmoid_clamped(p.c.dot(u.basis() * beta) + p.e);
}

// The negative log-likelihood shares the squared-error gradient structure,
// with the residual measured against the link output.
inline RankOneDirection logistic_direction(const LogisticLowDimParams& p,
                                           const Subspace& u,
                                           const Eigen::VectorXd& x,
                                           double y) {
  const double resid = y - logistic_predict(p, u, x);
  const Eigen::VectorXd r = residual(u, x);
  return {-resid * r.norm() * p.a.norm(), r, p.a};
}

inline RankOneDirection logistic_direction(const LogisticAmbientParams& p,
                                           const Subspace& u,
                                           const Eigen::VectorXd& beta,
                                           double y) {
  const double resid = y - logistic_predict(p, u, beta);
  const Eigen::VectorXd r = residual(u, p.c);
  return {-resid * r.norm() * beta.norm(), r, beta};
}

inline void logistic_param_update(LogisticLowDimParams& p, const Subspace& u,
                                  const Eigen::VectorXd& x, double y,
                                  double mu) {
  const double resid = y - logistic_predict(p, u, x);
  p.a += mu * resid * (u.basis().transpose() * x);
  p.b += mu * resid;
}

inline void logistic_param_update(LogisticAmbientParams& p, const Subspace& u,
                                  const Eigen::VectorXd& beta, double y,
                                  double mu) {
  const double resid = y - logistic_predict(p, u, beta);
  p.c += mu * resid * (u.basis() * beta);
  p.e += mu * resid;
}

// ---- multiple-response linear regression -----------------------------------

struct MultiLinearParams {
  Eigen::MatrixXd coeff;  // d x m (low_dim) or D x m (ambient)
  Formulation form = Formulation::low_dim;
};

// v is the sample x in the low-dimensional form and beta in the ambient form.
inline Eigen::VectorXd multilinear_predict(const MultiLinearParams& p,
                                           const Subspace& u,
                                           const Eigen::VectorXd& v) {
  if (p.form == Formulation::low_dim)
    return p.coeff.transpose() * (u.basis().transpose() * v);
  return p.coeff.transpose() * (u.basis() * v);
}

inline RankOneDirection multilinear_direction(const MultiLinearParams& p,
                                              const Subspace& u,
                                              const Eigen::VectorXd& v,
                                              const Eigen::VectorXd& y) {
  const Eigen::VectorXd resid = y - multilinear_predict(p, u, v);
  if (p.form == Formulation::low_dim) {
    const Eigen::VectorXd r = residual(u, v);
    const Eigen::VectorXd w = p.coeff * resid;
    return {-r.norm() * w.norm(), r, w};
  }
  const Eigen::VectorXd r = residual(u, p.coeff * resid);
  return {-r.norm() * v.norm(), r, v};
}

inline void multilinear_param_update(MultiLinearParams& p, const Subspace& u,
                                     const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& y, double mu) {
  const Eigen::VectorXd resid = y - multilinear_predict(p, u, v);
  if (p.form == Formulation::low_dim)
    p.coeff += mu * (u.basis().transpose() * v) * resid.transpose();
  else
    p.coeff += mu * (u.basis() * v) * resid.transpose();
}

// ---- multinomial logistic regression ---------------------------------------

// K-class softmax with the last class as the zero-logit reference. Slopes are
// ambient (one D-vector per non-reference class) and pair with U beta.
struct MultinomialParams {
  Eigen::MatrixXd slopes;      // D x (K-1)
  Eigen::VectorXd intercepts;  // K-1
};

inline Eigen::VectorXd multinomial_predict(const MultinomialParams& p,
                                           const Subspace& u,
                                           const Eigen::VectorXd& beta) {
  const Eigen::Index free_classes = p.slopes.cols();
  const Eigen::VectorXd lift = u.basis() * beta;
  Eigen::VectorXd z(free_classes + 1);
  z.head(free_classes) = p.slopes.transpose() * lift + p.intercepts;
  z(free_classes) = 0.0;
  const Eigen::VectorXd shifted = (z.array() - z.maxCoeff()).exp();
  return shifted / shifted.sum();
}

// Tangent gradient of the negative log-likelihood. The class slopes share the
// right factor beta, so the matrix has rank at most one.
inline Eigen::MatrixXd multinomial_direction(const MultinomialParams& p,
                                             const Subspace& u,
                                             const Eigen::VectorXd& beta,
                                             int y) {
  const Eigen::VectorXd probs = multinomial_predict(p, u, beta);
  Eigen::VectorXd pull = Eigen::VectorXd::Zero(u.dim());
  for (Eigen::Index k = 0; k < p.slopes.cols(); ++k) {
    const double weight = probs(k) - (y == k ? 1.0 : 0.0);
    pull += weight * p.slopes.col(k);
  }
  return residual(u, pull) * beta.transpose();
}

inline void multinomial_param_update(MultinomialParams& p, const Subspace& u,
                                     const Eigen::VectorXd& beta, int y,
                                     double mu) {
  const Eigen::VectorXd probs = multinomial_predict(p, u, beta);
  const Eigen::VectorXd lift = u.basis() * beta;
  for (Eigen::Index k = 0; k < p.slopes.cols(); ++k) {
    const double h = (y == k ? 1.0 : 0.0) - probs(k);
    p.slopes.col(k) += mu * h * lift;
    p.intercepts(k) += mu * h;
  }
}

// Top singular triplet of a dense tangent gradient, for feeding a matrix
// direction through the rank-one geodesic.
inline RankOneDirection dominant_rank_one(const Eigen::MatrixXd& grad) {
  if (grad.norm() == 0.0)
    return {0.0, Eigen::VectorXd::Zero(grad.rows()),
            Eigen::VectorXd::Zero(grad.cols())};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      grad, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.singularValues()(0), svd.matrixU().col(0), svd.matrixV().col(0)};
}

// ---- support vector machine (hinge loss) -----------------------------------

struct SvmParams {
  Eigen::VectorXd a;  // d slopes (low_dim) or D slopes (ambient)
  Formulation form = Formulation::low_dim;
};

// v is the sample x in the low-dimensional form and beta in the ambient form.
inline double svm_score(const SvmParams& p, const Subspace& u,
                        const Eigen::VectorXd& v) {
  if (p.form == Formulation::low_dim)
    return p.a.dot(u.basis().transpose() * v);
  return p.a.dot(u.basis() * v);
}

// Subgradient weight of the hinge at margin m = 1 - y * score: 1 when the
// hinge is active, 0 when satisfied, 1/2 exactly at the kink.
inline double hinge_weight(double margin_slack) {
  const double s =
      margin_slack > 0.0 ? 1.0 : (margin_slack < 0.0 ? -1.0 : 0.0);
  return 0.5 * (s + 1.0);
}

inline RankOneDirection svm_direction(const SvmParams& p, const Subspace& u,
                                      const Eigen::VectorXd& v, double y) {
  const double weight = hinge_weight(1.0 - y * svm_score(p, u, v));
  if (p.form == Formulation::low_dim) {
    const Eigen::VectorXd r = residual(u, v);
    return {-y * weight * r.norm() * p.a.norm(), r, p.a};
  }
  const Eigen::VectorXd r = residual(u, p.a);
  return {-y * weight * r.norm() * v.norm(), r, v};
}

inline void svm_param_update(SvmParams& p, const Subspace& u,
                             const Eigen::VectorXd& v, double y, double mu) {
  const double weight = hinge_weight(1.0 - y * svm_score(p, u, v));
  if (weight == 0.0) return;
  if (p.form == Formulation::low_dim)
    p.a += mu * y * weight * (u.basis().transpose() * v);
  else
    p.a += mu * y * weight * (u.basis() * v);
}

// ---- regression on dot products (paired samples) ---------------------------

// Predicts a binary response from the inner product of two projected samples:
// yhat = link(a <beta1, beta2> + b).
struct RdpParams {
  double a = 0.0;
  double b = 0.0;
};

inline double rdp_predict(const RdpParams& p, const Eigen::VectorXd& beta1,
                          const Eigen::VectorXd& beta2) {
  return sigmoid_clamped(p.a * beta1.dot(beta2) + p.b);
}

// Gradient with respect to the first sample's projection, holding beta2
// fixed: the left factor is the out-of-subspace part of x1.
inline RankOneDirection rdp_direction_first(const RdpParams& p,
                                            const Subspace& u,
                                            const Eigen::VectorXd& x1,
                                            const Eigen::VectorXd& x2,
                                            double y) {
  const Eigen::VectorXd beta1 = project_coefficients(u, x1);
  const Eigen::VectorXd beta2 = project_coefficients(u, x2);
  const double resid = y - rdp_predict(p, beta1, beta2);
  const Eigen::VectorXd r = residual(u, x1);
  return {-resid * p.a * r.norm() * beta2.norm(), r, beta2};
}

// Companion step for the second sample, holding beta1 fixed.
inline RankOneDirection rdp_direction_second(const RdpParams& p,
                                             const Subspace& u,
                                             const Eigen::VectorXd& x1,
                                             const Eigen::VectorXd& x2,
                                             double y) {
  const Eigen::VectorXd beta1 = project_coefficients(u, x1);
  const Eigen::VectorXd beta2 = project_coefficients(u, x2);
  const double resid = y - rdp_predict(p, beta1, beta2);
  const Eigen::VectorXd r = residual(u, x2);
  return {-resid * p.a * r.norm() * beta1.norm(), r, beta1};
}

inline std::pair<RankOneDirection, RankOneDirection> rdp_directions(
    const RdpParams& p, const Subspace& u, const Eigen::VectorXd& x1,
    const Eigen::VectorXd& x2, double y) {
  return {rdp_direction_first(p, u, x1, x2, y),
          rdp_direction_second(p, u, x1, x2, y)};
}

inline void rdp_param_update(RdpParams& p, const Eigen::VectorXd& beta1,
                             const Eigen::VectorXd& beta2, double y,
                             double mu) {
  const double resid = y - rdp_predict(p, beta1, beta2);
  p.a += mu * resid * beta1.dot(beta2);
  p.b += mu * resid;
}

}  // namespace osdr
