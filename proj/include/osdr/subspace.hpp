#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

#include "osdr/core.hpp"

namespace osdr {

/// Orthonormal basis of a d-dimensional subspace of R^D (columns of a D x d
/// matrix). Construction validates orthonormality, so a held Subspace is
/// always a valid point on the Grassmannian.
class Subspace {
 public:
  static constexpr double kOrthonormalTol = 1e-8;

  explicit Subspace(Eigen::MatrixXd basis) : basis_(std::move(basis)) {
    if (basis_.cols() < 1 || basis_.rows() < basis_.cols())
      throw DimensionError("subspace basis must be a tall D x d matrix");
    if (drift() > kOrthonormalTol)
      throw NotOrthonormalError("basis columns are not orthonormal");
  }

  /// Orthonormal basis with the same span as m, via column-pivoted QR.
  /// The result keeps the orientation of a near-orthonormal input, so
  /// re-orthonormalizing a drifted basis barely moves it.
  static Subspace orthonormalize(const Eigen::MatrixXd& m) {
    if (m.cols() < 1 || m.rows() < m.cols())
      throw DimensionError("orthonormalize expects a tall D x d matrix");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(m);
    if (pivoted.rank() < m.cols())
      throw RankDeficiencyError("matrix does not have full column rank");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q =
        qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    // flip columns wherever the R diagonal is negative
    const auto& qrm = qr.matrixQR();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (qrm(j, j) < 0.0) q.col(j) = -q.col(j);
    return Subspace(std::move(q));
  }

  /// Seeded standard-Gaussian draw passed through orthonormalize.
  static Subspace random(Eigen::Index dim, Eigen::Index sub, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd m(dim, sub);
    for (Eigen::Index j = 0; j < sub; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) m(i, j) = gauss(rng);
    return orthonormalize(m);
  }

  const Eigen::MatrixXd& basis() const { return basis_; }
  Eigen::Index dim() const { return basis_.rows(); }
  Eigen::Index sub() const { return basis_.cols(); }

  /// || U^T U - I ||_F
  double drift() const {
    return (basis_.transpose() * basis_ -
            Eigen::MatrixXd::Identity(basis_.cols(), basis_.cols()))
        .norm();
  }

 private:
  Eigen::MatrixXd basis_;
};

/// Indices of observed entries of an ambient vector, strictly increasing,
/// zero-based.
struct ObservationMask {
  std::vector<Eigen::Index> indices;

  void validate(Eigen::Index dim) const {
    if (indices.empty()) throw ConfigError("observation mask is empty");
    Eigen::Index prev = -1;
    for (const Eigen::Index i : indices) {
      if (i <= prev) throw ConfigError("mask indices must be strictly increasing");
      if (i < 0 || i >= dim) throw ConfigError("mask index out of range");
      prev = i;
    }
  }

  Eigen::Index count() const { return static_cast<Eigen::Index>(indices.size()); }
};

/// beta = U^T x.
inline Eigen::VectorXd project_coefficients(const Subspace& u,
                                            const Eigen::VectorXd& x) {
  if (x.size() != u.dim()) throw DimensionError("vector length != ambient dim");
  return u.basis().transpose() * x;
}

/// x - U U^T x; orthogonal to range(U) by construction.
inline Eigen::VectorXd residual(const Subspace& u, const Eigen::VectorXd& x) {
  if (x.size() != u.dim()) throw DimensionError("vector length != ambient dim");
  return x - u.basis() * (u.basis().transpose() * x);
}

/// Least-squares coefficients from observed entries only:
/// beta = (U_o^T U_o)^{-1} U_o^T x_o. Requires |mask| >= d and a Gram matrix
/// condition number below 1e12.
inline Eigen::VectorXd project_coefficients_masked(const Subspace& u,
                                                   const Eigen::VectorXd& x_omega,
                                                   const ObservationMask& omega) {
  constexpr double kMaxGramCondition = 1e12;
  omega.validate(u.dim());
  if (omega.count() < u.sub())
    throw InsufficientObservationsError("fewer observed entries than subspace dim");
  if (x_omega.size() != omega.count())
    throw DimensionError("observed-value vector length != mask size");
  Eigen::MatrixXd u_omega(omega.count(), u.sub());
  for (Eigen::Index i = 0; i < omega.count(); ++i)
    u_omega.row(i) = u.basis().row(omega.indices[i]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      u_omega, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1), smax = sv(0);
  // condition number of the Gram matrix is the square of the ratio
  if (smin <= 0.0 || (smax / smin) * (smax / smin) > kMaxGramCondition)
    throw IllConditionedMaskError("masked Gram matrix is ill-conditioned");
  return svd.solve(x_omega);
}

/// Scatter observed values into a zero-filled ambient vector.
inline Eigen::VectorXd scatter_observed(const Eigen::VectorXd& x_omega,
                                        const ObservationMask& omega,
                                        Eigen::Index dim) {
  if (x_omega.size() != omega.count())
    throw DimensionError("observed-value vector length != mask size");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < omega.count(); ++i)
    full(omega.indices[i]) = x_omega(i);
  return full;
}

/// Rank-one Grassmannian gradient sigma * (r/|r|) (w/|w|)^T, with r expected
/// orthogonal to the subspace it was computed against. sigma may carry either
/// sign; steps always travel along the negative gradient.
struct RankOneDirection {
  double sigma = 0.0;
  Eigen::VectorXd r;
  Eigen::VectorXd w;
};

namespace detail {
constexpr double kDegenerateNorm = 1e-12;
}

/// Exact geodesic step of length eta along the negative of the rank-one
/// gradient. Degenerate directions (|r| or |w| below 1e-12, or r inside the
/// span) are no-ops. r is re-projected onto the complement of range(U), so a
/// direction transported from a nearby point stays usable; in particular
/// stepping with (sigma, eta) and then (-sigma, eta) retraces exactly.
inline Subspace geodesic_step_rank1(const Subspace& u,
                                    const RankOneDirection& dir, double eta) {
  if (dir.r.size() != u.dim()) throw DimensionError("direction r has wrong length");
  if (dir.w.size() != u.sub()) throw DimensionError("direction w has wrong length");
  const double wn = dir.w.norm();
  if (dir.r.norm() <= detail::kDegenerateNorm || wn <= detail::kDegenerateNorm)
    return u;
  Eigen::VectorXd rt = dir.r - u.basis() * (u.basis().transpose() * dir.r);
  const double rn = rt.norm();
  if (rn <= detail::kDegenerateNorm) return u;
  rt /= rn;
  const Eigen::VectorXd wh = dir.w / wn;
  const double c = std::cos(dir.sigma * eta);
  const double s = std::sin(dir.sigma * eta);
  // descent: velocity at eta=0 is -sigma * rhat what^T
  Eigen::MatrixXd stepped =
      u.basis() + ((c - 1.0) * (u.basis() * wh) - s * rt) * wh.transpose();
  return Subspace(std::move(stepped));
}

/// Exact geodesic step of length eta along -grad for a dense tangent gradient,
/// via the reduced SVD of the tangent component (the in-span component of grad
/// is projected out first). Zero gradients leave the basis unchanged.
inline Subspace geodesic_step_rankk(const Subspace& u,
                                    const Eigen::MatrixXd& grad, double eta) {
  if (grad.rows() != u.dim() || grad.cols() != u.sub())
    throw DimensionError("gradient must be D x d");
  Eigen::MatrixXd h = -(grad - u.basis() * (u.basis().transpose() * grad));
  if (h.norm() == 0.0) return u;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::VectorXd cosv(sv.size()), sinv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    cosv(i) = std::cos(sv(i) * eta);
    sinv(i) = std::sin(sv(i) * eta);
  }
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::MatrixXd stepped = (u.basis() * v) * cosv.asDiagonal() * v.transpose() +
                            svd.matrixU() * sinv.asDiagonal() * v.transpose();
  return Subspace(std::move(stepped));
}

/// Principal angles between two equal-dimension subspaces and the associated
/// tracking error d - ||Ustar^T U||_F^2 = sum_i sin^2(phi_i).
struct SubspaceMetrics {
  double subspace_error = 0.0;
  Eigen::VectorXd angles;  // ascending, in [0, pi/2]
};

inline SubspaceMetrics principal_angle_error(const Eigen::MatrixXd& u,
                                             const Eigen::MatrixXd& ustar) {
  if (u.rows() != ustar.rows() || u.cols() != ustar.cols())
    throw DimensionError("subspace metrics require matching shapes");
  const Eigen::MatrixXd overlap = ustar.transpose() * u;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(overlap);
  SubspaceMetrics m;
  m.angles.resize(overlap.cols());
  for (Eigen::Index i = 0; i < overlap.cols(); ++i) {
    const double s = std::clamp(svd.singularValues()(i), 0.0, 1.0);
    m.angles(overlap.cols() - 1 - i) = std::acos(s);
    m.subspace_error += 1.0 - s * s;
  }
  return m;
}

inline SubspaceMetrics principal_angle_error(const Subspace& u,
                                             const Subspace& ustar) {
  return principal_angle_error(u.basis(), ustar.basis());
}

}  // namespace osdr
