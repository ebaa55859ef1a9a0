#pragma once

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/subspace.hpp"

namespace osdr {

// Unsupervised subspace tracking: follow the stream by descending the
// projection-residual energy of each sample. Responses are never consulted,
// which makes this the natural reference point for the supervised tracker.

inline RankOneDirection odr_direction(const Subspace& u,
                                      const Eigen::VectorXd& x) {
  const Eigen::VectorXd beta = project_coefficients(u, x);
  const Eigen::VectorXd r = x - u.basis() * beta;
  return {-r.norm() * beta.norm(), r, beta};
}

// Partial observation: beta solves the observed least-squares problem and the
// residual lives on the observed coordinates (zero elsewhere). Because beta
// satisfies the normal equations, that residual is already tangent.
inline RankOneDirection odr_direction_masked(const Subspace& u,
                                             const Eigen::VectorXd& x_omega,
                                             const ObservationMask& mask) {
  const Eigen::VectorXd beta = project_coefficients_masked(u, x_omega, mask);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(u.dim());
  for (std::size_t i = 0; i < mask.indices.size(); ++i) {
    const Eigen::Index row = mask.indices[i];
    r(row) = x_omega(static_cast<Eigen::Index>(i)) - u.basis().row(row) * beta;
  }
  return {-r.norm() * beta.norm(), r, beta};
}

inline Subspace odr_step(const Subspace& u, const Eigen::VectorXd& x,
                         double eta) {
  return geodesic_step_rank1(u, odr_direction(u, x), eta);
}

inline Subspace odr_step_masked(const Subspace& u,
                                const Eigen::VectorXd& x_omega,
                                const ObservationMask& mask, double eta) {
  return geodesic_step_rank1(u, odr_direction_masked(u, x_omega, mask), eta);
}

}  // namespace osdr
