#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "osdr/core.hpp"
#include "osdr/engine.hpp"
#include "osdr/models.hpp"
#include "osdr/subspace.hpp"
#include "osdr/tree.hpp"

namespace osdr {

// Seeded synthetic streams. Every generator is a pure function of its config
// (the seed included), and returns the latent subspace trajectory alongside
// the samples so tracking error is computable for any run.

// ---- planar coefficient model ----------------------------------------------

// Semi-axes of the coefficient ellipse; the first axis is the long one.
struct EllipseSpec {
  double r1 = 5.0;
  double r2 = 1.0;
};

struct LabeledStream {
  std::vector<StreamSample> samples;
  SubspaceTrack truth;
};

namespace detail {

inline void check_ellipse(const EllipseSpec& e) {
  if (!(e.r1 >= e.r2) || !(e.r2 > 0.0))
    throw ConfigError("ellipse semi-axes require r1 >= r2 > 0");
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, double std_dev,
                                       Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std_dev * normal(rng);
  return v;
}

inline Eigen::MatrixXd random_basis(Eigen::Index dim, Eigen::Index sub,
                                    Rng& rng) {
  Eigen::MatrixXd g(dim, sub);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < sub; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
  return Subspace::orthonormalize(g).basis();
}

}  // namespace detail

// Standard-normal coordinates rejected until they fall inside the ellipse.
inline Eigen::Vector2d sample_ellipse(const EllipseSpec& e, Rng& rng) {
  detail::check_ellipse(e);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    const double b1 = normal(rng), b2 = normal(rng);
    if (b1 * b1 / (e.r1 * e.r1) + b2 * b2 / (e.r2 * e.r2) <= 1.0)
      return {b1, b2};
  }
}

// ---- static planar embedding with logistic labels --------------------------

struct StaticEllipseConfig {
  Eigen::Index dim = 100;
  EllipseSpec ellipse{};
  double noise_var = 1e-3;
  // Magnitude of the logistic coefficient along the short axis of the
  // ellipse; the direction is fixed, only the sharpness is configurable.
  double label_scale = 1.0;
  long count = 6000;
  std::uint64_t seed = 0;
};

inline LabeledStream gen_static_ellipse(const StaticEllipseConfig& cfg) {
  if (cfg.dim <= 2 || cfg.count < 1)
    throw ConfigError("static ellipse stream needs dim > 2 and count >= 1");
  detail::check_ellipse(cfg.ellipse);
  Rng rng(cfg.seed);
  const Eigen::MatrixXd u = detail::random_basis(cfg.dim, 2, rng);
  const double noise_std = std::sqrt(cfg.noise_var);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  LabeledStream out;
  out.truth.bases = {u};
  out.samples.reserve(static_cast<std::size_t>(cfg.count));
  for (long t = 0; t < cfg.count; ++t) {
    const Eigen::Vector2d beta = sample_ellipse(cfg.ellipse, rng);
    StreamSample s;
    s.x = u * beta + detail::gaussian_vector(cfg.dim, noise_std, rng);
    // The label coefficient lies along the short axis (the second one).
    const double p = sigmoid_clamped(cfg.label_scale * beta(1));
    s.y = unit(rng) < p ? 1 : 0;
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---- rotating planar embedding ---------------------------------------------

// Piecewise rotation schedule: still until the onset step, then a sweep that
// completes 1/tau of a full turn by the horizon. Steps are 1-based.
inline double rotation_angle(double tau, long t, long onset = 500,
                             long horizon = 6000) {
  if (tau <= 0.0) throw ConfigError("rotation speed tau must be positive");
  if (t <= onset) return 0.0;
  return (2.0 * M_PI / tau) * static_cast<double>(t - onset) /
         static_cast<double>(horizon - onset);
}

struct RotatingEllipseConfig {
  Eigen::Index dim = 100;
  EllipseSpec ellipse{10.0, 1.0};
  double noise_var = 1e-3;
  double label_scale = 1.0;
  double tau = 1.0;
  long onset = 500;
  long horizon = 6000;
  std::uint64_t seed = 0;
};

// The basis spins inside its own fixed plane: the spanned subspace is
// constant but the coefficient frame (and with it the short-axis label
// direction) rotates, so the discriminative direction moves over time.
inline LabeledStream gen_rotating_ellipse(const RotatingEllipseConfig& cfg) {
  if (cfg.dim <= 2 || cfg.horizon < 1 || cfg.onset < 0 ||
      cfg.onset >= cfg.horizon)
    throw ConfigError("rotating stream needs dim > 2 and 0 <= onset < horizon");
  detail::check_ellipse(cfg.ellipse);
  Rng rng(cfg.seed);
  const Eigen::MatrixXd u0 = detail::random_basis(cfg.dim, 2, rng);
  const double noise_std = std::sqrt(cfg.noise_var);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  LabeledStream out;
  out.samples.reserve(static_cast<std::size_t>(cfg.horizon));
  out.truth.bases.reserve(static_cast<std::size_t>(cfg.horizon));
  for (long t = 1; t <= cfg.horizon; ++t) {
    const double alpha = rotation_angle(cfg.tau, t, cfg.onset, cfg.horizon);
    Eigen::Matrix2d rot;
    rot << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
    const Eigen::MatrixXd ut = u0 * rot;
    const Eigen::Vector2d beta = sample_ellipse(cfg.ellipse, rng);
    StreamSample s;
    s.x = ut * beta + detail::gaussian_vector(cfg.dim, noise_std, rng);
    const double p = sigmoid_clamped(cfg.label_scale * beta(1));
    s.y = unit(rng) < p ? 1 : 0;
    out.samples.push_back(std::move(s));
    out.truth.bases.push_back(ut);
  }
  return out;
}

// ---- planar embedding with a linear response -------------------------------

struct LinearResponseConfig {
  Eigen::Index dim = 2;
  EllipseSpec ellipse{1.0, 1.0};
  Eigen::Vector2d coeff{1.0, 1.0};
  double intercept = 0.0;
  double noise_var = 1e-3;
  long count = 6000;
  std::uint64_t seed = 0;
};

// y responds linearly to the clean embedded sample: y = c'(U b) + intercept
// + noise, with c expressed in ambient coordinates. The single predictive
// direction in x-space is therefore c itself, returned as ground truth.
// The coefficient pair addresses the two embedded coordinates; a larger dim
// embeds the same construction with c padded by zeros.
inline LabeledStream gen_linear_response(const LinearResponseConfig& cfg) {
  if (cfg.dim < 2 || cfg.count < 1)
    throw ConfigError("linear response stream needs dim >= 2 and count >= 1");
  detail::check_ellipse(cfg.ellipse);
  Rng rng(cfg.seed);
  const Eigen::MatrixXd u = detail::random_basis(cfg.dim, 2, rng);
  const double noise_std = std::sqrt(cfg.noise_var);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(cfg.dim);
  c.head<2>() = cfg.coeff;

  LabeledStream out;
  out.truth.bases = {c.norm() > 0.0 ? Eigen::MatrixXd(c.normalized())
                                    : Eigen::MatrixXd(u.col(0))};
  out.samples.reserve(static_cast<std::size_t>(cfg.count));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (long t = 0; t < cfg.count; ++t) {
    const Eigen::Vector2d beta = sample_ellipse(cfg.ellipse, rng);
    StreamSample s;
    s.x = u * beta + detail::gaussian_vector(cfg.dim, noise_std, rng);
    s.y = c.dot(u * beta) + cfg.intercept + noise_std * normal(rng);
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---- spectrum-controlled classification dataset ----------------------------

enum class SpectrumLabeling { type_one, type_two };

struct SpectrumConfig {
  Eigen::Index dim = 10;
  Eigen::Index sub = 2;
  SpectrumLabeling labeling = SpectrumLabeling::type_one;
  long count = 10000;
  std::uint64_t seed = 0;
};

struct SpectrumDataset {
  std::vector<StreamSample> samples;
  Eigen::MatrixXd directions;  // covariance eigenvectors, leading first
  Eigen::Index label_index;    // which direction carries the labels (0-based)
};

// 0-based index of the labeling eigenvector: the first direction past the
// leading block, or halfway into the tail for the harder variant (the
// 1-based positions d+1 and d+(D-d)/2, the latter rounded down).
inline Eigen::Index spectrum_label_index(const SpectrumConfig& cfg) {
  const Eigen::Index p = cfg.labeling == SpectrumLabeling::type_one
                             ? cfg.sub
                             : cfg.sub + (cfg.dim - cfg.sub) / 2 - 1;
  if (p < 0 || p >= cfg.dim)
    throw ConfigError("labeling index falls outside the dimension range");
  return p;
}

// Draws with covariance eigenvalues dim, dim-1, ..., 1 on a random
// eigenbasis. Labels split the projection onto the chosen eigenvector at its
// median: exactly half the samples are positive.
inline SpectrumDataset gen_spectrum_classification(const SpectrumConfig& cfg) {
  if (cfg.dim < 2 || cfg.sub < 1 || cfg.sub >= cfg.dim)
    throw ConfigError("spectrum dataset needs 1 <= sub < dim");
  if (cfg.count < 2 || cfg.count % 2 != 0)
    throw ConfigError("spectrum dataset needs an even sample count");
  Rng rng(cfg.seed);

  SpectrumDataset out;
  out.directions = detail::random_basis(cfg.dim, cfg.dim, rng);
  out.label_index = spectrum_label_index(cfg);

  Eigen::VectorXd scale(cfg.dim);
  for (Eigen::Index i = 0; i < cfg.dim; ++i)
    scale(i) = std::sqrt(static_cast<double>(cfg.dim - i));

  const std::size_t n = static_cast<std::size_t>(cfg.count);
  out.samples.resize(n);
  std::vector<std::pair<double, std::size_t>> projected(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd g = detail::gaussian_vector(cfg.dim, 1.0, rng);
    out.samples[i].x = out.directions * scale.cwiseProduct(g).eval();
    projected[i] = {out.directions.col(out.label_index).dot(out.samples[i].x),
                    i};
  }
  std::sort(projected.begin(), projected.end());
  for (std::size_t rank = 0; rank < n; ++rank)
    out.samples[projected[rank].second].y = rank < n / 2 ? 1 : 0;
  return out;
}

// ---- masking ---------------------------------------------------------------

// Per-entry Bernoulli masks at the requested observation fraction, redrawn
// until at least min_observed entries survive so restricted projections stay
// well posed. Applies to both vectors of a paired sample.
inline std::vector<StreamSample> apply_mask(
    const std::vector<StreamSample>& samples, double observe_fraction,
    Eigen::Index min_observed, std::uint64_t seed) {
  if (!(observe_fraction > 0.0) || observe_fraction > 1.0)
    throw ConfigError("observation fraction must lie in (0, 1]");
  Rng rng(seed);
  std::bernoulli_distribution keep(observe_fraction);

  const auto draw_mask = [&](Eigen::Index dim) {
    ObservationMask mask;
    do {
      mask.indices.clear();
      for (Eigen::Index i = 0; i < dim; ++i)
        if (keep(rng)) mask.indices.push_back(i);
    } while (static_cast<Eigen::Index>(mask.indices.size()) < min_observed);
    return mask;
  };
  const auto compact = [](const Eigen::VectorXd& x,
                          const ObservationMask& mask) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(mask.indices.size()));
    for (std::size_t i = 0; i < mask.indices.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = x(mask.indices[i]);
    return out;
  };

  std::vector<StreamSample> masked;
  masked.reserve(samples.size());
  for (const StreamSample& s : samples) {
    if (s.mask || s.mask2)
      throw ConfigError("samples are already masked");
    StreamSample m = s;
    if (observe_fraction < 1.0) {
      ObservationMask mask = draw_mask(s.x.size());
      m.x = compact(s.x, mask);
      m.mask = std::move(mask);
      if (s.x2.size() > 0) {
        ObservationMask mask2 = draw_mask(s.x2.size());
        m.x2 = compact(s.x2, mask2);
        m.mask2 = std::move(mask2);
      }
    }
    masked.push_back(std::move(m));
  }
  return masked;
}

// ---- rotating tree of interacting communities ------------------------------

struct TreeNetworkConfig {
  Eigen::Index dim = 100;
  Eigen::Index sub = 2;
  // Largest per-step rotation angle of the shared skew generator.
  double rotation_scale = 2e-4;
  double offset_scale = 5.0;
  double noise_var = 0.01;
  double observe_fraction = 0.4;
  double interaction_scale = 1.0;
  long count = 6000;
  std::uint64_t seed = 0;
};

struct TreeNetworkStream {
  std::vector<StreamSample> samples;
  TreeTopology topology;
  SubspaceTree start;         // ground-truth tree at the first step
  Eigen::MatrixXd rotation;   // the skew generator driving the motion
};

namespace detail {

// A random skew-symmetric matrix scaled so its largest rotation rate is
// `scale`; exp of any multiple of it is orthogonal.
inline Eigen::MatrixXd random_skew(Eigen::Index dim, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) m(i, j) = normal(rng);
  Eigen::MatrixXd skew = 0.5 * (m - m.transpose());
  const double top =
      Eigen::JacobiSVD<Eigen::MatrixXd>(skew).singularValues()(0);
  if (top > 0.0) skew *= scale / top;
  return skew;
}

}  // namespace detail

// A five-node tree whose root plane rotates one generator step per sample
// and whose children sit at fixed (slight) rotations of their parent, each
// node offset to its own center. Each sample picks two leaves, embeds a
// coefficient pair, and labels the interaction with the paired logistic
// model of the leaves' lowest common ancestor.
inline TreeNetworkStream gen_tree_network(const TreeNetworkConfig& cfg) {
  if (cfg.dim < 4 || cfg.sub < 1 || cfg.sub * 2 > cfg.dim || cfg.count < 1)
    throw ConfigError("tree network needs sub*2 <= dim and count >= 1");
  if (!(cfg.noise_var >= 0.0))
    throw ConfigError("noise variance must be nonnegative");
  Rng rng(cfg.seed);

  const Eigen::MatrixXd root0 = detail::random_basis(cfg.dim, cfg.sub, rng);
  const Eigen::MatrixXd skew =
      detail::random_skew(cfg.dim, cfg.rotation_scale, rng);
  const Eigen::MatrixXd step = skew.exp();        // per-sample root motion
  const Eigen::MatrixXd half = (0.5 * skew).exp();  // grandchild offset

  // Node order: root (1,1); its children (2,1) internal and (2,2) leaf;
  // (2,1)'s children (3,1) and (3,2). Every node's basis at time t is a
  // fixed orthogonal factor times the root basis at time t.
  struct NodeGen {
    NodeId id;
    std::optional<NodeId> parent;
    Eigen::MatrixXd factor;
    double offset;
  };
  const std::vector<NodeGen> layout = {
      {{1, 1}, std::nullopt, Eigen::MatrixXd::Identity(cfg.dim, cfg.dim), 0.0},
      {{2, 1}, NodeId{1, 1}, step, 1.0},
      {{2, 2}, NodeId{1, 1}, step.transpose(), 1.0},
      {{3, 1}, NodeId{2, 1}, half * step, 0.5},
      {{3, 2}, NodeId{2, 1}, half.transpose() * step, 0.5},
  };

  // Static per-node centers: children are offset from their parent along a
  // fresh random direction, scaled by the layout's offset multiplier.
  std::map<NodeId, Eigen::VectorXd> centers;
  std::map<NodeId, RdpParams> params;
  std::uniform_real_distribution<double> spread(0.75, 1.25);
  std::uniform_real_distribution<double> shift(-0.3, 0.3);
  for (const NodeGen& n : layout) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(cfg.dim);
    if (n.parent) {
      const Eigen::VectorXd dir =
          detail::gaussian_vector(cfg.dim, 1.0, rng).normalized();
      center = centers.at(*n.parent) + cfg.offset_scale * n.offset * dir;
    }
    centers[n.id] = std::move(center);
    params[n.id] =
        RdpParams{cfg.interaction_scale * spread(rng), shift(rng)};
  }

  TreeTopology topology;
  topology.dim = cfg.dim;
  topology.subdim = cfg.sub;
  std::vector<TreeNode> start_nodes;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const NodeGen& n = layout[i];
    topology.nodes.push_back(TreeNodeSpec{
        n.id.level, n.id.index, n.parent,
        cfg.seed + static_cast<std::uint64_t>(i), n.offset, 1.0});
    start_nodes.push_back(TreeNode{n.id, n.parent,
                                   Subspace(n.factor * root0), centers.at(n.id),
                                   Eigen::VectorXd::Ones(cfg.sub),
                                   params.at(n.id)});
  }
  validate_topology(topology);
  SubspaceTree start(std::move(start_nodes));

  const std::vector<NodeId> leaves = start.leaves();
  const double noise_std = std::sqrt(cfg.noise_var);
  std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd root = root0;
  std::vector<StreamSample> full;
  full.reserve(static_cast<std::size_t>(cfg.count));
  for (long t = 0; t < cfg.count; ++t) {
    if (t > 0) root = step * root;

    const NodeId leaf1 = leaves[pick(rng)];
    const NodeId leaf2 = leaves[pick(rng)];
    const NodeId meet = start.common_parent(leaf1, leaf2);
    const auto basis_of = [&](NodeId id) -> Eigen::MatrixXd {
      for (const NodeGen& n : layout)
        if (n.id == id) return n.factor * root;
      throw ConfigError("unknown layout node");
    };

    const Eigen::VectorXd b1 = detail::gaussian_vector(cfg.sub, 1.0, rng);
    const Eigen::VectorXd b2 = detail::gaussian_vector(cfg.sub, 1.0, rng);
    const Eigen::VectorXd clean1 = centers.at(leaf1) + basis_of(leaf1) * b1;
    const Eigen::VectorXd clean2 = centers.at(leaf2) + basis_of(leaf2) * b2;

    // The interaction is scored by the meet node's paired model on its own
    // centered coefficients.
    const Eigen::MatrixXd meet_basis = basis_of(meet);
    const Eigen::VectorXd f1 =
        meet_basis.transpose() * (clean1 - centers.at(meet));
    const Eigen::VectorXd f2 =
        meet_basis.transpose() * (clean2 - centers.at(meet));
    const RdpParams& pm = params.at(meet);
    const double p = sigmoid_clamped(pm.a * f1.dot(f2) + pm.b);

    StreamSample s;
    s.x = clean1 + detail::gaussian_vector(cfg.dim, noise_std, rng);
    s.x2 = clean2 + detail::gaussian_vector(cfg.dim, noise_std, rng);
    s.y = unit(rng) < p ? 1 : 0;
    full.push_back(std::move(s));
  }
  return TreeNetworkStream{apply_mask(full, cfg.observe_fraction, cfg.sub,
                                      cfg.seed ^ 0x9e3779b97f4a7c15ULL),
                           std::move(topology), std::move(start), skew};
}

}  // namespace osdr
