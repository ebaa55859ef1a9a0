#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/engine.hpp"
#include "osdr/models.hpp"
#include "osdr/subspace.hpp"

namespace osdr {

// Nodes are named by a (level, index) pair; the tree shape comes from
// explicit parent links, so levels may skip values as long as every child
// sits strictly below its parent.
struct NodeId {
  int level = 0;
  int index = 0;

  friend bool operator==(const NodeId& a, const NodeId& b) {
    return a.level == b.level && a.index == b.index;
  }
  friend bool operator!=(const NodeId& a, const NodeId& b) { return !(a == b); }
  friend bool operator<(const NodeId& a, const NodeId& b) {
    return a.level != b.level ? a.level < b.level : a.index < b.index;
  }
};

// A node carries its own subspace and center, per-direction variances for the
// weighted affinity, and the paired-model parameters used when the node is
// the meeting point of two selected leaves.
struct TreeNode {
  NodeId id;
  std::optional<NodeId> parent;
  Subspace subspace;
  Eigen::VectorXd center;
  Eigen::VectorXd variances;
  RdpParams params;
};

class SubspaceTree {
 public:
  explicit SubspaceTree(std::vector<TreeNode> nodes) {
    if (nodes.empty()) throw ConfigError("a subspace tree needs nodes");
    const Eigen::Index dim = nodes.front().subspace.dim();
    const Eigen::Index sub = nodes.front().subspace.sub();
    for (TreeNode& n : nodes) {
      if (n.subspace.dim() != dim || n.subspace.sub() != sub)
        throw ConfigError("all tree nodes must share the subspace shape");
      if (n.center.size() != dim)
        throw ConfigError("node center must match the ambient dimension");
      if (n.variances.size() != sub)
        throw ConfigError("node variances must match the subspace dimension");
      if (!nodes_.emplace(n.id, std::move(n)).second)
        throw ConfigError("duplicate tree node id");
    }
    std::map<NodeId, int> child_count;
    for (const auto& [id, node] : nodes_) {
      if (!node.parent) {
        if (root_) throw ConfigError("a tree can only have one root");
        root_ = id;
        continue;
      }
      const auto parent = nodes_.find(*node.parent);
      if (parent == nodes_.end())
        throw ConfigError("tree node references a missing parent");
      if (parent->first.level >= id.level)
        throw ConfigError("a child must sit strictly below its parent");
      ++child_count[*node.parent];
    }
    if (!root_) throw ConfigError("the tree has no root");
    for (const auto& [id, node] : nodes_) {
      const auto it = child_count.find(id);
      const int children = it == child_count.end() ? 0 : it->second;
      if (children != 0 && children != 2)
        throw ConfigError("tree nodes have exactly zero or two children");
      if (children == 0) leaves_.push_back(id);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return *root_; }
  const std::vector<NodeId>& leaves() const { return leaves_; }

  const TreeNode& node(NodeId id) const {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ConfigError("unknown tree node");
    return it->second;
  }
  TreeNode& node(NodeId id) {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ConfigError("unknown tree node");
    return it->second;
  }

  // Lowest common ancestor by walking the deeper side up its parent chain.
  NodeId common_parent(NodeId a, NodeId b) const {
    while (a != b) {
      if (a.level > b.level)
        a = parent_of(a);
      else if (b.level > a.level)
        b = parent_of(b);
      else {
        a = parent_of(a);
        b = parent_of(b);
      }
    }
    return a;
  }

 private:
  NodeId parent_of(NodeId id) const {
    const TreeNode& n = node(id);
    if (!n.parent) throw ConfigError("walked past the tree root");
    return *n.parent;
  }

  std::map<NodeId, TreeNode> nodes_;
  std::optional<NodeId> root_;
  std::vector<NodeId> leaves_;
};

// ---- affinity --------------------------------------------------------------

enum class AffinityKind { euclidean, mahalanobis };

namespace detail {

constexpr double kVarianceFloor = 1e-12;

inline double weighted_coefficient_energy(const Eigen::VectorXd& w,
                                          const Eigen::VectorXd& variances) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    total += w(i) * w(i) / std::max(variances(i), kVarianceFloor);
  return total;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& full,
                              const ObservationMask& mask) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(mask.indices.size()));
  for (std::size_t i = 0; i < mask.indices.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = full(mask.indices[i]);
  return out;
}

}  // namespace detail

// Distance of a sample to a node: squared residual of the centered sample
// against the node subspace; the variance-weighted form adds the coefficient
// energy scaled by the per-direction variances (floored to stay finite).
inline double node_affinity(const TreeNode& node, const Eigen::VectorXd& x,
                            AffinityKind kind) {
  const Eigen::VectorXd v = x - node.center;
  const Eigen::VectorXd w = project_coefficients(node.subspace, v);
  const double base = (v - node.subspace.basis() * w).squaredNorm();
  if (kind == AffinityKind::euclidean) return base;
  return base + detail::weighted_coefficient_energy(w, node.variances);
}

// Same distance evaluated on the observed coordinates only.
inline double node_affinity_masked(const TreeNode& node,
                                   const Eigen::VectorXd& x_omega,
                                   const ObservationMask& mask,
                                   AffinityKind kind) {
  const Eigen::VectorXd v = x_omega - detail::gather(node.center, mask);
  const Eigen::VectorXd w =
      project_coefficients_masked(node.subspace, v, mask);
  double base = 0.0;
  for (std::size_t i = 0; i < mask.indices.size(); ++i) {
    const double fitted = node.subspace.basis().row(mask.indices[i]) * w;
    const double diff = v(static_cast<Eigen::Index>(i)) - fitted;
    base += diff * diff;
  }
  if (kind == AffinityKind::euclidean) return base;
  return base + detail::weighted_coefficient_energy(w, node.variances);
}

// The best-matching leaf: smallest affinity, ties to the first leaf in
// (level, index) order. Masked selection skips leaves whose restricted
// projection is ill-posed; if no leaf is usable the mask error propagates.
inline NodeId affinity_select(const SubspaceTree& tree,
                              const Eigen::VectorXd& x, AffinityKind kind) {
  NodeId best{};
  double best_affinity = std::numeric_limits<double>::infinity();
  for (const NodeId id : tree.leaves()) {
    const double a = node_affinity(tree.node(id), x, kind);
    if (a < best_affinity) {
      best_affinity = a;
      best = id;
    }
  }
  return best;
}

inline NodeId affinity_select_masked(const SubspaceTree& tree,
                                     const Eigen::VectorXd& x_omega,
                                     const ObservationMask& mask,
                                     AffinityKind kind) {
  std::optional<NodeId> best;
  double best_affinity = std::numeric_limits<double>::infinity();
  for (const NodeId id : tree.leaves()) {
    double a = 0.0;
    try {
      a = node_affinity_masked(tree.node(id), x_omega, mask, kind);
    } catch (const IllConditionedMaskError&) {
      continue;
    } catch (const InsufficientObservationsError&) {
      continue;
    }
    if (a < best_affinity) {
      best_affinity = a;
      best = id;
    }
  }
  if (!best)
    throw IllConditionedMaskError(
        "no tree leaf supports the observed coordinates");
  return *best;
}

// ---- paired prediction and update on the tree ------------------------------

namespace detail {

inline NodeId select_for(const SubspaceTree& tree, const Eigen::VectorXd& x,
                         const std::optional<ObservationMask>& mask,
                         AffinityKind kind) {
  if (mask) return affinity_select_masked(tree, x, *mask, kind);
  return affinity_select(tree, x, kind);
}

inline Eigen::VectorXd centered(const Eigen::VectorXd& x,
                                const std::optional<ObservationMask>& mask,
                                const Eigen::VectorXd& center) {
  if (!mask) return x - center;
  return x - gather(center, *mask);
}

}  // namespace detail

// Route the pair to their leaves, meet at the lowest common ancestor, and
// predict with that node's paired model on its centered coefficients.
inline double tree_predict(const SubspaceTree& tree, const StreamSample& s,
                           AffinityKind kind) {
  const NodeId leaf1 = detail::select_for(tree, s.x, s.mask, kind);
  const NodeId leaf2 = detail::select_for(tree, s.x2, s.mask2, kind);
  const TreeNode& host = tree.node(tree.common_parent(leaf1, leaf2));
  const Eigen::VectorXd b1 = detail::coefficients(
      host.subspace, detail::centered(s.x, s.mask, host.center), s.mask);
  const Eigen::VectorXd b2 = detail::coefficients(
      host.subspace, detail::centered(s.x2, s.mask2, host.center), s.mask2);
  return rdp_predict(host.params, b1, b2);
}

// One supervised update: the host node's subspace takes the two-stage
// geodesic move and its paired parameters absorb the gradient step. Every
// other node is left untouched.
inline void tree_step(SubspaceTree& tree, const StreamSample& s, double eta,
                      double mu, AffinityKind kind) {
  const NodeId leaf1 = detail::select_for(tree, s.x, s.mask, kind);
  const NodeId leaf2 = detail::select_for(tree, s.x2, s.mask2, kind);
  TreeNode& host = tree.node(tree.common_parent(leaf1, leaf2));
  detail::rdp_two_stage(host.subspace, host.params,
                        detail::centered(s.x, s.mask, host.center), s.mask,
                        detail::centered(s.x2, s.mask2, host.center), s.mask2,
                        detail::response_scalar(s.y), eta, mu,
                        /*cap=*/false);
}

// ---- topology description files --------------------------------------------

// A compact text format describing the tree shape and the per-node
// generation knobs (seed, offset magnitude, variance scale):
//
//   # comment
//   dim 100
//   subdim 2
//   node 0 0 parent=. seed=11 offset=0 lambda=1
//   node 2 2 parent=0,0 seed=12 offset=2.5 lambda=0.5
struct TreeNodeSpec {
  int level = 0;
  int index = 0;
  std::optional<NodeId> parent;
  std::uint64_t seed = 0;
  double offset = 0.0;
  double lambda = 1.0;
};

struct TreeTopology {
  Eigen::Index dim = 0;
  Eigen::Index subdim = 0;
  std::vector<TreeNodeSpec> nodes;
};

// Structural validation shared by the parser and programmatic builders.
inline void validate_topology(const TreeTopology& topo) {
  if (topo.dim <= 0 || topo.subdim <= 0 || topo.subdim > topo.dim)
    throw ConfigError("topology requires 0 < subdim <= dim");
  std::map<NodeId, const TreeNodeSpec*> by_id;
  for (const TreeNodeSpec& n : topo.nodes)
    if (!by_id.emplace(NodeId{n.level, n.index}, &n).second)
      throw ConfigError("duplicate node in topology");
  int roots = 0;
  std::map<NodeId, int> child_count;
  for (const TreeNodeSpec& n : topo.nodes) {
    if (!n.parent) {
      ++roots;
      continue;
    }
    if (!by_id.count(*n.parent))
      throw ConfigError("topology node references a missing parent");
    if (n.parent->level >= n.level)
      throw ConfigError("a child must sit strictly below its parent");
    ++child_count[*n.parent];
  }
  if (roots != 1) throw ConfigError("topology needs exactly one root");
  for (const auto& [id, count] : child_count)
    if (count != 2)
      throw ConfigError("tree nodes have exactly zero or two children");
}

namespace detail {

[[noreturn]] inline void topology_error(int line, const std::string& what) {
  throw IoError("tree topology line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline TreeTopology parse_tree_topology(const std::string& text) {
  TreeTopology topo;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool saw_dim = false, saw_subdim = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string head;
    if (!(tokens >> head)) continue;  // blank
    if (head == "dim" || head == "subdim") {
      long value = 0;
      if (!(tokens >> value) || value <= 0)
        detail::topology_error(line_no, "expected a positive integer");
      (head == "dim" ? topo.dim : topo.subdim) = value;
      (head == "dim" ? saw_dim : saw_subdim) = true;
      continue;
    }
    if (head != "node")
      detail::topology_error(line_no, "unknown directive '" + head + "'");
    TreeNodeSpec spec;
    if (!(tokens >> spec.level >> spec.index))
      detail::topology_error(line_no, "node needs a level and an index");
    std::string field;
    while (tokens >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos)
        detail::topology_error(line_no, "expected key=value, got '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      try {
        if (key == "parent") {
          if (value == ".") {
            spec.parent.reset();
          } else {
            const auto comma = value.find(',');
            if (comma == std::string::npos) throw std::invalid_argument(value);
            spec.parent = NodeId{std::stoi(value.substr(0, comma)),
                                 std::stoi(value.substr(comma + 1))};
          }
        } else if (key == "seed") {
          spec.seed = std::stoull(value);
        } else if (key == "offset") {
          spec.offset = std::stod(value);
        } else if (key == "lambda") {
          spec.lambda = std::stod(value);
        } else {
          detail::topology_error(line_no, "unknown key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        detail::topology_error(line_no, "bad value for '" + key + "'");
      } catch (const std::out_of_range&) {
        detail::topology_error(line_no, "bad value for '" + key + "'");
      }
    }
    topo.nodes.push_back(spec);
  }
  if (!saw_dim || !saw_subdim)
    throw IoError("tree topology: missing dim or subdim directive");
  validate_topology(topo);
  return topo;
}

inline std::string serialize_tree_topology(const TreeTopology& topo) {
  std::ostringstream out;
  out << "dim " << topo.dim << "\n";
  out << "subdim " << topo.subdim << "\n";
  for (const TreeNodeSpec& n : topo.nodes) {
    out << "node " << n.level << " " << n.index << " parent=";
    if (n.parent)
      out << n.parent->level << "," << n.parent->index;
    else
      out << ".";
    out << " seed=" << n.seed << " offset=" << fmt_full(n.offset)
        << " lambda=" << fmt_full(n.lambda) << "\n";
  }
  return out.str();
}

}  // namespace osdr
