#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/datagen.hpp"
#include "osdr/dataset_io.hpp"
#include "osdr/engine.hpp"
#include "osdr/models.hpp"
#include "osdr/odr.hpp"
#include "osdr/subspace.hpp"
#include "osdr/tree.hpp"

namespace osdr {

// Declarative experiment harness: a flat key-value config names a generator,
// a set of contenders, learning-rate grids, sweep axes, and seeds; the runner
// executes every (point, contender, rate, seed) cell on identical sample
// streams, tunes the rates by mean test metric, and writes deterministic CSV
// artifacts.

enum class ExperimentKind {
  static_ellipse,
  rotating,
  linear,
  spectrum,
  tree_network,
  external_csv,
};

enum class ContenderKind { osdr, odr, flat_logistic, hier_osdr };

inline std::string contender_name(ContenderKind c) {
  switch (c) {
    case ContenderKind::osdr: return "osdr";
    case ContenderKind::odr: return "odr";
    case ContenderKind::flat_logistic: return "flat-logistic";
    case ContenderKind::hier_osdr: return "hier-osdr";
  }
  return "?";
}

// Generator knobs shared across experiment kinds; each kind reads the subset
// it understands.
struct GeneratorSettings {
  Eigen::Index dim = 100;
  Eigen::Index sub = 2;  // intrinsic dimension (spectrum block, tree nodes)
  double r1 = 5.0;
  double r2 = 1.0;
  double noise_var = 1e-3;
  double label_scale = 1.0;
  long count = 6000;
  double tau = 1.0;
  long onset = 500;
  double c1 = 1.0;
  double c2 = 1.0;
  double intercept = 0.0;
  SpectrumLabeling labeling = SpectrumLabeling::type_one;
  double rotation_scale = 2e-4;
  double offset_scale = 5.0;
  std::optional<double> observe_fraction;  // unset = kind default
  double interaction_scale = 1.0;
  std::string file;  // external-csv source
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::static_ellipse;
  GeneratorSettings gen;
  std::vector<ContenderKind> contenders = {ContenderKind::osdr,
                                           ContenderKind::odr};
  Eigen::Index sub = 2;  // fitted subspace dimension
  ModelKind model = ModelKind::logistic;
  Formulation form = Formulation::low_dim;
  std::vector<double> eta_grid = {1e-2, 1e-3, 1e-4};
  std::vector<double> mu_grid = {1e-2, 1e-3, 1e-4};
  bool decay = false;
  RankPolicy rank_policy = RankPolicy::exact_svd;
  long reorth_every = 1000;
  long batch = 1;
  long train = 3000;  // test metrics start at this step
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  // Sweep axes: (field name, raw values); the cartesian product defines the
  // grid of points.
  std::vector<std::pair<std::string, std::vector<std::string>>> sweep_axes;
};

// ---- config text format ----------------------------------------------------
//
//   # comment
//   kind static-ellipse
//   seeds 1,2,3
//   engine.eta 1e-2,1e-3      # a list makes a tuning grid
//   sweep.engine.sub 1,2,3    # a swept field
//
// One `key value` pair per line; later lines override earlier ones. Unknown
// keys are rejected with their line number.

namespace detail {

[[noreturn]] inline void config_error(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

inline double config_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_error(line, "expected a number, got '" + v + "'");
  }
}

inline long config_long(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    config_error(line, "expected an integer, got '" + v + "'");
  }
}

inline bool config_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  config_error(line, "expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ','))
    if (!item.empty()) items.push_back(item);
  return items;
}

inline std::vector<double> config_double_list(const std::string& v, int line) {
  std::vector<double> out;
  for (const std::string& item : split_list(v))
    out.push_back(config_double(item, line));
  if (out.empty()) config_error(line, "expected at least one value");
  return out;
}

inline ExperimentKind parse_kind(const std::string& v, int line) {
  if (v == "static-ellipse") return ExperimentKind::static_ellipse;
  if (v == "rotating") return ExperimentKind::rotating;
  if (v == "linear") return ExperimentKind::linear;
  if (v == "spectrum") return ExperimentKind::spectrum;
  if (v == "tree-network") return ExperimentKind::tree_network;
  if (v == "external-csv") return ExperimentKind::external_csv;
  config_error(line, "unknown experiment kind '" + v + "'");
}

inline ContenderKind parse_contender(const std::string& v, int line) {
  if (v == "osdr") return ContenderKind::osdr;
  if (v == "odr") return ContenderKind::odr;
  if (v == "flat-logistic") return ContenderKind::flat_logistic;
  if (v == "hier-osdr") return ContenderKind::hier_osdr;
  config_error(line, "unknown contender '" + v + "'");
}

inline ModelKind parse_model(const std::string& v, int line) {
  if (v == "linear") return ModelKind::linear;
  if (v == "logistic") return ModelKind::logistic;
  if (v == "multilinear") return ModelKind::multilinear;
  if (v == "multinomial") return ModelKind::multinomial;
  if (v == "svm") return ModelKind::svm;
  if (v == "rdp") return ModelKind::rdp;
  config_error(line, "unknown model kind '" + v + "'");
}

// Applies one key/value pair; throws with the line number on unknown keys or
// bad values. Shared by the parser and by sweep-point expansion.
inline void apply_config_field(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value, int line) {
  const auto set_long = [&](long& slot) { slot = config_long(value, line); };
  const auto set_double = [&](double& slot) {
    slot = config_double(value, line);
  };

  if (key == "kind") {
    cfg.kind = parse_kind(value, line);
  } else if (key == "contenders") {
    cfg.contenders.clear();
    for (const std::string& item : split_list(value))
      cfg.contenders.push_back(parse_contender(item, line));
  } else if (key == "seeds") {
    cfg.seeds.clear();
    for (const std::string& item : split_list(value))
      cfg.seeds.push_back(
          static_cast<std::uint64_t>(config_long(item, line)));
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "train") {
    set_long(cfg.train);
  } else if (key == "gen.dim") {
    cfg.gen.dim = config_long(value, line);
  } else if (key == "gen.sub") {
    cfg.gen.sub = config_long(value, line);
  } else if (key == "gen.r1") {
    set_double(cfg.gen.r1);
  } else if (key == "gen.r2") {
    set_double(cfg.gen.r2);
  } else if (key == "gen.noise_var") {
    set_double(cfg.gen.noise_var);
  } else if (key == "gen.label_scale") {
    set_double(cfg.gen.label_scale);
  } else if (key == "gen.count") {
    set_long(cfg.gen.count);
  } else if (key == "gen.tau") {
    set_double(cfg.gen.tau);
  } else if (key == "gen.onset") {
    set_long(cfg.gen.onset);
  } else if (key == "gen.c1") {
    set_double(cfg.gen.c1);
  } else if (key == "gen.c2") {
    set_double(cfg.gen.c2);
  } else if (key == "gen.intercept") {
    set_double(cfg.gen.intercept);
  } else if (key == "gen.labeling") {
    if (value == "type-one")
      cfg.gen.labeling = SpectrumLabeling::type_one;
    else if (value == "type-two")
      cfg.gen.labeling = SpectrumLabeling::type_two;
    else
      config_error(line, "labeling must be type-one or type-two");
  } else if (key == "gen.rotation_scale") {
    set_double(cfg.gen.rotation_scale);
  } else if (key == "gen.offset_scale") {
    set_double(cfg.gen.offset_scale);
  } else if (key == "gen.observe_fraction") {
    cfg.gen.observe_fraction = config_double(value, line);
  } else if (key == "gen.interaction_scale") {
    set_double(cfg.gen.interaction_scale);
  } else if (key == "gen.file") {
    cfg.gen.file = value;
  } else if (key == "engine.sub") {
    cfg.sub = config_long(value, line);
  } else if (key == "engine.kind") {
    cfg.model = parse_model(value, line);
  } else if (key == "engine.form") {
    if (value == "low-dim")
      cfg.form = Formulation::low_dim;
    else if (value == "ambient")
      cfg.form = Formulation::ambient;
    else
      config_error(line, "form must be low-dim or ambient");
  } else if (key == "engine.eta") {
    cfg.eta_grid = config_double_list(value, line);
  } else if (key == "engine.mu") {
    cfg.mu_grid = config_double_list(value, line);
  } else if (key == "engine.decay") {
    cfg.decay = config_bool(value, line);
  } else if (key == "engine.rank_policy") {
    if (value == "exact-svd")
      cfg.rank_policy = RankPolicy::exact_svd;
    else if (value == "rank-one")
      cfg.rank_policy = RankPolicy::rank_one_approx;
    else
      config_error(line, "rank policy must be exact-svd or rank-one");
  } else if (key == "engine.reorth_every") {
    set_long(cfg.reorth_every);
  } else if (key == "engine.batch") {
    set_long(cfg.batch);
  } else {
    config_error(line, "unknown field '" + key + "'");
  }
}

inline bool known_config_field(const std::string& key) {
  ExperimentConfig probe;
  try {
    apply_config_field(probe, key, "", 0);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find("unknown field") == std::string::npos;
  }
  return true;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string key;
    if (!(tokens >> key)) continue;
    std::string value;
    std::getline(tokens, value);
    const auto first = value.find_first_not_of(" \t");
    const auto last = value.find_last_not_of(" \t");
    value = first == std::string::npos
                ? std::string()
                : value.substr(first, last - first + 1);
    if (value.empty())
      detail::config_error(line_no, "field '" + key + "' has no value");

    if (key.rfind("sweep.", 0) == 0) {
      const std::string field = key.substr(6);
      if (!detail::known_config_field(field))
        detail::config_error(line_no, "unknown field '" + field + "'");
      if (field == "seeds" || field == "out")
        detail::config_error(line_no, "'" + field + "' cannot be swept");
      std::vector<std::string> values = detail::split_list(value);
      if (values.empty())
        detail::config_error(line_no, "sweep axis needs at least one value");
      cfg.sweep_axes.emplace_back(field, std::move(values));
    } else {
      detail::apply_config_field(cfg, key, value, line_no);
    }
  }
  return cfg;
}

inline void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.contenders.empty())
    throw ConfigError("at least one contender is required");
  if (cfg.eta_grid.empty() || cfg.mu_grid.empty())
    throw ConfigError("learning-rate grids cannot be empty");
  if (cfg.sub < 1) throw ConfigError("engine.sub must be at least 1");
  if (cfg.batch < 1) throw ConfigError("engine.batch must be at least 1");
  if (cfg.kind == ExperimentKind::external_csv && cfg.gen.file.empty())
    throw ConfigError("external-csv experiments need gen.file");
  const bool paired = cfg.kind == ExperimentKind::tree_network;
  for (const ContenderKind c : cfg.contenders) {
    if (c == ContenderKind::hier_osdr && !paired)
      throw ConfigError("hier-osdr only applies to tree-network experiments");
    if (c == ContenderKind::odr && paired)
      throw ConfigError(
          "the unsupervised baseline does not handle paired streams");
  }
  if (paired && cfg.batch != 1)
    throw ConfigError("paired streams do not support mini-batches");
}

// ---- contender steppers ----------------------------------------------------

// Unsupervised-subspace baseline: the basis follows the reconstruction
// gradient (never reading the label), while the attached predictive model is
// trained on the projected coefficients exactly like the supervised engine.
struct OdrStepper {
  EngineState state;
  EngineConfig config;

  explicit OdrStepper(const EngineConfig& cfg)
      : state(make_engine_state(cfg)), config(cfg) {
    if (cfg.kind == ModelKind::rdp)
      throw ConfigError(
          "the unsupervised baseline does not handle paired streams");
  }

  double prequential_error(const StreamSample& s) const {
    return prequential_loss(state, s, config);
  }

  void update(const StreamSample& s) {
    detail::validate_sample(config, s);
    const detail::StepRates rates =
        detail::effective_rates(config, state.step_count);
    std::optional<Subspace> snapshot;
    if (s.mask) snapshot = state.subspace;
    try {
      state.subspace =
          s.mask ? odr_step_masked(state.subspace, s.x, *s.mask, rates.eta)
                 : odr_step(state.subspace, s.x, rates.eta);
      update_params(s, rates.mu);
    } catch (const IllConditionedMaskError&) {
      if (snapshot) state.subspace = *snapshot;
      ++state.skipped;
      ++state.step_count;
      return;
    } catch (const InsufficientObservationsError&) {
      if (snapshot) state.subspace = *snapshot;
      ++state.skipped;
      ++state.step_count;
      return;
    }
    ++state.step_count;
    detail::maybe_reorthonormalize(state, config);
  }

  const Eigen::MatrixXd* current_basis() const {
    return &state.subspace.basis();
  }
  long skipped_count() const { return state.skipped; }

 private:
  void update_params(const StreamSample& s, double mu) {
    const Subspace& u = state.subspace;
    const bool ambient = config.form == Formulation::ambient;
    switch (config.kind) {
      case ModelKind::linear: {
        const double y = detail::response_scalar(s.y);
        if (ambient)
          linear_param_update(std::get<LinearAmbientParams>(state.params), u,
                              detail::coefficients(u, s.x, s.mask), y, mu);
        else
          linear_param_update(std::get<LinearLowDimParams>(state.params), u,
                              s.x, y, mu);
        break;
      }
      case ModelKind::logistic: {
        const double y = detail::response_scalar(s.y);
        if (ambient)
          logistic_param_update(std::get<LogisticAmbientParams>(state.params),
                                u, detail::coefficients(u, s.x, s.mask), y,
                                mu);
        else
          logistic_param_update(std::get<LogisticLowDimParams>(state.params),
                                u, s.x, y, mu);
        break;
      }
      case ModelKind::multilinear: {
        auto& p = std::get<MultiLinearParams>(state.params);
        const Eigen::VectorXd& y = detail::response_vector(s.y);
        if (p.form == Formulation::ambient)
          multilinear_param_update(p, u,
                                   detail::coefficients(u, s.x, s.mask), y,
                                   mu);
        else
          multilinear_param_update(p, u, s.x, y, mu);
        break;
      }
      case ModelKind::multinomial:
        multinomial_param_update(std::get<MultinomialParams>(state.params), u,
                                 detail::coefficients(u, s.x, s.mask),
                                 detail::response_class(s.y), mu);
        break;
      case ModelKind::svm: {
        auto& p = std::get<SvmParams>(state.params);
        const double y = detail::response_scalar(s.y);
        if (p.form == Formulation::ambient)
          svm_param_update(p, u, detail::coefficients(u, s.x, s.mask), y, mu);
        else
          svm_param_update(p, u, s.x, y, mu);
        break;
      }
      case ModelKind::rdp:
        throw ConfigError("unreachable: paired model rejected at start");
    }
  }
};

// Full-dimensional online logistic regression with no subspace: the
// no-reduction baseline. Single vectors score through an ambient weight
// vector; paired samples score through their (observed) inner product.
struct FlatLogisticStepper {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double pair_weight = 0.1;
  double pair_bias = 0.0;
  double mu = 1e-3;
  bool paired = false;

  FlatLogisticStepper(Eigen::Index dim, double rate, bool paired_mode)
      : weights(Eigen::VectorXd::Zero(dim)), mu(rate), paired(paired_mode) {}

  double logit(const StreamSample& s) const {
    if (paired) return pair_weight * pair_product(s) + pair_bias;
    double z = bias;
    if (s.mask) {
      for (std::size_t i = 0; i < s.mask->indices.size(); ++i)
        z += weights(s.mask->indices[i]) * s.x(static_cast<Eigen::Index>(i));
    } else {
      z += weights.dot(s.x);
    }
    return z;
  }

  double prequential_error(const StreamSample& s) const {
    const int guess = sigmoid_clamped(logit(s)) > 0.5 ? 1 : 0;
    return guess == detail::response_class(s.y) ? 0.0 : 1.0;
  }

  void update(const StreamSample& s) {
    const double resid =
        detail::response_scalar(s.y) - sigmoid_clamped(logit(s));
    if (paired) {
      pair_weight += mu * resid * pair_product(s);
      pair_bias += mu * resid;
    } else {
      if (s.mask) {
        for (std::size_t i = 0; i < s.mask->indices.size(); ++i)
          weights(s.mask->indices[i]) +=
              mu * resid * s.x(static_cast<Eigen::Index>(i));
      } else {
        weights += mu * resid * s.x;
      }
      bias += mu * resid;
    }
  }

  const Eigen::MatrixXd* current_basis() const { return nullptr; }
  long skipped_count() const { return 0; }

 private:
  // Inner product over the commonly observed coordinates.
  double pair_product(const StreamSample& s) const {
    if (!s.mask && !s.mask2) return s.x.dot(s.x2);
    std::map<Eigen::Index, double> left;
    if (s.mask) {
      for (std::size_t i = 0; i < s.mask->indices.size(); ++i)
        left[s.mask->indices[i]] = s.x(static_cast<Eigen::Index>(i));
    } else {
      for (Eigen::Index i = 0; i < s.x.size(); ++i) left[i] = s.x(i);
    }
    double total = 0.0;
    if (s.mask2) {
      for (std::size_t i = 0; i < s.mask2->indices.size(); ++i) {
        const auto it = left.find(s.mask2->indices[i]);
        if (it != left.end())
          total += it->second * s.x2(static_cast<Eigen::Index>(i));
      }
    } else {
      for (Eigen::Index i = 0; i < s.x2.size(); ++i) {
        const auto it = left.find(i);
        if (it != left.end()) total += it->second * s.x2(i);
      }
    }
    return total;
  }
};

// Hierarchical supervised tracker: a tree whose structure, centers, and
// affinity variances are fixed while node subspaces and paired parameters
// learn online.
struct HierTreeStepper {
  SubspaceTree tree;
  double eta = 1e-3;
  double mu = 1e-3;
  long skipped = 0;

  HierTreeStepper(SubspaceTree t, double eta_rate, double mu_rate)
      : tree(std::move(t)), eta(eta_rate), mu(mu_rate) {}

  double prequential_error(const StreamSample& s) const {
    try {
      const int guess =
          tree_predict(tree, s, AffinityKind::euclidean) > 0.5 ? 1 : 0;
      return guess == detail::response_class(s.y) ? 0.0 : 1.0;
    } catch (const IllConditionedMaskError&) {
      return 1.0;
    } catch (const InsufficientObservationsError&) {
      return 1.0;
    }
  }

  void update(const StreamSample& s) {
    try {
      tree_step(tree, s, eta, mu, AffinityKind::euclidean);
    } catch (const IllConditionedMaskError&) {
      ++skipped;
    } catch (const InsufficientObservationsError&) {
      ++skipped;
    }
  }

  const Eigen::MatrixXd* current_basis() const { return nullptr; }
  long skipped_count() const { return skipped; }
};

// The learner's tree for a generated interaction stream: true structure,
// centers, and variances (assumed known to the tracker), fresh random
// subspaces, and neutral paired parameters.
inline SubspaceTree make_learner_tree(const SubspaceTree& truth,
                                      std::uint64_t seed) {
  Rng rng(seed);
  // The tree type exposes no node iterator; recover every id by walking each
  // leaf up to the root. std::map keeps the draw order deterministic.
  std::map<NodeId, bool> seen;
  for (const NodeId leaf : truth.leaves()) {
    NodeId cur = leaf;
    while (!seen[cur]) {
      seen[cur] = true;
      if (cur == truth.root()) break;
      cur = *truth.node(cur).parent;
    }
  }
  std::vector<TreeNode> nodes;
  for (const auto& entry : seen) {
    const TreeNode& t = truth.node(entry.first);
    nodes.push_back(TreeNode{entry.first, t.parent,
                             Subspace::random(t.subspace.dim(),
                                              t.subspace.sub(), rng),
                             t.center, t.variances, RdpParams{0.1, 0.0}});
  }
  return SubspaceTree(std::move(nodes));
}

// Buffers samples into fixed-size mini-batches in front of the engine. A
// trailing partial batch at the end of a stream is never flushed: every move
// the engine makes averages exactly `batch` gradients.
struct BatchedOsdrStepper {
  EngineState state;
  EngineConfig config;
  long batch = 1;
  std::vector<StreamSample> buffer;

  BatchedOsdrStepper(const EngineConfig& cfg, long batch_size)
      : state(make_engine_state(cfg)), config(cfg), batch(batch_size) {}

  double prequential_error(const StreamSample& s) const {
    return prequential_loss(state, s, config);
  }
  void update(const StreamSample& s) {
    buffer.push_back(s);
    if (static_cast<long>(buffer.size()) == batch) {
      engine_step_batch(state, buffer, config);
      buffer.clear();
    }
  }
  const Eigen::MatrixXd* current_basis() const {
    return &state.subspace.basis();
  }
  long skipped_count() const { return state.skipped; }
};

// ---- experiment execution --------------------------------------------------

struct StreamBundle {
  std::vector<StreamSample> samples;
  SubspaceTrack truth;
  std::optional<SubspaceTree> tree_truth;  // tree-network start tree
  Eigen::Index ambient = 0;
  bool classification = true;
};

inline StreamBundle make_stream(const ExperimentConfig& cfg,
                                std::uint64_t seed) {
  StreamBundle bundle;
  const GeneratorSettings& g = cfg.gen;
  const double observe = g.observe_fraction.value_or(
      cfg.kind == ExperimentKind::tree_network ? 0.4 : 1.0);
  switch (cfg.kind) {
    case ExperimentKind::static_ellipse: {
      StaticEllipseConfig c;
      c.dim = g.dim;
      c.ellipse = {g.r1, g.r2};
      c.noise_var = g.noise_var;
      c.label_scale = g.label_scale;
      c.count = g.count;
      c.seed = seed;
      LabeledStream stream = gen_static_ellipse(c);
      bundle.samples = std::move(stream.samples);
      bundle.truth = std::move(stream.truth);
      bundle.ambient = g.dim;
      bundle.classification = true;
      break;
    }
    case ExperimentKind::rotating: {
      RotatingEllipseConfig c;
      c.dim = g.dim;
      c.ellipse = {g.r1, g.r2};
      c.noise_var = g.noise_var;
      c.label_scale = g.label_scale;
      c.tau = g.tau;
      c.onset = g.onset;
      c.horizon = g.count;
      c.seed = seed;
      LabeledStream stream = gen_rotating_ellipse(c);
      bundle.samples = std::move(stream.samples);
      bundle.truth = std::move(stream.truth);
      bundle.ambient = g.dim;
      bundle.classification = true;
      break;
    }
    case ExperimentKind::linear: {
      LinearResponseConfig c;
      c.dim = g.dim;
      c.ellipse = {g.r1, g.r2};
      c.coeff = {g.c1, g.c2};
      c.intercept = g.intercept;
      c.noise_var = g.noise_var;
      c.count = g.count;
      c.seed = seed;
      LabeledStream stream = gen_linear_response(c);
      bundle.samples = std::move(stream.samples);
      bundle.truth = std::move(stream.truth);
      bundle.ambient = g.dim;
      bundle.classification = false;
      break;
    }
    case ExperimentKind::spectrum: {
      SpectrumConfig c;
      c.dim = g.dim;
      c.sub = g.sub;
      c.labeling = g.labeling;
      c.count = g.count;
      c.seed = seed;
      SpectrumDataset data = gen_spectrum_classification(c);
      bundle.samples = std::move(data.samples);
      bundle.ambient = g.dim;
      bundle.classification = true;
      break;
    }
    case ExperimentKind::tree_network: {
      TreeNetworkConfig c;
      c.dim = g.dim;
      c.sub = g.sub;
      c.rotation_scale = g.rotation_scale;
      c.offset_scale = g.offset_scale;
      c.noise_var = g.noise_var;
      c.observe_fraction = observe;
      c.interaction_scale = g.interaction_scale;
      c.count = g.count;
      c.seed = seed;
      TreeNetworkStream stream = gen_tree_network(c);
      bundle.samples = std::move(stream.samples);
      bundle.tree_truth = std::move(stream.start);
      bundle.ambient = g.dim;
      bundle.classification = true;
      return bundle;  // tree masking is part of the generator
    }
    case ExperimentKind::external_csv: {
      std::ifstream in(g.file);
      if (!in) throw IoError("cannot open dataset file '" + g.file + "'");
      std::string header;
      std::getline(in, header);
      const bool with_masks = header.rfind("y,mask", 0) == 0;
      const std::size_t header_fields = detail::split_csv_row(header).size();
      in.clear();
      in.seekg(0);
      bundle.samples = with_masks ? read_dataset_csv(in) : read_labeled_csv(in);
      if (bundle.samples.empty())
        throw IoError("dataset file '" + g.file + "' holds no samples");
      bundle.ambient = static_cast<Eigen::Index>(header_fields) -
                       (with_masks ? 2 : 1);
      bundle.classification = cfg.model != ModelKind::linear &&
                              cfg.model != ModelKind::multilinear;
      break;
    }
  }
  if (observe < 1.0 && cfg.kind != ExperimentKind::tree_network)
    bundle.samples = apply_mask(bundle.samples, observe, cfg.sub,
                                seed ^ 0x6a09e667f3bcc909ULL);
  return bundle;
}

struct ContenderOutcome {
  ContenderKind contender = ContenderKind::osdr;
  double eta = 0.0;  // winning rates (eta is 0 for the flat baseline)
  double mu = 0.0;
  double metric_mean = 0.0;
  double metric_std = 0.0;
  double eps_mean = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_seed;
  std::vector<RunReport> reports;  // winning combo, one per seed
};

struct PointOutcome {
  std::string label;  // "base" or "field=value;..."
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<ContenderOutcome> contenders;
};

struct ExperimentOutcome {
  std::vector<PointOutcome> points;
};

namespace detail {

// Seed for a contender's random initial state. Derived from the stream seed
// through a bijective scramble so the initial subspace is independent of the
// generator's draws (the generators consume the raw seed; reusing it here
// would start every tracker exactly on the planted truth), while staying
// identical across contenders and rate combinations for paired comparisons.
inline std::uint64_t learner_seed(std::uint64_t stream_seed) {
  std::uint64_t s = stream_seed ^ 0x9e3779b97f4a7c15ULL;
  s *= 0xbf58476d1ce4e5b9ULL;
  s ^= s >> 27;
  return s;
}

inline double test_metric(const RunReport& report, long from,
                          bool classification) {
  const double mean = mean_error(report, from);
  return classification ? mean : std::sqrt(mean);
}

inline double eps_mean_of(const std::vector<RunReport>& reports) {
  double sum = 0.0;
  int n = 0;
  for (const RunReport& r : reports) {
    const double e = final_eps(r);
    if (!std::isnan(e)) {
      sum += e;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

// One contender at one sweep point: run the full rate grid over all seeds on
// the shared streams, keep the combo with the best mean test metric.
inline ContenderOutcome run_contender(const ExperimentConfig& cfg,
                                      ContenderKind contender,
                                      const std::vector<StreamBundle>& streams,
                                      int jobs) {
  struct Combo {
    double eta, mu;
  };
  std::vector<Combo> combos;
  if (contender == ContenderKind::flat_logistic) {
    for (const double mu : cfg.mu_grid) combos.push_back({0.0, mu});
  } else {
    for (const double eta : cfg.eta_grid)
      for (const double mu : cfg.mu_grid) combos.push_back({eta, mu});
  }

  const std::size_t seeds = cfg.seeds.size();
  std::vector<std::vector<RunReport>> reports(
      combos.size(), std::vector<RunReport>(seeds));
  std::vector<std::vector<double>> metrics(combos.size(),
                                           std::vector<double>(seeds));

  const auto run_unit = [&](std::size_t combo_i, std::size_t seed_i) {
    const Combo combo = combos[combo_i];
    const StreamBundle& bundle = streams[seed_i];
    RunOptions opt;
    opt.track = &bundle.truth;

    EngineConfig ecfg;
    ecfg.dim = bundle.ambient;
    ecfg.sub = cfg.sub;
    ecfg.kind = cfg.kind == ExperimentKind::tree_network ? ModelKind::rdp
                                                         : cfg.model;
    ecfg.form = cfg.form;
    ecfg.eta = combo.eta;
    ecfg.mu = combo.mu;
    ecfg.decay = cfg.decay;
    ecfg.rank_policy = cfg.rank_policy;
    ecfg.reorth_every = static_cast<int>(cfg.reorth_every);
    ecfg.seed = detail::learner_seed(cfg.seeds[seed_i]);

    RunReport report;
    switch (contender) {
      case ContenderKind::osdr: {
        if (cfg.batch > 1) {
          BatchedOsdrStepper stepper(ecfg, cfg.batch);
          report = run_stream(stepper, bundle.samples, opt);
        } else {
          OsdrStepper stepper(ecfg);
          report = run_stream(stepper, bundle.samples, opt);
        }
        break;
      }
      case ContenderKind::odr: {
        OdrStepper stepper(ecfg);
        report = run_stream(stepper, bundle.samples, opt);
        break;
      }
      case ContenderKind::flat_logistic: {
        FlatLogisticStepper stepper(
            bundle.ambient, combo.mu,
            cfg.kind == ExperimentKind::tree_network);
        report = run_stream(stepper, bundle.samples, opt);
        break;
      }
      case ContenderKind::hier_osdr: {
        HierTreeStepper stepper(
            make_learner_tree(*bundle.tree_truth,
                              detail::learner_seed(cfg.seeds[seed_i])),
            combo.eta, combo.mu);
        report = run_stream(stepper, bundle.samples, opt);
        break;
      }
    }
    metrics[combo_i][seed_i] =
        test_metric(report, cfg.train, bundle.classification);
    reports[combo_i][seed_i] = std::move(report);
  };

  std::vector<std::pair<std::size_t, std::size_t>> units;
  for (std::size_t c = 0; c < combos.size(); ++c)
    for (std::size_t s = 0; s < seeds; ++s) units.emplace_back(c, s);
  if (jobs <= 1) {
    for (const auto& [c, s] : units) run_unit(c, s);
  } else {
    std::vector<std::thread> pool;
    const int workers = std::min<int>(jobs, static_cast<int>(units.size()));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < units.size();
             i += static_cast<std::size_t>(workers))
          run_unit(units[i].first, units[i].second);
      });
    for (std::thread& t : pool) t.join();
  }

  std::size_t best = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < combos.size(); ++c) {
    double mean = 0.0;
    for (const double m : metrics[c]) mean += m;
    mean /= static_cast<double>(seeds);
    if (mean < best_mean) {
      best_mean = mean;
      best = c;
    }
  }

  ContenderOutcome out;
  out.contender = contender;
  out.eta = combos[best].eta;
  out.mu = combos[best].mu;
  out.per_seed = metrics[best];
  out.reports = std::move(reports[best]);
  out.metric_mean = best_mean;
  double var = 0.0;
  for (const double m : out.per_seed)
    var += (m - best_mean) * (m - best_mean);
  out.metric_std =
      seeds > 1 ? std::sqrt(var / static_cast<double>(seeds - 1)) : 0.0;
  out.eps_mean = eps_mean_of(out.reports);
  return out;
}

inline std::vector<PointOutcome> expand_points(const ExperimentConfig& cfg) {
  std::vector<PointOutcome> points;
  std::vector<std::size_t> index(cfg.sweep_axes.size(), 0);
  while (true) {
    PointOutcome point;
    for (std::size_t a = 0; a < cfg.sweep_axes.size(); ++a)
      point.settings.emplace_back(cfg.sweep_axes[a].first,
                                  cfg.sweep_axes[a].second[index[a]]);
    if (point.settings.empty()) {
      point.label = "base";
    } else {
      std::string label;
      for (const auto& [k, v] : point.settings) {
        if (!label.empty()) label += ";";
        label += k + "=" + v;
      }
      point.label = label;
    }
    points.push_back(std::move(point));
    std::size_t a = 0;
    for (; a < index.size(); ++a) {
      if (++index[a] < cfg.sweep_axes[a].second.size()) break;
      index[a] = 0;
    }
    if (a == index.size()) break;
  }
  return points;
}

}  // namespace detail

inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg,
                                        int jobs = 1) {
  validate_experiment(cfg);
  ExperimentOutcome outcome;
  outcome.points = detail::expand_points(cfg);
  for (PointOutcome& point : outcome.points) {
    ExperimentConfig point_cfg = cfg;
    for (const auto& [field, value] : point.settings)
      detail::apply_config_field(point_cfg, field, value, 0);
    validate_experiment(point_cfg);

    std::vector<StreamBundle> streams;
    streams.reserve(point_cfg.seeds.size());
    for (const std::uint64_t seed : point_cfg.seeds)
      streams.push_back(make_stream(point_cfg, seed));

    for (const ContenderKind contender : point_cfg.contenders)
      point.contenders.push_back(
          detail::run_contender(point_cfg, contender, streams, jobs));
  }
  return outcome;
}

// ---- artifacts -------------------------------------------------------------

inline void write_run_rows(std::ostream& out, const RunReport& report) {
  out << "step,online_error,eps,elapsed_ns\n";
  for (const RunRow& row : report.rows)
    out << row.step << "," << fmt_full(row.online_error) << ","
        << fmt_full(row.eps) << "," << row.elapsed_ns << "\n";
}

inline std::string format_summary(const ExperimentOutcome& outcome) {
  std::ostringstream out;
  for (const PointOutcome& point : outcome.points)
    for (const ContenderOutcome& c : point.contenders)
      out << point.label << " | " << contender_name(c.contender)
          << " | metric " << fmt_full(c.metric_mean) << " +/- "
          << fmt_full(c.metric_std) << " | rates eta=" << fmt_full(c.eta)
          << " mu=" << fmt_full(c.mu) << "\n";
  return out.str();
}

inline void write_artifacts(const ExperimentConfig& cfg,
                            const ExperimentOutcome& outcome) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  std::ofstream aggregate(fs::path(cfg.out_dir) / "aggregate.csv");
  aggregate << "point,contender,eta,mu,metric_mean,metric_std,eps_mean,seeds\n";

  for (const PointOutcome& point : outcome.points) {
    for (const ContenderOutcome& c : point.contenders) {
      const fs::path dir =
          fs::path(cfg.out_dir) / point.label / contender_name(c.contender);
      fs::create_directories(dir);
      for (std::size_t i = 0; i < c.reports.size(); ++i) {
        std::ofstream rows(dir /
                           ("seed" + std::to_string(cfg.seeds[i]) + ".csv"));
        write_run_rows(rows, c.reports[i]);
      }
      aggregate << point.label << "," << contender_name(c.contender) << ","
                << fmt_full(c.eta) << "," << fmt_full(c.mu) << ","
                << fmt_full(c.metric_mean) << "," << fmt_full(c.metric_std)
                << "," << fmt_full(c.eps_mean) << "," << c.per_seed.size()
                << "\n";
    }
  }
  std::ofstream summary(fs::path(cfg.out_dir) / "summary.txt");
  summary << format_summary(outcome);
}

// ---- aggregate comparison --------------------------------------------------

// Joins two aggregate CSVs on (point, contender) and reports the metric
// delta of the second relative to the first; swapping the inputs negates
// every delta.
inline std::string compare_aggregates(std::istream& a, std::istream& b) {
  const auto load = [](std::istream& in) {
    std::map<std::string, double> rows;
    std::string line;
    if (!std::getline(in, line) || line.rfind("point,contender,", 0) != 0)
      throw IoError("aggregate csv: missing header");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = detail::split_csv_row(line);
      if (fields.size() < 5)
        throw IoError("aggregate csv line " + std::to_string(line_no) +
                      ": too few fields");
      rows[fields[0] + "," + fields[1]] =
          detail::config_double(fields[4], static_cast<int>(line_no));
    }
    return rows;
  };
  const auto left = load(a);
  const auto right = load(b);

  std::ostringstream out;
  out << "point,contender,metric_a,metric_b,delta\n";
  for (const auto& [key, metric] : left) {
    const auto it = right.find(key);
    if (it == right.end()) continue;
    out << key << "," << fmt_full(metric) << "," << fmt_full(it->second) << ","
        << fmt_full(it->second - metric) << "\n";
  }
  return out.str();
}

}  // namespace osdr
