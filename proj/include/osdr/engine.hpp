#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/models.hpp"
#include "osdr/subspace.hpp"

namespace osdr {

enum class ModelKind { linear, logistic, multilinear, multinomial, svm, rdp };

// How a dense (rank > 1) tangent direction is turned into a geodesic move:
// the exact SVD geodesic, or its dominant rank-one approximation.
enum class RankPolicy { exact_svd, rank_one_approx };

using ResponseValue = std::variant<double, int, Eigen::VectorXd>;

// One stream element. x holds the observed entries (all of them when there is
// no mask). x2/mask2 are only consulted by the paired dot-product model.
struct StreamSample {
  Eigen::VectorXd x;
  std::optional<ObservationMask> mask;
  Eigen::VectorXd x2;
  std::optional<ObservationMask> mask2;
  ResponseValue y;
};

struct EngineConfig {
  Eigen::Index dim = 0;
  Eigen::Index sub = 0;
  ModelKind kind = ModelKind::linear;
  Formulation form = Formulation::low_dim;
  double eta = 1e-3;  // subspace step size
  double mu = 1e-3;   // model parameter step size
  RankPolicy rank_policy = RankPolicy::exact_svd;
  bool decay = false;  // scale both rates by 1/sqrt(t)
  bool residual_angle_cap = false;  // experimental: bound each rotation by the
                                    // sample's angle to the subspace
  int reorth_every = 1000;
  double drift_tol = 1e-7;
  int response_classes = 2;  // class count (multinomial) or response count
                             // (multiple linear regression)
  std::uint64_t seed = 0;
};

using ModelParams =
    std::variant<LinearLowDimParams, LinearAmbientParams, LogisticLowDimParams,
                 LogisticAmbientParams, MultiLinearParams, MultinomialParams,
                 SvmParams, RdpParams>;

struct EngineState {
  Subspace subspace;
  ModelParams params;
  long step_count = 0;
  long skipped = 0;
  long steps_since_reorth = 0;
};

namespace detail {

inline double response_scalar(const ResponseValue& y) {
  if (std::holds_alternative<double>(y)) return std::get<double>(y);
  if (std::holds_alternative<int>(y))
    return static_cast<double>(std::get<int>(y));
  throw ConfigError("expected a scalar response");
}

inline int response_class(const ResponseValue& y) {
  if (std::holds_alternative<int>(y)) return std::get<int>(y);
  if (std::holds_alternative<double>(y))
    return static_cast<int>(std::get<double>(y));
  throw ConfigError("expected a class-index response");
}

inline const Eigen::VectorXd& response_vector(const ResponseValue& y) {
  if (!std::holds_alternative<Eigen::VectorXd>(y))
    throw ConfigError("expected a vector response");
  return std::get<Eigen::VectorXd>(y);
}

}  // namespace detail

inline EngineState make_engine_state(const EngineConfig& cfg) {
  if (cfg.dim <= 0 || cfg.sub <= 0 || cfg.sub > cfg.dim)
    throw ConfigError("engine requires 0 < sub <= dim");
  const bool ambient = cfg.form == Formulation::ambient;
  if (cfg.kind == ModelKind::multinomial && !ambient)
    throw ConfigError("the multinomial model keeps ambient slopes");
  if (cfg.kind == ModelKind::multinomial && cfg.response_classes < 2)
    throw ConfigError("multinomial model needs at least two classes");
  Rng rng(cfg.seed);
  EngineState state{Subspace::random(cfg.dim, cfg.sub, rng), RdpParams{},
                    0, 0, 0};
  const Eigen::Index coeff_rows = ambient ? cfg.dim : cfg.sub;
  switch (cfg.kind) {
    case ModelKind::linear:
      if (ambient)
        state.params = LinearAmbientParams{Eigen::VectorXd::Zero(cfg.dim), 0.0};
      else
        state.params = LinearLowDimParams{Eigen::VectorXd::Zero(cfg.sub), 0.0};
      break;
    case ModelKind::logistic:
      if (ambient)
        state.params =
            LogisticAmbientParams{Eigen::VectorXd::Zero(cfg.dim), 0.0};
      else
        state.params =
            LogisticLowDimParams{Eigen::VectorXd::Zero(cfg.sub), 0.0};
      break;
    case ModelKind::multilinear:
      state.params = MultiLinearParams{
          Eigen::MatrixXd::Zero(coeff_rows, cfg.response_classes), cfg.form};
      break;
    case ModelKind::multinomial:
      state.params =
          MultinomialParams{Eigen::MatrixXd::Zero(cfg.dim, cfg.response_classes - 1),
                            Eigen::VectorXd::Zero(cfg.response_classes - 1)};
      break;
    case ModelKind::svm:
      state.params = SvmParams{Eigen::VectorXd::Zero(coeff_rows), cfg.form};
      break;
    case ModelKind::rdp:
      state.params = RdpParams{};
      break;
  }
  return state;
}

namespace detail {

inline void validate_sample(const EngineConfig& cfg,
                            const StreamSample& sample) {
  const bool masked = sample.mask.has_value() || sample.mask2.has_value();
  if (masked && cfg.form == Formulation::low_dim &&
      cfg.kind != ModelKind::rdp)
    throw ConfigError(
        "masked samples require the ambient formulation; the low-dimensional "
        "coefficients cannot pair with a partially observed sample");
  if (sample.mask) {
    sample.mask->validate(cfg.dim);
    if (sample.x.size() != static_cast<Eigen::Index>(sample.mask->count()))
      throw DimensionError("observed entries disagree with the mask");
  } else if (sample.x.size() != cfg.dim) {
    throw DimensionError("sample dimension disagrees with the engine");
  }
  if (cfg.kind == ModelKind::rdp) {
    if (sample.mask2) {
      sample.mask2->validate(cfg.dim);
      if (sample.x2.size() != static_cast<Eigen::Index>(sample.mask2->count()))
        throw DimensionError("observed entries disagree with the mask");
    } else if (sample.x2.size() != cfg.dim) {
      throw DimensionError("paired sample dimension disagrees with the engine");
    }
  }
}

inline Eigen::VectorXd coefficients(const Subspace& u, const Eigen::VectorXd& x,
                                    const std::optional<ObservationMask>& mask) {
  if (!mask) return project_coefficients(u, x);
  return project_coefficients_masked(u, x, *mask);
}

// Residual of the (possibly partial) sample against its fitted coefficients,
// expressed in the ambient space with zeros on unobserved coordinates.
inline Eigen::VectorXd observed_residual(const Subspace& u,
                                         const Eigen::VectorXd& x,
                                         const std::optional<ObservationMask>& mask,
                                         const Eigen::VectorXd& beta) {
  if (!mask) return x - u.basis() * beta;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(u.dim());
  for (std::size_t i = 0; i < mask->indices.size(); ++i) {
    const Eigen::Index row = mask->indices[i];
    r(row) = x(static_cast<Eigen::Index>(i)) - u.basis().row(row) * beta;
  }
  return r;
}

// Fitted-sample norm on the observed coordinates, for the residual-angle cap.
inline double fitted_norm(const Subspace& u, const Eigen::VectorXd& beta,
                          const std::optional<ObservationMask>& mask) {
  if (!mask) return beta.norm();
  double sq = 0.0;
  for (const Eigen::Index row : mask->indices) {
    const double v = u.basis().row(row) * beta;
    sq += v * v;
  }
  return std::sqrt(sq);
}

inline double capped_eta(bool cap_enabled, double eta, double sigma,
                         double residual_norm, double proj_norm) {
  if (!cap_enabled || sigma == 0.0) return eta;
  const double cap = std::atan2(residual_norm, proj_norm);
  return std::min(eta, cap / std::abs(sigma));
}

inline double capped_eta(const EngineConfig& cfg, double eta, double sigma,
                         double residual_norm, double proj_norm) {
  return capped_eta(cfg.residual_angle_cap, eta, sigma, residual_norm,
                    proj_norm);
}

struct StepRates {
  double eta = 0.0;
  double mu = 0.0;
};

inline StepRates effective_rates(const EngineConfig& cfg, long step_count) {
  if (!cfg.decay) return {cfg.eta, cfg.mu};
  const double scale = 1.0 / std::sqrt(static_cast<double>(step_count) + 1.0);
  return {cfg.eta * scale, cfg.mu * scale};
}

}  // namespace detail

// Prediction for a sample under the current state, before any update. Scalar
// models return a double (probability, score, or regressed value); the
// multi-response and multinomial models return a vector.
inline ResponseValue engine_predict(const EngineState& state,
                                    const StreamSample& sample,
                                    const EngineConfig& cfg) {
  detail::validate_sample(cfg, sample);
  const Subspace& u = state.subspace;
  switch (cfg.kind) {
    case ModelKind::linear:
      if (cfg.form == Formulation::ambient)
        return linear_predict(std::get<LinearAmbientParams>(state.params), u,
                              detail::coefficients(u, sample.x, sample.mask));
      return linear_predict(std::get<LinearLowDimParams>(state.params), u,
                            sample.x);
    case ModelKind::logistic:
      if (cfg.form == Formulation::ambient)
        return logistic_predict(std::get<LogisticAmbientParams>(state.params),
                                u,
                                detail::coefficients(u, sample.x, sample.mask));
      return logistic_predict(std::get<LogisticLowDimParams>(state.params), u,
                              sample.x);
    case ModelKind::multilinear: {
      const auto& p = std::get<MultiLinearParams>(state.params);
      if (p.form == Formulation::ambient)
        return multilinear_predict(
            p, u, detail::coefficients(u, sample.x, sample.mask));
      return multilinear_predict(p, u, sample.x);
    }
    case ModelKind::multinomial:
      return multinomial_predict(std::get<MultinomialParams>(state.params), u,
                                 detail::coefficients(u, sample.x, sample.mask));
    case ModelKind::svm: {
      const auto& p = std::get<SvmParams>(state.params);
      if (p.form == Formulation::ambient)
        return svm_score(p, u,
                         detail::coefficients(u, sample.x, sample.mask));
      return svm_score(p, u, sample.x);
    }
    case ModelKind::rdp: {
      const auto& p = std::get<RdpParams>(state.params);
      const Eigen::VectorXd b1 = detail::coefficients(u, sample.x, sample.mask);
      const Eigen::VectorXd b2 =
          detail::coefficients(u, sample.x2, sample.mask2);
      return rdp_predict(p, b1, b2);
    }
  }
  throw ConfigError("unknown model kind");
}

namespace detail {

// One supervised step for every model except the paired dot-product one.
// Ordering: direction at the current basis, geodesic move, then the parameter
// update against the new basis (with coefficients frozen from before the move
// in the ambient formulation).
inline void single_sample_step(EngineState& state, const StreamSample& sample,
                               const EngineConfig& cfg, const StepRates& rates) {
  Subspace& u = state.subspace;
  switch (cfg.kind) {
    case ModelKind::linear: {
      if (cfg.form == Formulation::ambient) {
        auto& p = std::get<LinearAmbientParams>(state.params);
        const Eigen::VectorXd beta = coefficients(u, sample.x, sample.mask);
        const double y = response_scalar(sample.y);
        const RankOneDirection dir = linear_direction(p, u, beta, y);
        const double eta = capped_eta(cfg, rates.eta, dir.sigma,
                                      observed_residual(u, sample.x, sample.mask, beta).norm(),
                                      fitted_norm(u, beta, sample.mask));
        u = geodesic_step_rank1(u, dir, eta);
        linear_param_update(p, u, beta, y, rates.mu);
      } else {
        auto& p = std::get<LinearLowDimParams>(state.params);
        const double y = response_scalar(sample.y);
        const RankOneDirection dir = linear_direction(p, u, sample.x, y);
        const double eta =
            capped_eta(cfg, rates.eta, dir.sigma, dir.r.norm(),
                       project_coefficients(u, sample.x).norm());
        u = geodesic_step_rank1(u, dir, eta);
        linear_param_update(p, u, sample.x, y, rates.mu);
      }
      break;
    }
    case ModelKind::logistic: {
      if (cfg.form == Formulation::ambient) {
        auto& p = std::get<LogisticAmbientParams>(state.params);
        const Eigen::VectorXd beta = coefficients(u, sample.x, sample.mask);
        const double y = response_scalar(sample.y);
        const RankOneDirection dir = logistic_direction(p, u, beta, y);
        const double eta = capped_eta(cfg, rates.eta, dir.sigma,
                                      observed_residual(u, sample.x, sample.mask, beta).norm(),
                                      fitted_norm(u, beta, sample.mask));
        u = geodesic_step_rank1(u, dir, eta);
        logistic_param_update(p, u, beta, y, rates.mu);
      } else {
        auto& p = std::get<LogisticLowDimParams>(state.params);
        const double y = response_scalar(sample.y);
        const RankOneDirection dir = logistic_direction(p, u, sample.x, y);
        const double eta =
            capped_eta(cfg, rates.eta, dir.sigma, dir.r.norm(),
                       project_coefficients(u, sample.x).norm());
        u = geodesic_step_rank1(u, dir, eta);
        logistic_param_update(p, u, sample.x, y, rates.mu);
      }
      break;
    }
    case ModelKind::multilinear: {
      auto& p = std::get<MultiLinearParams>(state.params);
      const Eigen::VectorXd& y = response_vector(sample.y);
      if (p.form == Formulation::ambient) {
        const Eigen::VectorXd beta = coefficients(u, sample.x, sample.mask);
        const RankOneDirection dir = multilinear_direction(p, u, beta, y);
        const double eta = capped_eta(cfg, rates.eta, dir.sigma,
                                      observed_residual(u, sample.x, sample.mask, beta).norm(),
                                      fitted_norm(u, beta, sample.mask));
        u = geodesic_step_rank1(u, dir, eta);
        multilinear_param_update(p, u, beta, y, rates.mu);
      } else {
        const RankOneDirection dir = multilinear_direction(p, u, sample.x, y);
        const double eta =
            capped_eta(cfg, rates.eta, dir.sigma, dir.r.norm(),
                       project_coefficients(u, sample.x).norm());
        u = geodesic_step_rank1(u, dir, eta);
        multilinear_param_update(p, u, sample.x, y, rates.mu);
      }
      break;
    }
    case ModelKind::multinomial: {
      auto& p = std::get<MultinomialParams>(state.params);
      const Eigen::VectorXd beta = coefficients(u, sample.x, sample.mask);
      const int y = response_class(sample.y);
      const Eigen::MatrixXd grad = multinomial_direction(p, u, beta, y);
      const double sigma_scale = grad.norm();
      const double eta = capped_eta(cfg, rates.eta, sigma_scale,
                                    observed_residual(u, sample.x, sample.mask, beta).norm(),
                                    fitted_norm(u, beta, sample.mask));
      if (cfg.rank_policy == RankPolicy::exact_svd)
        u = geodesic_step_rankk(u, grad, eta);
      else
        u = geodesic_step_rank1(u, dominant_rank_one(grad), eta);
      multinomial_param_update(p, u, beta, y, rates.mu);
      break;
    }
    case ModelKind::svm: {
      auto& p = std::get<SvmParams>(state.params);
      const double y = response_scalar(sample.y);
      if (p.form == Formulation::ambient) {
        const Eigen::VectorXd beta = coefficients(u, sample.x, sample.mask);
        const RankOneDirection dir = svm_direction(p, u, beta, y);
        const double eta = capped_eta(cfg, rates.eta, dir.sigma,
                                      observed_residual(u, sample.x, sample.mask, beta).norm(),
                                      fitted_norm(u, beta, sample.mask));
        u = geodesic_step_rank1(u, dir, eta);
        svm_param_update(p, u, beta, y, rates.mu);
      } else {
        const RankOneDirection dir = svm_direction(p, u, sample.x, y);
        const double eta =
            capped_eta(cfg, rates.eta, dir.sigma, dir.r.norm(),
                       project_coefficients(u, sample.x).norm());
        u = geodesic_step_rank1(u, dir, eta);
        svm_param_update(p, u, sample.x, y, rates.mu);
      }
      break;
    }
    case ModelKind::rdp:
      throw ConfigError("paired model is handled separately");
  }
}

// Two-stage move for the paired dot-product model: rotate for the first
// sample, re-evaluate everything at the moved basis, rotate for the second,
// then update the scalar parameters with the final coefficients. Shared by
// the flat engine and the per-node step of the hierarchical model.
inline void rdp_two_stage(Subspace& u, RdpParams& p, const Eigen::VectorXd& x1,
                          const std::optional<ObservationMask>& m1,
                          const Eigen::VectorXd& x2,
                          const std::optional<ObservationMask>& m2, double y,
                          double eta, double mu, bool cap) {
  Eigen::VectorXd b1 = coefficients(u, x1, m1);
  Eigen::VectorXd b2 = coefficients(u, x2, m2);
  double resid = y - rdp_predict(p, b1, b2);
  Eigen::VectorXd r1 = observed_residual(u, x1, m1, b1);
  const RankOneDirection dir1{-resid * p.a * r1.norm() * b2.norm(),
                              std::move(r1), b2};
  const double eta1 = capped_eta(cap, eta, dir1.sigma, dir1.r.norm(),
                                 fitted_norm(u, b1, m1));
  u = geodesic_step_rank1(u, dir1, eta1);

  b1 = coefficients(u, x1, m1);
  b2 = coefficients(u, x2, m2);
  resid = y - rdp_predict(p, b1, b2);
  Eigen::VectorXd r2 = observed_residual(u, x2, m2, b2);
  const RankOneDirection dir2{-resid * p.a * r2.norm() * b1.norm(),
                              std::move(r2), b1};
  const double eta2 = capped_eta(cap, eta, dir2.sigma, dir2.r.norm(),
                                 fitted_norm(u, b2, m2));
  u = geodesic_step_rank1(u, dir2, eta2);

  const Eigen::VectorXd f1 = coefficients(u, x1, m1);
  const Eigen::VectorXd f2 = coefficients(u, x2, m2);
  rdp_param_update(p, f1, f2, y, mu);
}

inline void rdp_step(EngineState& state, const StreamSample& sample,
                     const EngineConfig& cfg, const StepRates& rates) {
  rdp_two_stage(state.subspace, std::get<RdpParams>(state.params), sample.x,
                sample.mask, sample.x2, sample.mask2,
                response_scalar(sample.y), rates.eta, rates.mu,
                cfg.residual_angle_cap);
}

inline void maybe_reorthonormalize(EngineState& state,
                                   const EngineConfig& cfg) {
  ++state.steps_since_reorth;
  if (state.steps_since_reorth < cfg.reorth_every &&
      state.subspace.drift() <= cfg.drift_tol)
    return;
  state.subspace = Subspace(Subspace::orthonormalize(state.subspace.basis()));
  state.steps_since_reorth = 0;
}

}  // namespace detail

// Process one labeled sample: predict internally, rotate the subspace along
// the model's loss gradient, update the model parameters. Samples whose mask
// leaves the projection ill-posed are counted and skipped.
inline void engine_step(EngineState& state, const StreamSample& sample,
                        const EngineConfig& cfg) {
  detail::validate_sample(cfg, sample);
  const detail::StepRates rates =
      detail::effective_rates(cfg, state.step_count);
  // A mask failure can surface after the paired model's first rotation, so
  // keep the pre-step basis around to make the skip atomic.
  std::optional<Subspace> snapshot;
  if (sample.mask || sample.mask2) snapshot = state.subspace;
  try {
    if (cfg.kind == ModelKind::rdp)
      detail::rdp_step(state, sample, cfg, rates);
    else
      detail::single_sample_step(state, sample, cfg, rates);
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
  detail::maybe_reorthonormalize(state, cfg);
}

namespace detail {

// Dense tangent gradient for one sample plus whatever the deferred parameter
// update needs, used by the mini-batch path.
struct BatchEntry {
  Eigen::MatrixXd grad;
  Eigen::VectorXd beta;  // ambient-formulation coefficients, frozen
  const StreamSample* sample = nullptr;
};

inline Eigen::MatrixXd dense_direction(const RankOneDirection& dir,
                                       Eigen::Index rows, Eigen::Index cols) {
  const double rn = dir.r.norm(), wn = dir.w.norm();
  if (dir.sigma == 0.0 || rn == 0.0 || wn == 0.0)
    return Eigen::MatrixXd::Zero(rows, cols);
  return (dir.sigma / (rn * wn)) * dir.r * dir.w.transpose();
}

}  // namespace detail

// Mini-batch step: average the dense tangent gradients of the batch, take one
// geodesic move, then run the parameter updates sample-by-sample against the
// moved basis. A batch of one reduces exactly to engine_step.
inline void engine_step_batch(EngineState& state,
                              const std::vector<StreamSample>& batch,
                              const EngineConfig& cfg) {
  if (batch.empty()) return;
  if (batch.size() == 1) {
    engine_step(state, batch.front(), cfg);
    return;
  }
  if (cfg.kind == ModelKind::rdp)
    throw ConfigError(
        "the paired dot-product model updates twice per sample and does not "
        "support mini-batches");
  for (const StreamSample& s : batch) detail::validate_sample(cfg, s);
  const detail::StepRates rates =
      detail::effective_rates(cfg, state.step_count);
  Subspace& u = state.subspace;

  std::vector<detail::BatchEntry> entries;
  entries.reserve(batch.size());
  Eigen::MatrixXd average = Eigen::MatrixXd::Zero(cfg.dim, cfg.sub);
  for (const StreamSample& s : batch) {
    detail::BatchEntry entry;
    entry.sample = &s;
    try {
      switch (cfg.kind) {
        case ModelKind::linear:
          if (cfg.form == Formulation::ambient) {
            entry.beta = detail::coefficients(u, s.x, s.mask);
            entry.grad = detail::dense_direction(
                linear_direction(std::get<LinearAmbientParams>(state.params),
                                 u, entry.beta,
                                 detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          } else {
            entry.grad = detail::dense_direction(
                linear_direction(std::get<LinearLowDimParams>(state.params), u,
                                 s.x, detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          }
          break;
        case ModelKind::logistic:
          if (cfg.form == Formulation::ambient) {
            entry.beta = detail::coefficients(u, s.x, s.mask);
            entry.grad = detail::dense_direction(
                logistic_direction(
                    std::get<LogisticAmbientParams>(state.params), u,
                    entry.beta, detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          } else {
            entry.grad = detail::dense_direction(
                logistic_direction(std::get<LogisticLowDimParams>(state.params),
                                   u, s.x, detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          }
          break;
        case ModelKind::multilinear: {
          const auto& p = std::get<MultiLinearParams>(state.params);
          if (p.form == Formulation::ambient) {
            entry.beta = detail::coefficients(u, s.x, s.mask);
            entry.grad = detail::dense_direction(
                multilinear_direction(p, u, entry.beta,
                                      detail::response_vector(s.y)),
                cfg.dim, cfg.sub);
          } else {
            entry.grad = detail::dense_direction(
                multilinear_direction(p, u, s.x, detail::response_vector(s.y)),
                cfg.dim, cfg.sub);
          }
          break;
        }
        case ModelKind::multinomial:
          entry.beta = detail::coefficients(u, s.x, s.mask);
          entry.grad = multinomial_direction(
              std::get<MultinomialParams>(state.params), u, entry.beta,
              detail::response_class(s.y));
          break;
        case ModelKind::svm: {
          const auto& p = std::get<SvmParams>(state.params);
          if (p.form == Formulation::ambient) {
            entry.beta = detail::coefficients(u, s.x, s.mask);
            entry.grad = detail::dense_direction(
                svm_direction(p, u, entry.beta, detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          } else {
            entry.grad = detail::dense_direction(
                svm_direction(p, u, s.x, detail::response_scalar(s.y)),
                cfg.dim, cfg.sub);
          }
          break;
        }
        case ModelKind::rdp:
          break;  // excluded above
      }
    } catch (const IllConditionedMaskError&) {
      ++state.skipped;
      continue;
    } catch (const InsufficientObservationsError&) {
      ++state.skipped;
      continue;
    }
    average += entry.grad;
    entries.push_back(std::move(entry));
  }
  state.step_count += static_cast<long>(batch.size());
  if (entries.empty()) return;
  average /= static_cast<double>(entries.size());

  if (cfg.rank_policy == RankPolicy::exact_svd)
    u = geodesic_step_rankk(u, average, rates.eta);
  else
    u = geodesic_step_rank1(u, dominant_rank_one(average), rates.eta);

  for (const detail::BatchEntry& entry : entries) {
    const StreamSample& s = *entry.sample;
    switch (cfg.kind) {
      case ModelKind::linear:
        if (cfg.form == Formulation::ambient)
          linear_param_update(std::get<LinearAmbientParams>(state.params), u,
                              entry.beta, detail::response_scalar(s.y),
                              rates.mu);
        else
          linear_param_update(std::get<LinearLowDimParams>(state.params), u,
                              s.x, detail::response_scalar(s.y), rates.mu);
        break;
      case ModelKind::logistic:
        if (cfg.form == Formulation::ambient)
          logistic_param_update(std::get<LogisticAmbientParams>(state.params),
                                u, entry.beta, detail::response_scalar(s.y),
                                rates.mu);
        else
          logistic_param_update(std::get<LogisticLowDimParams>(state.params),
                                u, s.x, detail::response_scalar(s.y),
                                rates.mu);
        break;
      case ModelKind::multilinear: {
        auto& p = std::get<MultiLinearParams>(state.params);
        if (p.form == Formulation::ambient)
          multilinear_param_update(p, u, entry.beta,
                                   detail::response_vector(s.y), rates.mu);
        else
          multilinear_param_update(p, u, s.x, detail::response_vector(s.y),
                                   rates.mu);
        break;
      }
      case ModelKind::multinomial:
        multinomial_param_update(std::get<MultinomialParams>(state.params), u,
                                 entry.beta, detail::response_class(s.y),
                                 rates.mu);
        break;
      case ModelKind::svm: {
        auto& p = std::get<SvmParams>(state.params);
        if (p.form == Formulation::ambient)
          svm_param_update(p, u, entry.beta, detail::response_scalar(s.y),
                           rates.mu);
        else
          svm_param_update(p, u, s.x, detail::response_scalar(s.y), rates.mu);
        break;
      }
      case ModelKind::rdp:
        break;
    }
  }
  detail::maybe_reorthonormalize(state, cfg);
}

// Prequential loss of a sample under the current state: squared error for the
// regression models, 0/1 misclassification for the classifiers. A sample the
// projection cannot handle scores 1 for classifiers and NaN for regressors.
inline double prequential_loss(const EngineState& state,
                               const StreamSample& sample,
                               const EngineConfig& cfg) {
  const bool classifier =
      cfg.kind == ModelKind::logistic || cfg.kind == ModelKind::multinomial ||
      cfg.kind == ModelKind::svm || cfg.kind == ModelKind::rdp;
  try {
    const ResponseValue pred = engine_predict(state, sample, cfg);
    switch (cfg.kind) {
      case ModelKind::linear: {
        const double d =
            detail::response_scalar(sample.y) - std::get<double>(pred);
        return d * d;
      }
      case ModelKind::multilinear: {
        return (detail::response_vector(sample.y) -
                std::get<Eigen::VectorXd>(pred))
            .squaredNorm();
      }
      case ModelKind::logistic:
      case ModelKind::rdp: {
        const int guess = std::get<double>(pred) > 0.5 ? 1 : 0;
        return guess == detail::response_class(sample.y) ? 0.0 : 1.0;
      }
      case ModelKind::multinomial: {
        Eigen::Index guess = 0;
        std::get<Eigen::VectorXd>(pred).maxCoeff(&guess);
        return guess == detail::response_class(sample.y) ? 0.0 : 1.0;
      }
      case ModelKind::svm: {
        const double guess = std::get<double>(pred) >= 0.0 ? 1.0 : -1.0;
        return guess == detail::response_scalar(sample.y) ? 0.0 : 1.0;
      }
    }
  } catch (const IllConditionedMaskError&) {
  } catch (const InsufficientObservationsError&) {
  }
  return classifier ? 1.0 : std::numeric_limits<double>::quiet_NaN();
}

// ---- prequential stream runner ---------------------------------------------

// Reference trajectory to score tracking against: either a single static
// basis or one basis per step.
struct SubspaceTrack {
  std::vector<Eigen::MatrixXd> bases;

  const Eigen::MatrixXd& at(std::size_t t) const {
    return bases.size() == 1 ? bases.front() : bases.at(t);
  }
  bool empty() const { return bases.empty(); }
};

struct RunRow {
  long step = 0;
  double online_error = 0.0;  // prequential loss, recorded before the update
  double eps = std::numeric_limits<double>::quiet_NaN();  // tracking error
  long long elapsed_ns = 0;
};

struct RunReport {
  std::vector<RunRow> rows;
  long skipped = 0;
  long long total_elapsed_ns = 0;
};

struct RunOptions {
  bool timing = false;  // leave off for byte-identical reports
  const SubspaceTrack* track = nullptr;
};

template <typename S>
concept StreamStepper = requires(S s, const StreamSample& sample) {
  { s.prequential_error(sample) } -> std::convertible_to<double>;
  { s.update(sample) };
  { s.current_basis() } -> std::convertible_to<const Eigen::MatrixXd*>;
  { s.skipped_count() } -> std::convertible_to<long>;
};

template <StreamStepper S>
RunReport run_stream(S& stepper, const std::vector<StreamSample>& stream,
                     const RunOptions& opt = {}) {
  RunReport report;
  report.rows.reserve(stream.size());
  for (std::size_t t = 0; t < stream.size(); ++t) {
    RunRow row;
    row.step = static_cast<long>(t);
    const auto start = opt.timing ? std::chrono::steady_clock::now()
                                  : std::chrono::steady_clock::time_point{};
    row.online_error = stepper.prequential_error(stream[t]);
    stepper.update(stream[t]);
    if (opt.timing) {
      row.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      report.total_elapsed_ns += row.elapsed_ns;
    }
    if (opt.track && !opt.track->empty()) {
      const Eigen::MatrixXd* basis = stepper.current_basis();
      const Eigen::MatrixXd& truth = opt.track->at(t);
      if (basis && basis->rows() == truth.rows() &&
          basis->cols() == truth.cols())
        row.eps = principal_angle_error(*basis, truth).subspace_error;
    }
    report.rows.push_back(row);
  }
  report.skipped = stepper.skipped_count();
  return report;
}

// Mean online error over rows from `from_step` on, ignoring NaN rows.
inline double mean_error(const RunReport& report, long from_step = 0) {
  double sum = 0.0;
  long n = 0;
  for (const RunRow& row : report.rows) {
    if (row.step < from_step || std::isnan(row.online_error)) continue;
    sum += row.online_error;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

inline double final_eps(const RunReport& report) {
  for (auto it = report.rows.rbegin(); it != report.rows.rend(); ++it)
    if (!std::isnan(it->eps)) return it->eps;
  return std::numeric_limits<double>::quiet_NaN();
}

// Supervised tracker as a stream stepper.
struct OsdrStepper {
  EngineState state;
  EngineConfig config;

  explicit OsdrStepper(const EngineConfig& cfg)
      : state(make_engine_state(cfg)), config(cfg) {}

  double prequential_error(const StreamSample& s) const {
    return prequential_loss(state, s, config);
  }
  void update(const StreamSample& s) { engine_step(state, s, config); }
  const Eigen::MatrixXd* current_basis() const {
    return &state.subspace.basis();
  }
  long skipped_count() const { return state.skipped; }
};

}  // namespace osdr
