// Acceptance gate for the streaming supervised dimensionality reduction
// library. Each test exercises one end-to-end claim, prints a single
// PASS/FAIL line with the measured values and the pinned bounds, and fails
// the build if the bound is missed. Bounds live in the constants below and
// are not to be loosened to make a run green.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "osdr/datagen.hpp"
#include "osdr/engine.hpp"
#include "osdr/experiment.hpp"
#include "osdr/models.hpp"
#include "osdr/odr.hpp"
#include "osdr/subspace.hpp"
#include "test_support.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace osdr;

namespace {

// ---- pinned acceptance bounds ----------------------------------------------

constexpr double kC1OdrFloor = 0.40;    // unsupervised error near chance
constexpr double kC1OsdrCeil = 0.15;    // supervised error well below it
constexpr double kC1TimeLimit = 30.0;   // seconds

constexpr double kC2Ratio = 0.2;        // supervised <= 0.2 x unsupervised
constexpr double kC2TimeLimit = 120.0;

constexpr double kC3TimeLimit = 300.0;

constexpr double kC4TimeLimit = 120.0;

constexpr double kC5Gap = 0.03;         // hierarchical below flat by >= this
constexpr double kC5TimeLimit = 600.0;

constexpr double kC6FdTol = 1e-4;       // relative FD agreement
constexpr double kC6EquivTol = 1e-9;    // model-collapse equivalences
constexpr double kC6TimeLimit = 60.0;

constexpr double kC7DriftCeil = 1e-10;  // orthonormality after every step
constexpr double kC7GeoTol = 1e-9;      // rank-one vs SVD geodesic agreement
constexpr double kC7TimeLimit = 60.0;

constexpr double kC8StationaryZ = 3.0;  // standard errors from zero
constexpr double kC8MovingZ = 10.0;
constexpr double kC8TimeLimit = 30.0;

constexpr double kC9Tol = 1e-10;        // masked projection vs least squares
constexpr double kC9TimeLimit = 10.0;

constexpr double kC10Ratio = 2.3;       // per-step cost ratio per D doubling

// ---- helpers ---------------------------------------------------------------

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[ACCEPT] criterion %2d %s | %s\n", criterion,
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  ExperimentConfig cfg = parse_experiment_config(in);
  return cfg;
}

const ContenderOutcome& outcome_of(const PointOutcome& point,
                                   ContenderKind kind) {
  for (const ContenderOutcome& c : point.contenders)
    if (c.contender == kind) return c;
  throw std::logic_error("contender missing from outcome");
}

constexpr const char* kTenSeeds = "seeds 1,2,3,4,5,6,7,8,9,10\n";

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bernoulli_nll(double y, double p) {
  const double eps = 1e-300;
  return -(y * std::log(std::max(p, eps)) +
           (1.0 - y) * std::log(std::max(1.0 - p, eps)));
}

MatrixXd dense(const RankOneDirection& dir) {
  if (dir.r.norm() == 0.0 || dir.w.norm() == 0.0 || dir.sigma == 0.0)
    return MatrixXd::Zero(dir.r.size(), dir.w.size());
  return dir.sigma * (dir.r / dir.r.norm()) *
         (dir.w / dir.w.norm()).transpose();
}

// ---- criterion 1: labels carried by a minor principal direction ------------
//
// Three-dimensional data with variances (3, 2, 1); the labels split on the
// smallest-variance direction. A two-dimensional unsupervised tracker keeps
// the top two directions and stays near chance, while the supervised tracker
// rotates the label direction in. Both contenders run at the same fixed
// standard rates: rate tuning would let the unsupervised side sidestep
// convergence entirely (in three dimensions a frozen random plane keeps about
// two thirds of the label direction), and the claim under test is about the
// unsupervised tracker actually tracking.

TEST(Acceptance, C01_MinorDirectionLabels) {
  Stopwatch watch;
  const ExperimentConfig cfg = parse_config(
      std::string("kind spectrum\n"
                  "gen.dim 3\n"
                  "gen.sub 2\n"
                  "gen.labeling type-one\n"
                  "gen.count 10000\n"
                  "contenders osdr,odr\n"
                  "engine.sub 2\n"
                  "engine.kind logistic\n"
                  "engine.eta 1e-2\n"
                  "engine.mu 1e-2\n"
                  "train 5000\n") +
      kTenSeeds);
  const ExperimentOutcome out = run_experiment(cfg);
  const double osdr_pe =
      outcome_of(out.points[0], ContenderKind::osdr).metric_mean;
  const double odr_pe =
      outcome_of(out.points[0], ContenderKind::odr).metric_mean;
  const double elapsed = watch.seconds();

  const bool pass = odr_pe >= kC1OdrFloor && osdr_pe <= kC1OsdrCeil &&
                    elapsed < kC1TimeLimit;
  report(1, pass,
         "minor-direction labels: odr_pe=" + fmt(odr_pe) + " (>=" +
             fmt(kC1OdrFloor) + "), osdr_pe=" + fmt(osdr_pe) + " (<=" +
             fmt(kC1OsdrCeil) + "), " + fmt(elapsed) + "s (<" +
             fmt(kC1TimeLimit) + "s)");
  EXPECT_GE(odr_pe, kC1OdrFloor);
  EXPECT_LE(osdr_pe, kC1OsdrCeil);
  EXPECT_LT(elapsed, kC1TimeLimit);
}

// ---- criterion 2: static ellipse classification ----------------------------
//
// 100-dimensional stream on a 2-plane with a 5:1 ellipse; labels follow the
// short axis. Both contenders tune their rates on the default grid; the bound
// asks for the supervised error to be at most one fifth of the unsupervised
// error with both trackers at d = 2.
//
// Known red. With intrinsic dimension 2 and trackers of dimension 2, both
// in-plane eigenvalues of the data covariance strictly exceed every noise
// eigenvalue, so the unsupervised tracker's top-2 subspace is the data plane
// itself; once either tracker spans the plane, the logistic layer reaches the
// same representational optimum, and the tuned contenders tie (measured
// ratio ~1.0 across ellipse scales from (5,1) down to (1,0.2), where both
// errors are floor-dominated). Shrinking the short axis below the noise
// floor disables the label readout for both sides alike. The claimed
// separation does hold when the tracker is too small to contain the label
// direction among the top unsupervised directions — at d = 1 the same
// pipeline measures 0.059 vs 0.499 (ratio 0.12) — but the bound is kept
// exactly as stated rather than moved to a passing configuration.

TEST(Acceptance, C02_StaticEllipseClassification) {
  Stopwatch watch;
  const ExperimentConfig cfg = parse_config(
      std::string("kind static-ellipse\n"
                  "gen.dim 100\n"
                  "gen.r1 5\n"
                  "gen.r2 1\n"
                  "gen.label_scale 200\n"
                  "gen.count 6000\n"
                  "contenders osdr,odr\n"
                  "engine.sub 2\n"
                  "engine.kind logistic\n"
                  "train 3000\n") +
      kTenSeeds);
  const ExperimentOutcome out = run_experiment(cfg);
  const double osdr_pe =
      outcome_of(out.points[0], ContenderKind::osdr).metric_mean;
  const double odr_pe =
      outcome_of(out.points[0], ContenderKind::odr).metric_mean;
  const double elapsed = watch.seconds();

  const bool pass = osdr_pe <= kC2Ratio * odr_pe && elapsed < kC2TimeLimit;
  report(2, pass,
         "static ellipse: osdr_pe=" + fmt(osdr_pe) + " <= " + fmt(kC2Ratio) +
             " x odr_pe=" + fmt(odr_pe) + " (bound " + fmt(kC2Ratio * odr_pe) +
             "), " + fmt(elapsed) + "s (<" + fmt(kC2TimeLimit) + "s)");
  EXPECT_LE(osdr_pe, kC2Ratio * odr_pe);
  EXPECT_LT(elapsed, kC2TimeLimit);
}

// ---- criterion 3: rotating subspace ----------------------------------------
//
// The discriminative direction rotates inside the data plane after an onset;
// larger tau means a slower spin. The supervised tracker must beat the
// unsupervised one at every speed, and its error must not increase as the
// rotation slows down.

TEST(Acceptance, C03_RotatingSubspaceTracking) {
  Stopwatch watch;
  const ExperimentConfig cfg = parse_config(
      std::string("kind rotating\n"
                  "gen.dim 100\n"
                  "gen.r1 10\n"
                  "gen.r2 1\n"
                  "gen.label_scale 30\n"
                  "gen.count 6000\n"
                  "gen.onset 500\n"
                  "contenders osdr,odr\n"
                  "engine.sub 2\n"
                  "engine.kind logistic\n"
                  "train 500\n"
                  "sweep.gen.tau 1,2,4\n") +
      kTenSeeds);
  const ExperimentOutcome out = run_experiment(cfg);
  ASSERT_EQ(out.points.size(), 3u);

  std::vector<double> osdr_pe, odr_pe;
  for (const PointOutcome& point : out.points) {
    osdr_pe.push_back(outcome_of(point, ContenderKind::osdr).metric_mean);
    odr_pe.push_back(outcome_of(point, ContenderKind::odr).metric_mean);
  }
  const double elapsed = watch.seconds();

  const bool beats_everywhere = osdr_pe[0] < odr_pe[0] &&
                                osdr_pe[1] < odr_pe[1] &&
                                osdr_pe[2] < odr_pe[2];
  const bool monotone = osdr_pe[1] <= osdr_pe[0] && osdr_pe[2] <= osdr_pe[1];
  const bool pass = beats_everywhere && monotone && elapsed < kC3TimeLimit;
  report(3, pass,
         "rotating plane: osdr_pe(tau=1,2,4)=(" + fmt(osdr_pe[0]) + "," +
             fmt(osdr_pe[1]) + "," + fmt(osdr_pe[2]) + ") odr_pe=(" +
             fmt(odr_pe[0]) + "," + fmt(odr_pe[1]) + "," + fmt(odr_pe[2]) +
             "), monotone=" + (monotone ? "yes" : "no") + ", " + fmt(elapsed) +
             "s (<" + fmt(kC3TimeLimit) + "s)");
  EXPECT_LT(osdr_pe[0], odr_pe[0]);
  EXPECT_LT(osdr_pe[1], odr_pe[1]);
  EXPECT_LT(osdr_pe[2], odr_pe[2]);
  EXPECT_LE(osdr_pe[1], osdr_pe[0]);
  EXPECT_LE(osdr_pe[2], osdr_pe[1]);
  EXPECT_LT(elapsed, kC3TimeLimit);
}

// ---- criterion 4: linear regression RMSE -----------------------------------
//
// A circular disc in a random plane with a linear response along an ambient
// slope; the slope anisotropy sweeps over ratios 1, 10, 100. The supervised
// one-dimensional tracker aligns with the predictive direction; the
// unsupervised one has no reason to and must lose at every ratio.

TEST(Acceptance, C04_LinearResponseRmse) {
  Stopwatch watch;
  const ExperimentConfig cfg = parse_config(
      std::string("kind linear\n"
                  "gen.dim 100\n"
                  "gen.r1 1\n"
                  "gen.r2 1\n"
                  "gen.c2 1\n"
                  "gen.noise_var 1e-3\n"
                  "gen.count 6000\n"
                  "contenders osdr,odr\n"
                  "engine.sub 1\n"
                  "engine.kind linear\n"
                  "train 3000\n"
                  "sweep.gen.c1 1,10,100\n") +
      kTenSeeds);
  const ExperimentOutcome out = run_experiment(cfg);
  ASSERT_EQ(out.points.size(), 3u);

  bool beats_everywhere = true;
  std::string pairs;
  for (const PointOutcome& point : out.points) {
    const double osdr_rmse =
        outcome_of(point, ContenderKind::osdr).metric_mean;
    const double odr_rmse = outcome_of(point, ContenderKind::odr).metric_mean;
    beats_everywhere = beats_everywhere && osdr_rmse < odr_rmse;
    pairs += " [" + point.label + " osdr=" + fmt(osdr_rmse) +
             " odr=" + fmt(odr_rmse) + "]";
    EXPECT_LT(osdr_rmse, odr_rmse) << point.label;
  }
  const double elapsed = watch.seconds();
  const bool pass = beats_everywhere && elapsed < kC4TimeLimit;
  report(4, pass,
         "linear response rmse:" + pairs + ", " + fmt(elapsed) + "s (<" +
             fmt(kC4TimeLimit) + "s)");
  EXPECT_LT(elapsed, kC4TimeLimit);
}

// ---- criterion 5: hierarchical interaction model ---------------------------
//
// Paired samples from a slowly rotating three-leaf network, 40% observed.
// The hierarchical tracker (true structure, learned subspaces) must beat
// full-dimensional online logistic regression on the pair product by a clear
// absolute margin. Subspace acquisition from cold random starts under 60%
// missing data needs larger rotation steps than the subspace-only default, so
// this experiment tunes over a coarser, larger rate grid; both contenders
// draw their parameter rate from the same grid.

TEST(Acceptance, C05_HierarchicalInteractionOrdering) {
  Stopwatch watch;
  const ExperimentConfig cfg = parse_config(
      std::string("kind tree-network\n"
                  "gen.dim 100\n"
                  "gen.sub 2\n"
                  "gen.noise_var 0.01\n"
                  "gen.observe_fraction 0.4\n"
                  "gen.rotation_scale 1e-4\n"
                  "gen.interaction_scale 3\n"
                  "gen.count 9000\n"
                  "contenders hier-osdr,flat-logistic\n"
                  "engine.sub 2\n"
                  "engine.eta 1e-1,3e-2\n"
                  "engine.mu 1e-2,1e-3\n"
                  "train 6000\n") +
      kTenSeeds);
  const ExperimentOutcome out = run_experiment(cfg);
  const double hier_pe =
      outcome_of(out.points[0], ContenderKind::hier_osdr).metric_mean;
  const double flat_pe =
      outcome_of(out.points[0], ContenderKind::flat_logistic).metric_mean;
  const double elapsed = watch.seconds();

  const bool pass = hier_pe <= flat_pe - kC5Gap && elapsed < kC5TimeLimit;
  report(5, pass,
         "hierarchical interactions: hier_pe=" + fmt(hier_pe) +
             " flat_pe=" + fmt(flat_pe) + " gap=" + fmt(flat_pe - hier_pe) +
             " (>=" + fmt(kC5Gap) + "), " + fmt(elapsed) + "s (<" +
             fmt(kC5TimeLimit) + "s)");
  EXPECT_LE(hier_pe, flat_pe - kC5Gap);
  EXPECT_LT(elapsed, kC5TimeLimit);
}

// ---- criterion 6: gradient correctness -------------------------------------
//
// Every model's subspace gradient must match central finite differences of
// its loss along random tangents, and the collapsed cases (two-class softmax
// vs logistic, single-response multi-linear vs linear) must agree to
// near machine precision.

namespace fd {

int probe_failures(const std::function<double(const MatrixXd&)>& loss,
                   const MatrixXd& u, const MatrixXd& grad, Rng& rng) {
  int bad = 0;
  for (int probe = 0; probe < 3; ++probe) {
    const MatrixXd delta = oracle::random_tangent(u, rng);
    const double analytic = oracle::frobenius_inner(grad, delta);
    const double numeric = oracle::fd_directional(loss, u, delta);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    if (std::abs(analytic - numeric) / scale > kC6FdTol) ++bad;
  }
  return bad;
}

}  // namespace fd

TEST(Acceptance, C06_GradientFiniteDifferenceSuite) {
  Stopwatch watch;
  const int instances = 100;
  int failures = 0;
  Rng rng(60001);

  for (int i = 0; i < instances; ++i) {
    // linear, projected coordinates
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd x = oracle::gaussian_matrix(9, 1, rng);
      LinearLowDimParams p{oracle::gaussian_matrix(3, 1, rng), 0.4};
      const double y = i % 2 ? 2.0 : -1.5;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            const double yhat = p.a.dot(m.transpose() * x) + p.b;
            return 0.5 * (y - yhat) * (y - yhat);
          },
          u.basis(), dense(linear_direction(p, u, x, y)), rng);
    }
    // linear, ambient reconstruction
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      LinearAmbientParams p{oracle::gaussian_matrix(9, 1, rng), -0.3};
      const double y = 1.0;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            const double yhat = p.c.dot(m * beta) + p.e;
            return 0.5 * (y - yhat) * (y - yhat);
          },
          u.basis(), dense(linear_direction(p, u, beta, y)), rng);
    }
    // logistic, both formulations
    {
      const Subspace u = Subspace::random(8, 3, rng);
      const VectorXd x = oracle::gaussian_matrix(8, 1, rng);
      LogisticLowDimParams p{oracle::gaussian_matrix(3, 1, rng), 0.2};
      const double y = i % 2;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            return bernoulli_nll(y, sigmoid(p.a.dot(m.transpose() * x) + p.b));
          },
          u.basis(), dense(logistic_direction(p, u, x, y)), rng);
    }
    {
      const Subspace u = Subspace::random(8, 3, rng);
      const VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      LogisticAmbientParams p{oracle::gaussian_matrix(8, 1, rng), -0.1};
      const double y = (i + 1) % 2;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            return bernoulli_nll(y, sigmoid(p.c.dot(m * beta) + p.e));
          },
          u.basis(), dense(logistic_direction(p, u, beta, y)), rng);
    }
    // multi-response linear, both formulations
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd x = oracle::gaussian_matrix(9, 1, rng);
      MultiLinearParams p{oracle::gaussian_matrix(3, 4, rng),
                          Formulation::low_dim};
      const VectorXd y = oracle::gaussian_matrix(4, 1, rng);
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            const VectorXd yhat = p.coeff.transpose() * (m.transpose() * x);
            return 0.5 * (y - yhat).squaredNorm();
          },
          u.basis(), dense(multilinear_direction(p, u, x, y)), rng);
    }
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      MultiLinearParams p{oracle::gaussian_matrix(9, 4, rng),
                          Formulation::ambient};
      const VectorXd y = oracle::gaussian_matrix(4, 1, rng);
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            const VectorXd yhat = p.coeff.transpose() * (m * beta);
            return 0.5 * (y - yhat).squaredNorm();
          },
          u.basis(), dense(multilinear_direction(p, u, beta, y)), rng);
    }
    // multinomial (dense tangent gradient)
    {
      const int classes = 4;
      const Subspace u = Subspace::random(8, 3, rng);
      const VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      MultinomialParams p{oracle::gaussian_matrix(8, classes - 1, rng),
                          oracle::gaussian_matrix(classes - 1, 1, rng)};
      const int y = i % classes;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            const VectorXd lift = m * beta;
            std::vector<double> z(classes, 0.0);
            for (int k = 0; k < classes - 1; ++k)
              z[k] = p.slopes.col(k).dot(lift) + p.intercepts(k);
            const double zmax = *std::max_element(z.begin(), z.end());
            double total = 0.0;
            for (const double v : z) total += std::exp(v - zmax);
            return -(z[y] - zmax) + std::log(total);
          },
          u.basis(), multinomial_direction(p, u, beta, y), rng);
    }
    // hinge (resample until clear of the kink, both formulations)
    {
      Subspace u = Subspace::random(9, 3, rng);
      VectorXd x = oracle::gaussian_matrix(9, 1, rng);
      SvmParams p{oracle::gaussian_matrix(3, 1, rng), Formulation::low_dim};
      double y = i % 2 ? 1.0 : -1.0;
      while (std::abs(1.0 - y * svm_score(p, u, x)) < 0.1) {
        u = Subspace::random(9, 3, rng);
        x = oracle::gaussian_matrix(9, 1, rng);
      }
      const double margin = y * svm_score(p, u, x);
      if (margin < 1.0) {
        failures += fd::probe_failures(
            [&](const MatrixXd& m) {
              return std::max(0.0, 1.0 - y * p.a.dot(m.transpose() * x));
            },
            u.basis(), dense(svm_direction(p, u, x, y)), rng);
      } else {
        // satisfied margin: the direction must be exactly zero
        if (svm_direction(p, u, x, y).sigma != 0.0) ++failures;
      }
    }
    {
      Subspace u = Subspace::random(9, 3, rng);
      VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      SvmParams p{oracle::gaussian_matrix(9, 1, rng), Formulation::ambient};
      double y = i % 2 ? -1.0 : 1.0;
      while (std::abs(1.0 - y * svm_score(p, u, beta)) < 0.1) {
        u = Subspace::random(9, 3, rng);
        beta = oracle::gaussian_matrix(3, 1, rng);
      }
      if (y * svm_score(p, u, beta) < 1.0) {
        failures += fd::probe_failures(
            [&](const MatrixXd& m) {
              return std::max(0.0, 1.0 - y * p.a.dot(m * beta));
            },
            u.basis(), dense(svm_direction(p, u, beta, y)), rng);
      } else if (svm_direction(p, u, beta, y).sigma != 0.0) {
        ++failures;
      }
    }
    // paired dot-product model, both half-steps
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd x1 = oracle::gaussian_matrix(9, 1, rng);
      const VectorXd x2 = oracle::gaussian_matrix(9, 1, rng);
      RdpParams p{0.8, -0.2};
      const double y = i % 2;
      const VectorXd beta2 = u.basis().transpose() * x2;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            return bernoulli_nll(y, sigmoid(p.a * x1.dot(m * beta2) + p.b));
          },
          u.basis(), dense(rdp_direction_first(p, u, x1, x2, y)), rng);
      const VectorXd beta1 = u.basis().transpose() * x1;
      failures += fd::probe_failures(
          [&](const MatrixXd& m) {
            return bernoulli_nll(
                y, sigmoid(p.a * beta1.dot(m.transpose() * x2) + p.b));
          },
          u.basis(), dense(rdp_direction_second(p, u, x1, x2, y)), rng);
    }
  }

  // Collapsed cases: two-class softmax == logistic; one response == linear.
  double equiv_worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    {
      const Subspace u = Subspace::random(9, 3, rng);
      const VectorXd beta = oracle::gaussian_matrix(3, 1, rng);
      const VectorXd c = oracle::gaussian_matrix(9, 1, rng);
      const double e = 0.3;
      MultinomialParams pm{c, VectorXd::Constant(1, e)};
      LogisticAmbientParams pl{c, e};
      equiv_worst = std::max(
          equiv_worst, std::abs(multinomial_predict(pm, u, beta)(0) -
                                logistic_predict(pl, u, beta)));
      const int y_mult = i % 2;
      const double y_log = y_mult == 0 ? 1.0 : 0.0;
      const Subspace step_m = geodesic_step_rankk(
          u, multinomial_direction(pm, u, beta, y_mult), 0.05);
      const Subspace step_l = geodesic_step_rank1(
          u, logistic_direction(pl, u, beta, y_log), 0.05);
      equiv_worst = std::max(
          equiv_worst,
          oracle::projector_distance(step_m.basis(), step_l.basis()));
    }
    {
      const Subspace u = Subspace::random(10, 3, rng);
      const VectorXd x = oracle::gaussian_matrix(10, 1, rng);
      const VectorXd a = oracle::gaussian_matrix(3, 1, rng);
      MultiLinearParams pm{a, Formulation::low_dim};
      LinearLowDimParams pl{a, 0.0};
      VectorXd y(1);
      y << (i % 2 ? 2.5 : -2.5);
      equiv_worst =
          std::max(equiv_worst, std::abs(multilinear_predict(pm, u, x)(0) -
                                         linear_predict(pl, u, x)));
      equiv_worst = std::max(
          equiv_worst, (dense(multilinear_direction(pm, u, x, y)) -
                        dense(linear_direction(pl, u, x, y(0))))
                           .norm());
    }
  }

  const double elapsed = watch.seconds();
  const bool pass =
      failures == 0 && equiv_worst <= kC6EquivTol && elapsed < kC6TimeLimit;
  report(6, pass,
         "finite differences: probe_failures=" + std::to_string(failures) +
             " (=0 of " + std::to_string(instances) +
             " instances/model), collapse_err=" + fmt(equiv_worst) + " (<=" +
             fmt(kC6EquivTol) + "), " + fmt(elapsed) + "s (<" +
             fmt(kC6TimeLimit) + "s)");
  EXPECT_EQ(failures, 0);
  EXPECT_LE(equiv_worst, kC6EquivTol);
  EXPECT_LT(elapsed, kC6TimeLimit);
}

// ---- criterion 7: manifold integrity ---------------------------------------
//
// Orthonormality must hold to 1e-10 after every one of 10^4 engine steps on
// both the rank-one and the SVD geodesic paths, and the two paths must agree
// to 1e-9 on genuinely rank-one directions.

TEST(Acceptance, C07_ManifoldIntegrity) {
  Stopwatch watch;
  double max_drift = 0.0;

  {
    StaticEllipseConfig gcfg;
    gcfg.dim = 50;
    gcfg.count = 10000;
    gcfg.label_scale = 5;
    gcfg.seed = 701;
    const LabeledStream stream = gen_static_ellipse(gcfg);
    EngineConfig ecfg;
    ecfg.dim = 50;
    ecfg.sub = 5;
    ecfg.kind = ModelKind::logistic;
    ecfg.eta = 1e-2;
    ecfg.mu = 1e-2;
    ecfg.seed = 702;
    EngineState state = make_engine_state(ecfg);
    for (const StreamSample& s : stream.samples) {
      engine_step(state, s, ecfg);
      max_drift = std::max(max_drift, state.subspace.drift());
    }
  }
  {
    // Rank-k path: a three-class stream through the softmax model.
    Rng rng(703);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EngineConfig ecfg;
    ecfg.dim = 40;
    ecfg.sub = 3;
    ecfg.kind = ModelKind::multinomial;
    ecfg.form = Formulation::ambient;
    ecfg.response_classes = 3;
    ecfg.eta = 1e-2;
    ecfg.mu = 1e-2;
    ecfg.seed = 704;
    EngineState state = make_engine_state(ecfg);
    std::uniform_int_distribution<int> pick(0, 2);
    for (int t = 0; t < 10000; ++t) {
      StreamSample s;
      s.x = VectorXd::NullaryExpr(40, [&](Eigen::Index) { return gauss(rng); });
      s.y = pick(rng);
      engine_step(state, s, ecfg);
      max_drift = std::max(max_drift, state.subspace.drift());
    }
  }

  // Rank-one vs SVD geodesic agreement on factored directions.
  double max_geo = 0.0;
  Rng rng(705);
  for (int i = 0; i < 1000; ++i) {
    const Subspace u = Subspace::random(30, 4, rng);
    const VectorXd x = oracle::gaussian_matrix(30, 1, rng);
    LogisticLowDimParams p{oracle::gaussian_matrix(4, 1, rng), 0.1};
    const RankOneDirection dir = logistic_direction(p, u, x, i % 2);
    if (dir.sigma == 0.0) continue;
    const Subspace via_rank1 = geodesic_step_rank1(u, dir, 0.03);
    const Subspace via_svd = geodesic_step_rankk(u, dense(dir), 0.03);
    max_geo = std::max(max_geo, oracle::projector_distance(
                                    via_rank1.basis(), via_svd.basis()));
  }

  const double elapsed = watch.seconds();
  const bool pass = max_drift <= kC7DriftCeil && max_geo <= kC7GeoTol &&
                    elapsed < kC7TimeLimit;
  report(7, pass,
         "manifold integrity: max_drift=" + fmt(max_drift) + " (<=" +
             fmt(kC7DriftCeil) + " over 2x10^4 steps), rank1_vs_svd=" +
             fmt(max_geo) + " (<=" + fmt(kC7GeoTol) + " on 1000), " +
             fmt(elapsed) + "s (<" + fmt(kC7TimeLimit) + "s)");
  EXPECT_LE(max_drift, kC7DriftCeil);
  EXPECT_LE(max_geo, kC7GeoTol);
  EXPECT_LT(elapsed, kC7TimeLimit);
}

// ---- criterion 8: stationarity at the dominant eigenbasis ------------------
//
// With slopes forming an orthonormal frame and self-regression targets, the
// expected ambient-form linear gradient vanishes exactly when the subspace
// spans the top-d eigenvectors of the data covariance. The sample average
// over 10^5 draws must sit within 3 standard errors of zero there, and far
// outside at a random subspace.

namespace {

// z-score of the averaged gradient: ||mean||_F over the pooled standard
// error of all entries.
double gradient_zscore(const MatrixXd& u_basis, const MatrixXd& v,
                       const VectorXd& sqrt_evals, int draws, Rng& rng) {
  const Eigen::Index dim = u_basis.rows(), sub = u_basis.cols();
  const Subspace u{u_basis};
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd mean = MatrixXd::Zero(dim, sub);
  MatrixXd m2 = MatrixXd::Zero(dim, sub);
  for (int n = 1; n <= draws; ++n) {
    VectorXd g(dim);
    for (Eigen::Index i = 0; i < dim; ++i) g(i) = gauss(rng);
    const VectorXd x = v * (sqrt_evals.array() * g.array()).matrix();
    const VectorXd beta = project_coefficients(u, x);
    MatrixXd total = MatrixXd::Zero(dim, sub);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const LinearAmbientParams p{VectorXd::Unit(dim, j), 0.0};
      total += osdr::detail::dense_direction(linear_direction(p, u, beta, x(j)),
                                             dim, sub);
    }
    const MatrixXd delta = total - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(total - mean);
  }
  const double pooled_var = m2.sum() / static_cast<double>(draws - 1);
  const double se = std::sqrt(pooled_var / static_cast<double>(draws));
  return mean.norm() / se;
}

}  // namespace

TEST(Acceptance, C08_DominantEigenbasisIsStationary) {
  Stopwatch watch;
  const Eigen::Index dim = 8, sub = 3;
  const int draws = 100000;
  Rng setup(801);
  const MatrixXd v = oracle::random_orthonormal(dim, dim, setup);
  VectorXd evals(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    evals(i) = static_cast<double>(dim - i);
  const VectorXd sqrt_evals = evals.cwiseSqrt();

  Rng rng_a(802), rng_b(802);  // identical draws for both subspaces
  const double z_station =
      gradient_zscore(v.leftCols(sub), v, sqrt_evals, draws, rng_a);
  const MatrixXd u_random = oracle::random_orthonormal(dim, sub, setup);
  const double z_moving =
      gradient_zscore(u_random, v, sqrt_evals, draws, rng_b);

  const double elapsed = watch.seconds();
  const bool pass = z_station < kC8StationaryZ && z_moving > kC8MovingZ &&
                    elapsed < kC8TimeLimit;
  report(8, pass,
         "stationary eigenbasis: z_at_top_d=" + fmt(z_station) + " (<" +
             fmt(kC8StationaryZ) + "), z_at_random=" + fmt(z_moving) + " (>" +
             fmt(kC8MovingZ) + "), " + fmt(elapsed) + "s (<" +
             fmt(kC8TimeLimit) + "s)");
  EXPECT_LT(z_station, kC8StationaryZ);
  EXPECT_GT(z_moving, kC8MovingZ);
  EXPECT_LT(elapsed, kC8TimeLimit);
}

// ---- criterion 9: masked projection oracle ---------------------------------

TEST(Acceptance, C09_MaskedProjectionMatchesLeastSquares) {
  Stopwatch watch;
  Rng rng(901);
  std::uniform_int_distribution<int> size_pick(8, 30);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  double worst = 0.0;
  int done = 0;
  while (done < 1000) {
    const Subspace u = Subspace::random(30, 4, rng);
    const int observed = size_pick(rng);
    std::vector<Eigen::Index> all(30);
    for (int i = 0; i < 30; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<Eigen::Index> omega(all.begin(), all.begin() + observed);
    std::sort(omega.begin(), omega.end());

    // keep only well-conditioned restrictions
    MatrixXd u_omega(observed, 4);
    for (int i = 0; i < observed; ++i)
      u_omega.row(i) = u.basis().row(omega[static_cast<std::size_t>(i)]);
    Eigen::JacobiSVD<MatrixXd> svd(u_omega);
    if (svd.singularValues()(3) < 0.05) continue;

    VectorXd x_obs(observed);
    for (int i = 0; i < observed; ++i) x_obs(i) = 2.0 * coin(rng) - 1.0;
    ObservationMask mask{omega};
    const VectorXd lib = project_coefficients_masked(u, x_obs, mask);
    const VectorXd ref = oracle::masked_least_squares(u.basis(), x_obs, omega);
    worst = std::max(worst, (lib - ref).norm() / std::max(1.0, ref.norm()));
    ++done;
  }
  const double elapsed = watch.seconds();
  const bool pass = worst <= kC9Tol && elapsed < kC9TimeLimit;
  report(9, pass,
         "masked projection: worst_rel_err=" + fmt(worst) + " (<=" +
             fmt(kC9Tol) + " on 1000), " + fmt(elapsed) + "s (<" +
             fmt(kC9TimeLimit) + "s)");
  EXPECT_LE(worst, kC9Tol);
  EXPECT_LT(elapsed, kC9TimeLimit);
}

// ---- criterion 10: per-step cost scales linearly in D ----------------------

namespace {

double median_step_seconds(Eigen::Index dim, const std::vector<StreamSample>& stream) {
  EngineConfig ecfg;
  ecfg.dim = dim;
  ecfg.sub = 5;
  ecfg.kind = ModelKind::logistic;
  ecfg.eta = 1e-3;
  ecfg.mu = 1e-3;
  ecfg.seed = 1000 + static_cast<std::uint64_t>(dim);
  std::vector<double> trials;
  for (int trial = 0; trial < 5; ++trial) {
    EngineState state = make_engine_state(ecfg);
    const Stopwatch w;
    for (const StreamSample& s : stream) engine_step(state, s, ecfg);
    trials.push_back(w.seconds() / static_cast<double>(stream.size()));
  }
  std::sort(trials.begin(), trials.end());
  return trials[2];
}

}  // namespace

TEST(Acceptance, C10_PerStepCostScalesLinearly) {
  Stopwatch watch;
  std::vector<double> per_step;
  for (const Eigen::Index dim : {200, 400, 800}) {
    StaticEllipseConfig gcfg;
    gcfg.dim = dim;
    gcfg.count = 1500;
    gcfg.label_scale = 5;
    gcfg.seed = 1001;
    const LabeledStream stream = gen_static_ellipse(gcfg);
    per_step.push_back(median_step_seconds(dim, stream.samples));
  }
  const double ratio_a = per_step[1] / per_step[0];
  const double ratio_b = per_step[2] / per_step[1];
  const double elapsed = watch.seconds();

  const bool pass = ratio_a <= kC10Ratio && ratio_b <= kC10Ratio;
  report(10, pass,
         "per-step scaling (D=200,400,800; d=5): step_us=(" +
             fmt(per_step[0] * 1e6) + "," + fmt(per_step[1] * 1e6) + "," +
             fmt(per_step[2] * 1e6) + "), ratios=(" + fmt(ratio_a) + "," +
             fmt(ratio_b) + ") (<=" + fmt(kC10Ratio) + "), " + fmt(elapsed) +
             "s");
  EXPECT_LE(ratio_a, kC10Ratio);
  EXPECT_LE(ratio_b, kC10Ratio);
}

}  // namespace
