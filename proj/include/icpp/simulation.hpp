#pragma once

// Data generators for the two Gaussian-bump models on [0, 1], the L² error
// functionals, and the desk-scale study harness shared by the component
// (Table-1 style) and intensity/density (Table-2 style) reports.

#include "icpp/fit.hpp"
#include "icpp/geometry.hpp"
#include "icpp/random.hpp"
#include "icpp/selection.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace icpp {

// φ(t) = exp(−rate (t − center)²) / norm on [0, 1], norm exact.
struct GaussianBump {
  double center = 0.5;
  double rate = 1.0;
  double norm = 1.0;

  static GaussianBump normalized(double center, double rate);
  double operator()(double t) const;
};

struct LognormalParams {
  double mu = 0.0;
  double sigma2 = 0.0;
};

// Moment inversion: σ² = log(1 + V/E²), μ = log E − σ²/2. Throws for V ≤ 0 or E ≤ 0.
LognormalParams lognormal_from_moments(double mean, double variance);

struct GenModel {
  std::string name;
  std::vector<GaussianBump> components;
  std::vector<double> score_means;
  std::vector<double> score_vars;

  std::size_t size() const { return components.size(); }
  Region region() const { return Region::interval(0.0, 1.0); }

  static GenModel model1();
  static GenModel model2();
  static GenModel by_name(const std::string& name);   // "model1" | "model2"
};

// n × p lognormal score draws.
Eigen::MatrixXd sample_scores(const GenModel& gen, std::size_t n, std::uint64_t seed);

// Draws points from Σ_k u_k φ_k by first choosing k ∝ u_k, then rejection
// from a piecewise-constant envelope (1.1 × the largest density value seen in
// each quadrature cell).
class PatternSampler {
 public:
  using Density = std::function<double(const Point&)>;

  // Densities must integrate to one over the region.
  PatternSampler(Region region, std::vector<Density> densities, int resolution = 256);

  std::size_t size() const { return densities_.size(); }
  const Region& region() const { return region_; }

  PointPattern sample(const Eigen::VectorXd& u, std::uint64_t seed, std::string id) const;
  Point draw_from(std::size_t k, Rng& rng) const;
  // Number of accepted draws whose density exceeded the envelope.
  std::size_t envelope_violations() const { return violations_.load(); }

 private:
  Region region_;
  std::vector<Density> densities_;
  QuadratureRule quad_;
  std::vector<std::vector<double>> envelope_;   // per component, per cell
  std::vector<std::vector<double>> cdf_;        // per component, cumulative envelope mass
  mutable std::atomic<std::size_t> violations_{0};
};

PatternSampler make_sampler(const GenModel& gen, int resolution = 256);

// A pattern from a general intensity: N ~ Poisson(∫λ) and points from λ/∫λ.
PointPattern sample_intensity(const std::function<double(const Point&)>& lambda, const Region& region,
                              std::uint64_t seed, std::string id, int resolution = 256);

struct ErrorTriple {
  double bias = 0.0;
  double std = 0.0;
  double rmse = 0.0;
};

// Equally spaced grid on [lo, hi] with trapezoid weights.
struct EvalGrid {
  std::vector<Point> points;
  Eigen::VectorXd weights;
};
EvalGrid trapezoid_grid(double lo, double hi, std::size_t points);

// Each estimate and the truth are vectors over the grid. bias² = ‖mean − φ‖²,
// std² = mean ‖φ̂_r − mean‖², rmse² = bias² + std².
ErrorTriple error_triple(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth,
                         const Eigen::VectorXd& weights);

// Best assignment of estimated rows to true rows (both p × G) by total squared
// L² distance. Returns perm with estimate row perm[k] matched to truth row k.
std::vector<std::size_t> match_components(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth,
                                          const Eigen::VectorXd& weights);

// Squared L² errors of one estimated intensity against the truth on a grid,
// for the intensity itself and for both normalized to unit mass.
struct IntensityError {
  double intensity_sq = 0.0;
  double density_sq = 0.0;
};
IntensityError intensity_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                               const Eigen::VectorXd& weights);

enum class ZetaPolicy { Cv, Optimal };
std::string to_string(ZetaPolicy p);

struct StudyConfig {
  GenModel gen = GenModel::model2();
  std::size_t n = 150;
  int knots = 10;
  std::size_t reps = 50;
  std::uint64_t seed = 1;
  std::vector<double> zeta_grid = default_zeta_grid();
  std::size_t folds = 5;
  std::size_t cv_draws = 4000;
  FitConfig fit{};
  // CV fold fits run along ascending ζ, each starting from the previous ζ's
  // fold fit; those warm-started fits stop after this many outer iterations
  // (0: no separate cap).
  int cv_warm_iters = 0;
  bool run_cv = true;
  std::size_t grid_points = 512;
  int quadrature_resolution = 64;
};

// Structural checks on one fitted model: worst |∫φ̂_k − 1|, smallest
// coefficient, worst |Σ_k γ_jk − 1| over every point.
struct FitChecks {
  double mass_error = std::nan("");
  double min_coeff = std::nan("");
  double gamma_error = std::nan("");
};
FitChecks fit_checks(const FitResult& fit, const BasisSystem& basis);

struct RepOutcome {
  bool ok = false;
  std::string error;
  // Per ζ (aligned with the grid): matched φ̂ on the evaluation grid, p × G.
  std::vector<Eigen::MatrixXd> components;
  std::vector<bool> fit_ok;
  // Per ζ: Σ_i ‖λ̂_i − λ_i‖² / n and the same for normalized densities.
  std::vector<double> intensity_sq;
  std::vector<double> density_sq;
  std::vector<FitChecks> checks;
  std::size_t cv_choice = 0;   // grid index picked by CV
};

struct StudyResult {
  StudyConfig config;
  EvalGrid grid;
  Eigen::MatrixXd truth;        // p × G
  std::vector<RepOutcome> reps;
};

StudyResult run_study(const StudyConfig& config);

struct Table1Row {
  std::string model;
  std::size_t n = 0;
  int knots = 0;
  ZetaPolicy policy = ZetaPolicy::Cv;
  std::size_t component = 0;    // 1-based
  double zeta = 0.0;            // NaN for cv (varies by replication)
  ErrorTriple err;
  ErrorTriple se;               // jackknife MC standard errors
  std::size_t reps_ok = 0;
  std::size_t reps_failed = 0;
  bool valid = true;
};

struct Table2Row {
  std::string model;
  std::size_t n = 0;
  int knots = 0;
  ZetaPolicy policy = ZetaPolicy::Cv;
  double intensity_rmse = 0.0;
  double density_rmse = 0.0;
  double intensity_se = 0.0;
  double density_se = 0.0;
  std::size_t reps_ok = 0;
  std::size_t reps_failed = 0;
  bool valid = true;
};

// Grid index minimizing the mean total squared component error over reps.
std::size_t optimal_zeta_index(const StudyResult& study);

std::vector<Table1Row> table1_rows(const StudyResult& study, ZetaPolicy policy);
std::vector<Table2Row> table2_rows(const StudyResult& study, ZetaPolicy policy);

std::vector<Table1Row> run_table1(const StudyConfig& config, const std::vector<ZetaPolicy>& policies);
std::vector<Table2Row> run_table2(const StudyConfig& config);

// Raw synthetic data: n patterns with ids "r00001"… and their true scores.
struct GeneratedData {
  std::vector<PointPattern> patterns;
  Eigen::MatrixXd scores;   // n × p
};
GeneratedData generate_data(const GenModel& gen, std::size_t n, std::uint64_t seed);

}  // namespace icpp
