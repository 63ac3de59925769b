// icpp: fit, cross-validate, simulate and analyze independent-component
// intensity models for replicated point patterns.

#include "icpp/commands.hpp"
#include "icpp/errors.hpp"
#include "icpp/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

void add_common(CLI::App* sub, icpp::RunConfig& c, std::string& centers) {
  sub->add_option("--input", c.input, "Events CSV (replication_id,t or replication_id,x,y)");
  sub->add_option("--region", c.region, "\"lo,hi\" in 1-D, polygon CSV (x,y) in 2-D")->capture_default_str();
  sub->add_option("--dim", c.dim, "Dimension of the region")->check(CLI::IsMember({1, 2}))->capture_default_str();
  sub->add_option("--basis", c.basis, "Basis family")->check(CLI::IsMember({"bspline", "rbf"}))->capture_default_str();
  sub->add_option("--knots", c.knots, "Cubic B-spline knot spans (q = knots + 3)")->capture_default_str();
  sub->add_option("--centers", centers, "RBF centre grid, RxC")->capture_default_str();
  sub->add_option("--bandwidth", c.bandwidth, "RBF bandwidth (<= 0: 1.2 x centre spacing)")->capture_default_str();
  sub->add_option("--quadrature", c.quadrature_resolution, "Quadrature resolution")->capture_default_str();
  sub->add_option("--p", c.p, "Number of components")->capture_default_str();
  sub->add_option("--zeta", c.zeta, "Roughness penalty weight")->capture_default_str();
  sub->add_option("--seed", c.seed, "Root seed")->capture_default_str();
  sub->add_option("--mc-draws", c.mc_draws, "Monte-Carlo draws (held-out likelihood, delta draws, CV in studies)")
      ->capture_default_str();
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads")->capture_default_str();
  sub->add_option("--max-iters", c.max_iters, "EM outer iteration cap")->capture_default_str();
  sub->add_option("--gibbs-sweeps", c.gibbs_sweeps, "Base Gibbs sweeps per E-step")->capture_default_str();
  sub->add_option("--tol", c.tol, "Objective change that counts as converged")->capture_default_str();
  sub->add_option("--monitor-draws", c.monitor_draws, "Draws per replication for the monitored objective")
      ->capture_default_str();
  sub->add_option("--grid-points", c.grid_points, "Output grid size")->capture_default_str();
}

// "7x5" → rows 7, cols 5.
void parse_centers(const std::string& s, icpp::RunConfig& c) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw icpp::Error(icpp::ErrorKind::Config, "--centers must look like RxC");
  try {
    std::size_t used = 0;
    c.center_rows = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string cols = s.substr(x + 1);
    c.center_cols = std::stoi(cols, &used);
    if (used != cols.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw icpp::Error(icpp::ErrorKind::Config, "--centers must look like RxC, got '" + s + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Independent-component intensity models for replicated point patterns"};
  app.set_version_flag("--version", icpp::kVersion);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);

  icpp::RunConfig c;
  std::string centers = "7x7";

  auto* fit = app.add_subcommand("fit", "Fit one model and write its artifacts");
  add_common(fit, c, centers);
  fit->add_option("--intensity-ids", c.intensity_ids, "Replications for intensities.csv (default: all)")
      ->delimiter(',');

  auto* cv = app.add_subcommand("cv", "Select (p, zeta) by K-fold cross-validation");
  add_common(cv, c, centers);
  cv->add_option("--p-grid", c.p_grid, "Comma-separated p values (default: --p)")->delimiter(',');
  cv->add_option("--zeta-grid", c.zeta_grid, "Comma-separated zeta values (default: --zeta)")->delimiter(',');
  cv->add_option("--folds", c.folds, "Number of folds")->capture_default_str();
  cv->add_option("--intensity-ids", c.intensity_ids, "Replications for intensities.csv (default: all)")
      ->delimiter(',');

  auto* sim = app.add_subcommand("simulate", "Generate synthetic data or run the desk-scale studies");
  add_common(sim, c, centers);
  sim->add_option("--mode", c.mode, "generate | table1 | table2")->capture_default_str();
  sim->add_option("--model-name", c.model, "model1 | model2")->capture_default_str();
  sim->add_option("--n", c.n, "Replications per data set")->capture_default_str();
  sim->add_option("--reps", c.reps, "Monte-Carlo repetitions of the study")->capture_default_str();
  sim->add_option("--zeta-grid", c.zeta_grid, "Comma-separated zeta grid")->delimiter(',');
  sim->add_option("--folds", c.folds, "CV folds")->capture_default_str();
  sim->add_option("--cv-warm-iters", c.cv_warm_iters, "Iteration cap for warm-started CV fits (0: none)")
      ->capture_default_str();
  sim->add_flag("--raw", c.raw, "Also write per-repetition errors");

  auto* var = app.add_subcommand("variance", "Asymptotic distribution and confidence intervals of a fitted model");
  add_common(var, c, centers);
  var->add_option("--model", c.model_path, "model.json from fit or cv")->required();
  var->add_option("--fisher", c.fisher, "empirical (needs --input) | generative")->capture_default_str();
  var->add_option("--fisher-draws", c.fisher_draws, "Gibbs sweeps / simulated patterns for the information")
      ->capture_default_str();
  var->add_option("--level", c.level, "Confidence level")->capture_default_str();
  var->add_flag("--draws", c.write_draws, "Write the delta draws to draws.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    c.command = app.get_subcommands().front()->get_name();
    parse_centers(centers, c);
    return icpp::run_command(c);
  } catch (const icpp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return icpp::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return icpp::kExitError;
  }
}
