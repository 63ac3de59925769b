#include "icpp/commands.hpp"

#include "icpp/asymptotics.hpp"
#include "icpp/errors.hpp"
#include "icpp/fit.hpp"
#include "icpp/io.hpp"
#include "icpp/parallel.hpp"
#include "icpp/random.hpp"
#include "icpp/selection.hpp"
#include "icpp/simulation.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

namespace icpp {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Grid used by the study commands when none is given: half-decades around
// the useful range for the bump models.
const std::vector<double> kStudyGrid{1e-6, 3.16e-6, 1e-5, 3.16e-5, 1e-4};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::Config, what);
}

BasisSpec basis_spec(const RunConfig& c) {
  BasisSpec s;
  s.family = c.basis == "rbf" ? BasisFamily::GaussianRbf2D : BasisFamily::CubicBSpline1D;
  s.layout.knots = c.knots;
  s.layout.center_rows = c.center_rows;
  s.layout.center_cols = c.center_cols;
  s.layout.bandwidth = c.bandwidth;
  s.quadrature_resolution = c.quadrature_resolution;
  return s;
}

FitConfig fit_config(const RunConfig& c, double zeta) {
  FitConfig f;
  f.zeta = zeta;
  f.max_outer_iters = c.max_iters;
  f.gibbs_sweeps = c.gibbs_sweeps;
  f.outer_tol = c.tol;
  f.monitor_draws = c.monitor_draws;
  f.seed = derive_seed(c.seed, "fit");
  return f;
}

RunMetadata metadata(const RunConfig& c, std::vector<std::string> warnings = {}) {
  return RunMetadata{c.command, config_hash(c), c.seed, c.threads, std::move(warnings)};
}

void prepare_output(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error(ErrorKind::Config, "cannot create output directory " + out.string());
}

std::vector<std::string> coordinate_header(int dim) {
  return dim == 1 ? std::vector<std::string>{"t"} : std::vector<std::string>{"x", "y"};
}

void write_coords(CsvWriter& w, const Point& t, int dim) {
  w.field(t.x);
  if (dim == 2) w.field(t.y);
}

// Evaluation grid for plot-ready output: equally spaced on the interval, or a
// square lattice over the bounding box clipped to the polygon.
std::vector<Point> output_grid(const Region& region, std::size_t points) {
  std::vector<Point> g;
  const Box b = region.bounds();
  if (region.dimension() == 1) {
    for (std::size_t i = 0; i < points; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(points - 1);
      g.push_back({i + 1 == points ? b.hi.x : b.lo.x + f * (b.hi.x - b.lo.x), 0.0});
    }
    return g;
  }
  const std::size_t side = std::max<std::size_t>(points / 4, 2);
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      const Point t{b.lo.x + (b.hi.x - b.lo.x) * static_cast<double>(j) / static_cast<double>(side - 1),
                    b.lo.y + (b.hi.y - b.lo.y) * static_cast<double>(i) / static_cast<double>(side - 1)};
      if (region.contains(t)) g.push_back(t);
    }
  }
  return g;
}

std::vector<std::string> numbered(const std::string& stem, std::size_t count) {
  std::vector<std::string> v;
  for (std::size_t k = 1; k <= count; ++k) v.push_back(stem + std::to_string(k));
  return v;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void finish(CsvWriter& w, const fs::path& path, const RunMetadata& meta) {
  w.close();
  write_metadata(path, meta);
}

// model.json, components.csv, scores.csv, assignments.csv, intensities.csv.
void write_fit_artifacts(const RunConfig& c, const FitResult& fr, const std::vector<PointPattern>& patterns,
                         const Region& region, const BasisSpec& spec, const BasisSystem& basis, double zeta,
                         const RunMetadata& meta) {
  const fs::path& out = c.out;
  const int dim = region.dimension();
  const std::size_t p = fr.params.components();

  write_model(out / "model.json", make_document(fr, patterns, region, spec, zeta));
  write_metadata(out / "model.json", meta);

  const std::vector<Point> grid = output_grid(region, c.grid_points);
  {
    CsvWriter w(out / "components.csv", concat(coordinate_header(dim), numbered("phi_", p)));
    std::vector<Eigen::VectorXd> phi;
    for (std::size_t k = 0; k < p; ++k) phi.push_back(component_density(fr.params, basis, k, grid));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      write_coords(w, grid[g], dim);
      for (std::size_t k = 0; k < p; ++k) w.field(phi[k][static_cast<Eigen::Index>(g)]);
      w.end_row();
    }
    finish(w, out / "components.csv", meta);
  }
  {
    CsvWriter w(out / "scores.csv", concat({"replication_id", "m"}, numbered("score_", p)));
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      w.field(patterns[i].id).field(patterns[i].size());
      for (std::size_t k = 0; k < p; ++k) w.field(fr.e_stats.reps[i].euk[static_cast<Eigen::Index>(k)]);
      w.end_row();
    }
    finish(w, out / "scores.csv", meta);
  }
  {
    std::vector<std::string> header{"replication_id"};
    header = concat(concat(header, coordinate_header(dim)), {"component"});
    CsvWriter w(out / "assignments.csv", concat(header, numbered("gamma_", p)));
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      const Eigen::MatrixXd& gamma = fr.e_stats.reps[i].gamma;
      for (std::size_t j = 0; j < patterns[i].size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        Eigen::Index best = 0;
        gamma.row(jj).maxCoeff(&best);
        w.field(patterns[i].id);
        write_coords(w, patterns[i].points[j], dim);
        w.field(static_cast<std::size_t>(best) + 1);
        for (std::size_t k = 0; k < p; ++k) w.field(gamma(jj, static_cast<Eigen::Index>(k)));
        w.end_row();
      }
    }
    finish(w, out / "assignments.csv", meta);
  }
  {
    std::vector<std::string> header{"replication_id"};
    CsvWriter w(out / "intensities.csv", concat(concat(header, coordinate_header(dim)), {"intensity"}));
    const std::set<std::string> wanted(c.intensity_ids.begin(), c.intensity_ids.end());
    for (const auto& id : wanted) {
      const bool known = std::any_of(patterns.begin(), patterns.end(), [&](const PointPattern& x) { return x.id == id; });
      if (!known) throw Error(ErrorKind::Config, "unknown replication id '" + id + "' in --intensity-ids");
    }
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (!wanted.empty() && !wanted.count(patterns[i].id)) continue;
      const Eigen::VectorXd lam = posterior_intensity(fr.params, basis, patterns[i], fr.e_stats.reps[i], grid);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        w.field(patterns[i].id);
        write_coords(w, grid[g], dim);
        w.field(lam[static_cast<Eigen::Index>(g)]);
        w.end_row();
      }
    }
    finish(w, out / "intensities.csv", meta);
  }
}

int converged_code(const FitResult& fr) {
  if (fr.converged) return kExitOk;
  std::cerr << "warning: EM did not converge after " << fr.iterations
            << " outer iterations; artifacts and the objective trace were written\n";
  return kExitNotConverged;
}

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json(nullptr));
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  f << j.dump(1) << "\n";
  f.close();
  if (!f) throw Error(ErrorKind::Internal, "cannot write " + path.string());
}

}  // namespace

void RunConfig::validate() const {
  static const std::set<std::string> commands{"fit", "cv", "simulate", "variance"};
  require(commands.count(command) > 0, "unknown command '" + command + "'");
  require(dim == 1 || dim == 2, "--dim must be 1 or 2");
  require(basis == "bspline" || basis == "rbf", "--basis must be bspline or rbf");
  require(basis != "bspline" || dim == 1, "B-spline bases need --dim 1; use --basis rbf in 2-D");
  require(basis != "rbf" || dim == 2, "RBF bases need --dim 2");
  require(knots >= 2 && knots <= 1000, "--knots must be in [2, 1000]");
  require(center_rows >= 2 && center_cols >= 2, "--centers must be RxC with R, C >= 2");
  require(std::isfinite(bandwidth), "--bandwidth must be finite");
  require(quadrature_resolution >= 4, "quadrature resolution must be >= 4");
  require(p >= 1 && p <= 20, "--p must be in [1, 20]");
  for (std::size_t v : p_grid) require(v >= 1 && v <= 20, "--p-grid values must be in [1, 20]");
  require(std::isfinite(zeta) && zeta >= 0.0, "--zeta must be finite and >= 0");
  for (double z : zeta_grid) require(std::isfinite(z) && z >= 0.0, "--zeta-grid values must be finite and >= 0");
  require(folds >= 2, "--folds must be >= 2");
  require(mc_draws >= 1, "--mc-draws must be >= 1");
  require(threads >= 1, "--threads must be >= 1");
  require(max_iters >= 1, "--max-iters must be >= 1");
  require(gibbs_sweeps >= 1, "--gibbs-sweeps must be >= 1");
  require(tol > 0.0, "--tol must be > 0");
  require(monitor_draws >= 1, "--monitor-draws must be >= 1");
  require(grid_points >= 2, "--grid-points must be >= 2");
  require(level > 0.0 && level < 1.0, "--level must be in (0, 1)");

  auto need_file = [](const fs::path& f, const std::string& flag) {
    require(!f.empty(), flag + " is required");
    require(fs::is_regular_file(f), flag + ": no such file " + f.string());
  };
  if (command == "fit" || command == "cv") need_file(input, "--input");
  if (dim == 2 && command != "simulate" && command != "variance") need_file(region, "--region");
  if (command == "simulate") {
    require(mode == "generate" || mode == "table1" || mode == "table2", "--mode must be generate, table1 or table2");
    require(model == "model1" || model == "model2", "--model-name must be model1 or model2");
    require(n >= 1, "--n must be >= 1");
    require(mode == "generate" || reps >= 2, "--reps must be >= 2");
    require(mode == "generate" || folds <= n, "--folds exceeds --n");
    require(cv_warm_iters >= 0, "--cv-warm-iters must be >= 0");
  }
  if (command == "variance") {
    need_file(model_path, "--model");
    require(fisher == "empirical" || fisher == "generative", "--fisher must be empirical or generative");
    if (fisher == "empirical") need_file(input, "--input (empirical information)");
    require(fisher_draws >= 100, "--fisher-draws must be >= 100");
    require(mc_draws >= 100, "--mc-draws must be >= 100 for the delta draws");
  }
}

std::string config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["input"] = c.input.string();
  j["region"] = c.region;
  j["dim"] = c.dim;
  j["basis"] = c.basis;
  j["knots"] = c.knots;
  j["centers"] = {c.center_rows, c.center_cols};
  j["bandwidth"] = c.bandwidth;
  j["quadrature_resolution"] = c.quadrature_resolution;
  j["p"] = c.p;
  j["p_grid"] = c.p_grid;
  j["zeta"] = c.zeta;
  j["zeta_grid"] = c.zeta_grid;
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  j["mc_draws"] = c.mc_draws;
  j["reps"] = c.reps;
  j["max_iters"] = c.max_iters;
  j["gibbs_sweeps"] = c.gibbs_sweeps;
  j["tol"] = c.tol;
  j["monitor_draws"] = c.monitor_draws;
  j["grid_points"] = c.grid_points;
  j["intensity_ids"] = c.intensity_ids;
  j["mode"] = c.mode;
  j["model"] = c.model;
  j["n"] = c.n;
  j["cv_warm_iters"] = c.cv_warm_iters;
  j["raw"] = c.raw;
  j["model_path"] = c.model_path.string();
  j["fisher"] = c.fisher;
  j["fisher_draws"] = c.fisher_draws;
  j["level"] = c.level;
  j["write_draws"] = c.write_draws;
  return j.dump();
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a(config_json(c))); }

int cmd_fit(const RunConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  const Region region = parse_region(c.region, c.dim);
  const BasisSpec spec = basis_spec(c);
  const BasisSystem basis = build_basis(spec, region);
  const std::vector<PointPattern> patterns = sorted_by_id(read_patterns(c.input, region));
  prepare_output(c.out);
  const FitResult fr = fit(patterns, basis, c.p, fit_config(c, c.zeta));
  write_fit_artifacts(c, fr, patterns, region, spec, basis, c.zeta, metadata(c));
  return converged_code(fr);
}

int cmd_cv(const RunConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  const Region region = parse_region(c.region, c.dim);
  const BasisSpec spec = basis_spec(c);
  const BasisSystem basis = build_basis(spec, region);
  const std::vector<PointPattern> patterns = sorted_by_id(read_patterns(c.input, region));

  CvPlan plan;
  plan.folds = c.folds;
  plan.p_grid = c.p_grid.empty() ? std::vector<std::size_t>{c.p} : c.p_grid;
  plan.zeta_grid = c.zeta_grid.empty() ? std::vector<double>{c.zeta} : c.zeta_grid;
  plan.seed = derive_seed(c.seed, "cv");
  plan.fit = fit_config(c, c.zeta);
  plan.heldout_draws = c.mc_draws;
  plan.warm_start = true;
  plan.validate(patterns.size());
  prepare_output(c.out);

  auto [fr, report] = select_model(patterns, basis, plan);
  const RunMetadata meta = metadata(c);
  CsvWriter w(c.out / "cv.csv", {"p", "zeta", "cv_score", "cv_se", "n_invalid_folds"});
  for (const auto& cell : report.cells) {
    w.field(cell.p).field(cell.zeta).field(cell.score).field(cell.std_err).field(cell.invalid_folds).end_row();
    for (const auto& d : cell.diagnostics) std::cerr << "cv p=" << cell.p << " zeta=" << cell.zeta << ": " << d << "\n";
  }
  finish(w, c.out / "cv.csv", meta);
  std::cout << "selected p=" << report.selected_p << " zeta=" << format_double(report.selected_zeta) << "\n";
  write_fit_artifacts(c, fr, patterns, region, spec, basis, report.selected_zeta, meta);
  return converged_code(fr);
}

int cmd_simulate(const RunConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  prepare_output(c.out);
  const GenModel gen = GenModel::by_name(c.model);
  const std::uint64_t seed = derive_seed(c.seed, "sim");
  const RunMetadata meta = metadata(c);

  if (c.mode == "generate") {
    const GeneratedData data = generate_data(gen, c.n, seed);
    write_patterns(c.out / "events.csv", data.patterns, 1);
    write_metadata(c.out / "events.csv", meta);
    CsvWriter w(c.out / "true_scores.csv", concat({"replication_id"}, numbered("u_", gen.size())));
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.patterns.size(); ++i) {
      w.field(data.patterns[i].id);
      for (std::size_t k = 0; k < gen.size(); ++k) {
        w.field(data.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      }
      w.end_row();
      total += data.patterns[i].size();
    }
    finish(w, c.out / "true_scores.csv", meta);
    std::cout << "generated " << c.n << " replications, mean count "
              << format_double(static_cast<double>(total) / static_cast<double>(c.n)) << "\n";
    return kExitOk;
  }

  StudyConfig sc;
  sc.gen = gen;
  sc.n = c.n;
  sc.knots = c.knots;
  sc.reps = c.reps;
  sc.seed = seed;
  sc.zeta_grid = c.zeta_grid.empty() ? kStudyGrid : c.zeta_grid;
  sc.folds = c.folds;
  sc.cv_draws = c.mc_draws;
  sc.fit = fit_config(c, sc.zeta_grid.front());
  sc.cv_warm_iters = c.cv_warm_iters;
  sc.run_cv = true;
  sc.quadrature_resolution = c.quadrature_resolution;
  const StudyResult study = run_study(sc);

  std::vector<std::string> warnings;
  std::size_t failures = 0;
  for (const auto& r : study.reps) failures += r.ok ? 0 : 1;
  if (failures > 0) warnings.push_back(std::to_string(failures) + " replications failed");
  const RunMetadata study_meta = metadata(c, warnings);

  if (c.mode == "table1") {
    CsvWriter w(c.out / "table1.csv", {"model", "n", "knots", "policy", "component", "zeta", "bias", "std", "rmse",
                                       "bias_se", "std_se", "rmse_se", "reps_ok", "reps_failed", "valid"});
    for (ZetaPolicy policy : {ZetaPolicy::Optimal, ZetaPolicy::Cv}) {
      for (const auto& r : table1_rows(study, policy)) {
        w.field(r.model).field(r.n).field(r.knots).field(to_string(r.policy)).field(r.component).field(r.zeta);
        w.field(r.err.bias).field(r.err.std).field(r.err.rmse).field(r.se.bias).field(r.se.std).field(r.se.rmse);
        w.field(r.reps_ok).field(r.reps_failed).field(r.valid ? 1 : 0).end_row();
      }
    }
    finish(w, c.out / "table1.csv", study_meta);
  } else {
    CsvWriter w(c.out / "table2.csv", {"model", "n", "knots", "policy", "intensity_rmse", "intensity_se",
                                       "density_rmse", "density_se", "reps_ok", "reps_failed", "valid"});
    for (ZetaPolicy policy : {ZetaPolicy::Cv, ZetaPolicy::Optimal}) {
      for (const auto& r : table2_rows(study, policy)) {
        w.field(r.model).field(r.n).field(r.knots).field(to_string(r.policy));
        w.field(r.intensity_rmse).field(r.intensity_se).field(r.density_rmse).field(r.density_se);
        w.field(r.reps_ok).field(r.reps_failed).field(r.valid ? 1 : 0).end_row();
      }
    }
    finish(w, c.out / "table2.csv", study_meta);
  }

  if (c.raw) {
    const std::size_t p = gen.size();
    CsvWriter w(c.out / "raw_errors.csv", concat(concat({"rep", "zeta", "fit_ok", "cv_choice"}, numbered("ise_", p)),
                                                 {"intensity_sq", "density_sq", "error"}));
    for (std::size_t r = 0; r < study.reps.size(); ++r) {
      const RepOutcome& o = study.reps[r];
      for (std::size_t z = 0; z < sc.zeta_grid.size(); ++z) {
        const bool ok = o.ok && z < o.fit_ok.size() && o.fit_ok[z];
        w.field(r + 1).field(sc.zeta_grid[z]).field(ok ? 1 : 0).field(o.ok && o.cv_choice == z ? 1 : 0);
        for (std::size_t k = 0; k < p; ++k) {
          double ise = std::nan("");
          if (ok) {
            const auto kk = static_cast<Eigen::Index>(k);
            const Eigen::VectorXd d = (o.components[z].row(kk) - study.truth.row(kk)).transpose();
            ise = d.cwiseAbs2().dot(study.grid.weights);
          }
          w.field(ise);
        }
        w.field(ok ? o.intensity_sq[z] : std::nan("")).field(ok ? o.density_sq[z] : std::nan("")).field(o.error);
        w.end_row();
      }
    }
    finish(w, c.out / "raw_errors.csv", study_meta);
  }
  return kExitOk;
}

int cmd_variance(const RunConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  const ModelDocument doc = read_model(c.model_path);
  const BasisSystem basis = build_basis(doc.basis, doc.region);
  validate(doc.params, basis, 1e-6);

  std::vector<PointPattern> patterns;
  FisherOptions fo;
  fo.mc_draws = c.fisher_draws;
  fo.seed = derive_seed(c.seed, "asymptotics", {0});
  if (c.fisher == "empirical") {
    patterns = sorted_by_id(read_patterns(c.input, doc.region));
  } else {
    fo.source = FisherOptions::Source::Generative;
  }
  prepare_output(c.out);
  const FisherInfo info = estimate_fisher(doc.params, basis, patterns, fo);
  const std::size_t n = patterns.empty() ? doc.replications : patterns.size();
  require(n >= 1, "the model records no replications; pass --input");
  // κ = √n ζ: the penalty's weight on the √n scale.
  const double kappa = std::sqrt(static_cast<double>(n)) * doc.zeta;
  const AsymptoticResult res =
      analyze(doc.params, basis, info, kappa, c.mc_draws, derive_seed(c.seed, "asymptotics", {1}));
  const std::vector<ConfidenceInterval> ci = confidence_intervals(res, n, c.level);
  const std::vector<std::string> names = parameter_names(doc.params.components(), doc.params.basis_size());

  std::vector<std::string> warnings;
  if (info.singular_warning) {
    warnings.push_back(fmt::format("information estimated from {} patterns for {} parameters; it is singular",
                                   info.patterns_used, info.dim()));
  } else if (!(info.min_eigenvalue > 0.0)) {
    warnings.push_back("information matrix is not positive definite");
  }
  if (res.ridge_added) warnings.push_back("a ridge was added to the information matrix in the delta QPs");
  const RunMetadata meta = metadata(c, warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  json j;
  j["method"] = to_string(res.method);
  j["kappa"] = kappa;
  j["n"] = n;
  j["level"] = c.level;
  j["draws"] = static_cast<std::size_t>(res.draws.rows());
  j["parameters"] = names;
  j["theta"] = to_json(res.theta);
  j["mean"] = to_json(res.mean);
  j["variances"] = to_json(res.variances);
  j["ridge_added"] = res.ridge_added;
  j["max_kkt_residual"] = res.max_kkt_residual;
  j["fisher"] = {{"source", c.fisher},
                 {"patterns_used", info.patterns_used},
                 {"mc_draws", info.mc_draws},
                 {"min_eigenvalue", finite_or_null(info.min_eigenvalue)},
                 {"max_eigenvalue", finite_or_null(info.max_eigenvalue)},
                 {"condition", finite_or_null(info.condition)},
                 {"singular_warning", info.singular_warning}};
  j["warnings"] = warnings;
  write_json(c.out / "asymptotics.json", j);
  write_metadata(c.out / "asymptotics.json", meta);

  CsvWriter w(c.out / "intervals.csv", {"parameter", "estimate", "lower", "upper", "active", "covers_zero"});
  for (std::size_t i = 0; i < ci.size(); ++i) {
    const bool covers = ci[i].lower <= 0.0 && ci[i].upper >= 0.0;
    w.field(names[i]).field(ci[i].estimate).field(ci[i].lower).field(ci[i].upper);
    w.field(res.active[i] ? 1 : 0).field(covers ? 1 : 0).end_row();
  }
  finish(w, c.out / "intervals.csv", meta);

  if (c.write_draws && res.draws.rows() > 0) {
    CsvWriter d(c.out / "draws.csv", names);
    for (Eigen::Index r = 0; r < res.draws.rows(); ++r) {
      for (Eigen::Index k = 0; k < res.draws.cols(); ++k) d.field(res.draws(r, k));
      d.end_row();
    }
    finish(d, c.out / "draws.csv", meta);
  }
  std::cout << "method " << to_string(res.method) << ", " << ci.size() << " intervals\n";
  return kExitOk;
}

int run_command(const RunConfig& c) {
  if (c.command == "fit") return cmd_fit(c);
  if (c.command == "cv") return cmd_cv(c);
  if (c.command == "simulate") return cmd_simulate(c);
  if (c.command == "variance") return cmd_variance(c);
  throw Error(ErrorKind::Config, "unknown command '" + c.command + "'");
}

}  // namespace icpp
