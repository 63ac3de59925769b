#pragma once

// The four subcommands behind the `icpp` executable. Each takes a validated
// RunConfig, writes its artifacts (each with a `.meta.json` sidecar) into
// `out`, and returns the process exit code.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace icpp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

struct RunConfig {
  std::string command;                 // fit | cv | simulate | variance
  std::filesystem::path input;         // events CSV
  std::string region = "0,1";          // "lo,hi" or polygon CSV
  int dim = 1;
  std::string basis = "bspline";       // bspline | rbf
  int knots = 10;
  int center_rows = 7;
  int center_cols = 7;
  double bandwidth = 0.0;              // <= 0: 1.2 × centre spacing
  int quadrature_resolution = 64;

  std::size_t p = 2;
  std::vector<std::size_t> p_grid;
  double zeta = 1e-6;
  std::vector<double> zeta_grid;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  // Held-out likelihood draws (cv), δ draws (variance), CV draws (simulate).
  std::size_t mc_draws = 4000;
  std::size_t reps = 50;
  std::filesystem::path out = ".";
  int threads = 1;

  // EM tuning.
  int max_iters = 200;
  std::size_t gibbs_sweeps = 20;
  double tol = 1e-5;
  std::size_t monitor_draws = 400;

  // fit / cv outputs.
  std::size_t grid_points = 512;       // per axis in 2-D: grid_points / 4
  std::vector<std::string> intensity_ids;   // empty: every replication

  // simulate.
  std::string mode = "generate";       // generate | table1 | table2
  std::string model = "model2";
  std::size_t n = 150;
  int cv_warm_iters = 6;
  bool raw = false;                    // per-replication error dump

  // variance.
  std::filesystem::path model_path;
  std::string fisher = "empirical";    // empirical | generative
  std::size_t fisher_draws = 1000;
  double level = 0.95;
  bool write_draws = false;

  // Throws Config on out-of-range values or missing files, before any work.
  void validate() const;
};

// FNV-1a of the canonical JSON of every field that affects results (the
// output directory and thread count are excluded).
std::string config_hash(const RunConfig& config);
std::string config_json(const RunConfig& config);

int cmd_fit(const RunConfig& config);
int cmd_cv(const RunConfig& config);
int cmd_simulate(const RunConfig& config);
int cmd_variance(const RunConfig& config);

// Dispatches on config.command.
int run_command(const RunConfig& config);

}  // namespace icpp
