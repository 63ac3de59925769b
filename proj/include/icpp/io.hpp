#pragma once

// Event ingestion, region files, model documents and the CSV/JSON writers
// shared by the command-line tools.
//
// Doubles are written in shortest round-trip form, so a value read back is
// bit-identical and identical inputs give byte-identical files.

#include "icpp/basis.hpp"
#include "icpp/fit.hpp"
#include "icpp/geometry.hpp"
#include "icpp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace icpp {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kModelFormatVersion = 1;

// CSV with a header: replication_id,t (1-D) or replication_id,x,y (2-D).
// A row whose coordinate fields are all empty declares a replication with no
// events. Patterns keep first-appearance order. Every bad row (parse error,
// wrong field count, point outside the region) is reported with its line
// number in a single Ingestion error.
std::vector<PointPattern> parse_patterns(std::istream& in, const Region& region,
                                         const std::string& source = "<input>");
std::vector<PointPattern> read_patterns(const std::filesystem::path& path, const Region& region);

// Inverse of read_patterns.
void write_patterns(const std::filesystem::path& path, const std::vector<PointPattern>& patterns, int dimension);

// Polygon vertices from a CSV with header x,y.
Region read_polygon(const std::filesystem::path& path);

// "lo,hi" → interval; anything else is taken as a polygon CSV path.
Region parse_region(const std::string& spec, int dimension);

// Everything needed to rebuild a BasisSystem.
struct BasisSpec {
  BasisFamily family = BasisFamily::CubicBSpline1D;
  BasisLayout layout{};
  int quadrature_resolution = 64;
};

BasisSystem build_basis(const BasisSpec& spec, const Region& region);

// A fitted model as stored in model.json.
struct ModelDocument {
  Region region = Region::interval(0.0, 1.0);
  BasisSpec basis;
  ModelParams params;
  double zeta = 0.0;
  std::size_t replications = 0;
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
  int em_steps = 0;
  bool exact_e_step = false;
  std::vector<bool> starved;
  std::vector<std::string> ids;
  std::vector<Eigen::VectorXd> posterior_scores;   // E[U_k | x_i] per replication
  std::vector<Eigen::MatrixXd> gamma;              // per replication, m × p
};

ModelDocument make_document(const FitResult& fit, const std::vector<PointPattern>& patterns,
                            const Region& region, const BasisSpec& basis, double zeta);
void write_model(const std::filesystem::path& path, const ModelDocument& doc);
// Throws Ingestion for unreadable, malformed or newer-version documents.
ModelDocument read_model(const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(std::size_t v);
  CsvWriter& field(int v);
  void end_row();
  // Flushes and throws on write failure.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool row_started_ = false;
};

// Sidecar `<file>.meta.json` with the config hash, seed and tool version.
struct RunMetadata {
  std::string command;
  std::string config_hash;   // 16 hex digits
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> warnings;
};
void write_metadata(const std::filesystem::path& artifact, const RunMetadata& meta);

std::string hex64(std::uint64_t v);

}  // namespace icpp
