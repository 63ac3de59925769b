#include "icpp/io.hpp"

#include "icpp/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace icpp {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Comma-separated fields; double quotes protect commas, "" is a literal quote.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw Error(ErrorKind::Ingestion, "ragged matrix in model document");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw Error(ErrorKind::Config, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::vector<PointPattern> parse_patterns(std::istream& in, const Region& region, const std::string& source) {
  const int dim = region.dimension();
  const std::vector<std::string> expected =
      dim == 1 ? std::vector<std::string>{"replication_id", "t"} : std::vector<std::string>{"replication_id", "x", "y"};
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<std::string> problems;
  std::size_t problem_count = 0;
  auto report = [&](std::size_t ln, const std::string& msg) {
    ++problem_count;
    if (problems.size() < 20) problems.push_back(fmt::format("{}:{}: {}", source, ln, msg));
  };

  std::vector<PointPattern> out;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split_csv(line);
    if (!have_header) {
      have_header = true;
      std::vector<std::string> got;
      for (auto& s : f) got.push_back(lower(s));
      if (got != expected) {
        std::string want;
        for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
        throw Error(ErrorKind::Ingestion, fmt::format("{}:{}: expected header '{}'", source, lineno, want));
      }
      continue;
    }
    if (f.size() != expected.size()) {
      report(lineno, fmt::format("expected {} fields, found {}", expected.size(), f.size()));
      continue;
    }
    const std::string& id = f[0];
    if (id.empty()) {
      report(lineno, "empty replication id");
      continue;
    }
    const bool all_empty = std::all_of(f.begin() + 1, f.end(), [](const std::string& s) { return s.empty(); });
    std::optional<Point> pt;
    if (!all_empty) {
      Point t;
      if (!parse_number(f[1], t.x) || (dim == 2 && !parse_number(f[2], t.y))) {
        report(lineno, "coordinates are not finite numbers");
        continue;
      }
      if (!region.contains(t)) {
        report(lineno, dim == 1 ? fmt::format("t = {} lies outside the region", f[1])
                                : fmt::format("({}, {}) lies outside the region", f[1], f[2]));
        continue;
      }
      pt = t;
    }
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back(PointPattern{id, {}});
    if (pt) out[it->second].points.push_back(*pt);
  }
  if (!have_header) throw Error(ErrorKind::Ingestion, source + ": empty input, no header");
  if (problem_count > 0) {
    std::string msg = fmt::format("{} bad row(s)", problem_count);
    for (const auto& p : problems) msg += "\n  " + p;
    if (problem_count > problems.size()) msg += fmt::format("\n  ... and {} more", problem_count - problems.size());
    throw Error(ErrorKind::Ingestion, msg);
  }
  return out;
}

std::vector<PointPattern> read_patterns(const std::filesystem::path& path, const Region& region) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Ingestion, "cannot open " + path.string());
  return parse_patterns(in, region, path.string());
}

void write_patterns(const std::filesystem::path& path, const std::vector<PointPattern>& patterns, int dimension) {
  CsvWriter w(path, dimension == 1 ? std::vector<std::string>{"replication_id", "t"}
                                   : std::vector<std::string>{"replication_id", "x", "y"});
  for (const auto& pat : patterns) {
    if (pat.points.empty()) {
      w.field(pat.id).field(std::string());
      if (dimension == 2) w.field(std::string());
      w.end_row();
    }
    for (const auto& t : pat.points) {
      w.field(pat.id).field(t.x);
      if (dimension == 2) w.field(t.y);
      w.end_row();
    }
  }
  w.close();
}

Region read_polygon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidRegion, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<Point> v;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (!have_header) {
      have_header = true;
      if (f.size() != 2 || lower(f[0]) != "x" || lower(f[1]) != "y") {
        throw Error(ErrorKind::InvalidRegion, fmt::format("{}:{}: expected header 'x,y'", path.string(), lineno));
      }
      continue;
    }
    Point t;
    if (f.size() != 2 || !parse_number(f[0], t.x) || !parse_number(f[1], t.y)) {
      throw Error(ErrorKind::InvalidRegion, fmt::format("{}:{}: expected two numbers", path.string(), lineno));
    }
    v.push_back(t);
  }
  return Region::polygon(std::move(v));
}

Region parse_region(const std::string& spec, int dimension) {
  if (dimension == 1) {
    const std::vector<std::string> f = split_csv(spec);
    double lo = 0.0;
    double hi = 0.0;
    if (f.size() != 2 || !parse_number(f[0], lo) || !parse_number(f[1], hi)) {
      throw Error(ErrorKind::InvalidRegion, "1-D region must be given as 'lo,hi', got '" + spec + "'");
    }
    return Region::interval(lo, hi);
  }
  if (dimension == 2) return read_polygon(spec);
  throw Error(ErrorKind::Config, "dimension must be 1 or 2");
}

BasisSystem build_basis(const BasisSpec& spec, const Region& region) {
  return build_basis(spec.family, region, spec.layout, build_quadrature(region, spec.quadrature_resolution));
}

ModelDocument make_document(const FitResult& fit, const std::vector<PointPattern>& patterns, const Region& region,
                            const BasisSpec& basis, double zeta) {
  ModelDocument d{region, {}, {}, 0.0, 0, {}, false, 0, 0, false, {}, {}, {}, {}};
  d.basis = basis;
  d.params = fit.params;
  d.zeta = zeta;
  d.replications = patterns.size();
  d.objective_trace = fit.objective_trace;
  d.converged = fit.converged;
  d.iterations = fit.iterations;
  d.em_steps = fit.em_steps;
  d.exact_e_step = fit.exact_e_step;
  d.starved = fit.starved;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    d.ids.push_back(patterns[i].id);
    d.posterior_scores.push_back(fit.e_stats.reps[i].euk);
    d.gamma.push_back(fit.e_stats.reps[i].gamma);
  }
  return d;
}

void write_model(const std::filesystem::path& path, const ModelDocument& doc) {
  json j;
  j["format"] = "icpp-model";
  j["format_version"] = kModelFormatVersion;
  j["tool_version"] = kVersion;
  json region;
  region["dimension"] = doc.region.dimension();
  if (doc.region.dimension() == 1) {
    region["interval"] = {doc.region.bounds().lo.x, doc.region.bounds().hi.x};
  } else {
    json verts = json::array();
    for (const auto& v : doc.region.vertices()) verts.push_back({v.x, v.y});
    region["polygon"] = std::move(verts);
  }
  j["region"] = std::move(region);
  j["basis"] = {{"family", to_string(doc.basis.family)},
                {"knots", doc.basis.layout.knots},
                {"center_rows", doc.basis.layout.center_rows},
                {"center_cols", doc.basis.layout.center_cols},
                {"bandwidth", doc.basis.layout.bandwidth},
                {"quadrature_resolution", doc.basis.quadrature_resolution}};
  j["p"] = doc.params.components();
  j["q"] = doc.params.basis_size();
  j["zeta"] = doc.zeta;
  j["replications"] = doc.replications;
  j["coefficients"] = matrix_json(doc.params.coeffs);
  j["alphas"] = vector_json(doc.params.scores.alphas);
  j["beta"] = doc.params.scores.beta;
  j["objective_trace"] = doc.objective_trace;
  j["converged"] = doc.converged;
  j["iterations"] = doc.iterations;
  j["em_steps"] = doc.em_steps;
  j["exact_e_step"] = doc.exact_e_step;
  j["starved"] = doc.starved;
  json reps = json::array();
  for (std::size_t i = 0; i < doc.ids.size(); ++i) {
    reps.push_back({{"id", doc.ids[i]},
                    {"posterior_scores", vector_json(doc.posterior_scores[i])},
                    {"gamma", matrix_json(doc.gamma[i])}});
  }
  j["replication_stats"] = std::move(reps);
  write_text(path, j.dump(1) + "\n");
}

ModelDocument read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Ingestion, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Ingestion, path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "icpp-model") throw Error(ErrorKind::Ingestion, path.string() + ": not a model document");
    const int version = j.at("format_version").get<int>();
    if (version > kModelFormatVersion) {
      throw Error(ErrorKind::Ingestion, fmt::format("{}: format version {} is newer than supported {}", path.string(),
                                                    version, kModelFormatVersion));
    }
    const json& r = j.at("region");
    Region region = Region::interval(0.0, 1.0);
    if (r.at("dimension").get<int>() == 1) {
      region = Region::interval(r.at("interval")[0].get<double>(), r.at("interval")[1].get<double>());
    } else {
      std::vector<Point> v;
      for (const auto& p : r.at("polygon")) v.push_back({p[0].get<double>(), p[1].get<double>()});
      region = Region::polygon(std::move(v));
    }
    ModelDocument d{region, {}, {}, 0.0, 0, {}, false, 0, 0, false, {}, {}, {}, {}};
    const json& b = j.at("basis");
    d.basis.family = basis_family_from_string(b.at("family").get<std::string>());
    d.basis.layout.knots = b.at("knots").get<int>();
    d.basis.layout.center_rows = b.at("center_rows").get<int>();
    d.basis.layout.center_cols = b.at("center_cols").get<int>();
    d.basis.layout.bandwidth = b.at("bandwidth").get<double>();
    d.basis.quadrature_resolution = b.at("quadrature_resolution").get<int>();
    const auto q = j.at("q").get<Eigen::Index>();
    d.params.coeffs = matrix_from(j.at("coefficients"), q);
    d.params.scores.alphas = vector_from(j.at("alphas"));
    d.params.scores.beta = j.at("beta").get<double>();
    if (d.params.coeffs.rows() != j.at("p").get<Eigen::Index>() || d.params.scores.alphas.size() != d.params.coeffs.rows()) {
      throw Error(ErrorKind::Ingestion, path.string() + ": inconsistent component count");
    }
    d.zeta = j.at("zeta").get<double>();
    d.replications = j.at("replications").get<std::size_t>();
    d.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    d.converged = j.at("converged").get<bool>();
    d.iterations = j.at("iterations").get<int>();
    d.em_steps = j.at("em_steps").get<int>();
    d.exact_e_step = j.at("exact_e_step").get<bool>();
    d.starved = j.at("starved").get<std::vector<bool>>();
    for (const auto& rep : j.at("replication_stats")) {
      d.ids.push_back(rep.at("id").get<std::string>());
      d.posterior_scores.push_back(vector_from(rep.at("posterior_scores")));
      d.gamma.push_back(matrix_from(rep.at("gamma"), d.params.coeffs.rows()));
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Ingestion, path.string() + ": " + e.what());
  }
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw Error(ErrorKind::Config, "cannot write " + path.string());
  for (const auto& h : header) field(h);
  end_row();
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (row_started_) out_ << ',';
  out_ << csv_escape(s);
  row_started_ = true;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }
CsvWriter& CsvWriter::field(std::size_t v) { return field(std::to_string(v)); }
CsvWriter& CsvWriter::field(int v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  out_ << '\n';
  row_started_ = false;
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw Error(ErrorKind::Config, "write failed for " + path_.string());
}

void write_metadata(const std::filesystem::path& artifact, const RunMetadata& meta) {
  json j;
  j["file"] = artifact.filename().string();
  j["command"] = meta.command;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  j["threads"] = meta.threads;
  j["version"] = kVersion;
  j["warnings"] = meta.warnings;
  std::filesystem::path side = artifact;
  side += ".meta.json";
  write_text(side, j.dump(1) + "\n");
}

}  // namespace icpp
