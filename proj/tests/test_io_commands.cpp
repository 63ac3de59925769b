#include "icpp/commands.hpp"
#include "icpp/errors.hpp"
#include "icpp/io.hpp"
#include "icpp/simulation.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace icpp;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test.
class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("icpp_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

using Table = std::vector<std::vector<std::string>>;

// Header row first. No quoting: ids and numbers never contain commas.
Table read_csv(const fs::path& p) {
  std::ifstream in(p);
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    t.push_back(row);
  }
  return t;
}

std::size_t column(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.front().size(); ++i) {
    if (t.front()[i] == name) return i;
  }
  ADD_FAILURE() << "no column " << name;
  return 0;
}

// Model 2 data with one empty replication added.
fs::path write_events(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  GeneratedData d = generate_data(GenModel::model2(), n, seed);
  d.patterns.push_back({"zz_empty", {}});
  const fs::path path = dir / "events.csv";
  write_patterns(path, d.patterns, 1);
  return path;
}

RunConfig quick_fit(const fs::path& input, const fs::path& out) {
  RunConfig c;
  c.command = "fit";
  c.input = input;
  c.out = out;
  c.knots = 6;
  c.p = 2;
  c.zeta = 1e-4;
  c.max_iters = 6;
  c.gibbs_sweeps = 10;
  c.monitor_draws = 50;
  c.grid_points = 64;
  c.seed = 3;
  return c;
}

std::vector<fs::path> files_in(const fs::path& dir) {
  std::vector<fs::path> v;
  for (const auto& e : fs::directory_iterator(dir)) v.push_back(e.path().filename());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Ingestion, ReportsEveryBadRowWithItsLine) {
  std::istringstream in("replication_id,t\na,0.5\nb,abc\nc,1.5\n\nd,0.1,0.2\n,0.3\n");
  try {
    parse_patterns(in, Region::interval(0.0, 1.0), "ev.csv");
    FAIL() << "expected an ingestion error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Ingestion);
    const std::string msg = e.what();
    for (const char* where : {"ev.csv:3:", "ev.csv:4:", "ev.csv:6:", "ev.csv:7:"}) {
      EXPECT_NE(msg.find(where), std::string::npos) << where << " missing from\n" << msg;
    }
    EXPECT_EQ(msg.find("ev.csv:2:"), std::string::npos);
  }
}

TEST(Ingestion, HeaderEmptyRowsAndOrder) {
  std::istringstream in("Replication_ID,t\r\nb,0.25\na,\nb,0.75\n");
  const auto pats = parse_patterns(in, Region::interval(0.0, 1.0));
  ASSERT_EQ(pats.size(), 2u);
  EXPECT_EQ(pats[0].id, "b");
  EXPECT_EQ(pats[0].size(), 2u);
  EXPECT_EQ(pats[1].id, "a");
  EXPECT_EQ(pats[1].size(), 0u);
  std::istringstream bad("id,t\na,0.5\n");
  EXPECT_THROW(parse_patterns(bad, Region::interval(0.0, 1.0)), Error);
  std::istringstream empty("");
  EXPECT_THROW(parse_patterns(empty, Region::interval(0.0, 1.0)), Error);
}

TEST_F(Scratch, PatternsRoundTripExactly) {
  Rng rng = make_rng(1);
  std::vector<PointPattern> pats;
  for (std::size_t i = 0; i < 6; ++i) pats.push_back(icpp::testing::uniform_pattern(i, rng, "p" + std::to_string(i)));
  write_patterns(dir_ / "a.csv", pats, 1);
  const auto back = read_patterns(dir_ / "a.csv", Region::interval(0.0, 1.0));
  ASSERT_EQ(back.size(), pats.size());
  for (std::size_t i = 0; i < pats.size(); ++i) {
    EXPECT_EQ(back[i].id, pats[i].id);
    ASSERT_EQ(back[i].size(), pats[i].size());
    for (std::size_t j = 0; j < pats[i].size(); ++j) EXPECT_EQ(back[i].points[j].x, pats[i].points[j].x);
  }
}

TEST(Ingestion, ShortestRoundTripDoubles) {
  Rng rng = make_rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(uniform01(rng) - 0.5, static_cast<int>(uniform01(rng) * 80) - 40);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST_F(Scratch, ModelDocumentRoundTrip) {
  const BasisSpec spec{BasisFamily::CubicBSpline1D, BasisLayout{}, 64};
  const BasisSystem b = build_basis(spec, Region::interval(0.0, 1.0));
  Rng rng = make_rng(3);
  ModelDocument doc;
  doc.basis = spec;
  doc.params = icpp::testing::random_model(3, b, rng);
  doc.zeta = 3e-5;
  doc.replications = 17;
  doc.objective_trace = {-10.5, -9.25};
  doc.starved = {false, true, false};
  write_model(dir_ / "m.json", doc);
  const ModelDocument back = read_model(dir_ / "m.json");
  EXPECT_EQ(back.params.coeffs, doc.params.coeffs);
  EXPECT_EQ(back.params.scores.alphas, doc.params.scores.alphas);
  EXPECT_EQ(back.params.scores.beta, doc.params.scores.beta);
  EXPECT_EQ(back.zeta, doc.zeta);
  EXPECT_EQ(back.replications, 17u);
  EXPECT_EQ(back.objective_trace, doc.objective_trace);
  EXPECT_EQ(back.starved, doc.starved);
  EXPECT_EQ(build_basis(back.basis, back.region).size(), b.size());

  std::ofstream(dir_ / "bad.json") << "{\"format\": \"icpp-model\", \"format_version\": 99}";
  EXPECT_THROW(read_model(dir_ / "bad.json"), Error);
  std::ofstream(dir_ / "junk.json") << "not json";
  EXPECT_THROW(read_model(dir_ / "junk.json"), Error);
}

TEST_F(Scratch, FitWritesArtifactsAndSidecars) {
  const fs::path ev = write_events(dir_, 25, 4);
  RunConfig c = quick_fit(ev, dir_ / "out");
  const int code = cmd_fit(c);
  EXPECT_TRUE(code == kExitOk || code == kExitNotConverged);
  for (const char* f : {"model.json", "components.csv", "scores.csv", "assignments.csv", "intensities.csv"}) {
    ASSERT_TRUE(fs::exists(c.out / f)) << f;
    const std::string meta = slurp(c.out / (std::string(f) + ".meta.json"));
    EXPECT_NE(meta.find(config_hash(c)), std::string::npos) << f;
    EXPECT_NE(meta.find(kVersion), std::string::npos) << f;
  }
  const ModelDocument doc = read_model(c.out / "model.json");
  EXPECT_FALSE(doc.objective_trace.empty());

  // Every point's γ row sums to one and names its argmax.
  const Table asg = read_csv(c.out / "assignments.csv");
  const std::size_t g1 = column(asg, "gamma_1"), comp = column(asg, "component");
  ASSERT_GT(asg.size(), 100u);
  for (std::size_t r = 1; r < asg.size(); ++r) {
    const double a = std::stod(asg[r][g1]), b = std::stod(asg[r][g1 + 1]);
    EXPECT_NEAR(a + b, 1.0, 1e-8);
    EXPECT_EQ(asg[r][comp], a >= b ? "1" : "2");
  }

  // The empty replication keeps its prior mean scaled by 1/(1 + β).
  const Table sc = read_csv(c.out / "scores.csv");
  const auto& last = sc.back();
  ASSERT_EQ(last[0], "zz_empty");
  EXPECT_EQ(last[1], "0");
  const double beta = doc.params.scores.beta;
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double expected = doc.params.scores.alphas[k] * beta / (1.0 + beta);
    EXPECT_NEAR(std::stod(last[2 + static_cast<std::size_t>(k)]), expected, 1e-12 * expected);
  }

  const Table comps = read_csv(c.out / "components.csv");
  EXPECT_EQ(comps.size(), 65u);
  EXPECT_EQ(comps.front(), (std::vector<std::string>{"t", "phi_1", "phi_2"}));
  const Table lam = read_csv(c.out / "intensities.csv");
  EXPECT_EQ(lam.size(), 26u * 64u + 1u);
}

TEST_F(Scratch, FourBumpFitHasUnitMassComponents) {
  const Region r = Region::interval(0.0, 1.0);
  std::vector<GaussianBump> bumps;
  for (double ctr : {0.15, 0.4, 0.6, 0.85}) bumps.push_back(GaussianBump::normalized(ctr, 300.0));
  std::vector<PointPattern> pats;
  Rng rng = make_rng(5);
  for (std::size_t i = 0; i < 40; ++i) {
    Eigen::Vector4d u;
    for (int k = 0; k < 4; ++k) u[k] = 5.0 + 20.0 * uniform01(rng);
    auto lam = [&](const Point& t) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += u[k] * bumps[static_cast<std::size_t>(k)](t.x);
      return s;
    };
    pats.push_back(sample_intensity(lam, r, 100 + i, "r" + std::to_string(1000 + i)));
  }
  write_patterns(dir_ / "ev.csv", pats, 1);
  RunConfig c = quick_fit(dir_ / "ev.csv", dir_ / "out");
  c.p = 4;
  c.knots = 14;
  c.intensity_ids = {"r1003"};
  cmd_fit(c);
  const ModelDocument doc = read_model(c.out / "model.json");
  const BasisSystem b = build_basis(doc.basis, doc.region);
  ASSERT_EQ(doc.params.components(), 4u);
  for (Eigen::Index k = 0; k < 4; ++k) {
    EXPECT_NEAR(b.integrals().dot(doc.params.coeffs.row(k).transpose()), 1.0, 1e-6);
    EXPECT_GE(doc.params.coeffs.row(k).minCoeff(), 0.0);
  }
  EXPECT_EQ(read_csv(c.out / "components.csv").front().size(), 5u);
  const Table lam = read_csv(c.out / "intensities.csv");
  EXPECT_EQ(lam.size(), 65u);
  EXPECT_EQ(lam[1][0], "r1003");
  c.intensity_ids = {"nope"};
  EXPECT_THROW(cmd_fit(c), Error);
}

TEST_F(Scratch, RepeatedFitIsByteIdentical) {
  const fs::path ev = write_events(dir_, 20, 6);
  RunConfig a = quick_fit(ev, dir_ / "a");
  RunConfig b = quick_fit(ev, dir_ / "b");
  cmd_fit(a);
  cmd_fit(b);
  const auto names = files_in(a.out);
  ASSERT_EQ(names, files_in(b.out));
  ASSERT_EQ(names.size(), 10u);
  for (const auto& f : names) EXPECT_EQ(slurp(a.out / f), slurp(b.out / f)) << f;
  RunConfig other = quick_fit(ev, dir_ / "c");
  other.seed = 4;
  cmd_fit(other);
  EXPECT_NE(slurp(a.out / "model.json"), slurp(other.out / "model.json"));
}

TEST_F(Scratch, SingleCellCvMatchesFit) {
  const fs::path ev = write_events(dir_, 20, 7);
  RunConfig f = quick_fit(ev, dir_ / "fit");
  RunConfig c = f;
  c.command = "cv";
  c.out = dir_ / "cv";
  c.p_grid = {2};
  c.zeta_grid = {1e-4};
  c.folds = 3;
  c.mc_draws = 200;
  cmd_fit(f);
  cmd_cv(c);
  for (const char* name : {"model.json", "components.csv", "scores.csv", "assignments.csv", "intensities.csv"}) {
    EXPECT_EQ(slurp(f.out / name), slurp(c.out / name)) << name;
  }
  const Table cv = read_csv(c.out / "cv.csv");
  ASSERT_EQ(cv.size(), 2u);
  EXPECT_EQ(cv[0], (std::vector<std::string>{"p", "zeta", "cv_score", "cv_se", "n_invalid_folds"}));
}

TEST_F(Scratch, FourCellCvTable) {
  const fs::path ev = write_events(dir_, 18, 8);
  RunConfig c = quick_fit(ev, dir_ / "cv");
  c.command = "cv";
  c.p_grid = {1, 2};
  c.zeta_grid = {1e-5, 1e-3};
  c.folds = 3;
  c.mc_draws = 200;
  c.max_iters = 3;
  cmd_cv(c);
  const Table cv = read_csv(c.out / "cv.csv");
  EXPECT_EQ(cv.size(), 5u);
  EXPECT_TRUE(fs::exists(c.out / "cv.csv.meta.json"));
  EXPECT_TRUE(fs::exists(c.out / "model.json"));
}

TEST_F(Scratch, TooManyFoldsIsAConfigErrorBeforeFitting) {
  const fs::path ev = write_events(dir_, 5, 9);
  RunConfig c = quick_fit(ev, dir_ / "cv");
  c.command = "cv";
  c.folds = 10;
  try {
    cmd_cv(c);
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  EXPECT_FALSE(fs::exists(c.out));
}

TEST(RunConfigValidation, RangesAndFiles) {
  RunConfig c;
  c.command = "fit";
  c.input = "/nonexistent/events.csv";
  EXPECT_THROW(c.validate(), Error);
  c.command = "simulate";
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(RunConfig&)>>{
           [](RunConfig& r) { r.command = "plot"; }, [](RunConfig& r) { r.knots = 1; },
           [](RunConfig& r) { r.p = 0; }, [](RunConfig& r) { r.zeta = -1.0; },
           [](RunConfig& r) { r.zeta_grid = {1e-3, std::nan("")}; }, [](RunConfig& r) { r.folds = 1; },
           [](RunConfig& r) { r.threads = 0; }, [](RunConfig& r) { r.basis = "rbf"; },
           [](RunConfig& r) { r.mode = "table3"; }, [](RunConfig& r) { r.reps = 1; r.mode = "table1"; },
           [](RunConfig& r) { r.level = 1.0; }}) {
    RunConfig bad = c;
    mutate(bad);
    try {
      bad.validate();
      ADD_FAILURE() << "accepted an invalid config";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
  }
}

TEST(RunConfigValidation, HashIgnoresOutputAndThreads) {
  RunConfig a;
  a.command = "fit";
  RunConfig b = a;
  b.out = "/elsewhere";
  b.threads = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST_F(Scratch, GenerateThenIngestKeepsCounts) {
  RunConfig c;
  c.command = "simulate";
  c.mode = "generate";
  c.model = "model1";
  c.n = 40;
  c.seed = 11;
  c.out = dir_;
  ASSERT_EQ(cmd_simulate(c), kExitOk);
  const GeneratedData truth = generate_data(GenModel::model1(), 40, derive_seed(11, "sim"));
  const auto back = read_patterns(dir_ / "events.csv", Region::interval(0.0, 1.0));
  ASSERT_EQ(back.size(), truth.patterns.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, truth.patterns[i].id);
    EXPECT_EQ(back[i].size(), truth.patterns[i].size());
  }
  EXPECT_EQ(read_csv(dir_ / "true_scores.csv").size(), 41u);
  EXPECT_TRUE(fs::exists(dir_ / "events.csv.meta.json"));
}

TEST_F(Scratch, TinyTableOneHasErrorColumns) {
  RunConfig c;
  c.command = "simulate";
  c.mode = "table1";
  c.n = 12;
  c.reps = 2;
  c.knots = 5;
  c.zeta_grid = {1e-5, 1e-4};
  c.folds = 3;
  c.mc_draws = 200;
  c.max_iters = 3;
  c.gibbs_sweeps = 10;
  c.monitor_draws = 50;
  c.raw = true;
  c.out = dir_;
  ASSERT_EQ(cmd_simulate(c), kExitOk);
  const Table t = read_csv(dir_ / "table1.csv");
  ASSERT_EQ(t.size(), 5u);   // 2 policies × 2 components
  for (const char* col : {"bias", "std", "rmse", "bias_se", "std_se", "rmse_se", "valid"}) column(t, col);
  for (std::size_t r = 1; r < t.size(); ++r) {
    const double b = std::stod(t[r][column(t, "bias")]), s = std::stod(t[r][column(t, "std")]);
    const double e = std::stod(t[r][column(t, "rmse")]);
    EXPECT_NEAR(e * e, b * b + s * s, 1e-9 * std::max(e * e, 1e-12));
  }
  EXPECT_EQ(read_csv(dir_ / "raw_errors.csv").size(), 5u);   // 2 reps × 2 ζ
}

namespace {

// A model document with n recorded replications and the given coefficients.
fs::path write_synthetic_model(const fs::path& dir, const Eigen::MatrixXd& coeffs, const BasisSpec& spec) {
  ModelDocument doc;
  doc.basis = spec;
  doc.params.coeffs = coeffs;
  doc.params.scores.alphas = Eigen::Vector2d(4.0, 6.0);
  doc.params.scores.beta = 2.0;
  doc.zeta = 0.0;
  doc.replications = 400;
  const fs::path path = dir / "model.json";
  write_model(path, doc);
  return path;
}

}  // namespace

TEST_F(Scratch, VarianceInteriorAndBoundary) {
  BasisSpec spec;
  spec.layout.knots = 4;
  const BasisSystem b = build_basis(spec, Region::interval(0.0, 1.0));
  Rng rng = make_rng(12);
  const ModelParams interior = icpp::testing::random_model(2, b, rng);

  RunConfig c;
  c.command = "variance";
  c.fisher = "generative";
  c.fisher_draws = 2000;
  c.mc_draws = 500;
  c.model_path = write_synthetic_model(dir_, interior.coeffs, spec);
  c.out = dir_ / "interior";
  ASSERT_EQ(cmd_variance(c), kExitOk);
  EXPECT_NE(slurp(c.out / "asymptotics.json").find("\"interior-closed-form\""), std::string::npos);
  const Table ci = read_csv(c.out / "intervals.csv");
  ASSERT_EQ(ci.size(), 1u + 2u * b.size() + 3u);
  const std::size_t lo = column(ci, "lower"), hi = column(ci, "upper"), flag = column(ci, "covers_zero");
  for (std::size_t r = 1; r < ci.size(); ++r) {
    const bool covers = std::stod(ci[r][lo]) <= 0.0 && std::stod(ci[r][hi]) >= 0.0;
    EXPECT_EQ(ci[r][flag], covers ? "1" : "0") << ci[r][0];
  }
  EXPECT_TRUE(fs::exists(c.out / "intervals.csv.meta.json"));

  // Zero one coefficient of the first component and restore unit mass.
  Eigen::MatrixXd boundary = interior.coeffs;
  boundary(0, 1) = 0.0;
  boundary.row(0) /= b.integrals().dot(boundary.row(0).transpose());
  c.model_path = write_synthetic_model(dir_, boundary, spec);
  c.out = dir_ / "boundary";
  ASSERT_EQ(cmd_variance(c), kExitOk);
  EXPECT_NE(slurp(c.out / "asymptotics.json").find("\"qp-monte-carlo\""), std::string::npos);
  const Table cb = read_csv(c.out / "intervals.csv");
  ASSERT_EQ(cb[2][0], "c[1][2]");
  EXPECT_EQ(std::stod(cb[2][lo]), 0.0);
  EXPECT_EQ(cb[2][column(cb, "active")], "1");
  EXPECT_EQ(cb[2][flag], "1");
}
