#include <gtest/gtest.h>

#include "wulffstab/app.hpp"
#include "wulffstab/grid.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wulffstab;
using app::ConfigError;
using app::parse_config;

namespace {

const std::string kData = WULFFSTAB_TEST_DATA;

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wulffstab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return app::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / ("wulffstab_cli_" + name)).string();
}

// Expects parse_config to fail at the given line and field.
void expect_config_error(const std::string& text, int line, const std::string& field) {
  try {
    parse_config(text);
    ADD_FAILURE() << "accepted:\n" << text;
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
    EXPECT_EQ(e.field(), field) << e.what();
  }
}

}  // namespace

TEST(Config, ParsesValues) {
  auto cf = parse_config(R"(# comment
dim = 3
integrand.kind = "perturbed"   # trailing comment
integrand.matrix = [[1, 0, 0], [0, 2, 0], [0, 0, 4]]
integrand.eps = 0.02
domain.eps = [0.1, 0.05]
grid.n = [16, 24]
output.report = "out/#1/report.json"
solver.boundary_closure = false
)");
  EXPECT_EQ(cf.dim, 3);
  EXPECT_EQ(cf.integrand_kind, "perturbed");
  ASSERT_EQ(cf.integrand_matrix.size(), 3u);
  EXPECT_EQ(cf.integrand_matrix[2][2], 4.0);
  EXPECT_EQ(cf.eps, (std::vector<double>{0.1, 0.05}));
  EXPECT_EQ(cf.h, (std::vector<double>{1.0 / 16, 1.0 / 24}));
  EXPECT_EQ(cf.output_report, "out/#1/report.json");
  EXPECT_FALSE(cf.solver_boundary_closure);
  EXPECT_EQ(cf.to_json()["integrand"]["kind"], "perturbed");
}

TEST(Config, DefaultsWhenEmpty) {
  auto cf = parse_config("");
  EXPECT_EQ(cf.dim, 3);
  EXPECT_EQ(cf.h, (std::vector<double>{1.0 / 24}));
  EXPECT_EQ(cf.eps, (std::vector<double>{0.0}));
}

TEST(Config, ErrorsNameLineAndField) {
  expect_config_error("dim = 3\nbogus.key = 1\n", 2, "bogus.key");
  expect_config_error("dim = 3\ndim = 2\n", 2, "dim");
  expect_config_error("\n\ndomain.eps = [0.1, \"x\"]\n", 3, "domain.eps");
  expect_config_error("domain.eps = [0.05, 0.1]\n", 1, "domain.eps");
  expect_config_error("grid.h = [0.1, 0.1]\n", 1, "grid.h");
  expect_config_error("integrand.kind = \"hexagonal\"\n", 1, "integrand.kind");
  expect_config_error("dim = 3\nintegrand.matrix = [[1, 0], [0, 1]]\n", 2, "integrand.matrix");
  expect_config_error("integrand.matrix = [[1, 0], [0]]\n", 1, "integrand.matrix");
  expect_config_error("dim = 2\nanalysis.p = 0.5\n", 2, "analysis.p");
  expect_config_error("analysis.surface_res = 12.5\n", 1, "analysis.surface_res");
  expect_config_error("dim = 3\nno equals sign\n", 2, "");
  expect_config_error("integrand.kind = \"perturbed\"\n", 0, "integrand.eps");
  try {
    parse_config("dim = 3\nbogus = 1\n");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'bogus'"), std::string::npos);
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}), 0);
  EXPECT_EQ(run_cli({}), 64);
  EXPECT_EQ(run_cli({"frobnicate"}), 64);
  EXPECT_EQ(run_cli({"deficits"}), 64);  // --config is required
  EXPECT_EQ(run_cli({"deficits", "--config", tmp("missing.cfg")}), 64);
  EXPECT_EQ(run_cli({"--threads", "0", "deficits", "--config", kData + "/small2d.cfg"}), 64);
  std::string bad = tmp("bad.cfg");
  std::ofstream(bad) << "domain.eps = [0.1, 0.2]\n";
  EXPECT_EQ(run_cli({"deficits", "--config", bad}), 64);
  // Every case fails: the run completes, writes its report and returns 2.
  std::string report = tmp("nonconvex.json");
  EXPECT_EQ(run_cli({"deficits", "--config", kData + "/nonconvex2d.cfg", "--out", report, tmp("nonconvex.csv")}), 2);
  auto j = nlohmann::json::parse(slurp(report));
  EXPECT_EQ(j["failures"], 2);
  EXPECT_EQ(j["cases"][0]["error"]["kind"], "domain-error");
}

TEST(Cli, GoldenTable) {
  std::string report = tmp("golden.json"), table = tmp("golden.csv");
  ASSERT_EQ(run_cli({"stability", "--config", kData + "/small2d.cfg", "--out", report, table}), 0);
  auto got = read_csv(table);
  auto want = read_csv(kData + "/small2d_table.csv");
  ASSERT_EQ(got.size(), want.size());
  ASSERT_EQ(got[0], want[0]);
  for (std::size_t r = 1; r < want.size(); ++r) {
    ASSERT_EQ(got[r].size(), want[r].size());
    for (std::size_t c = 0; c < want[r].size(); ++c) {
      char* end = nullptr;
      double w = std::strtod(want[r][c].c_str(), &end);
      if (end == want[r][c].c_str() || *end != '\0') {
        EXPECT_EQ(got[r][c], want[r][c]) << want[0][c];
        continue;
      }
      double g = std::stod(got[r][c]);
      if (std::isnan(w)) {
        EXPECT_TRUE(std::isnan(g)) << "row " << r << " column " << want[0][c];
        continue;
      }
      EXPECT_NEAR(g, w, 1e-6 * std::abs(w) + 1e-10) << "row " << r << " column " << want[0][c];
    }
  }
  auto j = nlohmann::json::parse(slurp(report));
  EXPECT_EQ(j["schema"], "wsr-1");
  EXPECT_TRUE(j["summary"]["monotone_hk"].get<bool>());
  EXPECT_FALSE(j["cases"][0].contains("seconds"));
}

TEST(Cli, DeterministicAcrossThreadCounts) {
  std::string t1 = tmp("t1.csv"), t3 = tmp("t3.csv");
  ASSERT_EQ(run_cli({"--threads", "1", "stability", "--config", kData + "/small2d.cfg", "--out", tmp("t1.json"), t1}),
            0);
  ASSERT_EQ(run_cli({"stability", "--threads", "3", "--config", kData + "/small2d.cfg", "--out", tmp("t3.json"), t3}),
            0);
  EXPECT_EQ(slurp(t1), slurp(t3));
  EXPECT_EQ(slurp(tmp("t1.json")), slurp(tmp("t3.json")));
}

TEST(Cli, TorsionSolveWritesField) {
  std::string field = tmp("field.wsf1");
  testing::internal::CaptureStdout();
  int code = run_cli({"torsion", "solve", "--config", kData + "/small2d.cfg", "--out", field});
  std::string out = testing::internal::GetCapturedStdout();
  ASSERT_EQ(code, 0);
  auto j = nlohmann::json::parse(out);
  // Two eps values: one dump per case, numbered before the extension.
  ASSERT_EQ(j["cases"].size(), 2u);
  for (int k = 0; k < 2; ++k) {
    const auto& c = j["cases"][k];
    EXPECT_LE(c["residual"].get<double>(), 1e-8);
    EXPECT_LE(c["max_abs_f"].get<double>(), c["c0_bound"].get<double>());
    std::string path = tmp("field_" + std::to_string(k) + ".wsf1");
    EXPECT_EQ(c["field"], path);
    Wsf1Data d = read_wsf1(path);
    EXPECT_EQ(d.dim, 2);
    EXPECT_DOUBLE_EQ(d.h, 1.0 / 24);
    EXPECT_TRUE(std::filesystem::exists(path + ".trace.csv"));
  }
}
