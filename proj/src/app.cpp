#include "experiment.hpp"

#include "wulffstab/core.hpp"

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

namespace wulffstab::app {

namespace {

constexpr int kExitUsage = 64;

int thread_count(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("WULFFSTAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError(0, "WULFFSTAB_THREADS", std::string("expected a positive integer, got '") + env + "'");
    return static_cast<int>(v);
  }
  return 0;  // library default
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App cli{"Anisotropic Wulff-shape stability toolkit"};
  cli.require_subcommand(1);
  cli.fallthrough();  // global options may also follow the subcommand
  std::string config;
  std::vector<std::string> out;
  int threads = 0;
  bool verbose = false;
  cli.add_option("--threads", threads, "worker threads (default: WULFFSTAB_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  cli.add_flag("-v,--verbose", verbose, "progress on stderr");

  auto with_io = [&](CLI::App* sub, const char* out_help, int max_out) {
    sub->add_option("--config", config, "config file")->required();
    sub->add_option("--out", out, out_help)->expected(1, max_out);
  };
  CLI::App* integrand = cli.add_subcommand("integrand", "integrand utilities")->require_subcommand(1);
  CLI::App* check = integrand->add_subcommand("check", "validate the integrand identities");
  with_io(check, "report JSON path (default: stdout)", 1);
  CLI::App* torsion = cli.add_subcommand("torsion", "torsion problem")->require_subcommand(1);
  CLI::App* solve = torsion->add_subcommand("solve", "solve the torsion problem");
  with_io(solve, "WSF1 field dump path (a .trace.csv is written beside it)", 1);
  CLI::App* surface = cli.add_subcommand("surface", "boundary surfaces")->require_subcommand(1);
  CLI::App* curv = surface->add_subcommand("curvature", "anisotropic curvature of the boundary");
  with_io(curv, "surface CSV path", 1);
  CLI::App* deficits = cli.add_subcommand("deficits", "deficits, identities and fitted Wulff spheres per case");
  with_io(deficits, "report.json [table.csv]", 2);
  CLI::App* stability = cli.add_subcommand("stability", "deficits plus the bounded-ratio summary");
  with_io(stability, "report.json [table.csv]", 2);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = cli.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    int nt = thread_count(threads);
    std::unique_ptr<tbb::global_control> gc;
    if (nt > 0) gc = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, nt);
    ExperimentConfig cf = load_config(config);
    RunContext rc{verbose, &std::cerr};
    const std::string out0 = out.empty() ? "" : out[0];

    CommandResult res;
    auto emit = [&](const std::string& path) {
      if (path.empty()) {
        std::cout << res.report.dump(2) << '\n';
        return;
      }
      std::ofstream os(path);
      if (!os) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
      os << res.report.dump(2) << '\n';
    };
    if (check->parsed()) {
      res = integrand_check(cf, rc);
      emit(out0);
    } else if (solve->parsed()) {
      res = torsion_solve(cf, out0, rc);
      emit("");
    } else if (curv->parsed()) {
      res = surface_curvature(cf, out0, rc);
      emit("");
    } else {
      bool stab = stability->parsed();
      std::string report = out.size() > 0 ? out[0] : cf.output_report;
      std::string table = out.size() > 1 ? out[1] : cf.output_table;
      res = run_cases(cf, stab, report, table, rc);
      std::cout << "wrote " << report << " and " << table << " (" << res.report["failures"].get<int>()
                << " failed cases)\n";
    }
    return res.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "wulffstab: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "wulffstab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "wulffstab: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace wulffstab::app
