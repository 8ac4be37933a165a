// Command-line front end. Talks to the library only through hbias.h.
//
// Exit codes: 0 success, 1 usage or config error, 2 numerical abort,
// 3 check-grad thresholds exceeded, 4 other runtime failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hbias/hbias.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitRuntime = 4;

struct CliFailure {
  int code;
  std::string message;
};

int exit_code_for(hb_status s) {
  switch (s) {
    case HB_OK: return kExitOk;
    case HB_ERR_INVALID_ARGUMENT:
    case HB_ERR_CONFIG: return kExitUsage;
    case HB_ERR_NUMERICAL: return kExitNumerical;
    default: return kExitRuntime;
  }
}

void check(hb_status s, const std::string& what) {
  if (s != HB_OK)
    throw CliFailure{exit_code_for(s), what + ": " + hb_status_name(s) + ": " + hb_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { hb_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

struct DatasetDeleter {
  void operator()(hb_dataset* d) const { hb_dataset_free(d); }
};
struct ConfigDeleter {
  void operator()(hb_config* c) const { hb_config_free(c); }
};
struct TrajectoryDeleter {
  void operator()(hb_trajectory* t) const { hb_trajectory_free(t); }
};
using Dataset = std::unique_ptr<hb_dataset, DatasetDeleter>;
using Config = std::unique_ptr<hb_config, ConfigDeleter>;
using Trajectory = std::unique_ptr<hb_trajectory, TrajectoryDeleter>;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw CliFailure{kExitRuntime, "cannot write " + path.string()};
}

// Explicit flag > $HBIAS_OUT_DIR > default.
fs::path output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("HBIAS_OUT_DIR");
  if (env && *env) return env;
  return fallback;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw CliFailure{kExitUsage, "not a number: '" + item + "'"};
    out.push_back(v);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- gen-data ----------------------------------------------------------

struct GenDataArgs {
  std::size_t n = 0;
  std::size_t d = 2;
  double margin = 0.1;
  double radius = 1.0;
  std::uint64_t seed = 0;
  bool symmetric = false;
  std::string out;
};

void write_dataset(hb_dataset* raw, const GenDataArgs& a, const std::string& default_name) {
  Dataset data(raw);
  const fs::path path = a.out.empty() ? output_dir("", ".") / default_name : fs::path(a.out);
  check(hb_dataset_save(data.get(), path.string().c_str()), "writing dataset");
  std::cout << "wrote " << hb_dataset_size(data.get()) << " samples to " << path.string() << "\n";
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  char* raw_ts = nullptr;
  check(hb_timestamp(&raw_ts), "timestamp");
  CString started(raw_ts);

  hb_config* raw_cfg = nullptr;
  check(hb_config_load(a.config.c_str(), &raw_cfg), "loading config");
  Config cfg(raw_cfg);
  hb_dataset* raw_data = nullptr;
  check(hb_dataset_load_csv(a.data.c_str(), &raw_data), "loading dataset");
  Dataset data(raw_data);

  const fs::path dir = output_dir(a.out, "run");
  hb_trajectory* raw_traj = nullptr;
  const hb_status st = hb_train(cfg.get(), data.get(), &raw_traj);
  Trajectory traj(raw_traj);
  if (st == HB_ERR_NUMERICAL) {
    const std::string reason = hb_last_error();
    char* diag = nullptr;
    if (traj && hb_trajectory_diagnostic_json(traj.get(), &diag) == HB_OK) {
      CString d(diag);
      write_text(dir / "diagnostic.json", d.get());
      hb_trajectory_write(traj.get(), dir.string().c_str());
      std::cerr << d.get();
    }
    std::cerr << "numerical abort: " << reason << "\n";
    return kExitNumerical;
  }
  check(st, "training");
  check(hb_trajectory_write(traj.get(), dir.string().c_str()), "writing trajectory");

  char* manifest = nullptr;
  check(hb_manifest_json(a.config.c_str(), a.data.c_str(), dir.string().c_str(), started.get(),
                         &manifest),
        "writing manifest");
  CString m(manifest);
  write_text(dir / "manifest.json", m.get());

  std::uint64_t k_sep = 0;
  if (hb_trajectory_k_sep(traj.get(), &k_sep))
    std::cout << "k_sep " << k_sep << "\n";
  else
    std::cout << "k_sep none\n";
  std::cout << "final_margin " << fmt(hb_trajectory_final_margin(traj.get())) << "\n";
  return kExitOk;
}

// ---- analyze ------------------------------------------------------------

struct AnalyzeArgs {
  std::string run;
  std::string data;
  std::string out;
  double active_tol = 0.0;
  std::uint64_t window_lo = 0;
  std::uint64_t window_hi = 0;
};

int cmd_analyze(const AnalyzeArgs& a) {
  hb_trajectory* raw_traj = nullptr;
  check(hb_trajectory_read(a.run.c_str(), &raw_traj), "reading trajectory");
  Trajectory traj(raw_traj);
  hb_dataset* raw_data = nullptr;
  check(hb_dataset_load_csv(a.data.c_str(), &raw_data), "loading dataset");
  Dataset data(raw_data);

  hb_analysis_options opts{};
  opts.active_tol = a.active_tol;
  if (a.window_hi > 0) {
    opts.has_window = 1;
    opts.window_lo = a.window_lo;
    opts.window_hi = a.window_hi;
  }
  char* summary = nullptr;
  char* csv = nullptr;
  check(hb_analyze(traj.get(), data.get(), &opts, &summary, &csv), "analysis");
  CString s(summary), c(csv);
  const fs::path dir = output_dir(a.out, a.run);
  write_text(dir / "summary.json", s.get());
  write_text(dir / "analysis.csv", c.get());
  std::cout << s.get();
  return kExitOk;
}

// ---- flow ---------------------------------------------------------------

struct FlowArgs {
  std::string config;
  std::string data;
  std::string u0;
  std::string out;
  double step = 1e-3;
  double horizon = 10.0;
  double tol = 1e-6;
};

int cmd_flow(const FlowArgs& a) {
  hb_config* raw_cfg = nullptr;
  check(hb_config_load(a.config.c_str(), &raw_cfg), "loading config");
  Config cfg(raw_cfg);
  hb_dataset* raw_data = nullptr;
  check(hb_dataset_load_csv(a.data.c_str(), &raw_data), "loading dataset");
  Dataset data(raw_data);
  std::vector<double> u0;
  if (!a.u0.empty()) u0 = parse_list(a.u0);
  char* csv = nullptr;
  int converged = 0;
  double residual = 0.0;
  check(hb_flow(cfg.get(), data.get(), u0.empty() ? nullptr : u0.data(), u0.size(), a.step,
                a.horizon, a.tol, &csv, &converged, &residual),
        "flow");
  CString c(csv);
  const fs::path path = a.out.empty() ? output_dir("", ".") / "flow.csv" : fs::path(a.out);
  write_text(path, c.get());
  std::cout << "converged " << (converged ? "yes" : "no") << "\n"
            << "final_residual " << fmt(residual) << "\n";
  return kExitOk;
}

// ---- check-grad ---------------------------------------------------------

struct CheckGradArgs {
  std::string widths = "2,16,1";
  std::string activation = "relu";
  double slope = 0.0;
  std::uint64_t seed = 0;
  std::size_t cases = 200;
  bool inject_fault = false;
};

int cmd_check_grad(const CheckGradArgs& a) {
  std::vector<std::size_t> widths;
  for (double v : parse_list(a.widths)) {
    if (v < 1 || v != std::floor(v)) throw CliFailure{kExitUsage, "widths must be positive integers"};
    widths.push_back(static_cast<std::size_t>(v));
  }
  hb_grad_report rep{};
  check(hb_check_grad(widths.data(), widths.size(), a.activation.c_str(), a.slope, a.seed, a.cases,
                      a.inject_fault ? 1 : 0, &rep),
        "check-grad");
  std::cout << "cases " << rep.cases << "\n"
            << "finite_difference_cases " << rep.fd_cases << "\n"
            << "max_euler_error " << fmt(rep.max_euler_error) << "\n"
            << "max_homogeneity_error " << fmt(rep.max_homogeneity_error) << "\n"
            << "max_fd_error " << fmt(rep.max_fd_error) << "\n"
            << (rep.passed ? "PASS" : "FAIL") << "\n";
  return rep.passed ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit-bias experiments for homogeneous networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hb_version());

  auto* gen = app.add_subcommand("gen-data", "generate a separable dataset");
  gen->require_subcommand(1);
  GenDataArgs lin_args, xor_args;
  auto* lin = gen->add_subcommand("linear", "linearly separable points with a certified margin");
  lin->add_option("--n", lin_args.n, "number of samples")->required()->check(CLI::PositiveNumber);
  lin->add_option("--d", lin_args.d, "input dimension")->check(CLI::PositiveNumber);
  lin->add_option("--margin", lin_args.margin, "minimum |<nu, x>|")->check(CLI::NonNegativeNumber);
  lin->add_option("--radius", lin_args.radius, "ball radius")->check(CLI::PositiveNumber);
  lin->add_option("--seed", lin_args.seed, "random seed");
  lin->add_flag("--symmetric", lin_args.symmetric, "emit every point together with (-x, -y)");
  lin->add_option("--out", lin_args.out, "CSV path (default $HBIAS_OUT_DIR/data.csv)");
  auto* xr = gen->add_subcommand("xor-ring", "four XOR-labelled clusters around (+-1, +-1)");
  xr->add_option("--n", xor_args.n, "number of samples")->required()->check(CLI::PositiveNumber);
  xr->add_option("--seed", xor_args.seed, "random seed");
  xr->add_option("--out", xor_args.out, "CSV path (default $HBIAS_OUT_DIR/data.csv)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "run (S)GD and record the trajectory");
  train->add_option("--config", train_args.config, "experiment config JSON")->required();
  train->add_option("--data", train_args.data, "dataset CSV")->required();
  train->add_option("--out", train_args.out, "output directory (default $HBIAS_OUT_DIR or ./run)");

  AnalyzeArgs an_args;
  auto* analyze = app.add_subcommand("analyze", "decompose a recorded trajectory and test the claims");
  analyze->add_option("--run", an_args.run, "directory written by train")->required();
  analyze->add_option("--data", an_args.data, "dataset CSV used for training")->required();
  analyze->add_option("--out", an_args.out, "output directory (default: the run directory)");
  analyze->add_option("--active-tol", an_args.active_tol, "active-set tolerance (default 1e-6)");
  analyze->add_option("--window-lo", an_args.window_lo, "growth-fit window start");
  analyze->add_option("--window-hi", an_args.window_hi, "growth-fit window end");

  FlowArgs flow_args;
  auto* flow = app.add_subcommand("flow", "integrate the spherical margin flow");
  flow->add_option("--config", flow_args.config, "config JSON (net and kink)")->required();
  flow->add_option("--data", flow_args.data, "dataset CSV")->required();
  flow->add_option("--u0", flow_args.u0, "comma-separated initial direction (default: seeded init)");
  flow->add_option("--step", flow_args.step, "Euler step")->check(CLI::PositiveNumber);
  flow->add_option("--horizon", flow_args.horizon, "final time")->check(CLI::PositiveNumber);
  flow->add_option("--tol", flow_args.tol, "stop when the residual drops below this");
  flow->add_option("--out", flow_args.out, "path CSV (default $HBIAS_OUT_DIR/flow.csv)");

  CheckGradArgs cg_args;
  auto* cg = app.add_subcommand("check-grad", "self-test of the backward pass");
  cg->add_option("--widths", cg_args.widths, "comma-separated layer widths ending in 1");
  cg->add_option("--activation", cg_args.activation, "relu, leaky_relu or linear");
  cg->add_option("--slope", cg_args.slope, "negative-side slope for leaky_relu");
  cg->add_option("--seed", cg_args.seed, "random seed");
  cg->add_option("--cases", cg_args.cases, "number of random cases")->check(CLI::PositiveNumber);
  cg->add_flag("--inject-fault", cg_args.inject_fault, "test hook: corrupt the gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (lin->parsed()) {
      hb_dataset* d = nullptr;
      check(hb_dataset_gen_linear(lin_args.seed, lin_args.n, lin_args.d, lin_args.margin,
                                  lin_args.radius, lin_args.symmetric ? 1 : 0, &d),
            "gen-data linear");
      write_dataset(d, lin_args, "data.csv");
      return kExitOk;
    }
    if (xr->parsed()) {
      hb_dataset* d = nullptr;
      check(hb_dataset_gen_xor_ring(xor_args.seed, xor_args.n, &d), "gen-data xor-ring");
      write_dataset(d, xor_args, "data.csv");
      return kExitOk;
    }
    if (train->parsed()) return cmd_train(train_args);
    if (analyze->parsed()) return cmd_analyze(an_args);
    if (flow->parsed()) return cmd_flow(flow_args);
    if (cg->parsed()) return cmd_check_grad(cg_args);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
