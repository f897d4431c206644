// holdmpc: command-line front end for the cruise control study.
//
//   holdmpc sets         --config c.json --out DIR [--force]
//   holdmpc simulate     --config c.json --out DIR [--seed S] [--tol T] [--force]
//   holdmpc check-switch --config c.json --state d,v1,v0 --from M --to M
//   holdmpc plot-data    --config c.json --out DIR [--v0 ...] [--holds ...] [--trace f.csv]
//
// Structured output goes to stdout as one JSON object per line.  Human
// diagnostics go to stderr.
//
// Exit codes: 0 success, 1 domain failure, 2 refused overwrite, 64 usage or
// configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "holdmpc/holdmpc.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kDomain = 1, kRefused = 2, kUsage = 64 };

struct Options {
  std::string config;
  std::string out = "out";
  std::string families;  // defaults to <out>/families
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  bool force = false;
  bool verbose = false;

  // check-switch
  std::vector<double> state;
  int from = 0;
  int to = 0;

  // plot-data
  std::vector<double> v0s;
  std::vector<int> holds;
  std::vector<std::string> traces;
  int every = 10;
};

// Thrown to leave a command with a given exit code; the message goes to stderr.
struct Exit_ {
  int code;
  std::string message;
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using ConfigH = Handle<hm_config, hm_config_free>;
using FamiliesH = Handle<hm_families, hm_families_free>;
using ControllerH = Handle<hm_controller, hm_controller_free>;
using RunsH = Handle<hm_runs, hm_runs_free>;

bool g_verbose = false;

void log(const std::string& msg) {
  if (g_verbose) std::cerr << msg << '\n';
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

int exit_for(hm_status s) {
  switch (s) {
    case HM_OK: return kOk;
    case HM_ERR_CONFIG: return kUsage;
    case HM_ERR_ALREADY_EXISTS: return kRefused;
    default: return kDomain;
  }
}

[[noreturn]] void raise(hm_status s, const std::string& what) {
  throw Exit_{exit_for(s), what + ": " + hm_last_error()};
}

void check(hm_status s, const std::string& what) {
  if (s != HM_OK) raise(s, what);
}

std::string family_dir(const Options& o, int M) {
  const fs::path base = o.families.empty() ? fs::path(o.out) / "families" : fs::path(o.families);
  return (base / ("M" + std::to_string(M))).string();
}

void load_config(const Options& o, ConfigH& cfg) {
  if (o.config.empty()) {
    cfg.p = nullptr;
    check(hm_config_parse("{}", &cfg.p), "default configuration");
  } else {
    check(hm_config_load(o.config.c_str(), &cfg.p), "configuration");
  }
  if (o.seed) check(hm_config_set_seed(cfg.p, *o.seed), "seed");
  if (o.tol) {
    const hm_status s = hm_config_set_violation_tol(cfg.p, *o.tol);
    if (s != HM_OK) throw Exit_{kUsage, std::string("--tol: ") + hm_last_error()};
  }
}

std::vector<int> config_holds(const hm_config* cfg) {
  std::size_t n = 0;
  hm_config_holds(cfg, nullptr, 0, &n);
  std::vector<int> h(n);
  check(hm_config_holds(cfg, h.data(), h.size(), &n), "hold lengths");
  return h;
}

void require_divides(const hm_config* cfg, int M, const char* flag) {
  int N = 0;
  check(hm_config_horizon(cfg, &N), "horizon");
  if (M < 1 || N % M != 0) {
    throw Exit_{kUsage, std::string(flag) + " " + std::to_string(M) + " does not divide N = " +
                            std::to_string(N)};
  }
}

void report_failure_iterate(const Options& o, int M) {
  const std::string detail = hm_last_error_detail();
  if (detail.empty()) return;
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / ("failed_iterate_M" + std::to_string(M) + ".txt");
  std::ofstream(path) << detail;
  emit({{"event", "failed_iterate"}, {"M", M}, {"path", path.string()}});
}

// Loads the family for M from its archive, computing it when no usable
// archive exists.
std::unique_ptr<FamiliesH> obtain_family(const Options& o, const hm_config* cfg, int M) {
  auto f = std::make_unique<FamiliesH>();
  const std::string dir = family_dir(o, M);
  if (fs::exists(fs::path(dir) / "lower" / "manifest")) {
    if (hm_families_read(cfg, dir.c_str(), M, &f->p) == HM_OK) {
      log("loaded slice family for M = " + std::to_string(M) + " from " + dir);
      return f;
    }
    std::cerr << "warning: ignoring archive " << dir << ": " << hm_last_error() << '\n';
  }
  log("computing slice family for M = " + std::to_string(M));
  const hm_status s = hm_families_compute(cfg, M, &f->p, nullptr);
  if (s != HM_OK) {
    report_failure_iterate(o, M);
    raise(s, "slice family for M = " + std::to_string(M));
  }
  return f;
}

void make_controller(const Options& o, const hm_config* cfg, const std::vector<int>& holds,
                     std::vector<std::unique_ptr<FamiliesH>>& keep, ControllerH& ctl) {
  std::vector<const hm_families*> ptrs;
  for (int M : holds) {
    keep.push_back(obtain_family(o, cfg, M));
    ptrs.push_back(keep.back()->p);
  }
  check(hm_controller_create(cfg, ptrs.data(), ptrs.size(), &ctl.p), "controller");
}

// ---------------------------------------------------------------------------

int cmd_sets(const Options& o) {
  ConfigH cfg;
  load_config(o, cfg);
  const std::vector<int> holds = config_holds(cfg.p);
  if (!o.force) {
    for (int M : holds) {
      const fs::path dir = family_dir(o, M);
      for (const char* sub : {"lower", "upper"}) {
        if (fs::exists(dir / sub / "manifest")) {
          throw Exit_{kRefused, "archive " + (dir / sub).string() + " exists (use --force)"};
        }
      }
    }
  }
  for (int M : holds) {
    log("computing slice family for M = " + std::to_string(M));
    FamiliesH fam;
    hm_family_stats st{};
    const hm_status s = hm_families_compute(cfg.p, M, &fam.p, &st);
    if (s != HM_OK) {
      report_failure_iterate(o, M);
      raise(s, "slice family for M = " + std::to_string(M));
    }
    const std::string dir = family_dir(o, M);
    fs::create_directories(dir);
    check(hm_families_write(fam.p, cfg.p, dir.c_str(), o.force ? 1 : 0), "archive " + dir);
    emit({{"event", "families"},
          {"M", M},
          {"lower_slices", st.lower_slices},
          {"upper_slices", st.upper_slices},
          {"lower_iterations", st.lower_iterations},
          {"upper_iterations", st.upper_iterations},
          {"seconds", st.seconds},
          {"archive", dir}});
  }
  return kOk;
}

int cmd_simulate(const Options& o) {
  ConfigH cfg;
  load_config(o, cfg);
  const std::vector<int> holds = config_holds(cfg.p);
  std::vector<std::unique_ptr<FamiliesH>> keep;
  ControllerH ctl;
  make_controller(o, cfg.p, holds, keep, ctl);

  RunsH runs;
  check(hm_study_run(cfg.p, ctl.p, &runs.p), "study");
  fs::create_directories(o.out);
  const std::size_t n = hm_runs_count(runs.p);
  if (!o.force) {
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path path = fs::path(o.out) / (std::string(hm_run_name(runs.p, i)) + ".csv");
      if (fs::exists(path)) throw Exit_{kRefused, path.string() + " exists (use --force)"};
    }
  }
  int code = kOk;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = hm_run_name(runs.p, i);
    const fs::path path = fs::path(o.out) / (name + ".csv");
    check(hm_run_write_csv(runs.p, i, path.string().c_str()), "trace " + path.string());
    hm_run_summary s{};
    check(hm_run_summary_get(runs.p, i, &s), "summary");
    const bool ok = !s.halted && s.violations == 0;
    json j{{"event", "run"},
           {"name", name},
           {"initial_M", s.initial_M},
           {"final_M", s.final_M},
           {"steps", s.steps},
           {"solves", s.solves},
           {"feasible_solves", s.feasible_solves},
           {"violations", s.violations},
           {"switches", s.switches},
           {"halted", s.halted != 0},
           {"min_d", s.min_distance},
           {"final_v1", s.final_ego_velocity},
           {"ok", ok},
           {"trace", path.string()}};
    if (s.halted) j["halt_reason"] = hm_run_halt_reason(runs.p, i);
    emit(j);
    if (!ok) code = kDomain;
  }
  return code;
}

int cmd_check_switch(const Options& o) {
  ConfigH cfg;
  load_config(o, cfg);
  if (o.state.size() != 3) throw Exit_{kUsage, "--state needs three values d,v1,v0"};
  require_divides(cfg.p, o.from, "--from");
  require_divides(cfg.p, o.to, "--to");
  std::vector<std::unique_ptr<FamiliesH>> keep;
  ControllerH ctl;
  make_controller(o, cfg.p, {o.to}, keep, ctl);
  int safe = 0, row = -1;
  const hm_status s = hm_check_switch(ctl.p, o.state.data(), o.from, o.to, o.tol.value_or(1e-9),
                                      &safe, &row);
  if (s == HM_ERR_INVALID_ARGUMENT) throw Exit_{kUsage, std::string("check-switch: ") + hm_last_error()};
  check(s, "check-switch");
  json j{{"event", "check_switch"}, {"state", o.state}, {"from", o.from}, {"to", o.to},
         {"safe", safe != 0}};
  if (!safe) j["violated_row"] = row;
  emit(j);
  return safe ? kOk : kDomain;
}

void downsample_trace(const Options& o, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Exit_{kUsage, "cannot read trace '" + path + "'"};
  const fs::path dest = fs::path(o.out) / (fs::path(path).stem().string() + "_series.csv");
  if (fs::exists(dest) && !o.force) throw Exit_{kRefused, dest.string() + " exists (use --force)"};
  std::ofstream out(dest, std::ios::binary);
  std::string line;
  std::size_t rows = 0;
  if (std::getline(in, line)) out << line << '\n';
  std::string last;
  bool last_written = true;
  for (long k = 0; std::getline(in, line); ++k) {
    if (line.empty()) continue;
    last = line;
    last_written = k % o.every == 0;
    if (last_written) {
      out << line << '\n';
      ++rows;
    }
  }
  if (!last_written) {
    out << last << '\n';
    ++rows;
  }
  emit({{"event", "series"}, {"source", path}, {"rows", rows}, {"path", dest.string()}});
}

int cmd_plot_data(const Options& o) {
  ConfigH cfg;
  load_config(o, cfg);
  if (o.every < 1) throw Exit_{kUsage, "--every must be positive"};
  fs::create_directories(o.out);

  if (!o.v0s.empty()) {
    const std::vector<int> holds = o.holds.empty() ? config_holds(cfg.p) : o.holds;
    for (int M : holds) require_divides(cfg.p, M, "--holds");
    std::vector<std::unique_ptr<FamiliesH>> keep;
    ControllerH ctl;
    make_controller(o, cfg.p, holds, keep, ctl);
    const fs::path dest = fs::path(o.out) / "slices.csv";
    if (fs::exists(dest) && !o.force) throw Exit_{kRefused, dest.string() + " exists (use --force)"};
    std::ofstream out(dest, std::ios::binary);
    out << "v0,M,vx,vy,warning\n";
    out.precision(17);
    double v_min = 0, v_max = 0;
    check(hm_config_velocity_range(cfg.p, &v_min, &v_max), "velocity range");
    std::size_t loops = 0;
    for (double v0 : o.v0s) {
      for (int M : holds) {
        std::string warning;
        const double v = std::clamp(v0, v_min, v_max);
        if (v != v0) warning = "v0_out_of_range";
        std::size_t n = 0;
        int clamped = 0;
        hm_slice_vertices(ctl.p, M, v, nullptr, 0, &n, &clamped);
        if (n == 0) throw Exit_{kDomain, "slice at v0 = " + std::to_string(v0) + " is empty"};
        std::vector<double> xy(2 * n);
        check(hm_slice_vertices(ctl.p, M, v, xy.data(), n, &n, &clamped),
              "slice at v0 = " + std::to_string(v0) + ", M = " + std::to_string(M));
        if (clamped && warning.empty()) warning = "nearest_slice";
        for (std::size_t i = 0; i <= n; ++i) {
          const std::size_t k = i % n;  // repeat the first vertex to close the loop
          out << v0 << ',' << M << ',' << xy[2 * k] << ',' << xy[2 * k + 1] << ',' << warning << '\n';
        }
        ++loops;
        if (!warning.empty()) std::cerr << "warning: v0 = " << v0 << ", M = " << M << ": " << warning << '\n';
      }
    }
    emit({{"event", "slices"}, {"loops", loops}, {"path", dest.string()}});
  }
  for (const auto& t : o.traces) downsample_trace(o, t);
  if (o.v0s.empty() && o.traces.empty()) throw Exit_{kUsage, "plot-data needs --v0 or --trace"};
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hold-MPC tools for the adaptive cruise control study"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  double tol = 0;
  app.add_option("--config", o.config, "Study configuration (JSON)");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--families", o.families, "Slice family archives (default <out>/families)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
  auto* tol_opt = app.add_option("--tol", tol,
                                 "Tolerance for violation flags (simulate) or membership (check-switch)");
  app.add_flag("--force", o.force, "Overwrite existing outputs");
  app.add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");

  auto* sets = app.add_subcommand("sets", "Compute and archive slice families");
  auto* sim = app.add_subcommand("simulate", "Run the configured study and write traces");
  auto* chk = app.add_subcommand("check-switch", "Check whether a hold-length switch is safe");
  chk->add_option("--state", o.state, "State d,v1,v0")->delimiter(',')->required()->expected(3);
  chk->add_option("--from", o.from, "Current hold length")->required();
  chk->add_option("--to", o.to, "Requested hold length")->required();
  auto* plot = app.add_subcommand("plot-data", "Export slice outlines and trace series as CSV");
  plot->add_option("--v0", o.v0s, "Front velocities for slice outlines")->delimiter(',');
  plot->add_option("--holds", o.holds, "Hold lengths (default: from the config)")->delimiter(',');
  plot->add_option("--trace", o.traces, "Trace CSV files to downsample");
  plot->add_option("--every", o.every, "Keep every k-th trace row")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (*seed_opt) o.seed = seed;
  if (*tol_opt) o.tol = tol;
  g_verbose = o.verbose;

  try {
    if (*sets) return cmd_sets(o);
    if (*sim) return cmd_simulate(o);
    if (*chk) return cmd_check_switch(o);
    if (*plot) return cmd_plot_data(o);
  } catch (const Exit_& e) {
    std::cerr << "error: " << e.message << '\n';
    emit({{"event", "error"}, {"exit_code", e.code}, {"message", e.message}});
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  }
  return kUsage;
}
