#include "holdmpc/holdmpc.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <set>
#include <string>
#include <vector>

#include "holdmpc/cruise.hpp"
#include "holdmpc/error.hpp"

using namespace holdmpc;
using namespace holdmpc::cruise;

struct hm_config {
  StudyConfig cfg;
};

struct hm_families {
  std::shared_ptr<const SliceFamily> fam;
};

struct hm_controller {
  std::unique_ptr<CruiseController> ctl;
};

struct hm_runs {
  std::vector<StudyRun> runs;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_detail;

hm_status to_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return HM_ERR_INVALID_ARGUMENT;
    case ErrorCode::DimensionMismatch: return HM_ERR_DIMENSION_MISMATCH;
    case ErrorCode::NonConvex: return HM_ERR_NON_CONVEX;
    case ErrorCode::EmptySubtrahend: return HM_ERR_EMPTY_SUBTRAHEND;
    case ErrorCode::UnboundedSubtrahend: return HM_ERR_UNBOUNDED_SUBTRAHEND;
    case ErrorCode::Unbounded: return HM_ERR_UNBOUNDED;
    case ErrorCode::Unsupported: return HM_ERR_UNSUPPORTED;
    case ErrorCode::NoConvergence: return HM_ERR_NO_CONVERGENCE;
    case ErrorCode::EmptyTightenedSet: return HM_ERR_EMPTY_TIGHTENED_SET;
    case ErrorCode::EmptySlice: return HM_ERR_EMPTY_SLICE;
    case ErrorCode::Infeasible: return HM_ERR_INFEASIBLE;
    case ErrorCode::InfeasibleAtResolve: return HM_ERR_INFEASIBLE_AT_RESOLVE;
    case ErrorCode::IndexOutOfFamily: return HM_ERR_INDEX_OUT_OF_FAMILY;
    case ErrorCode::Config: return HM_ERR_CONFIG;
    case ErrorCode::Io: return HM_ERR_IO;
    case ErrorCode::AlreadyExists: return HM_ERR_ALREADY_EXISTS;
    case ErrorCode::Solver: return HM_ERR_SOLVER;
  }
  return HM_ERR_INTERNAL;
}

hm_status fail(hm_status s, std::string msg, std::string detail = {}) {
  g_error = std::move(msg);
  g_detail = std::move(detail);
  return s;
}

// Runs f, translating exceptions into a status and the thread's last error.
template <typename F>
hm_status guarded(F&& f) {
  try {
    return f();
  } catch (const NoConvergenceError& e) {
    return fail(HM_ERR_NO_CONVERGENCE, e.what(), to_text(e.last_iterate()));
  } catch (const EmptySliceError& e) {
    return fail(HM_ERR_EMPTY_SLICE, e.what(), to_text(e.previous()));
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(HM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(HM_ERR_INTERNAL, "unknown exception");
  }
}

hm_status null_arg(const char* name) {
  return fail(HM_ERR_INVALID_ARGUMENT, std::string(name) + " must not be NULL");
}

std::vector<int> holds_of(const StudyConfig& c) {
  std::set<int> s;
  if (c.study == StudyKind::Adaptive) {
    const SupervisorConfig sc = c.supervisor.value_or(SupervisorConfig{});
    s.insert(sc.ladder.begin(), sc.ladder.end());
  } else {
    s.insert(c.params.M.begin(), c.params.M.end());
  }
  return {s.begin(), s.end()};
}

const StudyRun* run_at(const hm_runs* runs, std::size_t i) {
  if (!runs || i >= runs->runs.size()) return nullptr;
  return &runs->runs[i];
}

}  // namespace

extern "C" {

const char* hm_version(void) { return "1.0.0"; }

const char* hm_status_name(hm_status status) {
  switch (status) {
    case HM_OK: return "ok";
    case HM_ERR_INTERNAL: return "internal";
    default: break;
  }
  for (int c = 0; c <= static_cast<int>(ErrorCode::Solver); ++c) {
    if (to_status(static_cast<ErrorCode>(c)) == status) return to_string(static_cast<ErrorCode>(c));
  }
  return "unknown";
}

const char* hm_last_error(void) { return g_error.c_str(); }

const char* hm_last_error_detail(void) { return g_detail.c_str(); }

void hm_set_warning_handler(hm_warning_fn fn, void* user) {
  if (!fn) {
    set_warning_sink(nullptr);
    return;
  }
  set_warning_sink([fn, user](const std::string& m) { fn(m.c_str(), user); });
}

hm_status hm_config_parse(const char* json_text, hm_config** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<hm_config>();
    c->cfg = parse_study_config(json_text);
    *out = c.release();
    return HM_OK;
  });
}

hm_status hm_config_load(const char* path, hm_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<hm_config>();
    c->cfg = load_study_config(path);
    *out = c.release();
    return HM_OK;
  });
}

void hm_config_free(hm_config* cfg) { delete cfg; }

hm_status hm_config_set_seed(hm_config* cfg, uint64_t seed) {
  if (!cfg) return null_arg("cfg");
  cfg->cfg.scenario.seed = seed;
  return HM_OK;
}

hm_status hm_config_set_violation_tol(hm_config* cfg, double tol) {
  if (!cfg) return null_arg("cfg");
  if (!(tol >= 0) || !std::isfinite(tol)) {
    return fail(HM_ERR_INVALID_ARGUMENT, "tolerance must be finite and non-negative");
  }
  cfg->cfg.violation_tol = tol;
  return HM_OK;
}

hm_status hm_config_is_adaptive(const hm_config* cfg, int* adaptive) {
  if (!cfg) return null_arg("cfg");
  if (!adaptive) return null_arg("adaptive");
  *adaptive = cfg->cfg.study == StudyKind::Adaptive ? 1 : 0;
  return HM_OK;
}

hm_status hm_config_horizon(const hm_config* cfg, int* N) {
  if (!cfg) return null_arg("cfg");
  if (!N) return null_arg("N");
  *N = cfg->cfg.params.N;
  return HM_OK;
}

hm_status hm_config_velocity_range(const hm_config* cfg, double* v_min, double* v_max) {
  if (!cfg) return null_arg("cfg");
  if (!v_min || !v_max) return null_arg("v_min/v_max");
  *v_min = cfg->cfg.params.v_min;
  *v_max = cfg->cfg.params.v_max;
  return HM_OK;
}

hm_status hm_config_holds(const hm_config* cfg, int* holds, size_t capacity, size_t* count) {
  if (!cfg) return null_arg("cfg");
  if (!count) return null_arg("count");
  const std::vector<int> h = holds_of(cfg->cfg);
  *count = h.size();
  if (capacity < h.size()) {
    return fail(HM_ERR_INVALID_ARGUMENT, "capacity too small for " + std::to_string(h.size()) +
                                             " hold lengths");
  }
  if (!holds && !h.empty()) return null_arg("holds");
  std::copy(h.begin(), h.end(), holds);
  return HM_OK;
}

hm_status hm_families_compute(const hm_config* cfg, int M, hm_families** out,
                              hm_family_stats* stats) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    FamilyStats st;
    auto f = std::make_unique<hm_families>();
    f->fam = std::make_shared<const SliceFamily>(offline_families(cfg->cfg.params, M, &st));
    if (stats) {
      stats->lower_slices = f->fam->lower.size();
      stats->upper_slices = f->fam->upper.size();
      stats->lower_iterations = st.lower_fixed_point_iterations;
      stats->upper_iterations = st.upper_fixed_point_iterations;
      stats->seconds = st.seconds;
    }
    *out = f.release();
    return HM_OK;
  });
}

hm_status hm_families_write(const hm_families* fam, const hm_config* cfg, const char* dir,
                            int overwrite) {
  if (!fam) return null_arg("fam");
  if (!cfg) return null_arg("cfg");
  if (!dir) return null_arg("dir");
  return guarded([&] {
    write_families(dir, *fam->fam, cfg->cfg.params, overwrite != 0);
    return HM_OK;
  });
}

hm_status hm_families_read(const hm_config* cfg, const char* dir, int M, hm_families** out) {
  if (!cfg) return null_arg("cfg");
  if (!dir) return null_arg("dir");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto f = std::make_unique<hm_families>();
    f->fam = std::make_shared<const SliceFamily>(read_families(dir, cfg->cfg.params, M));
    *out = f.release();
    return HM_OK;
  });
}

void hm_families_free(hm_families* fam) { delete fam; }

hm_status hm_families_info(const hm_families* fam, int* M, size_t* lower_slices,
                           size_t* upper_slices) {
  if (!fam) return null_arg("fam");
  if (M) *M = fam->fam->M;
  if (lower_slices) *lower_slices = fam->fam->lower.size();
  if (upper_slices) *upper_slices = fam->fam->upper.size();
  return HM_OK;
}

hm_status hm_controller_create(const hm_config* cfg, const hm_families* const* fams,
                               size_t count, hm_controller** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  if (count > 0 && !fams) return null_arg("fams");
  return guarded([&] {
    std::map<int, std::shared_ptr<const SliceFamily>> m;
    for (size_t i = 0; i < count; ++i) {
      if (!fams[i]) return null_arg("fams[i]");
      if (!m.emplace(fams[i]->fam->M, fams[i]->fam).second) {
        return fail(HM_ERR_INVALID_ARGUMENT,
                    "two families for M = " + std::to_string(fams[i]->fam->M));
      }
    }
    auto c = std::make_unique<hm_controller>();
    c->ctl = std::make_unique<CruiseController>(cfg->cfg.params, std::move(m));
    *out = c.release();
    return HM_OK;
  });
}

void hm_controller_free(hm_controller* ctl) { delete ctl; }

hm_status hm_slice_vertices(const hm_controller* ctl, int M, double v0, double* xy,
                            size_t capacity, size_t* count, int* clamped) {
  if (!ctl) return null_arg("ctl");
  if (!count) return null_arg("count");
  return guarded([&] {
    const CruiseController& c = *ctl->ctl;
    const SliceSelection sel = select_slices(c.family(M), v0, c.params());
    if (clamped) *clamped = sel.clamped ? 1 : 0;
    static constexpr std::array<int, 2> dv{0, 1};
    const Polytope flat = project(c.slice(M, v0), dv);
    std::vector<Eigen::VectorXd> pts = vertices(flat);
    Eigen::Vector2d mid = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mid += p;
    if (!pts.empty()) mid /= static_cast<double>(pts.size());
    std::sort(pts.begin(), pts.end(), [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return std::atan2(a[1] - mid[1], a[0] - mid[0]) < std::atan2(b[1] - mid[1], b[0] - mid[0]);
    });
    *count = pts.size();
    if (capacity < pts.size()) {
      return fail(HM_ERR_INVALID_ARGUMENT,
                  "capacity too small for " + std::to_string(pts.size()) + " vertices");
    }
    if (!xy && !pts.empty()) return null_arg("xy");
    for (size_t i = 0; i < pts.size(); ++i) {
      xy[2 * i] = pts[i][0];
      xy[2 * i + 1] = pts[i][1];
    }
    return HM_OK;
  });
}

hm_status hm_check_switch(const hm_controller* ctl, const double x[3], int M_from, int M_to,
                          double tol, int* safe, int* violated_row) {
  if (!ctl) return null_arg("ctl");
  if (!x) return null_arg("x");
  if (!safe) return null_arg("safe");
  return guarded([&] {
    const CruiseController& c = *ctl->ctl;
    const int N = c.params().N;
    for (int m : {M_from, M_to}) {
      if (m < 1 || N % m != 0) {
        return fail(HM_ERR_INVALID_ARGUMENT,
                    "hold length " + std::to_string(m) + " does not divide N = " + std::to_string(N));
      }
    }
    if (!(tol >= 0) || !std::isfinite(tol)) {
      return fail(HM_ERR_INVALID_ARGUMENT, "tolerance must be finite and non-negative");
    }
    const Eigen::Vector3d xs(x[0], x[1], x[2]);
    const auto prob = c.problem(xs, M_to);
    const SwitchRequest req{M_to, prob->reach_target(), 0};
    const SwitchDecision d =
        check_switch(xs, req, prob->sys(), prob->X(), prob->U(), prob->spec().sched, tol);
    *safe = d.safe ? 1 : 0;
    if (violated_row) *violated_row = d.violated_row;
    return HM_OK;
  });
}

hm_status hm_study_run(const hm_config* cfg, const hm_controller* ctl, hm_runs** out) {
  if (!cfg) return null_arg("cfg");
  if (!ctl) return null_arg("ctl");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto r = std::make_unique<hm_runs>();
    r->runs = run_study(cfg->cfg, *ctl->ctl);
    *out = r.release();
    return HM_OK;
  });
}

void hm_runs_free(hm_runs* runs) { delete runs; }

size_t hm_runs_count(const hm_runs* runs) { return runs ? runs->runs.size() : 0; }

const char* hm_run_name(const hm_runs* runs, size_t index) {
  const StudyRun* r = run_at(runs, index);
  return r ? r->name.c_str() : nullptr;
}

const char* hm_run_halt_reason(const hm_runs* runs, size_t index) {
  const StudyRun* r = run_at(runs, index);
  return r ? r->trace.halt_reason.c_str() : nullptr;
}

hm_status hm_run_summary_get(const hm_runs* runs, size_t index, hm_run_summary* out) {
  if (!out) return null_arg("out");
  const StudyRun* r = run_at(runs, index);
  if (!r) return fail(HM_ERR_INVALID_ARGUMENT, "run index out of range");
  const auto& recs = r->trace.records;
  hm_run_summary s{};
  s.initial_M = r->initial_M;
  s.final_M = recs.empty() ? r->initial_M : recs.back().M;
  s.steps = recs.empty() ? 0 : recs.size() - 1;
  s.violations = r->trace.violations();
  const auto [solves, ok] = r->trace.solve_counts();
  s.solves = solves;
  s.feasible_solves = ok;
  s.switches = r->trace.switches.size();
  s.halted = r->trace.halted ? 1 : 0;
  s.min_distance = recs.empty() ? NAN : recs.front().x[0];
  for (const auto& rec : recs) s.min_distance = std::min(s.min_distance, rec.x[0]);
  s.final_ego_velocity = recs.empty() ? NAN : recs.back().x[1];
  *out = s;
  return HM_OK;
}

hm_status hm_run_write_csv(const hm_runs* runs, size_t index, const char* path) {
  if (!path) return null_arg("path");
  const StudyRun* r = run_at(runs, index);
  if (!r) return fail(HM_ERR_INVALID_ARGUMENT, "run index out of range");
  return guarded([&] {
    std::ofstream f(path, std::ios::binary);
    if (!f) return fail(HM_ERR_IO, std::string("cannot write '") + path + "'");
    write_trace_csv(f, r->trace, state_names());
    f.flush();
    if (!f) return fail(HM_ERR_IO, std::string("error writing '") + path + "'");
    return HM_OK;
  });
}

}  // extern "C"
