#include "holdmpc/cruise.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <random>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "holdmpc/error.hpp"

namespace holdmpc::cruise {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd scalar(double v) { return VectorXd::Constant(1, v); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

// Slot count beyond the base slice: first slot at or past the far bound.
std::size_t slot_count(double span, double step) {
  return static_cast<std::size_t>(std::ceil(span / step - 1e-9));
}

}  // namespace

void CruiseParams::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  require(finite(d_min) && finite(d_max) && d_min < d_max, "need d_min < d_max");
  require(finite(v_min) && finite(v_max) && v_min < v_max, "need v_min < v_max");
  require(finite(u_min) && finite(u_max) && u_min + kInputMargin < 0 && kInputMargin < u_max,
          "need u_min < 0 < u_max");
  require(finite(w_min) && finite(w_max) && w_min < 0 && 0 < w_max, "need w_min < 0 < w_max");
  require(finite(Ts) && Ts >= 0, "Ts must be non-negative");
  require(N >= 1, "N must be positive");
  require(!M.empty(), "at least one hold length is required");
  for (int m : M) {
    require(m >= 1 && N % m == 0, "every M must divide N (M = " + std::to_string(m) + ")");
  }
  require(Q_diag.allFinite() && (Q_diag.array() >= 0).all(), "Q_diag must be non-negative");
  require(std::isfinite(R) && R > 0, "R must be positive");
  require(x0.allFinite(), "x0 must be finite");
  if (Ts == 0) warn("Ts = 0 gives a degenerate system (A = I, B = E = 0)");
}

LTISystem build_system(const CruiseParams& p) {
  const double T = p.Ts;
  LTISystem s;
  s.A.resize(3, 3);
  s.A << 1, -T, T, 0, 1, 0, 0, 0, 1;
  s.B.resize(3, 1);
  s.B << -0.5 * T * T, T, 0;
  s.E.resize(3, 1);
  s.E << 0.5 * T * T, 0, T;
  s.Ts = T;
  return s;
}

Polytope state_set(const CruiseParams& p) {
  MatrixXd H(4, 3);
  H << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0;
  VectorXd h(4);
  h << p.d_max, -p.d_min, p.v_max, -p.v_min;
  return Polytope(H, h);
}

Polytope input_set(const CruiseParams& p) {
  return Polytope::from_box(scalar(p.u_min), scalar(p.u_max));
}

Polytope design_state_set(const CruiseParams& p) {
  MatrixXd H(4, 3);
  H << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0;
  VectorXd h(4);
  h << p.d_max - kDistanceMargin, -(p.d_min + kDistanceMargin), p.v_max, -p.v_min;
  return Polytope(H, h);
}

Polytope design_input_set(const CruiseParams& p) {
  return Polytope::from_box(scalar(p.u_min + kInputMargin), scalar(p.u_max - kInputMargin));
}

Polytope velocity_slice(const CruiseParams& p, double v) {
  return intersect(design_state_set(p), Polytope::slab(3, 2, v - kSliceHalfWidth, v + kSliceHalfWidth));
}

Box switched_bounds(double v0, const CruiseParams& p) {
  return Box(scalar(v0 <= p.v_min ? 0.0 : p.w_min), scalar(v0 >= p.v_max ? 0.0 : p.w_max));
}

// ---------------------------------------------------------------------------

SliceFamily offline_families(const CruiseParams& p, int M, FamilyStats* stats) {
  p.validate();
  require(M >= 1, "M must be positive");
  require(p.Ts > 0, "slice families need Ts > 0");
  const auto start = std::chrono::steady_clock::now();
  const LTISystem sys = build_system(p);
  const Polytope X = design_state_set(p);
  const Polytope U = design_input_set(p);

  SliceFamily fam;
  fam.M = M;
  fam.Ts = p.Ts;
  fam.lower_base = p.v_min;
  fam.lower_step = -M * p.Ts * p.w_min;
  fam.upper_base = p.v_max;
  fam.upper_step = -M * p.Ts * p.w_max;

  auto build = [&](double v_base, double w, double step, std::vector<Polytope>& out,
                   int* iters, const char* name) {
    const auto nominal = DisturbanceSchedule::constant(scalar(0.0), M);
    Polytope base = max_control_invariant(sys, velocity_slice(p, v_base), U, nominal, M,
                                          kDefaultMaxIters, iters);
    if (base.is_empty()) {
      throw EmptySliceError(std::string(name) + " base slice is empty", velocity_slice(p, v_base));
    }
    out.push_back(std::move(base));
    const auto sched = DisturbanceSchedule::constant(scalar(w), M);
    const std::size_t count = slot_count(p.v_max - p.v_min, std::abs(step));
    for (std::size_t k = 1; k <= count; ++k) {
      Polytope next = intersect(pre_m(sys, X, U, out.back(), sched, M), X);
      next = minimize(next);
      if (next.is_empty()) {
        throw EmptySliceError(std::string(name) + " slice " + std::to_string(k) + " (M = " +
                                  std::to_string(M) + ") is empty",
                              out.back());
      }
      out.push_back(std::move(next));
    }
  };
  FamilyStats local;
  build(p.v_min, p.w_min, fam.lower_step, fam.lower, &local.lower_fixed_point_iterations, "lower");
  build(p.v_max, p.w_max, fam.upper_step, fam.upper, &local.upper_fixed_point_iterations, "upper");
  local.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (stats) *stats = local;
  return fam;
}

SliceSelection select_slices(const SliceFamily& fam, double v0, const CruiseParams& p) {
  const double tol = 1e-9 * (1.0 + std::abs(p.v_max));
  if (!(v0 >= p.v_min - tol && v0 <= p.v_max + tol)) {
    throw Error(ErrorCode::InvalidArgument,
                "front velocity " + format_double(v0) + " outside [v_min, v_max]");
  }
  if (fam.lower.empty() || fam.upper.empty()) {
    throw Error(ErrorCode::InvalidArgument, "slice family is empty");
  }
  SliceSelection sel;
  const double hold = fam.M * fam.Ts;
  sel.v_low = v0 + hold * p.w_min;
  sel.v_high = v0 + hold * p.w_max;
  // l: largest slot whose velocity does not exceed v_low (rounded down).
  // h: largest slot whose velocity is not below v_high (rounded up).
  const double kl = std::floor((sel.v_low - fam.lower_base) / fam.lower_step + 1e-9);
  const double kh = std::floor((fam.upper_base - sel.v_high) / -fam.upper_step + 1e-9);
  auto clamp = [&](double k, std::size_t size) {
    if (k < 0) return std::size_t{0};
    if (k > static_cast<double>(size - 1)) {
      sel.clamped = true;
      return size - 1;
    }
    return static_cast<std::size_t>(k);
  };
  sel.lower = clamp(kl, fam.lower.size());
  sel.upper = clamp(kh, fam.upper.size());
  return sel;
}

Polytope combine_slices(const SliceFamily& fam, const SliceSelection& sel) {
  static constexpr std::array<int, 2> dv{0, 1};
  const Polytope both = intersect(project(fam.lower.at(sel.lower), dv),
                                  project(fam.upper.at(sel.upper), dv));
  const Polytope flat = minimize(both);
  if (flat.is_empty()) {
    throw Error(ErrorCode::EmptySlice, "lower slice " + std::to_string(sel.lower) +
                                           " and upper slice " + std::to_string(sel.upper) +
                                           " do not intersect");
  }
  MatrixXd H = MatrixXd::Zero(flat.rows(), 3);
  H.leftCols(2) = flat.H();
  return Polytope(H, flat.h());
}

Polytope online_slice(const SliceFamily& fam, double v0, const CruiseParams& p, bool strict) {
  const SliceSelection sel = select_slices(fam, v0, p);
  if (sel.clamped) {
    const std::string msg = "slice index for v0 = " + format_double(v0) + " (M = " +
                            std::to_string(fam.M) + ") runs past the stored family";
    if (strict) throw Error(ErrorCode::IndexOutOfFamily, msg);
    warn(msg + "; using the last slice");
  }
  return combine_slices(fam, sel);
}

// ---------------------------------------------------------------------------

namespace {

SetFamily to_set_family(const std::vector<Polytope>& slices, const CruiseParams& p, int M,
                        double w, double base, double step) {
  SetFamily f;
  f.manifest.system_hash = system_hash(build_system(p));
  f.manifest.M = M;
  f.manifest.schedule = DisturbanceSchedule::constant(VectorXd::Constant(1, w), M).describe();
  f.manifest.slice_count = slices.size();
  f.manifest.extra["v0_base"] = format_double(base);
  f.manifest.extra["v0_step"] = format_double(step);
  f.slices = slices;
  return f;
}

double manifest_number(const SetFamily& f, const std::string& key, const std::string& dir) {
  const auto it = f.manifest.extra.find(key);
  if (it == f.manifest.extra.end()) {
    throw Error(ErrorCode::Io, "manifest in '" + dir + "' lacks " + key);
  }
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::Io, "manifest in '" + dir + "' has a malformed " + key);
  }
}

}  // namespace

void write_families(const std::string& dir, const SliceFamily& fam, const CruiseParams& p,
                    bool overwrite) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!overwrite) {
    for (const char* sub : {"lower", "upper"}) {
      if (fs::exists(root / sub / "manifest")) {
        throw Error(ErrorCode::AlreadyExists, "archive '" + (root / sub).string() + "' exists");
      }
    }
  }
  write_family((root / "lower").string(),
               to_set_family(fam.lower, p, fam.M, p.w_min, fam.lower_base, fam.lower_step),
               overwrite);
  write_family((root / "upper").string(),
               to_set_family(fam.upper, p, fam.M, p.w_max, fam.upper_base, fam.upper_step),
               overwrite);
}

SliceFamily read_families(const std::string& dir, const CruiseParams& p, int M) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const SetFamily lo = read_family((root / "lower").string());
  const SetFamily up = read_family((root / "upper").string());
  const std::string hash = system_hash(build_system(p));
  for (const SetFamily* f : {&lo, &up}) {
    if (f->manifest.system_hash != hash) {
      throw Error(ErrorCode::Io, "archive in '" + dir + "' belongs to another system");
    }
    if (f->manifest.M != M) {
      throw Error(ErrorCode::Io, "archive in '" + dir + "' was computed for M = " +
                                     std::to_string(f->manifest.M));
    }
  }
  SliceFamily fam;
  fam.M = M;
  fam.Ts = p.Ts;
  fam.lower_base = manifest_number(lo, "v0_base", dir);
  fam.lower_step = manifest_number(lo, "v0_step", dir);
  fam.upper_base = manifest_number(up, "v0_base", dir);
  fam.upper_step = manifest_number(up, "v0_step", dir);
  fam.lower = lo.slices;
  fam.upper = up.slices;
  return fam;
}

// ---------------------------------------------------------------------------

const char* to_string(FrontCarScenario::Kind kind) noexcept {
  switch (kind) {
    case FrontCarScenario::Kind::UniformRandom: return "uniform_random";
    case FrontCarScenario::Kind::FullBrakeAfter: return "full_brake_after";
    case FrontCarScenario::Kind::ConstantVelocity: return "constant_velocity";
    case FrontCarScenario::Kind::Scripted: return "scripted";
  }
  return "unknown";
}

FrontCarScenario::Kind parse_scenario_kind(const std::string& name) {
  using K = FrontCarScenario::Kind;
  for (K k : {K::UniformRandom, K::FullBrakeAfter, K::ConstantVelocity, K::Scripted}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::Config, "unknown scenario kind '" + name + "'");
}

DisturbanceSource make_scenario(const FrontCarScenario& s, const CruiseParams& p) {
  struct State {
    std::mt19937_64 rng;
  };
  auto st = std::make_shared<State>(State{std::mt19937_64(s.seed)});
  return [s, p, st](int t, const VectorXd& x) -> VectorXd {
    const double v0 = x[2];
    const Box b = switched_bounds(v0, p);
    double lo = b.lower[0], hi = b.upper[0];
    auto uniform = [&] {
      // 53 random bits; identical on every platform for a given seed
      const double r = static_cast<double>(st->rng() >> 11) * 0x1.0p-53;
      return lo + (hi - lo) * r;
    };
    double w = 0.0;
    switch (s.kind) {
      case FrontCarScenario::Kind::UniformRandom:
        w = uniform();
        break;
      case FrontCarScenario::Kind::FullBrakeAfter:
        if (t * p.Ts < s.brake_after_s - 1e-9) {
          w = uniform();
        } else {
          w = v0 < kStoppedVelocity ? 0.0 : p.w_min;
        }
        break;
      case FrontCarScenario::Kind::ConstantVelocity:
        w = 0.0;
        break;
      case FrontCarScenario::Kind::Scripted:
        w = t < static_cast<int>(s.script.size()) ? s.script[static_cast<std::size_t>(t)] : 0.0;
        break;
    }
    // keep the front car inside its own velocity limits
    if (p.Ts > 0) {
      lo = std::max(lo, (p.v_min - v0) / p.Ts);
      hi = std::min(hi, (p.v_max - v0) / p.Ts);
    }
    return VectorXd::Constant(1, std::clamp(w, std::min(lo, hi), hi));
  };
}

// ---------------------------------------------------------------------------

DisturbanceSchedule hold_schedule(const CruiseParams& p, int M, double v0) {
  if (p.Ts <= 0) return DisturbanceSchedule::repeated(Box(scalar(p.w_min), scalar(p.w_max)), M);
  auto lo = [&](int j) { return std::max(p.v_min, v0 + j * p.Ts * p.w_min); };
  auto hi = [&](int j) { return std::min(p.v_max, v0 + j * p.Ts * p.w_max); };
  std::vector<Box> boxes;
  for (int j = 0; j < M; ++j) {
    const double wl = std::clamp((lo(j + 1) - lo(j)) / p.Ts, p.w_min, 0.0);
    const double wh = std::clamp((hi(j + 1) - hi(j)) / p.Ts, 0.0, p.w_max);
    boxes.emplace_back(scalar(wl), scalar(wh));
  }
  return DisturbanceSchedule(std::move(boxes));
}

MPCSpec make_spec(const CruiseParams& p, int M, double v0, const Polytope& reach_target) {
  MPCSpec s;
  s.sys = build_system(p);
  s.hold = HoldConfig(M, p.N);
  s.X = design_state_set(p);
  s.U = input_set(p);
  s.sched = hold_schedule(p, M, v0);
  s.Q = p.Q_diag.asDiagonal();
  s.P = s.Q;
  s.R = MatrixXd::Constant(1, 1, p.R);
  s.reach_target = reach_target;
  return s;
}

CruiseController::CruiseController(CruiseParams p,
                                   std::map<int, std::shared_ptr<const SliceFamily>> families)
    : params_(std::move(p)), sys_(build_system(params_)), families_(std::move(families)) {
  for (const auto& [M, fam] : families_) {
    require(fam != nullptr && fam->M == M, "family map entry does not match its hold length");
  }
}

const SliceFamily& CruiseController::family(int M) const {
  const auto it = families_.find(M);
  if (it == families_.end()) {
    throw Error(ErrorCode::InvalidArgument, "no slice family for M = " + std::to_string(M));
  }
  return *it->second;
}

Polytope CruiseController::slice_for(int M, const SliceSelection& sel) const {
  const Key key{M, sel.lower, sel.upper};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = slices_.find(key);
    if (it != slices_.end()) return it->second;
  }
  Polytope s = combine_slices(family(M), sel);
  std::lock_guard<std::mutex> lock(mutex_);
  return slices_.emplace(key, std::move(s)).first->second;
}

Polytope CruiseController::slice(int M, double v0) const {
  const SliceFamily& fam = family(M);
  const SliceSelection sel = select_slices(fam, v0, params_);
  if (sel.clamped) {
    warn("slice index for v0 = " + format_double(v0) + " (M = " + std::to_string(M) +
         ") runs past the stored family; using the last slice");
  }
  return slice_for(M, sel);
}

std::shared_ptr<const MPCProblem> CruiseController::problem(const VectorXd& x, int M) const {
  if (x.size() != 3) throw Error(ErrorCode::DimensionMismatch, "cruise state has three entries");
  const SliceFamily& fam = family(M);
  const double v0 = x[2];
  const SliceSelection sel = select_slices(fam, v0, params_);
  if (sel.clamped) {
    warn("slice index for v0 = " + format_double(v0) + " (M = " + std::to_string(M) +
         ") runs past the stored family; using the last slice");
  }
  // Away from the velocity limits the hold schedule is the plain box and the
  // problem depends on the slot pair only.
  const double reach = M * params_.Ts;
  const bool interior = v0 + reach * params_.w_min >= params_.v_min &&
                        v0 + reach * params_.w_max <= params_.v_max;
  const Key key{M, sel.lower, sel.upper};
  if (interior) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = problems_.find(key);
    if (it != problems_.end()) return it->second;
  }
  Polytope target = slice_for(M, sel);
  if (!interior) {
    return std::make_shared<const MPCProblem>(make_spec(params_, M, v0, target));
  }
  std::shared_ptr<const MPCProblem> base;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = bases_.find(M);
    if (it != bases_.end()) base = it->second;
  }
  std::shared_ptr<const MPCProblem> prob;
  if (base) {
    prob = std::make_shared<const MPCProblem>(base->with_reach_target(std::move(target)));
  } else {
    prob = std::make_shared<const MPCProblem>(make_spec(params_, M, v0, target));
  }
  std::lock_guard<std::mutex> lock(mutex_);
  bases_.emplace(M, prob);
  return problems_.emplace(key, prob).first->second;
}

ProblemSelector CruiseController::selector() const {
  return [this](const VectorXd& x, int M) { return problem(x, M); };
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::Config, field + ": " + what);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_error(where, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) config_error(where + "." + k, "unknown field");
  }
}

double get_number(const json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) config_error(where + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) config_error(field, "expected an integer");
  return v.get<int>();
}

Eigen::Vector3d get_vec3(const json& obj, const std::string& where, const char* key,
                         const Eigen::Vector3d& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string field = where + "." + key;
  if (!v.is_array() || v.size() != 3) config_error(field, "expected an array of 3 numbers");
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) config_error(field, "expected numbers");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

}  // namespace

StudyConfig parse_study_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "config", {"params", "scenario", "supervisor", "study", "duration_s"});
  StudyConfig cfg;
  CruiseParams& p = cfg.params;
  if (doc.contains("params")) {
    const json& j = doc.at("params");
    const std::string w = "params";
    check_keys(j, w, {"d_min", "d_max", "v_min", "v_max", "u_min", "u_max", "w_min", "w_max",
                      "Ts", "M", "N", "Q_diag", "R", "x0"});
    p.d_min = get_number(j, w, "d_min", p.d_min);
    p.d_max = get_number(j, w, "d_max", p.d_max);
    p.v_min = get_number(j, w, "v_min", p.v_min);
    p.v_max = get_number(j, w, "v_max", p.v_max);
    p.u_min = get_number(j, w, "u_min", p.u_min);
    p.u_max = get_number(j, w, "u_max", p.u_max);
    p.w_min = get_number(j, w, "w_min", p.w_min);
    p.w_max = get_number(j, w, "w_max", p.w_max);
    p.Ts = get_number(j, w, "Ts", p.Ts);
    p.R = get_number(j, w, "R", p.R);
    if (j.contains("N")) p.N = get_int(j.at("N"), "params.N");
    if (j.contains("M")) {
      const json& m = j.at("M");
      p.M.clear();
      if (m.is_array()) {
        for (std::size_t i = 0; i < m.size(); ++i) {
          p.M.push_back(get_int(m[i], "params.M[" + std::to_string(i) + "]"));
        }
      } else {
        p.M.push_back(get_int(m, "params.M"));
      }
    }
    p.Q_diag = get_vec3(j, w, "Q_diag", p.Q_diag);
    p.x0 = get_vec3(j, w, "x0", p.x0);
  }
  try {
    p.validate();
  } catch (const Error& e) {
    config_error("params", e.what());
  }

  if (doc.contains("study")) {
    const json& s = doc.at("study");
    if (s == "brake") cfg.study = StudyKind::Brake;
    else if (s == "adaptive") cfg.study = StudyKind::Adaptive;
    else config_error("study", "expected \"brake\" or \"adaptive\"");
  } else if (doc.contains("supervisor")) {
    cfg.study = StudyKind::Adaptive;
  }
  if (cfg.study == StudyKind::Adaptive) {
    cfg.scenario.kind = FrontCarScenario::Kind::ConstantVelocity;
    cfg.duration_s = 60.0;
  }
  cfg.duration_s = get_number(doc, "config", "duration_s", cfg.duration_s);
  if (!(cfg.duration_s >= 0)) config_error("duration_s", "must be non-negative");

  if (doc.contains("scenario")) {
    const json& j = doc.at("scenario");
    check_keys(j, "scenario", {"kind", "seed", "brake_after_s", "script"});
    if (j.contains("kind")) {
      if (!j.at("kind").is_string()) config_error("scenario.kind", "expected a string");
      try {
        cfg.scenario.kind = parse_scenario_kind(j.at("kind").get<std::string>());
      } catch (const Error& e) {
        config_error("scenario.kind", e.what());
      }
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) config_error("scenario.seed", "expected a non-negative integer");
      cfg.scenario.seed = j.at("seed").get<std::uint64_t>();
    }
    cfg.scenario.brake_after_s = get_number(j, "scenario", "brake_after_s", cfg.scenario.brake_after_s);
    if (j.contains("script")) {
      const json& s = j.at("script");
      if (!s.is_array()) config_error("scenario.script", "expected an array of numbers");
      for (const auto& v : s) {
        if (!v.is_number()) config_error("scenario.script", "expected an array of numbers");
        cfg.scenario.script.push_back(v.get<double>());
      }
    }
  }

  if (doc.contains("supervisor")) {
    const json& j = doc.at("supervisor");
    check_keys(j, "supervisor",
               {"ladder", "trigger_pct", "window_s", "allow_increase", "increase_pct"});
    SupervisorConfig sc;
    if (j.contains("ladder")) {
      const json& l = j.at("ladder");
      if (!l.is_array() || l.empty()) config_error("supervisor.ladder", "expected a non-empty array");
      sc.ladder.clear();
      for (std::size_t i = 0; i < l.size(); ++i) {
        const int m = get_int(l[i], "supervisor.ladder[" + std::to_string(i) + "]");
        if (m < 1 || p.N % m != 0) {
          config_error("supervisor.ladder[" + std::to_string(i) + "]", "must divide N");
        }
        sc.ladder.push_back(m);
      }
    }
    sc.trigger_pct = get_number(j, "supervisor", "trigger_pct", sc.trigger_pct);
    sc.increase_pct = get_number(j, "supervisor", "increase_pct", sc.increase_pct);
    const double window_s = get_number(j, "supervisor", "window_s", 1.0);
    if (!(window_s > 0)) config_error("supervisor.window_s", "must be positive");
    sc.window_steps = p.Ts > 0 ? static_cast<int>(std::ceil(window_s / p.Ts - 1e-9)) : 1;
    if (j.contains("allow_increase")) {
      if (!j.at("allow_increase").is_boolean()) config_error("supervisor.allow_increase", "expected a boolean");
      sc.allow_increase = j.at("allow_increase").get<bool>();
    }
    if (!(sc.trigger_pct > 0)) config_error("supervisor.trigger_pct", "must be positive");
    cfg.supervisor = sc;
  } else if (cfg.study == StudyKind::Adaptive) {
    SupervisorConfig sc;
    sc.window_steps = p.Ts > 0 ? static_cast<int>(std::ceil(1.0 / p.Ts - 1e-9)) : 1;
    cfg.supervisor = sc;
  }
  return cfg;
}

StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_study_config(ss.str());
}

std::vector<StudyRun> run_study(const StudyConfig& cfg, const CruiseController& ctl) {
  const CruiseParams& p = ctl.params();
  const int steps = p.Ts > 0 ? static_cast<int>(std::llround(cfg.duration_s / p.Ts)) : 0;
  const VectorXd x0 = p.x0;
  std::vector<StudyRun> runs;
  if (cfg.study == StudyKind::Brake) {
    std::vector<std::future<StudyRun>> pending;
    for (int M : cfg.params.M) {
      pending.push_back(std::async(std::launch::async, [&cfg, &ctl, &p, &x0, steps, M] {
        SimOptions o;
        o.steps = steps;
        o.initial_M = M;
        o.seed = cfg.scenario.seed;
        o.violation_tol = cfg.violation_tol;
        StudyRun r;
        r.name = "brake_M" + std::to_string(M);
        r.initial_M = M;
        r.trace = simulate(ctl.selector(), x0, make_scenario(cfg.scenario, p), o);
        return r;
      }));
    }
    for (auto& f : pending) runs.push_back(f.get());
  } else {
    const SupervisorConfig sc = cfg.supervisor.value_or(SupervisorConfig{});
    SimOptions o;
    o.steps = steps;
    o.initial_M = *std::max_element(sc.ladder.begin(), sc.ladder.end());
    o.seed = cfg.scenario.seed;
    o.violation_tol = cfg.violation_tol;
    o.supervisor = sc;
    StudyRun r;
    r.name = "adaptive";
    r.initial_M = o.initial_M;
    r.trace = simulate(ctl.selector(), x0, make_scenario(cfg.scenario, p), o);
    runs.push_back(std::move(r));
  }
  return runs;
}

}  // namespace holdmpc::cruise
