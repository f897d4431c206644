#pragma once

// Adaptive cruise control case study: ego car behind an uncontrolled front
// car, state x = [d, v1, v0] (gap, ego velocity, front velocity), input u =
// ego acceleration, disturbance w = front acceleration.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <optional>
#include <string>
#include <vector>

#include "holdmpc/mpc.hpp"
#include "holdmpc/polytope.hpp"
#include "holdmpc/sets.hpp"

namespace holdmpc::cruise {

struct CruiseParams {
  double d_min = 5.0;
  double d_max = 100.0;
  double v_min = 0.0;
  double v_max = 40.0;
  double u_min = -4.0;
  double u_max = 4.0;
  double w_min = -4.0;
  double w_max = 4.0;
  double Ts = 0.1;
  std::vector<int> M{1, 5, 10};  // hold lengths used by the studies
  int N = 10;
  Eigen::Vector3d Q_diag{10.0, 0.0, 0.0};  // P = Q
  double R = 1.0;
  Eigen::Vector3d x0{70.0, 30.0, 25.0};

  /// Throws Error(InvalidArgument).  Ts = 0 is accepted with a warning.
  void validate() const;
};

/// Half width of the {v0 = v} slab used for fixed-velocity slices.
inline constexpr double kSliceHalfWidth = 1e-9;
/// Front velocities below this count as stopped.
inline constexpr double kStoppedVelocity = 1e-9;
/// The slice families and the MPC state constraints use d bounds pulled in
/// by kDistanceMargin, and the families assume kInputMargin less actuator
/// authority than the MPC has.  The controller therefore keeps strict slack
/// when the closed loop rides a slice boundary.
inline constexpr double kDistanceMargin = 1e-6;
inline constexpr double kInputMargin = 1e-4;

LTISystem build_system(const CruiseParams& p);
/// {d_min ≤ d ≤ d_max, v_min ≤ v1 ≤ v_max}; v0 is unconstrained.
Polytope state_set(const CruiseParams& p);
Polytope input_set(const CruiseParams& p);
/// state_set with d_min + kDistanceMargin ≤ d ≤ d_max - kDistanceMargin.
Polytope design_state_set(const CruiseParams& p);
/// input_set shrunk by kInputMargin on both sides.
Polytope design_input_set(const CruiseParams& p);
/// design_state_set ∩ {|v0 - v| ≤ kSliceHalfWidth}.
Polytope velocity_slice(const CruiseParams& p, double v);
/// Admissible front accelerations at front velocity v0.
Box switched_bounds(double v0, const CruiseParams& p);

/// Offline slice families for one hold length.  lower[k] is the set from
/// which the ego survives a front car braking fully from
/// lower_velocity(k); upper[k] the same for full acceleration from
/// upper_velocity(k).
struct SliceFamily {
  int M = 1;
  double Ts = 0.1;
  double lower_base = 0.0;
  double lower_step = 0.0;  // -M Ts w_min
  double upper_base = 0.0;
  double upper_step = 0.0;  // -M Ts w_max
  std::vector<Polytope> lower;
  std::vector<Polytope> upper;

  double lower_velocity(std::size_t k) const { return lower_base + static_cast<double>(k) * lower_step; }
  double upper_velocity(std::size_t k) const { return upper_base + static_cast<double>(k) * upper_step; }
};

struct FamilyStats {
  int lower_fixed_point_iterations = 0;
  int upper_fixed_point_iterations = 0;
  double seconds = 0.0;
};

/// Thrown when a slice iterate becomes empty.  `previous` is the last
/// nonempty iterate it was computed from.
class EmptySliceError : public Error {
 public:
  EmptySliceError(const std::string& what, Polytope previous)
      : Error(ErrorCode::EmptySlice, what), previous_(std::move(previous)) {}
  const Polytope& previous() const { return previous_; }

 private:
  Polytope previous_;
};

/// Throws NoConvergenceError, EmptySliceError or Error(InvalidArgument).
SliceFamily offline_families(const CruiseParams& p, int M, FamilyStats* stats = nullptr);

struct SliceSelection {
  std::size_t lower = 0;  // slot in SliceFamily::lower (step index l = lower * M)
  std::size_t upper = 0;
  double v_low = 0.0;     // front velocity bounds after one hold
  double v_high = 0.0;
  bool clamped = false;   // an index ran past the stored family
};

/// Slot selection for the current front velocity.  Throws InvalidArgument
/// if v0 lies outside [v_min, v_max].
SliceSelection select_slices(const SliceFamily& fam, double v0, const CruiseParams& p);

/// (d, v1) cross-section of lower[l] ∩ upper[h] as a cylinder in v0.
Polytope combine_slices(const SliceFamily& fam, const SliceSelection& sel);

/// Throws IndexOutOfFamily when `strict` and a selection index was clamped;
/// otherwise clamping is reported through warn().
Polytope online_slice(const SliceFamily& fam, double v0, const CruiseParams& p,
                      bool strict = false);

/// Archives: <dir>/lower and <dir>/upper, each a set-family directory whose
/// manifest also records v0_base and v0_step.
void write_families(const std::string& dir, const SliceFamily& fam, const CruiseParams& p,
                    bool overwrite);
/// Throws Io on missing files or a system/hold mismatch.
SliceFamily read_families(const std::string& dir, const CruiseParams& p, int M);

// ---------------------------------------------------------------------------

struct FrontCarScenario {
  enum class Kind { UniformRandom, FullBrakeAfter, ConstantVelocity, Scripted };
  Kind kind = Kind::FullBrakeAfter;
  std::uint64_t seed = 1;
  double brake_after_s = 15.0;   // FullBrakeAfter: random phase length
  std::vector<double> script;    // Scripted: w per step, zero afterwards
};

const char* to_string(FrontCarScenario::Kind kind) noexcept;
/// Accepts the snake_case names used in config files.
FrontCarScenario::Kind parse_scenario_kind(const std::string& name);

/// Emitted accelerations always keep v0 within [v_min, v_max].  The source
/// is stateful; call it once per step in order.
DisturbanceSource make_scenario(const FrontCarScenario& s, const CruiseParams& p);

// ---------------------------------------------------------------------------

/// Families and cached MPC problems for every configured hold length.
class CruiseController {
 public:
  CruiseController(CruiseParams p, std::map<int, std::shared_ptr<const SliceFamily>> families);

  const CruiseParams& params() const { return params_; }
  const LTISystem& system() const { return sys_; }
  const SliceFamily& family(int M) const;
  bool has_family(int M) const { return families_.count(M) != 0; }

  /// Reach target for the given front velocity (cached per slot pair).
  Polytope slice(int M, double v0) const;
  /// MPC problem for state x with hold M, sharing tightenings per M.
  std::shared_ptr<const MPCProblem> problem(const Eigen::VectorXd& x, int M) const;
  ProblemSelector selector() const;

 private:
  using Key = std::tuple<int, std::size_t, std::size_t>;
  Polytope slice_for(int M, const SliceSelection& sel) const;

  CruiseParams params_;
  LTISystem sys_;
  std::map<int, std::shared_ptr<const SliceFamily>> families_;
  mutable std::mutex mutex_;
  mutable std::map<Key, Polytope> slices_;
  mutable std::map<Key, std::shared_ptr<const MPCProblem>> problems_;
  mutable std::map<int, std::shared_ptr<const MPCProblem>> bases_;
};

/// Per-step disturbance boxes for one hold starting at front velocity v0.
/// Step j allows the accelerations of the extreme braking and accelerating
/// profiles, so the front car never leaves [v_min, v_max]; away from the
/// velocity limits this is the box [w_min, w_max] at every step.
DisturbanceSchedule hold_schedule(const CruiseParams& p, int M, double v0);

MPCSpec make_spec(const CruiseParams& p, int M, double v0, const Polytope& reach_target);

// ---------------------------------------------------------------------------

enum class StudyKind { Brake, Adaptive };

struct StudyConfig {
  CruiseParams params;
  FrontCarScenario scenario;
  std::optional<SupervisorConfig> supervisor;
  StudyKind study = StudyKind::Brake;
  double duration_s = 30.0;  // config default is 60 s for the adaptive study
  double violation_tol = 1e-7;  // see SimOptions
};

/// Parses the JSON study configuration.  Throws Error(Config) naming the
/// offending field.
StudyConfig parse_study_config(const std::string& json_text);
StudyConfig load_study_config(const std::string& path);

struct StudyRun {
  std::string name;  // e.g. "brake_M5" or "adaptive"
  int initial_M = 1;
  SimTrace trace;

  bool ok() const { return !trace.halted && trace.violations() == 0; }
};

/// Brake study: one run per configured M.  Adaptive study: one run from the
/// largest ladder entry with the supervisor attached.
std::vector<StudyRun> run_study(const StudyConfig& cfg, const CruiseController& ctl);

inline const std::vector<std::string>& state_names() {
  static const std::vector<std::string> names{"d", "v1", "v0"};
  return names;
}

}  // namespace holdmpc::cruise
