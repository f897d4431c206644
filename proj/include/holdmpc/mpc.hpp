#pragma once

// Robust M-step hold MPC: condensed QP over N/M held inputs with
// disturbance-tightened constraints, a receding-horizon hold policy, a
// closed-loop simulator and the adaptive hold-length supervisor.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "holdmpc/optim.hpp"
#include "holdmpc/polytope.hpp"
#include "holdmpc/sets.hpp"

namespace holdmpc {

/// A QP whose constraints can be met after relaxing every (unit) row by at
/// most this much is treated as feasible and solved in relaxed form.
inline constexpr double kFeasibilitySlack = 1e-7;

struct MPCSpec {
  LTISystem sys;
  HoldConfig hold{1, 1};
  Polytope X;
  Polytope U;
  DisturbanceSchedule sched;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
  /// The set K^M_{N-M}(X_N) that x̄_{t+M} must reach (before tightening by E_M).
  Polytope reach_target;
};

/// Immutable problem data with the tightened sets computed once.
class MPCProblem {
 public:
  /// Validates the spec; throws InvalidArgument / DimensionMismatch /
  /// EmptyTightenedSet.
  explicit MPCProblem(MPCSpec spec);

  /// Same problem with another reach target; the X tightenings are shared.
  MPCProblem with_reach_target(Polytope target) const;

  const MPCSpec& spec() const { return spec_; }
  const LTISystem& sys() const { return spec_.sys; }
  int M() const { return spec_.hold.M; }
  int N() const { return spec_.hold.N; }
  int holds() const { return spec_.hold.N / spec_.hold.M; }
  const Polytope& X() const { return spec_.X; }
  const Polytope& U() const { return spec_.U; }
  const Polytope& reach_target() const { return spec_.reach_target; }
  /// X ⊖ E_h for h = 1..M-1 (index h-1).
  const std::vector<Polytope>& tightened_X() const { return shared_->tightened_X; }
  /// reach_target ⊖ E_M.
  const Polytope& tightened_target() const { return tightened_target_; }
  /// E_1..E_M when the state dimension is at most 3, otherwise empty.
  const std::vector<Polytope>& error_sets() const { return shared_->error_sets; }

 private:
  struct Shared {
    std::vector<Polytope> tightened_X;
    std::vector<Polytope> error_sets;
  };
  MPCProblem(MPCSpec spec, std::shared_ptr<const Shared> shared);
  void tighten_target();

  MPCSpec spec_;
  std::shared_ptr<const Shared> shared_;
  Polytope tightened_target_;
};

/// Support function of E_h (exact sum of per-step disturbance supports).
double error_set_support(const LTISystem& sys, const DisturbanceSchedule& sched, int h,
                         const Eigen::VectorXd& direction);

enum class MPCStatus { Feasible, Infeasible };

struct MPCSolution {
  MPCStatus status = MPCStatus::Infeasible;
  std::vector<Eigen::VectorXd> inputs;   // N/M held inputs
  std::vector<Eigen::VectorXd> nominal;  // x̄_0 … x̄_N
  double objective = 0.0;
  int iterations = 0;

  bool feasible() const { return status == MPCStatus::Feasible; }
};

/// Condensed QP in the stacked held inputs.  The objective of the QP
/// differs from the MPC cost by a constant that depends on x0 only.
optim::QuadraticProgram assemble_qp(const MPCProblem& prob, const Eigen::VectorXd& x0);

/// Throws Error(Solver) if the QP solver fails to reach a verdict.
MPCSolution solve_mpc(const MPCProblem& prob, const Eigen::VectorXd& x0,
                      double tol = optim::kDefaultTol);

/// Cached state of the receding-horizon hold policy.
struct PolicyState {
  int anchor = 0;  // step at which the current hold pattern started
  std::optional<Eigen::VectorXd> held;
  std::optional<MPCSolution> last_solution;
};

/// Solves at hold boundaries ((t - anchor) mod M = 0) and otherwise returns
/// the held input.  Throws Error(InfeasibleAtResolve) when a solve fails.
Eigen::VectorXd step_policy(const MPCProblem& prob, PolicyState& state, const Eigen::VectorXd& x,
                            int t);

// ---------------------------------------------------------------------------
// Simulation

struct StepRecord {
  int t = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;  // empty on the final row and after a halt
  Eigen::VectorXd w;
  int M = 1;
  bool solved = false;    // hold boundary
  bool feasible = true;   // solve outcome at a boundary
  bool viol_X = false;
  bool viol_U = false;
};

struct SwitchEvent {
  int t = 0;
  int from = 0;
  int to = 0;
  bool accepted = false;
  int violated_row = -1;
};

struct SimTrace {
  std::vector<StepRecord> records;  // one per step plus the final state
  std::vector<SwitchEvent> switches;
  bool halted = false;
  std::string halt_reason;
  std::uint64_t seed = 0;
  double Ts = 1.0;

  std::size_t violations() const;
  /// Number of hold-boundary solves and how many were feasible.
  std::pair<std::size_t, std::size_t> solve_counts() const;
};

/// Supplies the MPC problem for the current state and hold length.
using ProblemSelector =
    std::function<std::shared_ptr<const MPCProblem>(const Eigen::VectorXd& x, int M)>;
/// Returns w_t given the step and the current state.
using DisturbanceSource = std::function<Eigen::VectorXd(int t, const Eigen::VectorXd& x)>;

struct SwitchRequest {
  int M_hat = 1;
  /// K^{M̂}_{N-M̂}(X̂_N): the reach target the M̂ problem would use.
  Polytope reach_target;
  int requested_at = 0;
};

struct SwitchDecision {
  bool safe = false;
  int violated_row = -1;      // row of X̂_0 violated by the state
  Polytope feasible_region;   // X̂_0
};

/// Switch safety test: x ∈ X̂_0 = Pre^{M̂}(reach_target) ∩ X.
SwitchDecision check_switch(const Eigen::VectorXd& x, const SwitchRequest& req,
                            const LTISystem& sys, const Polytope& X, const Polytope& U,
                            const DisturbanceSchedule& sched_hat, double tol = 1e-9);

struct SupervisorConfig {
  std::vector<int> ladder{10, 5, 1};
  double trigger_pct = 1.0;     // percent change of the monitored state
  int window_steps = 10;        // ⌈window_s / Ts⌉
  int monitored_state = 0;
  bool allow_increase = false;  // request the next larger M when the change exceeds increase_pct
  double increase_pct = 5.0;
};

/// Decides at a hold boundary whether to request another hold length.
/// `trace` holds the records up to and including the current step.
std::optional<int> adaptive_supervisor(const SimTrace& trace, int current_M,
                                       const SupervisorConfig& cfg);

struct SimOptions {
  int steps = 0;
  int initial_M = 1;
  std::uint64_t seed = 0;  // recorded in the trace
  std::optional<SupervisorConfig> supervisor;
  /// Realized x_t ∉ X or u_t ∉ U is flagged when a row is exceeded by more
  /// than this (rows as given in X and U).
  double violation_tol = 1e-7;
};

/// Closed-loop run of x⁺ = Ax + Bu + Ew.  Halts (trace.halted) on an
/// infeasible resolve.
SimTrace simulate(const ProblemSelector& select, const Eigen::VectorXd& x0,
                  const DisturbanceSource& disturbance, const SimOptions& opts);

/// CSV with one row per record.  `state_names` defaults to x0..x{n-1}.
void write_trace_csv(std::ostream& out, const SimTrace& trace,
                     const std::vector<std::string>& state_names = {});

}  // namespace holdmpc
