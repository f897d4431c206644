#include "holdmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "holdmpc/error.hpp"

namespace holdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_psd(const MatrixXd& M, int dim, const char* name, bool definite) {
  if (M.rows() != dim || M.cols() != dim) {
    throw Error(ErrorCode::DimensionMismatch, std::string(name) + " has the wrong size");
  }
  if (!M.allFinite()) throw Error(ErrorCode::InvalidArgument, std::string(name) + " is not finite");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + " is not symmetric");
  }
  const double lo = Eigen::SelfAdjointEigenSolver<MatrixXd>(M).eigenvalues().minCoeff();
  if (definite ? lo <= 1e-9 : lo < -1e-9) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(name) + (definite ? " must be positive definite"
                                              : " must be positive semidefinite"));
  }
}

std::string format_vector(const VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s + "]";
}

}  // namespace

double error_set_support(const LTISystem& sys, const DisturbanceSchedule& sched, int h,
                         const VectorXd& direction) {
  // σ_{E_h}(c) = Σ_j σ_{W_j}((A^{h-1-j} E)ᵀ c)
  double s = 0.0;
  VectorXd c = direction;  // (A^{k})ᵀ direction, k = 0, 1, …
  for (int j = h - 1; j >= 0; --j) {
    s += sched.support(j % sched.length(), sys.E.transpose() * c);
    c = sys.A.transpose() * c;
  }
  return s;
}

MPCProblem::MPCProblem(MPCSpec spec) : spec_(std::move(spec)) {
  const auto& s = spec_;
  s.sys.validate();
  const int n = s.sys.n(), m = s.sys.m();
  if (s.X.dim() != n || s.reach_target.dim() != n) {
    throw Error(ErrorCode::DimensionMismatch, "X and reach_target must live in the state space");
  }
  if (s.U.dim() != m) throw Error(ErrorCode::DimensionMismatch, "U must live in the input space");
  if (s.sched.length() != s.hold.M) {
    throw Error(ErrorCode::InvalidArgument, "disturbance schedule length must equal M");
  }
  if (s.sched.dim() != s.sys.o()) {
    throw Error(ErrorCode::DimensionMismatch, "disturbance dimension must equal o");
  }
  require_psd(s.Q, n, "Q", false);
  require_psd(s.P, n, "P", false);
  require_psd(s.R, m, "R", true);
  if (!s.sched.all_contain_origin()) {
    throw Error(ErrorCode::InvalidArgument, "every disturbance set must contain the origin");
  }
  if (s.reach_target.is_empty()) {
    throw Error(ErrorCode::InvalidArgument, "reach target is empty");
  }
  auto shared = std::make_shared<Shared>();
  for (int h = 1; h < s.hold.M; ++h) {
    Polytope t = pontryagin_diff(
        s.X, [&](const VectorXd& d) { return error_set_support(s.sys, s.sched, h, d); });
    if (t.is_empty()) {
      throw Error(ErrorCode::EmptyTightenedSet,
                  "X tightened by E_" + std::to_string(h) + " is empty");
    }
    shared->tightened_X.push_back(std::move(t));
  }
  if (n <= 3) {
    for (int k = 1; k <= s.hold.M; ++k) shared->error_sets.push_back(error_set(s.sys, s.sched, k));
  }
  shared_ = std::move(shared);
  tighten_target();
}

MPCProblem::MPCProblem(MPCSpec spec, std::shared_ptr<const Shared> shared)
    : spec_(std::move(spec)), shared_(std::move(shared)) {
  if (spec_.reach_target.dim() != spec_.sys.n()) {
    throw Error(ErrorCode::DimensionMismatch, "reach_target must live in the state space");
  }
  if (spec_.reach_target.is_empty()) {
    throw Error(ErrorCode::InvalidArgument, "reach target is empty");
  }
  tighten_target();
}

void MPCProblem::tighten_target() {
  const int M = spec_.hold.M;
  tightened_target_ = pontryagin_diff(spec_.reach_target, [&](const VectorXd& d) {
    return error_set_support(spec_.sys, spec_.sched, M, d);
  });
  if (tightened_target_.is_empty()) {
    throw Error(ErrorCode::EmptyTightenedSet, "reach target tightened by E_M is empty");
  }
}

MPCProblem MPCProblem::with_reach_target(Polytope target) const {
  MPCSpec s = spec_;
  s.reach_target = std::move(target);
  return MPCProblem(std::move(s), shared_);
}

// ---------------------------------------------------------------------------

namespace {

// x̄_k = Φ_k x0 + Γ_k U for k = 0..N.
struct Prediction {
  std::vector<MatrixXd> Phi;
  std::vector<MatrixXd> Gamma;
};

Prediction predict(const MPCProblem& prob) {
  const auto& sys = prob.sys();
  const int n = sys.n(), m = sys.m(), H = prob.holds();
  Prediction p;
  p.Phi.push_back(MatrixXd::Identity(n, n));
  p.Gamma.push_back(MatrixXd::Zero(n, H * m));
  for (int k = 0; k < prob.N(); ++k) {
    p.Phi.push_back(sys.A * p.Phi.back());
    MatrixXd G = sys.A * p.Gamma.back();
    G.middleCols((k / prob.M()) * m, m) += sys.B;
    p.Gamma.push_back(std::move(G));
  }
  return p;
}

void append_rows(MatrixXd& G, VectorXd& g, const MatrixXd& rows, const VectorXd& rhs) {
  const Eigen::Index r0 = G.rows();
  G.conservativeResize(r0 + rows.rows(), rows.cols());
  g.conservativeResize(r0 + rows.rows());
  G.bottomRows(rows.rows()) = rows;
  g.tail(rows.rows()) = rhs;
}

void add_state_constraint(MatrixXd& G, VectorXd& g, const Polytope& set, const Prediction& p,
                          int k, const VectorXd& x0) {
  const Polytope s = normalize(set);
  if (s.rows() == 0) return;
  append_rows(G, g, s.H() * p.Gamma[static_cast<std::size_t>(k)],
              s.h() - s.H() * p.Phi[static_cast<std::size_t>(k)] * x0);
}

double state_cost(const MPCProblem& prob, const Prediction& p, const VectorXd& x0) {
  const auto& s = prob.spec();
  double c = 0.0;
  for (int k = 0; k < prob.N(); ++k) {
    const VectorXd xk = p.Phi[static_cast<std::size_t>(k)] * x0;
    c += xk.dot(s.Q * xk);
  }
  const VectorXd xN = p.Phi.back() * x0;
  return c + xN.dot(s.P * xN);
}

}  // namespace

optim::QuadraticProgram assemble_qp(const MPCProblem& prob, const VectorXd& x0) {
  const auto& s = prob.spec();
  const int n = s.sys.n(), m = s.sys.m(), H = prob.holds(), M = prob.M(), N = prob.N();
  if (x0.size() != n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong dimension");
  if (!x0.allFinite()) throw Error(ErrorCode::InvalidArgument, "x0 must be finite");
  const Prediction p = predict(prob);

  optim::QuadraticProgram qp;
  qp.hessian = MatrixXd::Zero(H * m, H * m);
  qp.cost = VectorXd::Zero(H * m);
  for (int k = 0; k < N; ++k) {
    const MatrixXd& Gk = p.Gamma[static_cast<std::size_t>(k)];
    qp.hessian += 2.0 * Gk.transpose() * s.Q * Gk;
    qp.cost += 2.0 * Gk.transpose() * s.Q * p.Phi[static_cast<std::size_t>(k)] * x0;
  }
  const MatrixXd& GN = p.Gamma.back();
  qp.hessian += 2.0 * GN.transpose() * s.P * GN;
  qp.cost += 2.0 * GN.transpose() * s.P * p.Phi.back() * x0;
  // the stage cost charges R at every step of a hold
  for (int i = 0; i < H; ++i) qp.hessian.block(i * m, i * m, m, m) += 2.0 * M * s.R;
  qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose()).eval();

  qp.G.resize(0, H * m);
  qp.g.resize(0);
  for (int h = 1; h < M; ++h) {
    add_state_constraint(qp.G, qp.g, prob.tightened_X()[static_cast<std::size_t>(h - 1)], p, h, x0);
  }
  add_state_constraint(qp.G, qp.g, prob.tightened_target(), p, M, x0);
  for (int k = 1; k < N; ++k) add_state_constraint(qp.G, qp.g, s.X, p, k, x0);
  const Polytope U = normalize(s.U);
  for (int i = 0; i < H && U.rows() > 0; ++i) {
    MatrixXd rows = MatrixXd::Zero(U.rows(), H * m);
    rows.middleCols(i * m, m) = U.H();
    append_rows(qp.G, qp.g, rows, U.h());
  }
  qp.F.resize(0, H * m);
  qp.f.resize(0);
  return qp;
}

namespace {

// Smallest t such that G x ≤ g + t is feasible.  Every row comes from a
// normalized halfspace of X, U or a target, so t is a distance in state or
// input space.  Returns +inf if the LP fails.
double uniform_infeasibility(const optim::QuadraticProgram& qp) {
  const Eigen::Index d = qp.hessian.rows(), rows = qp.G.rows();
  optim::LinearProgram lp;
  lp.cost = VectorXd::Zero(d + 1);
  lp.cost[d] = 1.0;
  lp.G = MatrixXd::Zero(rows + 1, d + 1);
  lp.G.topLeftCorner(rows, d) = qp.G;
  lp.G.col(d).head(rows).setConstant(-1.0);
  lp.g = VectorXd::Zero(rows + 1);
  lp.g.head(rows) = qp.g;
  lp.G(rows, d) = -1.0;
  lp.g[rows] = 1.0;
  lp.F.resize(0, d + 1);
  lp.f.resize(0);
  const auto r = optim::solve_lp(lp);
  return r.optimal() ? r.x[d] : std::numeric_limits<double>::infinity();
}

optim::SolveResult solve_with_retry(const optim::QuadraticProgram& qp, double tol) {
  optim::SolveResult r = optim::solve_qp(qp, tol);
  if (r.status == optim::SolveStatus::IterationLimit) r = optim::solve_qp(qp, std::max(tol, 1e-6));
  return r;
}

}  // namespace

MPCSolution solve_mpc(const MPCProblem& prob, const VectorXd& x0, double tol) {
  MPCSolution sol;
  const optim::QuadraticProgram qp = assemble_qp(prob, x0);
  // x̄_t = x_t must lie in X; this involves no decision variable.
  if (!prob.X().contains_point(x0, kFeasibilitySlack)) return sol;
  optim::SolveResult r = solve_with_retry(qp, tol);
  if (r.status != optim::SolveStatus::Optimal) {
    // A state that drifted outside a tight set by round-off leaves a
    // problem that is infeasible only at the level of solver accuracy.
    const double t = uniform_infeasibility(qp);
    if (t <= kFeasibilitySlack) {
      optim::QuadraticProgram relaxed = qp;
      relaxed.g.array() += std::max(t, 0.0) + 1e-9;
      r = solve_with_retry(relaxed, tol);
    }
  }
  sol.iterations = r.iterations;
  if (r.status == optim::SolveStatus::Infeasible) return sol;
  if (r.status != optim::SolveStatus::Optimal) {
    throw Error(ErrorCode::Solver, "MPC QP at x0 = " + format_vector(x0) + " ended with status " +
                                       optim::to_string(r.status));
  }
  const int m = prob.sys().m();
  sol.status = MPCStatus::Feasible;
  for (int i = 0; i < prob.holds(); ++i) sol.inputs.push_back(r.x.segment(i * m, m));
  const Prediction p = predict(prob);
  for (int k = 0; k <= prob.N(); ++k) {
    sol.nominal.push_back(p.Phi[static_cast<std::size_t>(k)] * x0 +
                          p.Gamma[static_cast<std::size_t>(k)] * r.x);
  }
  sol.objective = r.objective + state_cost(prob, p, x0);
  return sol;
}

VectorXd step_policy(const MPCProblem& prob, PolicyState& state, const VectorXd& x, int t) {
  if (t < state.anchor) throw Error(ErrorCode::InvalidArgument, "step precedes the hold anchor");
  const bool boundary = (t - state.anchor) % prob.M() == 0;
  if (!boundary && state.held) return *state.held;
  MPCSolution sol = solve_mpc(prob, x);
  if (!sol.feasible()) {
    state.held.reset();
    state.last_solution = std::move(sol);
    throw Error(ErrorCode::InfeasibleAtResolve,
                "MPC infeasible at step " + std::to_string(t) + ", state " + format_vector(x));
  }
  state.held = sol.inputs.front();
  state.last_solution = std::move(sol);
  return *state.held;
}

// ---------------------------------------------------------------------------

std::size_t SimTrace::violations() const {
  std::size_t v = 0;
  for (const auto& r : records) v += (r.viol_X ? 1 : 0) + (r.viol_U ? 1 : 0);
  return v;
}

std::pair<std::size_t, std::size_t> SimTrace::solve_counts() const {
  std::size_t solves = 0, ok = 0;
  for (const auto& r : records) {
    if (!r.solved) continue;
    ++solves;
    if (r.feasible) ++ok;
  }
  return {solves, ok};
}

SwitchDecision check_switch(const VectorXd& x, const SwitchRequest& req, const LTISystem& sys,
                            const Polytope& X, const Polytope& U,
                            const DisturbanceSchedule& sched_hat, double tol) {
  SwitchDecision d;
  d.feasible_region = intersect(pre_m(sys, X, U, req.reach_target, sched_hat, req.M_hat), X);
  if (d.feasible_region.is_empty()) {
    d.violated_row = 0;
    return d;
  }
  d.violated_row = d.feasible_region.violated_row(x, tol);
  d.safe = d.violated_row < 0;
  return d;
}

std::optional<int> adaptive_supervisor(const SimTrace& trace, int current_M,
                                       const SupervisorConfig& cfg) {
  const auto& recs = trace.records;
  const auto w = static_cast<std::size_t>(std::max(1, cfg.window_steps));
  if (recs.size() <= w) return std::nullopt;
  const auto idx = static_cast<Eigen::Index>(cfg.monitored_state);
  const double now = recs.back().x[idx];
  const double before = recs[recs.size() - 1 - w].x[idx];
  const double change = std::abs(now - before);
  const double ref = std::abs(before);
  std::vector<int> ladder = cfg.ladder;
  std::sort(ladder.begin(), ladder.end());
  if (change < 0.01 * cfg.trigger_pct * ref) {
    for (auto it = ladder.rbegin(); it != ladder.rend(); ++it) {
      if (*it < current_M) return *it;
    }
    return std::nullopt;
  }
  if (cfg.allow_increase && change > 0.01 * cfg.increase_pct * ref) {
    for (int M : ladder) {
      if (M > current_M) return M;
    }
  }
  return std::nullopt;
}

SimTrace simulate(const ProblemSelector& select, const VectorXd& x0,
                  const DisturbanceSource& disturbance, const SimOptions& opts) {
  if (opts.steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be non-negative");
  if (!x0.allFinite()) throw Error(ErrorCode::InvalidArgument, "x0 must be finite");
  SimTrace trace;
  trace.seed = opts.seed;
  int M = opts.initial_M;
  PolicyState policy;
  VectorXd x = x0;
  auto base = select(x, M);
  trace.Ts = base->sys().Ts;
  for (int t = 0; t < opts.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    const bool boundary = (t - policy.anchor) % M == 0;
    if (boundary && opts.supervisor && t > policy.anchor) {
      trace.records.push_back(rec);  // the supervisor sees the current state
      const auto want = adaptive_supervisor(trace, M, *opts.supervisor);
      trace.records.pop_back();
      if (want && *want != M) {
        const auto next = select(x, *want);
        const SwitchRequest req{*want, next->reach_target(), t};
        const auto dec = check_switch(x, req, next->sys(), next->X(), next->U(),
                                      next->spec().sched);
        trace.switches.push_back({t, M, *want, dec.safe, dec.violated_row});
        if (dec.safe) {
          M = *want;
          policy = PolicyState{};
          policy.anchor = t;  // hold counter restarts at the switch
        }
      }
    }
    rec.M = M;
    const auto prob = select(x, M);
    rec.solved = (t - policy.anchor) % M == 0;
    try {
      rec.u = step_policy(*prob, policy, x, t);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InfeasibleAtResolve) throw;
      if (t == 0) {
        throw Error(ErrorCode::Infeasible,
                    "initial MPC problem is infeasible at " + format_vector(x0));
      }
      rec.feasible = false;
      rec.viol_X = !prob->X().contains_point(x, opts.violation_tol);
      trace.records.push_back(rec);
      trace.halted = true;
      trace.halt_reason = e.what();
      return trace;
    }
    rec.w = disturbance(t, x);
    rec.viol_X = !prob->X().contains_point(x, opts.violation_tol);
    rec.viol_U = !prob->U().contains_point(rec.u, opts.violation_tol);
    const auto& sys = prob->sys();
    x = sys.A * x + sys.B * rec.u + sys.E * rec.w;
    trace.records.push_back(std::move(rec));
  }
  StepRecord last;
  last.t = opts.steps;
  last.x = x;
  last.M = M;
  last.viol_X = !select(x, M)->X().contains_point(x, opts.violation_tol);
  trace.records.push_back(std::move(last));
  return trace;
}

void write_trace_csv(std::ostream& out, const SimTrace& trace,
                     const std::vector<std::string>& state_names) {
  std::size_t n = state_names.size(), m = 1, o = 1;
  for (const auto& r : trace.records) {
    if (n == 0) n = static_cast<std::size_t>(r.x.size());
    if (r.u.size() > 0) m = static_cast<std::size_t>(r.u.size());
    if (r.w.size() > 0) o = static_cast<std::size_t>(r.w.size());
  }
  std::vector<std::string> names = state_names;
  for (std::size_t i = names.size(); i < n; ++i) names.push_back("x" + std::to_string(i));
  out << "t,time_s";
  for (const auto& s : names) out << ',' << s;
  auto head = [&](const char* base, std::size_t k) {
    if (k == 1) out << ',' << base;
    else for (std::size_t i = 0; i < k; ++i) out << ',' << base << i;
  };
  head("u", m);
  head("w", o);
  out << ",M,solved,feasible,viol_X,viol_U\n";
  auto cells = [&](const VectorXd& v, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) {
      out << ',';
      if (static_cast<Eigen::Index>(i) < v.size()) out << format_double(v[static_cast<Eigen::Index>(i)]);
    }
  };
  for (const auto& r : trace.records) {
    out << r.t << ',' << format_double(r.t * trace.Ts);
    cells(r.x, n);
    cells(r.u, m);
    cells(r.w, o);
    out << ',' << r.M << ',' << (r.solved ? 1 : 0) << ',' << (r.feasible ? 1 : 0) << ','
        << (r.viol_X ? 1 : 0) << ',' << (r.viol_U ? 1 : 0) << '\n';
  }
}

}  // namespace holdmpc
