#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <array>
#include <random>
#include <sstream>

#include "holdmpc/error.hpp"
#include "holdmpc/mpc.hpp"

using namespace holdmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

MatrixXd mat1(double v) { return MatrixXd::Constant(1, 1, v); }

Polytope interval(double lo, double hi) { return Polytope::from_box(vec({lo}), vec({hi})); }

// Sampled double integrator with a disturbance on the velocity.
LTISystem double_integrator() {
  LTISystem s;
  s.A.resize(2, 2);
  s.A << 1, 0.1, 0, 1;
  s.B.resize(2, 1);
  s.B << 0.005, 0.1;
  s.E.resize(2, 1);
  s.E << 0, 0.1;
  s.Ts = 0.1;
  return s;
}

Polytope di_X() { return Polytope::from_box(vec({-5, -2}), vec({5, 2})); }
Polytope di_U() { return interval(-2, 2); }
DisturbanceSchedule di_sched(int M) { return DisturbanceSchedule::repeated(Box{vec({-0.5}), vec({0.5})}, M); }

// Maximal robust control-invariant set of the double integrator, cached per M.
const Polytope& di_invariant(int M) {
  static std::map<int, Polytope> cache;
  auto it = cache.find(M);
  if (it == cache.end()) {
    it = cache.emplace(M, max_control_invariant(double_integrator(), di_X(), di_U(), di_sched(M), M))
             .first;
  }
  return it->second;
}

MPCSpec di_spec(int M, int N, const Polytope& target) {
  MPCSpec s;
  s.sys = double_integrator();
  s.hold = HoldConfig(M, N);
  s.X = di_X();
  s.U = di_U();
  s.sched = di_sched(M);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = mat1(0.1);
  s.P = MatrixXd::Identity(2, 2);
  s.reach_target = target;
  return s;
}

// Largest normalized row residual: negative inside, positive outside.
double signed_margin(const Polytope& p, const VectorXd& x) {
  const Polytope n = normalize(p);
  return (n.H() * x - n.h()).maxCoeff();
}

VectorXd sample_inside(const Polytope& p, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> d1(-5, 5), d2(-2, 2);
  for (;;) {
    VectorXd x = vec({d1(rng), d2(rng)});
    if (signed_margin(p, x) < -margin) return x;
  }
}

LTISystem cruise_system() {
  const double Ts = 0.1;
  LTISystem s;
  s.A.resize(3, 3);
  s.A << 1, -Ts, Ts, 0, 1, 0, 0, 0, 1;
  s.B.resize(3, 1);
  s.B << -0.5 * Ts * Ts, Ts, 0;
  s.E.resize(3, 1);
  s.E << 0.5 * Ts * Ts, 0, Ts;
  s.Ts = Ts;
  return s;
}

Polytope cruise_X() {
  MatrixXd H(4, 3);
  H << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0;
  return Polytope(H, vec({100, -5, 40, 0}));
}

MPCSpec cruise_spec(int M, int N, const Polytope& target) {
  MPCSpec s;
  s.sys = cruise_system();
  s.hold = HoldConfig(M, N);
  s.X = cruise_X();
  s.U = interval(-4, 4);
  s.sched = DisturbanceSchedule::repeated(Box{vec({-4}), vec({4})}, M);
  s.Q = Eigen::Vector3d(1, 0, 0).asDiagonal();
  s.R = mat1(1.0);
  s.P = s.Q;
  s.reach_target = target;
  return s;
}

bool same_bits(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("degenerate horizon M = N = 1 without disturbance") {
  MPCSpec s;
  s.sys = LTISystem{mat1(1.0), mat1(1.0), mat1(0.0), 1.0};
  s.X = interval(-10, 10);
  s.U = interval(-1, 1);
  s.sched = DisturbanceSchedule::constant(vec({0.0}), 1);
  s.Q = mat1(1);
  s.R = mat1(1);
  s.P = mat1(1);
  s.reach_target = interval(-5, 5);
  const MPCProblem prob(s);
  CHECK(prob.tightened_X().empty());
  CHECK(set_equal(prob.tightened_target(), interval(-5, 5)));

  for (double x0 : {-5.5, -3.0, 0.0, 4.2, 5.9}) {
    const auto qp = assemble_qp(prob, vec({x0}));
    REQUIRE(qp.dim() == 1);
    // feasible u must be exactly {u ∈ U : x0 + u ∈ target}, up to the back-off
    const double lo = std::max(-1.0, -5.0 - x0), hi = std::min(1.0, 5.0 - x0);
    for (double u = -1.5; u <= 1.5; u += 0.01) {
      const bool ok = ((qp.G * vec({u}) - qp.g).array() <= 0).all();
      const bool expect = u >= lo && u <= hi;
      if (std::abs(u - lo) > 1e-5 && std::abs(u - hi) > 1e-5) CHECK(ok == expect);
    }
  }
  // x̄ = x0 + u with cost x0² + u² + (x0 + u)²: the optimum is u = -x0/2
  const auto sol = solve_mpc(prob, vec({0.8}));
  REQUIRE(sol.feasible());
  CHECK(sol.inputs[0][0] == doctest::Approx(-0.4).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(0.64 + 0.16 + 0.16).epsilon(1e-6));
}

TEST_CASE("cruise instance M = 5, N = 10 has two held inputs") {
  const MPCProblem prob(cruise_spec(5, 10, cruise_X()));
  const auto qp = assemble_qp(prob, vec({70, 30, 25}));
  CHECK(qp.dim() == 2);
  CHECK(qp.hessian.rows() == 2);
  CHECK(prob.holds() == 2);
  CHECK(prob.tightened_X().size() == 4);
  REQUIRE(prob.error_sets().size() == 5);
  // E_1 = {w (0.005, 0, 0.1) : |w| ≤ 4}
  CHECK(support(prob.error_sets()[0], vec({0, 0, 1})) == doctest::Approx(0.4));
  CHECK(support(prob.error_sets()[0], vec({1, 0, 0})) == doctest::Approx(0.02));
}

TEST_CASE("double integrator M = 1, N = 2 matches the hand-derived condensed QP") {
  LTISystem sys;
  sys.A.resize(2, 2);
  sys.A << 1, 1, 0, 1;
  sys.B.resize(2, 1);
  sys.B << 0.5, 1;
  sys.E = MatrixXd::Zero(2, 1);
  MPCSpec s;
  s.sys = sys;
  s.hold = HoldConfig(1, 2);
  s.X = Polytope::from_box(vec({-10, -10}), vec({10, 10}));
  s.U = interval(-1, 1);
  s.sched = DisturbanceSchedule::constant(vec({0.0}), 1);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = mat1(1);
  s.P = MatrixXd::Identity(2, 2);
  s.reach_target = Polytope::from_box(vec({-5, -5}), vec({5, 5}));
  const MPCProblem prob(s);
  const VectorXd x0 = vec({1, 0});
  const auto qp = assemble_qp(prob, x0);

  // Γ1 = [B 0] = [[.5,0],[1,0]], Γ2 = [AB B] = [[1.5,.5],[1,1]], A x0 = A² x0 = (1,0)
  MatrixXd H(2, 2);
  H << 11, 3.5, 3.5, 4.5;
  CHECK((qp.hessian - H).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((qp.cost - vec({4, 1})).cwiseAbs().maxCoeff() < 1e-12);

  const double b = 0.0;
  MatrixXd Ge(12, 2);
  VectorXd ge(12);
  Ge << 0.5, 0, -0.5, 0, 1, 0, -1, 0,  // x̄1 ∈ target
      0.5, 0, -0.5, 0, 1, 0, -1, 0,    // x̄1 ∈ X
      1, 0, -1, 0, 0, 1, 0, -1;        // u ∈ U
  ge << 4 - b, 6 - b, 5 - b, 5 - b, 9 - b, 11 - b, 10 - b, 10 - b, 1 - b, 1 - b, 1 - b, 1 - b;
  REQUIRE(qp.G.rows() == 12);
  std::vector<bool> used(12, false);
  for (Eigen::Index i = 0; i < 12; ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < 12 && !found; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      if ((qp.G.row(i) - Ge.row(j)).cwiseAbs().maxCoeff() < 1e-12 && std::abs(qp.g[i] - ge[j]) < 1e-12) {
        used[static_cast<std::size_t>(j)] = found = true;
      }
    }
    CHECK_MESSAGE(found, "unexpected row " << i);
  }

  // reported objective equals the cost of the nominal trajectory
  const auto sol = solve_mpc(prob, x0);
  REQUIRE(sol.feasible());
  REQUIRE(sol.nominal.size() == 3);
  double J = 0;
  for (int k = 0; k < 2; ++k) {
    J += sol.nominal[static_cast<std::size_t>(k)].squaredNorm() + sol.inputs[static_cast<std::size_t>(k)].squaredNorm();
  }
  J += sol.nominal[2].squaredNorm();
  CHECK(sol.objective == doctest::Approx(J).epsilon(1e-9));
  CHECK((sol.nominal[1] - (sys.A * x0 + sys.B * sol.inputs[0])).norm() < 1e-12);
}

TEST_CASE("problem validation") {
  const Polytope& C = di_invariant(2);
  auto s = di_spec(2, 4, C);
  CHECK_THROWS_AS(HoldConfig(3, 4), Error);
  s.R = mat1(0.0);
  CHECK_THROWS_AS(MPCProblem{s}, Error);
  s = di_spec(2, 4, C);
  s.Q(0, 0) = -1;
  CHECK_THROWS_AS(MPCProblem{s}, Error);
  s = di_spec(2, 4, C);
  s.sched = DisturbanceSchedule::repeated(Box{vec({0.1}), vec({0.5})}, 2);
  CHECK_THROWS_AS(MPCProblem{s}, Error);
  s = di_spec(2, 4, C);
  s.reach_target = Polytope::empty(2);
  CHECK_THROWS_AS(MPCProblem{s}, Error);
  // a target thinner than the disturbance spread cannot be tightened
  s = di_spec(2, 4, Polytope::from_box(vec({-1, -0.01}), vec({1, 0.01})));
  try {
    MPCProblem p(s);
    FAIL("expected EmptyTightenedSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTightenedSet);
  }
}

TEST_CASE("solve_mpc feasibility examples") {
  const Polytope& C = di_invariant(2);
  const MPCProblem prob(di_spec(2, 4, C));
  SUBCASE("center of the tightened target is feasible") {
    const VectorXd x0 = chebyshev_center(prob.tightened_target()).center;
    const auto sol = solve_mpc(prob, x0);
    REQUIRE(sol.feasible());
    CHECK(sol.inputs.size() == 2);
    CHECK(sol.nominal.size() == 5);
    // every constraint of the condensed problem holds at the solution
    CHECK(prob.tightened_X()[0].contains_point(sol.nominal[1], 1e-7));
    CHECK(prob.tightened_target().contains_point(sol.nominal[2], 1e-7));
    for (int k = 0; k < 4; ++k) CHECK(prob.X().contains_point(sol.nominal[static_cast<std::size_t>(k)], 1e-7));
    for (const auto& u : sol.inputs) CHECK(prob.U().contains_point(u, 1e-7));
  }
  SUBCASE("far outside X is infeasible") {
    CHECK_FALSE(solve_mpc(prob, vec({1e6, 0})).feasible());
  }
  SUBCASE("cruise initial state with an M = 10 slice target") {
    // nominal invariant slice at v0 = 25, extended to a cylinder in v0
    const Polytope slice = intersect(cruise_X(), Polytope::slab(3, 2, 25, 25));
    const Polytope C10 = max_control_invariant(cruise_system(), slice, interval(-4, 4),
                                               DisturbanceSchedule::constant(vec({0.0}), 10), 10);
    const std::array<int, 2> dv{0, 1};
    const Polytope flat = project(C10, dv);
    MatrixXd H = MatrixXd::Zero(flat.rows(), 3);
    H.leftCols(2) = flat.H();
    const MPCProblem cruise(cruise_spec(10, 10, Polytope(H, flat.h())));
    const auto sol = solve_mpc(cruise, vec({70, 30, 25}));
    CHECK(sol.feasible());
    CHECK(sol.inputs.size() == 1);
  }
}

TEST_CASE("step_policy holds the input for M steps") {
  const Polytope& C = di_invariant(5);
  const MPCProblem prob(di_spec(5, 10, C));
  PolicyState st;
  VectorXd x = vec({1.0, 0.5});
  const VectorXd u0 = step_policy(prob, st, x, 0);
  REQUIRE(st.last_solution);
  for (int t = 1; t < 5; ++t) {
    x += vec({0.01, -0.02});  // whatever the state, the held input is returned
    CHECK(same_bits(step_policy(prob, st, x, t), u0));
  }
  step_policy(prob, st, vec({-2.0, 1.0}), 5);
  CHECK_FALSE(same_bits(*st.held, u0));
  CHECK_THROWS_AS(step_policy(prob, st, vec({-2.0, 1.0}), -1), Error);

  PolicyState fresh;
  try {
    step_policy(prob, fresh, vec({4.99, 2.0}), 0);
    FAIL("expected InfeasibleAtResolve");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleAtResolve);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("simulate: steps = 0, zero disturbance, halting and CSV") {
  const Polytope& C = di_invariant(2);
  auto prob = std::make_shared<const MPCProblem>(di_spec(2, 4, C));
  ProblemSelector sel = [&](const VectorXd&, int) { return prob; };
  DisturbanceSource zero = [](int, const VectorXd&) { return vec({0.0}); };

  SimOptions o;
  o.initial_M = 2;
  o.steps = 0;
  auto tr = simulate(sel, vec({1, 0}), zero, o);
  REQUIRE(tr.records.size() == 1);
  CHECK(tr.records[0].u.size() == 0);
  CHECK(tr.records[0].x == vec({1, 0}));

  o.steps = 300;
  tr = simulate(sel, vec({-3, 1.2}), zero, o);
  CHECK_FALSE(tr.halted);
  CHECK(tr.records.size() == 301);
  CHECK(tr.violations() == 0);
  CHECK(tr.solve_counts() == std::make_pair<std::size_t, std::size_t>(150, 150));
  for (std::size_t t = 0; t + 1 < tr.records.size(); ++t) {
    CHECK(tr.records[t].solved == (t % 2 == 0));
    if (t % 2 == 1) CHECK(same_bits(tr.records[t].u, tr.records[t - 1].u));
  }

  // a disturbance far outside W drives the state out of the feasible region
  DisturbanceSource kick = [](int t, const VectorXd&) { return vec({t == 3 ? 40.0 : 0.0}); };
  o.steps = 20;
  tr = simulate(sel, vec({0, 0}), kick, o);
  CHECK(tr.halted);
  CHECK_FALSE(tr.records.back().feasible);
  CHECK(tr.records.back().t == 4);
  CHECK(tr.halt_reason.find("infeasible") != std::string::npos);

  try {
    simulate(sel, vec({4.99, 2.0}), zero, o);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }

  std::ostringstream csv;
  o.steps = 2;
  write_trace_csv(csv, simulate(sel, vec({1, 0}), zero, o));
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "t,time_s,x0,x1,u,w,M,solved,feasible,viol_X,viol_U");
  int rows = 0;
  std::string last;
  while (std::getline(lines, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 3);
  CHECK(last.rfind("2,0.2,", 0) == 0);
  CHECK(last.find(",,,2,0,1,0,0") != std::string::npos);
}

TEST_CASE("property: recursive feasibility under random disturbances") {
  for (int M : {1, 2, 5}) {
    const Polytope& C = di_invariant(M);
    auto prob = std::make_shared<const MPCProblem>(di_spec(M, 2 * M, C));
    ProblemSelector sel = [&](const VectorXd&, int) { return prob; };
    std::mt19937_64 rng(1000 + static_cast<unsigned>(M));
    std::vector<VectorXd> starts;
    for (int i = 0; i < 20; ++i) starts.push_back(sample_inside(C, rng, 1e-3));
    std::size_t total_solves = 0;
    for (int run = 0; run < 30; ++run) {
      std::mt19937_64 wr(static_cast<std::uint64_t>(run));
      std::uniform_real_distribution<double> uw(-0.5, 0.5);
      DisturbanceSource src = [&](int, const VectorXd&) { return vec({uw(wr)}); };
      SimOptions o;
      o.steps = 300;
      o.initial_M = M;
      o.seed = static_cast<std::uint64_t>(run);
      const auto tr = simulate(sel, starts[static_cast<std::size_t>(run % 20)], src, o);
      CHECK_FALSE(tr.halted);
      CHECK(tr.violations() == 0);
      const auto [solves, ok] = tr.solve_counts();
      CHECK(solves == ok);
      total_solves += solves;
    }
    CHECK(total_solves == static_cast<std::size_t>(30 * ((300 + M - 1) / M)));
  }
}

TEST_CASE("property: the MPC feasible region is Pre^M(target) ∩ X") {
  const int M = 2, N = 4;
  const Polytope& C = di_invariant(M);
  const auto K = controllable_set(double_integrator(), di_X(), di_U(), C, di_sched(M), M, N);
  REQUIRE(K.size() == 3);
  const MPCProblem prob(di_spec(M, N, K[1]));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d1(-6, 6), d2(-2.5, 2.5);
  int inside = 0, outside = 0;
  for (int i = 0; i < 600; ++i) {
    const VectorXd x = vec({d1(rng), d2(rng)});
    const double m = signed_margin(K[2], x);
    if (std::abs(m) <= 1e-4) continue;
    const bool feasible = solve_mpc(prob, x).feasible();
    CHECK_MESSAGE(feasible == (m < 0), "x = " << x.transpose() << " margin " << m);
    (m < 0 ? inside : outside)++;
  }
  CHECK(inside > 50);
  CHECK(outside > 50);
}

TEST_CASE("property: cost is non-increasing for the zero-disturbance regulator") {
  auto s = di_spec(1, 10, di_invariant(1));
  s.sched = DisturbanceSchedule::constant(vec({0.0}), 1);
  auto prob = std::make_shared<const MPCProblem>(s);
  PolicyState st;
  std::mt19937_64 rng(3);
  for (int run = 0; run < 5; ++run) {
    VectorXd x = sample_inside(di_invariant(1), rng, 1e-2);
    double prev = INFINITY;
    st = PolicyState{};
    for (int t = 0; t < 60; ++t) {
      const VectorXd u = step_policy(*prob, st, x, t);
      const double J = st.last_solution->objective;
      CHECK(J <= prev + 1e-7 * (1 + std::abs(prev)));
      prev = J;
      x = prob->sys().A * x + prob->sys().B * u;
    }
  }
}

TEST_CASE("check_switch examples") {
  const LTISystem sys = double_integrator();
  SUBCASE("no-op switch is safe wherever the current MPC is feasible") {
    const Polytope& C = di_invariant(2);
    std::mt19937_64 rng(11);
    const MPCProblem prob(di_spec(2, 4, C));
    for (int i = 0; i < 20; ++i) {
      const VectorXd x = sample_inside(C, rng, 1e-4);
      REQUIRE(solve_mpc(prob, x).feasible());
      const auto d = check_switch(x, SwitchRequest{2, C, 0}, sys, di_X(), di_U(), di_sched(2));
      CHECK(d.safe);
      CHECK(d.violated_row == -1);
    }
  }
  SUBCASE("a state at the edge of X is refused with a certificate") {
    const Polytope& C5 = di_invariant(5);
    CHECK(contains(di_invariant(1), C5));
    const auto d0 = check_switch(vec({0, 0}), SwitchRequest{5, C5, 0}, sys, di_X(), di_U(), di_sched(5));
    CHECK(d0.safe);
    VectorXd worst;
    double gap = -INFINITY;
    for (const auto& v : vertices(di_X())) {
      const double m = signed_margin(d0.feasible_region, v);
      if (m > gap) gap = m, worst = v;
    }
    REQUIRE(gap > 1e-3);
    const auto d = check_switch(worst, SwitchRequest{5, C5, 0}, sys, di_X(), di_U(), di_sched(5));
    CHECK_FALSE(d.safe);
    REQUIRE(d.violated_row >= 0);
    const auto r = static_cast<Eigen::Index>(d.violated_row);
    CHECK(d.feasible_region.H().row(r).dot(worst) > d.feasible_region.h()[r]);
  }
}

TEST_CASE("adaptive_supervisor rule") {
  SimTrace tr;
  auto fill = [&](double rate) {
    tr.records.clear();
    for (int t = 0; t <= 20; ++t) {
      StepRecord r;
      r.t = t;
      r.x = vec({50.0 * std::pow(1 + rate, t / 10.0), 0.0});
      tr.records.push_back(r);
    }
  };
  SupervisorConfig cfg;
  fill(0.05);
  CHECK_FALSE(adaptive_supervisor(tr, 10, cfg).has_value());
  fill(0.005);
  CHECK(adaptive_supervisor(tr, 10, cfg) == 5);
  CHECK(adaptive_supervisor(tr, 5, cfg) == 1);
  CHECK_FALSE(adaptive_supervisor(tr, 1, cfg).has_value());
  fill(-0.005);
  CHECK(adaptive_supervisor(tr, 10, cfg) == 5);
  fill(0.2);
  CHECK_FALSE(adaptive_supervisor(tr, 1, cfg).has_value());
  cfg.allow_increase = true;
  CHECK(adaptive_supervisor(tr, 1, cfg) == 5);
  tr.records.resize(5);
  CHECK_FALSE(adaptive_supervisor(tr, 10, cfg).has_value());
}

TEST_CASE("simulate with a supervisor switches only through check_switch") {
  // holding still near x = (3, 0) keeps the position constant, so the rule fires
  std::map<int, std::shared_ptr<const MPCProblem>> probs;
  for (int M : {5, 2, 1}) {
    auto s = di_spec(M, 10, di_invariant(M));
    s.Q = Eigen::Vector2d(0.0, 1.0).asDiagonal();
    s.P = s.Q;
    probs[M] = std::make_shared<const MPCProblem>(s);
  }
  ProblemSelector sel = [&](const VectorXd&, int M) { return probs.at(M); };
  DisturbanceSource zero = [](int, const VectorXd&) { return vec({0.0}); };
  SimOptions o;
  o.steps = 60;
  o.initial_M = 5;
  o.supervisor = SupervisorConfig{{5, 2, 1}, 1.0, 10, 0, false, 5.0};
  const auto tr = simulate(sel, vec({3, 0}), zero, o);
  CHECK_FALSE(tr.halted);
  CHECK(tr.violations() == 0);
  REQUIRE(tr.switches.size() >= 2);
  CHECK(tr.switches[0].from == 5);
  CHECK(tr.switches[0].to == 2);
  CHECK(tr.switches[0].accepted);
  CHECK(tr.switches[0].t == 10);
  // the hold counter restarts at the switch step
  const int ts = tr.switches[0].t;
  CHECK(tr.records[static_cast<std::size_t>(ts)].solved);
  CHECK(tr.records[static_cast<std::size_t>(ts)].M == 2);
  CHECK(tr.records[static_cast<std::size_t>(ts + 2)].solved);
  CHECK(tr.records.back().M == 1);
}
