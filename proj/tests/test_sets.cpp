#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "holdmpc/sets.hpp"

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

LTISystem scalar(double a, double b, double e = 0.0) {
  return LTISystem{mat1(a), mat1(b), mat1(e), 1.0};
}

// The platoon model with Ts = 0.1, written out independently of the cruise module.
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

// {5 ≤ d ≤ 100, 0 ≤ v1 ≤ 40}, v0 free.
Polytope cruise_X() {
  MatrixXd H(4, 3);
  H << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0;
  return Polytope(H, vec({100, -5, 40, 0}));
}

Polytope cruise_U() { return interval(-4, 4); }

Polytope cruise_slice(double v0) { return intersect(cruise_X(), Polytope::slab(3, 2, v0, v0)); }

bool rows_hold(const Polytope& p, const VectorXd& x, double slack) {
  return ((p.H() * x - p.h()).array() <= slack).all();
}

}  // namespace

TEST_CASE("error_set examples") {
  const LTISystem sys = cruise_system();
  const auto sched = DisturbanceSchedule::repeated(Box(vec({-4}), vec({4})), 3);
  const Polytope e1 = error_set(sys, sched, 1);
  const auto vs = vertices(e1);
  REQUIRE(vs.size() == 2);
  // hand evaluation: E·(±4) = ±(0.02, 0, 0.4)
  const VectorXd tip = vec({0.02, 0.0, 0.4});
  const bool ordered = (vs[0] - tip).norm() < 1e-12;
  CHECK((ordered ? vs[0] : vs[1]).isApprox(tip, 1e-12));
  CHECK((ordered ? vs[1] : vs[0]).isApprox(-tip, 1e-12));

  const auto zero = DisturbanceSchedule::constant(vec({0}), 4);
  for (int k = 1; k <= 4; ++k) {
    const auto v = vertices(error_set(sys, zero, k));
    REQUIRE(v.size() == 1);
    CHECK(v[0].norm() < 1e-12);
  }
  CHECK_THROWS_AS(error_set(sys, sched, 0), Error);
  CHECK_THROWS_AS(error_set(sys, sched, 4), Error);
}

TEST_CASE("error_set matches summed supports and the one-step recursion") {
  const LTISystem sys = cruise_system();
  const auto sched = DisturbanceSchedule(std::vector<Box>{
      Box(vec({-4}), vec({4})), Box(vec({-1}), vec({3})), Box(vec({0}), vec({2})),
      Box(vec({-4}), vec({0}))});
  std::mt19937 rng(7);
  std::normal_distribution<double> n01;
  for (int k = 1; k <= 4; ++k) {
    const Polytope ek = error_set(sys, sched, k);
    for (int t = 0; t < 20; ++t) {
      const VectorXd d = vec({n01(rng), n01(rng), n01(rng)});
      double expect = 0.0;
      MatrixXd Ap = MatrixXd::Identity(3, 3);
      // Σ_j σ_{W_j}((A^{k-1-j} E)ᵀ d), accumulated from j = k-1 downwards
      for (int j = k - 1; j >= 0; --j) {
        const double c = (Ap * sys.E).col(0).dot(d);
        const auto& b = *sched.box(j);
        expect += std::max(c * b.lower[0], c * b.upper[0]);
        Ap = sys.A * Ap;
      }
      CHECK(support(ek, d) == doctest::Approx(expect).epsilon(1e-8));
    }
    if (k > 1) {
      const Polytope rec = minkowski_sum(affine_map(error_set(sys, sched, k - 1), sys.A),
                                         affine_map(sched.set(k - 1), sys.E));
      CHECK(set_equal(ek, rec));
    }
  }
}

TEST_CASE("pre_m examples") {
  const LTISystem sys = scalar(1, 1);
  const auto zero = DisturbanceSchedule::constant(vec({0}), 1);
  const Polytope X = interval(-1, 1);
  CHECK(pre_m(sys, X, X, Polytope::empty(1), zero, 1).is_empty());
  CHECK(set_equal(pre_m(sys, X, X, X, zero, 1), interval(-2, 2)));
  CHECK_THROWS_AS(pre_m(sys, X, X, X, zero, 2), Error);
}

TEST_CASE("pre_m agrees with a grid oracle on the cruise model, M = 1") {
  const LTISystem sys = cruise_system();
  const Polytope X = cruise_X();
  const Polytope U = cruise_U();
  const auto sched = DisturbanceSchedule::repeated(Box(vec({-4}), vec({4})), 1);
  const Polytope pre = pre_m(sys, X, U, X, sched, 1);
  CHECK(pre.dim() == 3);

  constexpr int G = 41;
  const double d0 = 5, d1 = 100, v0 = 0, v1 = 40;
  auto coord = [&](int i, double lo, double hi) { return lo + (hi - lo) * i / (G - 1); };
  std::vector<char> oracle(G * G * G, 0);
  auto at = [&](int i, int j, int k) -> char& { return oracle[static_cast<std::size_t>((i * G + j) * G + k)]; };
  const MatrixXd& H = X.H();
  const VectorXd& h = X.h();
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      for (int k = 0; k < G; ++k) {
        const VectorXd x = vec({coord(i, d0, d1), coord(j, v0, v1), coord(k, v0, v1)});
        bool any = false;
        for (int a = 0; a < 81 && !any; ++a) {
          const double u = -4.0 + 8.0 * a / 80.0;
          bool ok = true;
          for (double w : {-4.0, 4.0}) {
            const VectorXd nx = sys.A * x + sys.B * u + sys.E * w;
            ok = ok && ((H * nx - h).array() <= 1e-9).all();
          }
          any = ok;
        }
        at(i, j, k) = any;
      }
    }
  }
  int in_oracle = 0, mismatches = 0;
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      for (int k = 0; k < G; ++k) {
        const VectorXd x = vec({coord(i, d0, d1), coord(j, v0, v1), coord(k, v0, v1)});
        const bool in_pre = pre.contains_point(x, 1e-9);
        if (at(i, j, k)) {
          ++in_oracle;
          if (!in_pre) ++mismatches;
        } else if (in_pre) {
          // allowed only within one grid cell of an oracle point
          bool near = false;
          for (int di = -1; di <= 1 && !near; ++di)
            for (int dj = -1; dj <= 1 && !near; ++dj)
              for (int dk = -1; dk <= 1 && !near; ++dk) {
                const int a = i + di, b = j + dj, c = k + dk;
                if (a >= 0 && b >= 0 && c >= 0 && a < G && b < G && c < G) near = at(a, b, c);
              }
          if (!near) ++mismatches;
        }
      }
    }
  }
  CHECK(in_oracle > 0);
  CHECK(mismatches == 0);
}

TEST_CASE("pre_pi_m examples") {
  const LTISystem sys = cruise_system();
  const Polytope X = cruise_X();
  const auto sched = DisturbanceSchedule::repeated(Box(vec({-1}), vec({1})), 2);
  const FeedbackGain zero{MatrixXd::Zero(1, 3)};
  const Polytope S = intersect(X, Polytope::slab(3, 2, 0, 40));
  CHECK(set_equal(pre_pi_m(sys, X, cruise_U(), S, sched, 2, zero),
                  pre_m(sys, X, Polytope::point(vec({0})), S, sched, 2)));
  // a gain that regulates the gap towards the front car
  const FeedbackGain gain{(MatrixXd(1, 3) << -0.5, -1.0, 1.0).finished()};
  CHECK(contains(pre_m(sys, X, cruise_U(), S, sched, 2),
                 pre_pi_m(sys, X, cruise_U(), S, sched, 2, gain)));
  const Polytope all = Polytope::universe(3);
  const Polytope r = pre_pi_m(sys, all, Polytope::universe(1), all, sched, 2, gain);
  CHECK(set_equal(r, all));
  CHECK(r.rows() == 0);
}

TEST_CASE("controllable_set examples") {
  const LTISystem sys = scalar(1, 1);
  const auto zero = DisturbanceSchedule::constant(vec({0}), 1);
  const Polytope X = interval(-5, 5);
  const Polytope target = interval(-0.5, 0.5);
  const auto k0 = controllable_set(sys, X, interval(-1, 1), target, zero, 1, 0);
  REQUIRE(k0.size() == 1);
  CHECK(set_equal(k0[0], target));
  const auto chain = controllable_set(sys, X, interval(-1, 1), target, zero, 1, 6);
  REQUIRE(chain.size() == 7);
  for (std::size_t i = 1; i < chain.size(); ++i) CHECK(contains(chain[i], chain[i - 1]));
  CHECK(set_equal(chain[3], interval(-3.5, 3.5)));
  CHECK(set_equal(chain[6], X));
  CHECK_THROWS_AS(controllable_set(sys, X, X, target, DisturbanceSchedule::constant(vec({0}), 2), 2, 3),
                  Error);
}

TEST_CASE("controllable_set matches the unrolled recursion on cruise slices") {
  const LTISystem sys = cruise_system();
  const Polytope X = cruise_X();
  const int M = 5, N = 10;
  const auto sched = DisturbanceSchedule::constant(vec({-4}), M);
  const Polytope target = intersect(cruise_slice(0.0), Polytope::slab(3, 1, 0, 0));
  const auto chain = controllable_set(sys, X, cruise_U(), target, sched, M, N);
  REQUIRE(chain.size() == 3);
  Polytope k = target;
  for (int i = 1; i <= N / M; ++i) {
    k = intersect(pre_m(sys, X, cruise_U(), k, sched, M), X);
    CHECK(set_equal(chain[static_cast<std::size_t>(i)], k));
  }
  const auto empty_chain =
      controllable_set(sys, X, cruise_U(), Polytope::empty(3), sched, M, N);
  for (const auto& p : empty_chain) CHECK(p.is_empty());
}

TEST_CASE("max_control_invariant examples") {
  const auto zero = DisturbanceSchedule::constant(vec({0}), 1);
  const Polytope X = interval(-1, 1);
  CHECK(set_equal(max_control_invariant(scalar(0.5, 1), X, X, zero, 1), X));
  CHECK(set_equal(max_control_invariant(scalar(0.5, 1), X, Polytope::point(vec({0})), zero, 1), X));
  // x⁺ = 2x + u with |u| ≤ 1 keeps [-1, 1] invariant
  CHECK(set_equal(max_control_invariant(scalar(2, 1), X, X, zero, 1), X));
  // with |u| ≤ 0.5 only [-0.5, 0.5] survives
  CHECK(set_equal(max_control_invariant(scalar(2, 1), X, interval(-0.5, 0.5), zero, 1),
                  interval(-0.5, 0.5)));
  CHECK_THROWS_AS(max_control_invariant(scalar(0.5, 1), X, X, zero, 1, 0), Error);
}

TEST_CASE("max_control_invariant reports NoConvergence with the last iterate") {
  const auto zero = DisturbanceSchedule::constant(vec({0}), 1);
  try {
    max_control_invariant(scalar(2, 1), interval(-1, 1), interval(-0.5, 0.5), zero, 1, 1);
    FAIL("expected NoConvergence");
  } catch (const NoConvergenceError& e) {
    CHECK(e.code() == ErrorCode::NoConvergence);
    CHECK(set_equal(e.last_iterate(), interval(-0.75, 0.75)));
  }
}

TEST_CASE("max_positive_invariant examples") {
  const auto zero = DisturbanceSchedule::constant(vec({0}), 1);
  const Polytope X = interval(-1, 1);
  const FeedbackGain k0{MatrixXd::Zero(1, 1)};
  CHECK(set_equal(max_positive_invariant(scalar(0.5, 1), X, X, zero, 1, k0), X));
  // destabilizing: x⁺ = 2x halves the interval every iteration until it vanishes
  CHECK(max_positive_invariant(scalar(2, 1), X, X, zero, 1, k0).is_empty());
  const FeedbackGain k1{mat1(1.2)};
  const Polytope O = max_positive_invariant(scalar(2, 1), X, X, zero, 1, k1);
  CHECK(contains(max_control_invariant(scalar(2, 1), X, X, zero, 1), O));
  CHECK_FALSE(O.is_empty());
}

TEST_CASE("cruise nominal slice: invariance certificate and nestedness") {
  const LTISystem sys = cruise_system();
  const Polytope X = cruise_X();
  const Polytope U = cruise_U();
  const Polytope Xv = cruise_slice(0.0);
  std::map<int, Polytope> C;
  for (int M : {1, 2, 5, 10}) {
    const auto sched = DisturbanceSchedule::constant(vec({0}), M);
    const auto t0 = std::chrono::steady_clock::now();
    C[M] = max_control_invariant(sys, Xv, U, sched, M);
    MESSAGE("M=" << M << " rows=" << C[M].rows() << " time="
                 << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    REQUIRE_FALSE(C[M].is_empty());
    // one-step certificate: every point of C can be held back into C
    CHECK(contains(intersect(pre_m(sys, Xv, U, C[M], sched, M), Xv), C[M], 1e-6));
  }
  for (auto [big, small] : {std::pair{10, 5}, {10, 2}, {10, 1}, {5, 1}}) {
    CHECK(contains(C[small], C[big]));
  }
}

TEST_CASE("property: pre_m is monotone in the target and in the disturbance") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LTISystem sys;
  sys.A.resize(2, 2);
  sys.B.resize(2, 1);
  sys.E = MatrixXd::Identity(2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    sys.A << 1 + 0.2 * u(rng), 0.3 * u(rng), 0.3 * u(rng), 1 + 0.2 * u(rng);
    sys.B << u(rng), 1.0;
    const Polytope X = Polytope::from_box(vec({-3, -3}), vec({3, 3}));
    const Polytope U = interval(-1, 1);
    const Polytope S2 = Polytope::from_box(vec({-2, -2}), vec({2, 2}));
    const Polytope S1 = intersect(S2, Polytope::from_box(vec({-1, -2}), vec({2, 1})));
    const int M = 1 + trial % 3;
    const auto small = DisturbanceSchedule::repeated(Box(vec({-0.05, -0.05}), vec({0.05, 0.05})), M);
    const auto large = DisturbanceSchedule::repeated(Box(vec({-0.1, -0.05}), vec({0.1, 0.2})), M);
    CHECK(contains(pre_m(sys, X, U, S2, small, M), pre_m(sys, X, U, S1, small, M)));
    CHECK(contains(pre_m(sys, X, U, S2, small, M), pre_m(sys, X, U, S2, large, M)));
    // a polytope (non-box) schedule goes through the LP support path
    std::vector<Polytope> polys(static_cast<std::size_t>(M), large.set(0));
    CHECK(set_equal(pre_m(sys, X, U, S2, DisturbanceSchedule(polys), M),
                    pre_m(sys, X, U, S2, large, M), 1e-6));
  }
}

TEST_CASE("property: zero-disturbance pre_m equals the classical one-step set") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LTISystem sys;
  sys.A.resize(2, 2);
  sys.B.resize(2, 1);
  sys.E = MatrixXd::Zero(2, 1);
  for (int trial = 0; trial < 10; ++trial) {
    sys.A << 1, 0.1 + 0.1 * u(rng), 0.2 * u(rng), 1;
    sys.B << 0.1 * u(rng), 1.0;
    const Polytope X = Polytope::from_box(vec({-3, -3}), vec({3, 3}));
    const Polytope U = interval(-1, 1);
    const Polytope S = Polytope::from_box(vec({-1, -1.5}), vec({2, 1}));
    // {x : ∃u ∈ U, Ax + Bu ∈ S} built directly
    MatrixXd H(S.rows() + U.rows(), 3);
    H << S.H() * sys.A, S.H() * sys.B, MatrixXd::Zero(U.rows(), 2), U.H();
    VectorXd h(S.rows() + U.rows());
    h << S.h(), U.h();
    const std::vector<int> keep{0, 1};
    const Polytope oracle = project(Polytope(H, h), keep);
    CHECK(set_equal(pre_m(sys, X, U, S, DisturbanceSchedule::constant(vec({0}), 1), 1), oracle));
  }
}

TEST_CASE("set-family archives round-trip and refuse to overwrite") {
  const auto dir = std::filesystem::temp_directory_path() / "holdmpc_test_family";
  std::filesystem::remove_all(dir);
  SetFamily fam;
  fam.manifest.system_hash = system_hash(cruise_system());
  fam.manifest.M = 5;
  fam.manifest.schedule = DisturbanceSchedule::constant(vec({-4}), 5).describe();
  fam.manifest.extra["v0_base"] = "0";
  fam.slices = {cruise_slice(0.0), cruise_slice(2.0), Polytope::empty(3)};
  write_family(dir.string(), fam, false);
  const SetFamily back = read_family(dir.string());
  CHECK(back.manifest.system_hash == fam.manifest.system_hash);
  CHECK(back.manifest.M == 5);
  CHECK(back.manifest.schedule == fam.manifest.schedule);
  CHECK(back.manifest.slice_count == 3);
  CHECK(back.manifest.extra.at("v0_base") == "0");
  REQUIRE(back.slices.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.slices[i].H() == fam.slices[i].H());
    CHECK(back.slices[i].h() == fam.slices[i].h());
  }
  try {
    write_family(dir.string(), fam, false);
    FAIL("expected AlreadyExists");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlreadyExists);
  }
  fam.slices.pop_back();
  write_family(dir.string(), fam, true);
  CHECK(read_family(dir.string()).slices.size() == 2);
  CHECK_FALSE(std::filesystem::exists(dir / "slice_2.hpoly"));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_family(dir.string()), Error);
}

TEST_CASE("system_hash is stable and sensitive") {
  const LTISystem a = cruise_system();
  LTISystem b = a;
  b.A(0, 1) += 1e-12;
  CHECK(system_hash(a) == system_hash(cruise_system()));
  CHECK(system_hash(a) != system_hash(b));
  CHECK(system_hash(a).size() == 16);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(DisturbanceSchedule(std::vector<Box>{}), Error);
  CHECK_THROWS_AS(DisturbanceSchedule(std::vector<Polytope>{Polytope::universe(1)}), Error);
  CHECK_THROWS_AS(DisturbanceSchedule(std::vector<Box>{Box(vec({0}), vec({1})), Box(vec({0, 0}), vec({1, 1}))}),
                  Error);
  CHECK(DisturbanceSchedule::repeated(Box(vec({-1}), vec({1})), 2).all_contain_origin());
  CHECK_FALSE(DisturbanceSchedule::repeated(Box(vec({0.5}), vec({1})), 2).all_contain_origin());
  CHECK_THROWS_AS(HoldConfig(3, 10), Error);
  CHECK(HoldConfig(5, 10).N == 10);
}
