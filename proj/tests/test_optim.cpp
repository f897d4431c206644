#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "holdmpc/error.hpp"
#include "holdmpc/optim.hpp"

using namespace holdmpc;
using namespace holdmpc::optim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LinearProgram interval_lp(double cost, double lo, double hi) {
  LinearProgram lp;
  lp.cost = VectorXd::Constant(1, cost);
  lp.G.resize(2, 1);
  lp.G << 1, -1;
  lp.g.resize(2);
  lp.g << hi, -lo;
  return lp;
}

// Brute-force LP oracle: enumerate every d-subset of rows, solve the square
// system, keep feasible points, return the best objective.
double vertex_enumeration_min(const LinearProgram& lp) {
  const int d = static_cast<int>(lp.cost.size());
  const int m = static_cast<int>(lp.G.rows());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(d);
  for (int i = 0; i < d; ++i) idx[i] = i;
  while (true) {
    MatrixXd A(d, d);
    VectorXd b(d);
    for (int i = 0; i < d; ++i) {
      A.row(i) = lp.G.row(idx[i]);
      b[i] = lp.g[idx[i]];
    }
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (lu.rank() == d) {
      const VectorXd x = lu.solve(b);
      if (((lp.G * x - lp.g).array() <= 1e-9).all()) {
        best = std::min(best, lp.cost.dot(x));
      }
    }
    int k = d - 1;
    while (k >= 0 && idx[k] == m - d + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < d; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

}  // namespace

TEST_CASE("solve_lp: interval endpoint") {
  const auto r = solve_lp(interval_lp(1.0, -1.0, 1.0));
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("solve_lp: empty interval yields a valid Farkas certificate") {
  LinearProgram lp;
  lp.cost = VectorXd::Zero(1);
  lp.G.resize(2, 1);
  lp.G << 1, -1;
  lp.g.resize(2);
  lp.g << -1, -1;  // x ≤ -1, x ≥ 1
  const auto r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::Infeasible);
  CHECK(validate_certificate(lp.G, lp.g, lp.F, lp.f, r.certificate,
                             r.certificate_eq, 1e-8));
  CHECK(r.certificate.minCoeff() >= 0.0);
}

TEST_CASE("solve_lp: box corner") {
  LinearProgram lp;
  lp.cost = VectorXd::Constant(2, -1.0);
  lp.G.resize(4, 2);
  lp.G << 1, 0, 0, 1, -1, 0, 0, -1;
  lp.g.resize(4);
  lp.g << 1, 1, 0, 0;
  const auto r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("solve_lp: unbounded objective") {
  LinearProgram lp;
  lp.cost = VectorXd::Constant(1, -1.0);
  lp.G.resize(1, 1);
  lp.G << -1;
  lp.g = VectorXd::Zero(1);  // x ≥ 0, maximize x
  CHECK(solve_lp(lp).status == SolveStatus::Unbounded);
}

TEST_CASE("solve_lp: degenerate zero rows") {
  LinearProgram lp = interval_lp(1.0, -1.0, 1.0);
  lp.G.conservativeResize(3, 1);
  lp.g.conservativeResize(3);
  lp.G(2, 0) = 0.0;
  SUBCASE("non-negative rhs is dropped") {
    lp.g[2] = 0.5;
    CHECK(solve_lp(lp).status == SolveStatus::Optimal);
  }
  SUBCASE("negative rhs is infeasible immediately") {
    lp.g[2] = -0.5;
    const auto r = solve_lp(lp);
    REQUIRE(r.status == SolveStatus::Infeasible);
    CHECK(validate_certificate(lp.G, lp.g, lp.F, lp.f, r.certificate,
                               r.certificate_eq, 1e-8));
  }
}

TEST_CASE("solve_lp: equality constraints") {
  // min x + 2y s.t. x + y = 1, x, y ≥ 0  → (1, 0)
  LinearProgram lp;
  lp.cost.resize(2);
  lp.cost << 1, 2;
  lp.G.resize(2, 2);
  lp.G << -1, 0, 0, -1;
  lp.g = VectorXd::Zero(2);
  lp.F.resize(1, 2);
  lp.F << 1, 1;
  lp.f = VectorXd::Ones(1);
  const auto r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("solve_lp: malformed input") {
  LinearProgram lp = interval_lp(1.0, -1.0, 1.0);
  lp.g.resize(3);
  CHECK_THROWS_AS(solve_lp(lp), Error);
}

TEST_CASE("solve_lp: 200 random bounded LPs agree with vertex enumeration") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> dim_dist(1, 6);
  int checked = 0;
  while (checked < 200) {
    const int d = dim_dist(rng);
    const int extra = std::uniform_int_distribution<int>(0, 20 - 2 * d)(rng);
    LinearProgram lp;
    lp.cost.resize(d);
    for (int i = 0; i < d; ++i) lp.cost[i] = unif(rng);
    const int m = 2 * d + extra;
    lp.G.resize(m, d);
    lp.g.resize(m);
    // bounding box keeps the region bounded
    for (int i = 0; i < d; ++i) {
      lp.G.row(2 * i).setZero();
      lp.G(2 * i, i) = 1.0;
      lp.g[2 * i] = 1.0 + std::abs(unif(rng));
      lp.G.row(2 * i + 1).setZero();
      lp.G(2 * i + 1, i) = -1.0;
      lp.g[2 * i + 1] = 1.0 + std::abs(unif(rng));
    }
    VectorXd x_feas(d);
    for (int i = 0; i < d; ++i) x_feas[i] = 0.5 * unif(rng);
    for (int r = 2 * d; r < m; ++r) {
      for (int j = 0; j < d; ++j) lp.G(r, j) = unif(rng);
      lp.g[r] = lp.G.row(r).dot(x_feas) + 0.5 * std::abs(unif(rng));
    }
    const auto res = solve_lp(lp);
    REQUIRE(res.status == SolveStatus::Optimal);
    const double oracle = vertex_enumeration_min(lp);
    CHECK(res.objective == doctest::Approx(oracle).epsilon(1e-6).scale(1.0));
    // duality gap
    CHECK(std::abs(res.objective - res.dual_objective) <=
          1e-8 * (1.0 + std::abs(res.objective)) * 10);
    ++checked;
  }
}

TEST_CASE("solve_lp: random infeasible systems produce valid certificates") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 4;
    LinearProgram lp;
    lp.cost = VectorXd::Zero(d);
    const int m = 2 * d + 4;
    lp.G.resize(m, d);
    lp.g.resize(m);
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < d; ++j) lp.G(r, j) = unif(rng);
    // a·x ≤ -1 together with -a·x ≤ -1 is empty
    lp.G.row(m - 1) = -lp.G.row(m - 2);
    for (int r = 0; r < m; ++r) lp.g[r] = 1.0 + std::abs(unif(rng));
    lp.g[m - 2] = -1.0;
    lp.g[m - 1] = -1.0;
    const auto res = solve_lp(lp);
    REQUIRE(res.status == SolveStatus::Infeasible);
    CHECK(res.certificate.minCoeff() >= -1e-12);
    CHECK(validate_certificate(lp.G, lp.g, lp.F, lp.f, res.certificate,
                               res.certificate_eq, 1e-8));
  }
}

TEST_CASE("solve_qp: active bound") {
  QuadraticProgram qp;
  qp.hessian = MatrixXd::Constant(1, 1, 2.0);
  qp.cost = VectorXd::Zero(1);
  qp.G = MatrixXd::Constant(1, 1, -1.0);
  qp.g = VectorXd::Constant(1, -1.0);
  const auto r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("solve_qp: unconstrained minimum") {
  QuadraticProgram qp;
  qp.hessian = 2.0 * MatrixXd::Identity(2, 2);
  qp.cost = VectorXd::Zero(2);
  const auto r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x.norm() <= 1e-7);
  CHECK(std::abs(r.objective) <= 1e-7);
}

TEST_CASE("solve_qp: projection onto an interval matches the closed form") {
  // min (x-3)² on [0, 1]: closed-form projection clamp(3, 0, 1) = 1, value 4
  const double target = 3.0, lo = 0.0, hi = 1.0;
  const double x_star = std::clamp(target, lo, hi);
  const double obj_star = (x_star - target) * (x_star - target);
  QuadraticProgram qp;
  qp.hessian = MatrixXd::Constant(1, 1, 2.0);
  qp.cost = VectorXd::Constant(1, -2.0 * target);
  qp.G.resize(2, 1);
  qp.G << 1, -1;
  qp.g.resize(2);
  qp.g << hi, -lo;
  const auto r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(x_star).epsilon(1e-7));
  CHECK(r.objective + target * target == doctest::Approx(obj_star).epsilon(1e-7));
}

TEST_CASE("solve_qp: non-convex Hessian is rejected") {
  QuadraticProgram qp;
  qp.hessian = -MatrixXd::Identity(2, 2);
  qp.cost = VectorXd::Zero(2);
  CHECK_THROWS_AS(solve_qp(qp), Error);
  qp.hessian << 1, 0.5, 0, 1;  // asymmetric
  CHECK_THROWS_AS(solve_qp(qp), Error);
}

TEST_CASE("solve_qp: infeasible constraint system") {
  QuadraticProgram qp;
  qp.hessian = MatrixXd::Identity(1, 1);
  qp.cost = VectorXd::Zero(1);
  qp.G.resize(2, 1);
  qp.G << 1, -1;
  qp.g.resize(2);
  qp.g << -1, -1;
  const auto r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Infeasible);
  CHECK(validate_certificate(qp.G, qp.g, qp.F, qp.f, r.certificate,
                             r.certificate_eq, 1e-8));
}

TEST_CASE("solve_qp: self-reported residuals agree with the independent checker") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 5;
    MatrixXd L(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) L(i, j) = unif(rng);
    QuadraticProgram qp;
    qp.hessian = L * L.transpose() + 0.1 * MatrixXd::Identity(d, d);
    qp.cost.resize(d);
    for (int i = 0; i < d; ++i) qp.cost[i] = 3.0 * unif(rng);
    const int m = 2 * d + 3;
    qp.G.resize(m, d);
    qp.g.resize(m);
    for (int r = 0; r < m; ++r) {
      for (int j = 0; j < d; ++j) qp.G(r, j) = unif(rng);
      qp.g[r] = 0.2 + std::abs(unif(rng));
    }
    const auto res = solve_qp(qp);
    REQUIRE(res.status == SolveStatus::Optimal);
    const Residuals chk = check_kkt(qp, res.x, res.z, res.y);
    CHECK(chk.max() <= 1e-8);
    CHECK(std::abs(chk.primal - res.residuals.primal) <= 1e-7);
    CHECK(std::abs(chk.dual - res.residuals.dual) <= 1e-7);
    CHECK(std::abs(chk.complementarity - res.residuals.complementarity) <= 1e-7);
    CHECK(res.z.minCoeff() >= 0.0);
  }
}
