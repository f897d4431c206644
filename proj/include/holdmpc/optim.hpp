#pragma once

// Dense primal-dual interior-point solvers for the small LPs and QPs that
// the geometry and MPC layers generate.  Problem sizes are tiny (a handful
// of variables, at most a few thousand rows), so everything is dense.

#include <Eigen/Dense>

#include <cstddef>

namespace holdmpc::optim {

inline constexpr double kDefaultTol = 1e-8;

/// min cᵀx  s.t.  Gx ≤ g,  Fx = f.
struct LinearProgram {
  Eigen::VectorXd cost;
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  Eigen::MatrixXd F;  // may have zero rows
  Eigen::VectorXd f;

  std::size_t dim() const { return static_cast<std::size_t>(cost.size()); }
};

/// min ½xᵀHx + cᵀx  s.t.  Gx ≤ g,  Fx = f,  H symmetric PSD.
struct QuadraticProgram {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd cost;
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  Eigen::MatrixXd F;
  Eigen::VectorXd f;

  std::size_t dim() const { return static_cast<std::size_t>(cost.size()); }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(SolveStatus status) noexcept;

/// Relative KKT residuals.  Rows are measured after scaling to unit norm;
/// primal/dual residuals are relative to (1 + ‖rhs‖∞) and (1 + ‖c‖∞),
/// complementarity to (1 + |objective|).
struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const;
};

struct SolveResult {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // inequality multipliers, z ≥ 0
  Eigen::VectorXd y;  // equality multipliers
  double objective = 0.0;
  double dual_objective = 0.0;
  Residuals residuals;
  int iterations = 0;
  // Farkas certificate, filled when status == Infeasible:
  // cert ≥ 0, certᵀG + cert_eqᵀF = 0, certᵀg + cert_eqᵀf < 0.
  Eigen::VectorXd certificate;
  Eigen::VectorXd certificate_eq;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SolverOptions {
  double tol = kDefaultTol;
  // 0 selects the default cap of 10·d·rows (with a floor of 50).
  int max_iterations = 0;
};

/// Throws Error(InvalidArgument) on malformed input.
SolveResult solve_lp(const LinearProgram& lp, double tol = kDefaultTol);
SolveResult solve_lp(const LinearProgram& lp, const SolverOptions& opts);

/// Throws Error(NonConvex) if the Hessian is not symmetric PSD and
/// Error(InvalidArgument) on malformed input.
SolveResult solve_qp(const QuadraticProgram& qp, double tol = kDefaultTol);
SolveResult solve_qp(const QuadraticProgram& qp, const SolverOptions& opts);

/// Independent KKT residual evaluation for a primal/dual pair.  Shares no
/// code with the interior-point iteration.
Residuals check_kkt(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& z, const Eigen::VectorXd& y);
Residuals check_kkt(const LinearProgram& lp, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& z, const Eigen::VectorXd& y);

/// True iff (cert, cert_eq) proves {x : Gx ≤ g, Fx = f} empty.
bool validate_certificate(const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                          const Eigen::MatrixXd& F, const Eigen::VectorXd& f,
                          const Eigen::VectorXd& cert,
                          const Eigen::VectorXd& cert_eq, double tol);

}  // namespace holdmpc::optim
