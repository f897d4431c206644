#include "holdmpc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>
#include <cstdio>
#include <cstdlib>

#include "holdmpc/error.hpp"

namespace holdmpc::optim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::IterationLimit: return "IterationLimit";
  }
  return "?";
}

double Residuals::max() const {
  return std::max({primal, dual, complementarity});
}

namespace {

constexpr double kZeroRow = 1e-14;
constexpr double kBoxFactor = 1e6;
constexpr double kStepFraction = 0.995;
constexpr int kHardIterationCap = 400;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

// Problem in row-normalized form.  Row i of G corresponds to original row
// ineq_map[i]; rows with ineq_map[i] < 0 are the artificial bounding box.
struct Normalized {
  const MatrixXd* hessian = nullptr;  // null for an LP
  VectorXd c;
  MatrixXd G;
  VectorXd g;
  std::vector<int> ineq_map;
  VectorXd ineq_scale;  // original row norm, per normalized row (1 for box)
  MatrixXd F;
  VectorXd f;
  std::vector<int> eq_map;
  VectorXd eq_scale;
  double g_norm = 0.0;  // ‖g‖∞ over non-box rows
  double f_norm = 0.0;
  double bound = 0.0;   // 0 when no box was added
  int box_begin = 0;    // first box row in G
};

struct IpmOutcome {
  enum class Kind { Converged, Farkas, Stalled } kind = Kind::Stalled;
  VectorXd x, s, z, y;
  int iterations = 0;
  double pres = 0.0, dres = 0.0, gap = 0.0;
};

double objective_of(const Normalized& p, const VectorXd& x) {
  double obj = p.c.dot(x);
  if (p.hessian) obj += 0.5 * x.dot(*p.hessian * x);
  return obj;
}

struct Measures {
  double pres, dres, gap;
};

Measures measure(const Normalized& p, const VectorXd& x, const VectorXd& s,
                 const VectorXd& z, const VectorXd& y) {
  VectorXd rd = p.c;
  if (p.hessian) rd += *p.hessian * x;
  if (p.G.rows() > 0) rd += p.G.transpose() * z;
  if (p.F.rows() > 0) rd += p.F.transpose() * y;
  double pres = 0.0;
  if (p.G.rows() > 0) {
    pres = inf_norm(p.G * x + s - p.g) / (1.0 + p.g_norm);
  }
  if (p.F.rows() > 0) {
    pres = std::max(pres, inf_norm(p.F * x - p.f) / (1.0 + p.f_norm));
  }
  const double dres = inf_norm(rd) / (1.0 + inf_norm(p.c));
  const double gap =
      p.G.rows() > 0 ? s.dot(z) / (1.0 + std::abs(objective_of(p, x))) : 0.0;
  return {pres, dres, gap};
}

double max_step(const VectorXd& v, const VectorXd& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

// Checks whether the current dual iterate already is a Farkas certificate.
bool farkas_from_duals(const Normalized& p, const VectorXd& z,
                       const VectorXd& y) {
  const double scale = z.lpNorm<1>() + y.lpNorm<1>();
  if (scale < 1e6 * (1.0 + inf_norm(p.c))) return false;
  const VectorXd lz = z / scale;
  const VectorXd ly = y / scale;
  VectorXd stat = p.G.transpose() * lz;
  if (p.F.rows() > 0) stat += p.F.transpose() * ly;
  double rhs = p.g.dot(lz);
  if (p.F.rows() > 0) rhs += p.f.dot(ly);
  return inf_norm(stat) <= 1e-9 && rhs < -1e-9 * (1.0 + p.g_norm);
}

IpmOutcome run_ipm(const Normalized& p, double tol, int max_iter) {
  const Eigen::Index n = p.c.size();
  const Eigen::Index m = p.G.rows();
  const Eigen::Index q = p.F.rows();

  IpmOutcome out;
  VectorXd x = VectorXd::Zero(n);
  if (q > 0) {
    x = p.F.completeOrthogonalDecomposition().solve(p.f);
  }
  VectorXd s(m), z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s[i] = std::max(1.0, p.g[i] - p.G.row(i).dot(x));
    z[i] = 1.0 / s[i];
  }
  VectorXd y = VectorXd::Zero(q);

  std::vector<double> merit_history;
  const double internal_tol = 0.5 * tol;
  const double reg =
      1e-12 * (1.0 + (p.hessian ? p.hessian->cwiseAbs().maxCoeff() : 0.0));

  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    const Measures meas = measure(p, x, s, z, y);
    const double merit = std::max({meas.pres, meas.dres, meas.gap});
    if (meas.pres <= internal_tol && meas.dres <= internal_tol &&
        meas.gap <= internal_tol) {
      out.kind = IpmOutcome::Kind::Converged;
      out.x = x; out.s = s; out.z = z; out.y = y;
      out.pres = meas.pres; out.dres = meas.dres; out.gap = meas.gap;
      return out;
    }
    if (p.hessian == nullptr && m > 0 && farkas_from_duals(p, z, y)) {
      out.kind = IpmOutcome::Kind::Farkas;
      out.x = x; out.s = s; out.z = z; out.y = y;
      return out;
    }
    merit_history.push_back(merit);
    if (it >= 25 && merit > 0.5 * merit_history[it - 15]) break;
    if (!std::isfinite(merit)) break;

    VectorXd rd = p.c;
    if (p.hessian) rd += *p.hessian * x;
    if (m > 0) rd += p.G.transpose() * z;
    if (q > 0) rd += p.F.transpose() * y;
    const VectorXd rp = m > 0 ? VectorXd(p.G * x + s - p.g) : VectorXd();
    const VectorXd re = q > 0 ? VectorXd(p.F * x - p.f) : VectorXd();
    const double mu = m > 0 ? s.dot(z) / static_cast<double>(m) : 0.0;

    const VectorXd w = m > 0 ? VectorXd(z.cwiseQuotient(s)) : VectorXd();
    MatrixXd K = MatrixXd::Zero(n + q, n + q);
    if (p.hessian) K.topLeftCorner(n, n) = *p.hessian;
    if (m > 0) {
      K.topLeftCorner(n, n) +=
          p.G.transpose() * (p.G.array().colwise() * w.array()).matrix();
    }
    if (q > 0) {
      K.topRightCorner(n, q) = p.F.transpose();
      K.bottomLeftCorner(q, n) = p.F;
    }
    // Near the solution Gᵀ W G can be numerically rank deficient; the
    // regularization follows its scale and is undone by one refinement step.
    const double kdiag = n > 0 ? K.topLeftCorner(n, n).diagonal().cwiseAbs().maxCoeff() : 0.0;
    const double reg_k = std::max(reg, 1e-14 * kdiag);
    MatrixXd K_reg = K;
    K_reg.topLeftCorner(n, n).diagonal().array() += reg_k;
    if (q > 0) K_reg.bottomRightCorner(q, q).diagonal().array() -= reg_k;
    const Eigen::PartialPivLU<MatrixXd> lu(K_reg);

    auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& ds,
                      VectorXd& dz, VectorXd& dy) {
      VectorXd rhs(n + q);
      VectorXd top = -rd;
      if (m > 0) top += p.G.transpose() * (rc - z.cwiseProduct(rp)).cwiseQuotient(s);
      rhs.head(n) = top;
      if (q > 0) rhs.tail(q) = -re;
      VectorXd sol = lu.solve(rhs);
      const VectorXd refined = sol + lu.solve(rhs - K * sol);
      if (refined.allFinite() && (rhs - K * refined).norm() <= (rhs - K * sol).norm()) {
        sol = refined;
      }
      dx = sol.head(n);
      dy = sol.tail(q);
      if (m > 0) {
        ds = -rp - p.G * dx;
        dz = (-rc - z.cwiseProduct(ds)).cwiseQuotient(s);
      }
    };

    VectorXd dx, ds, dz, dy;
    if (m > 0) {
      // predictor
      const VectorXd rc_aff = s.cwiseProduct(z);
      newton(rc_aff, dx, ds, dz, dy);
      const double a_aff =
          std::min(1.0, std::min(max_step(s, ds), max_step(z, dz)));
      const double mu_aff =
          (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
      const double sigma = std::pow(std::max(0.0, mu_aff / mu), 3);
      // corrector
      VectorXd rc = rc_aff + ds.cwiseProduct(dz);
      rc.array() -= sigma * mu;
      newton(rc, dx, ds, dz, dy);
      const double alpha = std::min(
          1.0, kStepFraction * std::min(max_step(s, ds), max_step(z, dz)));
      x += alpha * dx;
      s += alpha * ds;
      z += alpha * dz;
      y += alpha * dy;
      // keep strictly interior against round-off
      s = s.cwiseMax(1e-300);
      z = z.cwiseMax(1e-300);
    } else {
      newton(VectorXd(), dx, ds, dz, dy);
      x += dx;
      y += dy;
    }
  }
  out.kind = IpmOutcome::Kind::Stalled;
  out.x = x; out.s = s; out.z = z; out.y = y;
  return out;
}

void validate_shapes(Eigen::Index d, const MatrixXd& G, const VectorXd& g,
                     const MatrixXd& F, const VectorXd& f) {
  if (G.rows() != g.size() || (G.rows() > 0 && G.cols() != d)) {
    throw Error(ErrorCode::InvalidArgument,
                "inequality system has inconsistent dimensions");
  }
  if (F.rows() != f.size() || (F.rows() > 0 && F.cols() != d)) {
    throw Error(ErrorCode::InvalidArgument,
                "equality system has inconsistent dimensions");
  }
  if (!all_finite(G) || !g.allFinite() || !all_finite(F) || !f.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "non-finite constraint data");
  }
}

SolveResult infeasible_result(Eigen::Index d, Eigen::Index m, Eigen::Index q,
                              VectorXd cert, VectorXd cert_eq) {
  SolveResult r;
  r.status = SolveStatus::Infeasible;
  r.x = VectorXd::Zero(d);
  r.z = VectorXd::Zero(m);
  r.y = VectorXd::Zero(q);
  r.certificate = std::move(cert);
  r.certificate_eq = std::move(cert_eq);
  return r;
}

// Phase-1 problem: min t s.t. Gx - t ≤ g, Fx = f, t ≥ -1 (plus the box).
// Returns the optimal t and fills a Farkas certificate in normalized rows.
double phase_one(const Normalized& p, double tol, VectorXd& cert,
                 VectorXd& cert_eq) {
  const Eigen::Index n = p.c.size();
  const Eigen::Index m = p.G.rows();
  const Eigen::Index q = p.F.rows();
  Normalized aux;
  aux.c = VectorXd::Zero(n + 1);
  aux.c[n] = 1.0;
  aux.G = MatrixXd::Zero(m + 1, n + 1);
  aux.G.topLeftCorner(m, n) = p.G;
  for (Eigen::Index i = 0; i < m; ++i) {
    // box rows keep their bound without the shift
    aux.G(i, n) = p.ineq_map[static_cast<std::size_t>(i)] >= 0 ? -1.0 : 0.0;
  }
  aux.G(m, n) = -1.0;
  aux.g = VectorXd(m + 1);
  aux.g.head(m) = p.g;
  aux.g[m] = 1.0;
  if (q > 0) {
    aux.F = MatrixXd::Zero(q, n + 1);
    aux.F.leftCols(n) = p.F;
    aux.f = p.f;
  }
  aux.g_norm = p.g_norm;
  aux.f_norm = p.f_norm;
  const IpmOutcome o = run_ipm(aux, tol, kHardIterationCap);
  cert = o.z.head(m);
  cert_eq = o.y;
  if (o.kind != IpmOutcome::Kind::Converged) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return o.x[n];
}

SolveResult solve_common(const MatrixXd* hessian, const VectorXd& c,
                         const MatrixXd& G0, const VectorXd& g0,
                         const MatrixXd& F0, const VectorXd& f0,
                         const SolverOptions& opts) {
  const Eigen::Index d = c.size();
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "empty decision vector");
  if (!c.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite cost");
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  validate_shapes(d, G0, g0, F0, f0);
  const Eigen::Index m0 = G0.rows();
  const Eigen::Index q0 = F0.rows();

  Normalized p;
  p.hessian = hessian;
  p.c = c;

  // Degenerate rows: 0ᵀx ≤ g is dropped for g ≥ 0 and infeasible otherwise.
  std::vector<int> keep_ineq;
  std::vector<double> norms;
  for (Eigen::Index i = 0; i < m0; ++i) {
    const double nrm = G0.row(i).norm();
    if (nrm <= kZeroRow) {
      if (g0[i] < 0.0) {
        VectorXd cert = VectorXd::Zero(m0);
        cert[i] = 1.0;
        return infeasible_result(d, m0, q0, cert, VectorXd::Zero(q0));
      }
      continue;
    }
    keep_ineq.push_back(static_cast<int>(i));
    norms.push_back(nrm);
  }
  std::vector<int> keep_eq;
  std::vector<double> eq_norms;
  for (Eigen::Index i = 0; i < q0; ++i) {
    const double nrm = F0.row(i).norm();
    if (nrm <= kZeroRow) {
      if (std::abs(f0[i]) > opts.tol) {
        VectorXd cert_eq = VectorXd::Zero(q0);
        cert_eq[i] = f0[i] > 0 ? -1.0 : 1.0;
        return infeasible_result(d, m0, q0, VectorXd::Zero(m0), cert_eq);
      }
      continue;
    }
    keep_eq.push_back(static_cast<int>(i));
    eq_norms.push_back(nrm);
  }

  bool need_box = hessian == nullptr;
  if (!need_box) {
    Eigen::LLT<MatrixXd> llt(*hessian + 1e-12 * MatrixXd::Identity(d, d));
    if (llt.info() != Eigen::Success) need_box = true;
    else {
      const double dmin = llt.matrixLLT().diagonal().minCoeff();
      const double dmax = llt.matrixLLT().diagonal().maxCoeff();
      if (dmin <= 1e-7 * std::max(1.0, dmax)) need_box = true;
    }
  }

  const Eigen::Index m = static_cast<Eigen::Index>(keep_ineq.size());
  const Eigen::Index box_rows = need_box ? 2 * d : 0;
  p.G.resize(m + box_rows, d);
  p.g.resize(m + box_rows);
  p.ineq_scale.resize(m + box_rows);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double nrm = norms[static_cast<std::size_t>(i)];
    p.G.row(i) = G0.row(keep_ineq[static_cast<std::size_t>(i)]) / nrm;
    p.g[i] = g0[keep_ineq[static_cast<std::size_t>(i)]] / nrm;
    p.ineq_scale[i] = nrm;
    p.ineq_map.push_back(keep_ineq[static_cast<std::size_t>(i)]);
  }
  const Eigen::Index q = static_cast<Eigen::Index>(keep_eq.size());
  p.F.resize(q, d);
  p.f.resize(q);
  p.eq_scale.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const double nrm = eq_norms[static_cast<std::size_t>(i)];
    p.F.row(i) = F0.row(keep_eq[static_cast<std::size_t>(i)]) / nrm;
    p.f[i] = f0[keep_eq[static_cast<std::size_t>(i)]] / nrm;
    p.eq_scale[i] = nrm;
    p.eq_map.push_back(keep_eq[static_cast<std::size_t>(i)]);
  }
  p.g_norm = m > 0 ? inf_norm(p.g.head(m)) : 0.0;
  p.f_norm = inf_norm(p.f);
  p.box_begin = static_cast<int>(m);
  if (need_box) {
    p.bound = kBoxFactor * (1.0 + p.g_norm + p.f_norm);
    for (Eigen::Index k = 0; k < d; ++k) {
      p.G.row(m + 2 * k).setZero();
      p.G(m + 2 * k, k) = 1.0;
      p.G.row(m + 2 * k + 1).setZero();
      p.G(m + 2 * k + 1, k) = -1.0;
      p.g[m + 2 * k] = p.bound;
      p.g[m + 2 * k + 1] = p.bound;
      p.ineq_scale[m + 2 * k] = 1.0;
      p.ineq_scale[m + 2 * k + 1] = 1.0;
      p.ineq_map.push_back(-1);
      p.ineq_map.push_back(-1);
    }
  }

  int cap = opts.max_iterations;
  if (cap <= 0) {
    cap = static_cast<int>(std::max<Eigen::Index>(50, 10 * d * std::max<Eigen::Index>(1, m0 + q0)));
  }
  cap = std::min(cap, kHardIterationCap);

  const IpmOutcome o = run_ipm(p, opts.tol, cap);

  auto expand = [&](const VectorXd& zn, const VectorXd& yn, VectorXd& z,
                    VectorXd& y) {
    z = VectorXd::Zero(m0);
    y = VectorXd::Zero(q0);
    for (Eigen::Index i = 0; i < m; ++i) z[p.ineq_map[static_cast<std::size_t>(i)]] = zn[i] / p.ineq_scale[i];
    for (Eigen::Index i = 0; i < q; ++i) y[p.eq_map[static_cast<std::size_t>(i)]] = yn[i] / p.eq_scale[i];
  };

  SolveResult r;
  r.iterations = o.iterations;
  if (o.kind == IpmOutcome::Kind::Converged) {
    r.x = o.x;
    expand(o.z, o.y, r.z, r.y);
    r.objective = objective_of(p, o.x);
    bool box_active = false;
    for (Eigen::Index i = m; i < m + box_rows; ++i) {
      if (o.s[i] < 1e-3 * p.bound) box_active = true;
    }
    r.status = box_active ? SolveStatus::Unbounded : SolveStatus::Optimal;
    QuadraticProgram as_qp{hessian ? *hessian : MatrixXd::Zero(d, d), c, G0, g0, F0, f0};
    r.residuals = {o.pres, o.dres, o.gap};
    if (r.status == SolveStatus::Optimal &&
        check_kkt(as_qp, r.x, r.z, r.y).max() > opts.tol) {
      r.status = SolveStatus::IterationLimit;
    }
    // dual objective (exact for LPs): -gᵀz - fᵀy - ½xᵀHx
    r.dual_objective = -g0.dot(r.z) - (q0 > 0 ? f0.dot(r.y) : 0.0);
    if (hessian) r.dual_objective -= 0.5 * r.x.dot(*hessian * r.x);
    return r;
  }

  if (o.kind == IpmOutcome::Kind::Farkas) {
    VectorXd cert, cert_eq;
    expand(o.z, o.y, cert, cert_eq);
    if (validate_certificate(G0, g0, F0, f0, cert, cert_eq, 1e-7)) {
      auto res = infeasible_result(d, m0, q0, cert, cert_eq);
      res.iterations = o.iterations;
      return res;
    }
  }

  VectorXd cert_n, cert_eq_n;
  const double t = phase_one(p, opts.tol, cert_n, cert_eq_n);
  if (std::isfinite(t) && t > opts.tol) {
    VectorXd cert, cert_eq;
    expand(cert_n, cert_eq_n, cert, cert_eq);
    auto res = infeasible_result(d, m0, q0, cert, cert_eq);
    res.iterations = o.iterations;
    return res;
  }
  r.status = SolveStatus::IterationLimit;
  r.x = o.x;
  expand(o.z, o.y, r.z, r.y);
  r.objective = objective_of(p, o.x);
  return r;
}

}  // namespace

SolveResult solve_lp(const LinearProgram& lp, double tol) {
  SolverOptions opts;
  opts.tol = tol;
  return solve_lp(lp, opts);
}

SolveResult solve_lp(const LinearProgram& lp, const SolverOptions& opts) {
  return solve_common(nullptr, lp.cost, lp.G, lp.g, lp.F, lp.f, opts);
}

SolveResult solve_qp(const QuadraticProgram& qp, double tol) {
  SolverOptions opts;
  opts.tol = tol;
  return solve_qp(qp, opts);
}

SolveResult solve_qp(const QuadraticProgram& qp, const SolverOptions& opts) {
  const Eigen::Index d = qp.cost.size();
  if (qp.hessian.rows() != d || qp.hessian.cols() != d) {
    throw Error(ErrorCode::InvalidArgument, "Hessian must be d x d");
  }
  if (!qp.hessian.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "non-finite Hessian");
  }
  const double hnorm = qp.hessian.cwiseAbs().maxCoeff();
  const double asym = (qp.hessian - qp.hessian.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, hnorm)) {
    throw Error(ErrorCode::NonConvex, "Hessian is not symmetric");
  }
  const MatrixXd sym = 0.5 * (qp.hessian + qp.hessian.transpose());
  if (d > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
      throw Error(ErrorCode::NonConvex, "Hessian has a negative eigenvalue");
    }
  }
  return solve_common(&sym, qp.cost, qp.G, qp.g, qp.F, qp.f, opts);
}

Residuals check_kkt(const QuadraticProgram& qp, const VectorXd& x,
                    const VectorXd& z, const VectorXd& y) {
  Residuals r;
  const Eigen::Index m = qp.G.rows();
  const Eigen::Index q = qp.F.rows();
  VectorXd stat = qp.hessian * x + qp.cost;
  double g_norm = 0.0, f_norm = 0.0;
  double viol = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double nrm = qp.G.row(i).norm();
    if (nrm <= kZeroRow) continue;
    stat += z[i] * qp.G.row(i).transpose();
    const double slack = (qp.g[i] - qp.G.row(i).dot(x)) / nrm;
    g_norm = std::max(g_norm, std::abs(qp.g[i]) / nrm);
    viol = std::max(viol, -slack);
    comp += z[i] * nrm * slack;
    viol = std::max(viol, -z[i] * nrm);  // dual feasibility folds in here
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    const double nrm = qp.F.row(i).norm();
    if (nrm <= kZeroRow) continue;
    stat += y[i] * qp.F.row(i).transpose();
    f_norm = std::max(f_norm, std::abs(qp.f[i]) / nrm);
    viol = std::max(viol, std::abs(qp.F.row(i).dot(x) - qp.f[i]) / nrm);
  }
  const double obj = 0.5 * x.dot(qp.hessian * x) + qp.cost.dot(x);
  r.primal = std::max(0.0, viol) / (1.0 + std::max(g_norm, f_norm));
  r.dual = (stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0) /
           (1.0 + (qp.cost.size() ? qp.cost.cwiseAbs().maxCoeff() : 0.0));
  r.complementarity = std::abs(comp) / (1.0 + std::abs(obj));
  return r;
}

Residuals check_kkt(const LinearProgram& lp, const VectorXd& x,
                    const VectorXd& z, const VectorXd& y) {
  const auto d = lp.cost.size();
  return check_kkt(QuadraticProgram{MatrixXd::Zero(d, d), lp.cost, lp.G, lp.g, lp.F, lp.f},
                   x, z, y);
}

bool validate_certificate(const MatrixXd& G, const VectorXd& g,
                          const MatrixXd& F, const VectorXd& f,
                          const VectorXd& cert, const VectorXd& cert_eq,
                          double tol) {
  if (cert.size() != G.rows() || cert_eq.size() != F.rows()) return false;
  if (cert.size() > 0 && cert.minCoeff() < -tol) return false;
  const double scale = cert.lpNorm<1>() + cert_eq.lpNorm<1>();
  if (scale <= 0.0) return false;
  const Eigen::Index d = G.rows() > 0 ? G.cols() : F.cols();
  VectorXd stat = VectorXd::Zero(d);
  if (G.rows() > 0) stat += G.transpose() * cert;
  if (F.rows() > 0) stat += F.transpose() * cert_eq;
  double rhs = 0.0;
  if (G.rows() > 0) rhs += g.dot(cert);
  if (F.rows() > 0) rhs += f.dot(cert_eq);
  const double gscale = 1.0 + std::max(g.size() ? g.cwiseAbs().maxCoeff() : 0.0,
                                       f.size() ? f.cwiseAbs().maxCoeff() : 0.0);
  double rowscale = 1.0;
  if (G.rows() > 0) rowscale = std::max(rowscale, G.cwiseAbs().maxCoeff());
  if (F.rows() > 0) rowscale = std::max(rowscale, F.cwiseAbs().maxCoeff());
  return (stat.size() == 0 || stat.cwiseAbs().maxCoeff() <= tol * scale * rowscale) &&
         rhs < -tol * scale * gscale;
}

}  // namespace holdmpc::optim
