#include "holdmpc/polytope.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <fstream>
#include <sstream>

#include "holdmpc/error.hpp"
#include "holdmpc/optim.hpp"

namespace holdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const GeometryTolerances& geometry_tolerances() {
  static const GeometryTolerances tol;
  return tol;
}

namespace {

const GeometryTolerances& tol() { return geometry_tolerances(); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// Normalized rows split into ordinary inequalities and implicit equalities
// (opposite row pairs of width ≤ tol().equality_pair, kept at their midpoint).
struct Prepared {
  int dim = 0;
  bool empty = false;
  MatrixXd H;
  VectorXd h;
  MatrixXd F;
  VectorXd f;
  // the original pair rows, both directions, for re-emitting them
  MatrixXd pair_H;
  VectorXd pair_h;
};

using RowKey = std::vector<long long>;

RowKey row_key(const Eigen::Ref<const VectorXd>& row) {
  RowKey key(static_cast<std::size_t>(row.size()));
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    key[static_cast<std::size_t>(j)] = std::llround(row[j] * 1e9);
  }
  return key;
}

Prepared prepare(const Polytope& p) {
  Prepared out;
  out.dim = p.dim();
  const Polytope n = normalize(p);
  const MatrixXd& H = n.H();
  const VectorXd& h = n.h();
  if (n.rows() == 1 && H.row(0).squaredNorm() == 0.0) {
    out.empty = true;
    return out;
  }
  // keep the tightest row per direction
  std::map<RowKey, Eigen::Index> best;
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    auto key = row_key(H.row(i).transpose());
    auto it = best.find(key);
    if (it == best.end()) best.emplace(std::move(key), i);
    else if (h[i] < h[it->second]) it->second = i;
  }
  std::vector<Eigen::Index> ineq, pair_first, pair_second;
  std::vector<char> used(static_cast<std::size_t>(n.rows()), 0);
  for (const auto& [key, i] : best) {
    if (used[static_cast<std::size_t>(i)]) continue;
    RowKey neg = key;
    for (auto& v : neg) v = -v;
    auto it = best.find(neg);
    if (it != best.end() && !used[static_cast<std::size_t>(it->second)]) {
      const Eigen::Index j = it->second;
      const double width = h[i] + h[j];
      if (width < -tol().empty) {
        out.empty = true;
        return out;
      }
      if (width <= tol().equality_pair) {
        used[static_cast<std::size_t>(i)] = used[static_cast<std::size_t>(j)] = 1;
        pair_first.push_back(i);
        pair_second.push_back(j);
        continue;
      }
    }
    used[static_cast<std::size_t>(i)] = 1;
    ineq.push_back(i);
  }
  std::sort(ineq.begin(), ineq.end());
  const int d = p.dim();
  out.H.resize(static_cast<Eigen::Index>(ineq.size()), d);
  out.h.resize(static_cast<Eigen::Index>(ineq.size()));
  for (std::size_t k = 0; k < ineq.size(); ++k) {
    out.H.row(static_cast<Eigen::Index>(k)) = H.row(ineq[k]);
    out.h[static_cast<Eigen::Index>(k)] = h[ineq[k]];
  }
  const auto np = static_cast<Eigen::Index>(pair_first.size());
  out.F.resize(np, d);
  out.f.resize(np);
  out.pair_H.resize(2 * np, d);
  out.pair_h.resize(2 * np);
  for (Eigen::Index k = 0; k < np; ++k) {
    const auto i = pair_first[static_cast<std::size_t>(k)];
    const auto j = pair_second[static_cast<std::size_t>(k)];
    out.F.row(k) = H.row(i);
    out.f[k] = 0.5 * (h[i] - h[j]);
    out.pair_H.row(2 * k) = H.row(i);
    out.pair_h[2 * k] = h[i];
    out.pair_H.row(2 * k + 1) = H.row(j);
    out.pair_h[2 * k + 1] = h[j];
  }
  return out;
}

optim::SolveResult solve_geometric(const optim::LinearProgram& lp) {
  auto r = optim::solve_lp(lp, tol().lp);
  // Degenerate vertices (nearly parallel active rows) can stall the dual
  // residual a little above the strict tolerance.
  for (double loose : {1e-8, 1e-6}) {
    if (r.status != optim::SolveStatus::IterationLimit) break;
    r = optim::solve_lp(lp, loose);
  }
  return r;
}

// max dᵀx over the prepared system: -inf if empty, +inf if unbounded.
double prepared_support(const Prepared& p, const VectorXd& d) {
  if (p.empty) return -kInf;
  if (p.H.rows() == 0 && p.F.rows() == 0) {
    return d.norm() == 0.0 ? 0.0 : kInf;
  }
  optim::LinearProgram lp{-d, p.H, p.h, p.F, p.f};
  const auto r = solve_geometric(lp);
  switch (r.status) {
    case optim::SolveStatus::Optimal: return -r.objective;
    case optim::SolveStatus::Infeasible: return -kInf;
    case optim::SolveStatus::Unbounded: return kInf;
    case optim::SolveStatus::IterationLimit: break;
  }
  throw Error(ErrorCode::Solver, "support LP did not converge");
}

// Orthonormal basis of the null space of F (columns).
MatrixXd null_space(const MatrixXd& F, int dim) {
  if (F.rows() == 0) return MatrixXd::Identity(dim, dim);
  Eigen::JacobiSVD<MatrixXd> svd(F, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++rank;
  }
  return svd.matrixV().rightCols(dim - rank);
}

struct RelativeCenter {
  bool empty = false;
  VectorXd center;
  double radius = 0.0;  // inside the affine hull of the equalities, capped
};

RelativeCenter relative_center(const Prepared& p, double cap) {
  RelativeCenter out;
  if (p.empty) {
    out.empty = true;
    return out;
  }
  const int d = p.dim;
  const MatrixXd Z = null_space(p.F, d);
  const Eigen::Index m = p.H.rows();
  optim::LinearProgram lp;
  lp.cost = VectorXd::Zero(d + 1);
  lp.cost[d] = -1.0;
  lp.G = MatrixXd::Zero(m + 1, d + 1);
  lp.g = VectorXd::Zero(m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    lp.G.row(i).head(d) = p.H.row(i);
    lp.G(i, d) = (Z.transpose() * p.H.row(i).transpose()).norm();
    lp.g[i] = p.h[i];
  }
  lp.G(m, d) = 1.0;
  lp.g[m] = cap;
  if (p.F.rows() > 0) {
    lp.F = MatrixXd::Zero(p.F.rows(), d + 1);
    lp.F.leftCols(d) = p.F;
    lp.f = p.f;
  }
  const auto r = solve_geometric(lp);
  if (r.status == optim::SolveStatus::Infeasible) {
    out.empty = true;
    return out;
  }
  if (r.status != optim::SolveStatus::Optimal) {
    throw Error(ErrorCode::Solver, "Chebyshev LP did not converge");
  }
  out.center = r.x.head(d);
  out.radius = r.x[d];
  out.empty = out.radius < -tol().empty;
  return out;
}

Polytope from_rows(const std::vector<std::pair<VectorXd, double>>& rows, int dim) {
  MatrixXd H(static_cast<Eigen::Index>(rows.size()), dim);
  VectorXd h(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    H.row(static_cast<Eigen::Index>(i)) = rows[i].first.transpose();
    h[static_cast<Eigen::Index>(i)] = rows[i].second;
  }
  return Polytope(std::move(H), std::move(h));
}

// LP: max H_i x over rows `sel` plus equalities plus H_i x ≤ h_i + 1.
optim::SolveResult max_row_over(const Prepared& p, Eigen::Index i,
                                const std::vector<Eigen::Index>& sel) {
  const int d = p.dim;
  const auto k = static_cast<Eigen::Index>(sel.size());
  optim::LinearProgram lp;
  lp.cost = -p.H.row(i).transpose();
  lp.G.resize(k + 1, d);
  lp.g.resize(k + 1);
  for (Eigen::Index r = 0; r < k; ++r) {
    lp.G.row(r) = p.H.row(sel[static_cast<std::size_t>(r)]);
    lp.g[r] = p.h[sel[static_cast<std::size_t>(r)]];
  }
  lp.G.row(k) = p.H.row(i);
  lp.g[k] = p.h[i] + 1.0;
  lp.F = p.F;
  lp.f = p.f;
  return solve_geometric(lp);
}

bool redundant_against(const Prepared& p, Eigen::Index i,
                       const std::vector<Eigen::Index>& sel) {
  const auto r = max_row_over(p, i, sel);
  if (r.status != optim::SolveStatus::Optimal) return false;
  return -r.objective <= p.h[i] + tol().redundancy;
}

Polytope assemble(const Prepared& p, const std::vector<Eigen::Index>& keep) {
  std::vector<std::pair<VectorXd, double>> rows;
  for (auto i : keep) rows.emplace_back(p.H.row(i).transpose(), p.h[i]);
  for (Eigen::Index k = 0; k < p.pair_H.rows(); ++k) {
    rows.emplace_back(p.pair_H.row(k).transpose(), p.pair_h[k]);
  }
  if (rows.empty()) return Polytope::universe(p.dim);
  return from_rows(rows, p.dim);
}

}  // namespace

// ---------------------------------------------------------------------------

Box::Box(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) {
    throw Error(ErrorCode::DimensionMismatch, "box bounds differ in length");
  }
  if (!lower.allFinite() || !upper.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "box bounds must be finite");
  }
  if ((lower.array() > upper.array()).any()) {
    throw Error(ErrorCode::InvalidArgument, "box requires lower <= upper");
  }
}

Polytope::Polytope() : cache_(std::make_shared<EmptinessCache>()) {}

Polytope::Polytope(MatrixXd H, VectorXd h)
    : H_(std::move(H)), h_(std::move(h)), dim_(static_cast<int>(H_.cols())),
      cache_(std::make_shared<EmptinessCache>()) {
  if (H_.rows() != h_.size()) {
    throw Error(ErrorCode::InvalidArgument, "polytope row counts of H and h differ");
  }
  if (!H_.allFinite() || !h_.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "polytope data must be finite");
  }
}

Polytope Polytope::empty(int dim) {
  Polytope p(MatrixXd::Zero(1, dim), VectorXd::Constant(1, -1.0));
  p.cache_->state.store(1);
  return p;
}

Polytope Polytope::universe(int dim) {
  Polytope p(MatrixXd(0, dim), VectorXd(0));
  p.cache_->state.store(0);
  return p;
}

Polytope Polytope::from_box(const Box& box) {
  const int n = box.dim();
  MatrixXd H(2 * n, n);
  H << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  VectorXd h(2 * n);
  h << box.upper, -box.lower;
  return Polytope(std::move(H), std::move(h));
}

Polytope Polytope::from_box(const VectorXd& lo, const VectorXd& hi) {
  return from_box(Box(lo, hi));
}

Polytope Polytope::slab(int dim, int k, double lo, double hi) {
  MatrixXd H = MatrixXd::Zero(2, dim);
  H(0, k) = 1.0;
  H(1, k) = -1.0;
  VectorXd h(2);
  h << hi, -lo;
  return Polytope(std::move(H), std::move(h));
}

Polytope Polytope::point(const VectorXd& x) { return from_box(x, x); }

bool Polytope::is_empty() const {
  const int cached = cache_->state.load(std::memory_order_acquire);
  if (cached >= 0) return cached == 1;
  const bool e = relative_center(prepare(*this), 1.0).empty;
  cache_->state.store(e ? 1 : 0, std::memory_order_release);
  return e;
}

int Polytope::violated_row(const VectorXd& x, double tol_) const {
  if (x.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "point dimension mismatch");
  }
  int worst = -1;
  double worst_v = 0.0;
  for (Eigen::Index i = 0; i < rows(); ++i) {
    const double nrm = std::max(H_.row(i).norm(), 1e-300);
    const double v = (H_.row(i).dot(x) - h_[i]) / nrm;
    const double limit = H_.row(i).squaredNorm() == 0.0 ? -h_[i] : v;
    if (limit > tol_ && limit > worst_v) {
      worst_v = limit;
      worst = static_cast<int>(i);
    }
  }
  return worst;
}

bool Polytope::contains_point(const VectorXd& x, double tol_) const {
  return violated_row(x, tol_) < 0;
}

// ---------------------------------------------------------------------------

Polytope normalize(const Polytope& p) {
  std::vector<std::pair<VectorXd, double>> rows;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double nrm = p.H().row(i).norm();
    if (nrm <= tol().zero_coefficient) {
      if (p.h()[i] < -tol().empty) return Polytope::empty(p.dim());
      continue;
    }
    rows.emplace_back(p.H().row(i).transpose() / nrm, p.h()[i] / nrm);
  }
  if (rows.empty()) return Polytope::universe(p.dim());
  return from_rows(rows, p.dim());
}

Polytope minimize(const Polytope& p) {
  const Prepared prep = prepare(p);
  if (prep.empty) return Polytope::empty(p.dim());
  const Eigen::Index m = prep.H.rows();
  const RelativeCenter rc = relative_center(prep, 1.0);
  if (rc.empty) return Polytope::empty(p.dim());
  if (m == 0) return assemble(prep, {});

  std::vector<Eigen::Index> kept;
  if (rc.radius <= 1e-10) {
    // No relative interior to shoot rays from: plain per-row test.
    std::vector<Eigen::Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      std::vector<Eigen::Index> others;
      for (auto j : all) if (j != i) others.push_back(j);
      if (!redundant_against(prep, i, others)) kept.push_back(i);
      else all.erase(std::find(all.begin(), all.end(), i));
    }
    return assemble(prep, kept);
  }

  // Clarkson's output-sensitive redundancy removal: each LP only involves
  // the rows already certified non-redundant; ray shooting from the
  // interior point certifies new rows.
  const VectorXd& c = rc.center;
  const VectorXd slack = prep.h - prep.H * c;
  std::vector<char> in_set(static_cast<std::size_t>(m), 0);
  std::vector<char> decided(static_cast<std::size_t>(m), 0);
  std::vector<Eigen::Index> tied;
  for (Eigen::Index i = 0; i < m; ++i) {
    while (!decided[static_cast<std::size_t>(i)]) {
      const auto r = max_row_over(prep, i, kept);
      if (r.status == optim::SolveStatus::Optimal &&
          -r.objective <= prep.h[i] + tol().redundancy) {
        decided[static_cast<std::size_t>(i)] = 1;
        break;
      }
      if (r.status != optim::SolveStatus::Optimal) {
        in_set[static_cast<std::size_t>(i)] = decided[static_cast<std::size_t>(i)] = 1;
        kept.push_back(i);
        break;
      }
      const VectorXd dir = r.x - c;
      const VectorXd rate = prep.H * dir;
      Eigen::Index hit = -1;
      double t_best = kInf, t_second = kInf;
      const double eps = 1e-14 * std::max(1.0, dir.norm());
      for (Eigen::Index j = 0; j < m; ++j) {
        if (in_set[static_cast<std::size_t>(j)] || rate[j] <= eps) continue;
        const double t = slack[j] / rate[j];
        if (t < t_best || (t == t_best && j == i)) {
          t_second = t_best;
          t_best = t;
          hit = j;
        } else if (t < t_second) {
          t_second = t;
        }
      }
      if (hit < 0) hit = i;
      in_set[static_cast<std::size_t>(hit)] = decided[static_cast<std::size_t>(hit)] = 1;
      kept.push_back(hit);
      if (t_second - t_best <= 1e-9 * (1.0 + std::abs(t_best))) tied.push_back(hit);
    }
  }
  // Rows picked at a tie may touch the set only in a lower-dimensional face.
  for (auto j : tied) {
    std::vector<Eigen::Index> others;
    for (auto k : kept) if (k != j) others.push_back(k);
    if (redundant_against(prep, j, others)) kept = std::move(others);
  }
  std::sort(kept.begin(), kept.end());
  Polytope out = assemble(prep, kept);
  return out;
}

Polytope intersect(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "intersect: dimension mismatch");
  }
  MatrixXd H(a.rows() + b.rows(), a.dim());
  H << a.H(), b.H();
  VectorXd h(a.rows() + b.rows());
  h << a.h(), b.h();
  return minimize(Polytope(std::move(H), std::move(h)));
}

Polytope pontryagin_diff(const Polytope& a,
                         const std::function<double(const VectorXd&)>& support_b) {
  if (a.is_empty()) return Polytope::empty(a.dim());
  const Polytope n = normalize(a);
  VectorXd h = n.h();
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    const double s = support_b(n.H().row(i).transpose());
    if (s == kInf) {
      throw Error(ErrorCode::UnboundedSubtrahend, "pontryagin_diff: unbounded subtrahend");
    }
    if (s == -kInf) {
      throw Error(ErrorCode::EmptySubtrahend, "pontryagin_diff: empty subtrahend");
    }
    h[i] -= s;
  }
  return minimize(Polytope(n.H(), h));
}

Polytope pontryagin_diff(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "pontryagin_diff: dimension mismatch");
  }
  const Prepared pb = prepare(b);
  if (pb.empty || b.is_empty()) {
    throw Error(ErrorCode::EmptySubtrahend, "pontryagin_diff: empty subtrahend");
  }
  return pontryagin_diff(a, [&](const VectorXd& d) { return prepared_support(pb, d); });
}

double support(const Polytope& p, const VectorXd& direction) {
  if (direction.size() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "support: dimension mismatch");
  }
  return prepared_support(prepare(p), direction);
}

bool contains(const Polytope& outer, const Polytope& inner, double tol_) {
  if (outer.dim() != inner.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "contains: dimension mismatch");
  }
  const Prepared pi = prepare(inner);
  if (pi.empty || inner.is_empty()) return true;
  const Polytope no = normalize(outer);
  if (no.rows() == 1 && no.H().row(0).squaredNorm() == 0.0) return false;
  for (Eigen::Index i = 0; i < no.rows(); ++i) {
    const double s = prepared_support(pi, no.H().row(i).transpose());
    if (s > no.h()[i] + tol_) return false;
  }
  return true;
}

bool set_equal(const Polytope& a, const Polytope& b, double tol_) {
  return contains(a, b, tol_) && contains(b, a, tol_);
}

bool is_empty(const Polytope& p) { return p.is_empty(); }

bool is_bounded(const Polytope& p) {
  if (p.is_empty()) return true;
  const Polytope n = normalize(p);
  const int d = p.dim();
  if (d == 0) return true;
  optim::LinearProgram lp;
  lp.G.resize(n.rows() + 2 * d, d);
  lp.g = VectorXd::Zero(n.rows() + 2 * d);
  lp.G << n.H(), MatrixXd::Identity(d, d), -MatrixXd::Identity(d, d);
  lp.g.tail(2 * d).setOnes();
  for (int k = 0; k < d; ++k) {
    for (double sign : {1.0, -1.0}) {
      lp.cost = VectorXd::Zero(d);
      lp.cost[k] = -sign;
      const auto r = solve_geometric(lp);
      if (r.status != optim::SolveStatus::Optimal) {
        throw Error(ErrorCode::Solver, "recession-cone LP failed");
      }
      if (-r.objective > 1e-7) return false;
    }
  }
  return true;
}

ChebyshevBall chebyshev_center(const Polytope& p) {
  const int d = p.dim();
  const Polytope n = normalize(p);
  ChebyshevBall ball;
  if (n.rows() == 1 && n.H().row(0).squaredNorm() == 0.0) {
    ball.center = VectorXd::Zero(d);
    ball.radius = -kInf;
    return ball;
  }
  const double cap = 1e6 * (1.0 + (n.rows() ? n.h().cwiseAbs().maxCoeff() : 0.0));
  optim::LinearProgram lp;
  lp.cost = VectorXd::Zero(d + 1);
  lp.cost[d] = -1.0;
  lp.G = MatrixXd::Zero(n.rows() + 1, d + 1);
  lp.g = VectorXd::Zero(n.rows() + 1);
  lp.G.topLeftCorner(n.rows(), d) = n.H();
  lp.G.col(d).head(n.rows()).setOnes();
  lp.g.head(n.rows()) = n.h();
  lp.G(n.rows(), d) = 1.0;
  lp.g[n.rows()] = cap;
  const auto r = solve_geometric(lp);
  if (r.status != optim::SolveStatus::Optimal) {
    throw Error(ErrorCode::Solver, "Chebyshev LP did not converge");
  }
  ball.center = r.x.head(d);
  ball.radius = r.x[d] >= 0.5 * cap ? kInf : r.x[d];
  return ball;
}

// ---------------------------------------------------------------------------
// Projection

namespace {

// Drops column `col` from (H, h) by Fourier–Motzkin elimination, or by
// substitution when an equality pair involves that column.
void eliminate_column(MatrixXd& H, VectorXd& h, Eigen::Index col, const Prepared& prep,
                      Eigen::Index eq_row) {
  const Eigen::Index d = H.cols();
  auto drop = [&](const MatrixXd& M) {
    MatrixXd out(M.rows(), d - 1);
    out.leftCols(col) = M.leftCols(col);
    out.rightCols(d - 1 - col) = M.rightCols(d - 1 - col);
    return out;
  };
  if (eq_row >= 0) {
    const VectorXd a = prep.F.row(eq_row).transpose();
    const double fa = prep.f[eq_row];
    const double ae = a[col];
    // every other row, with x_col = (fa - Σ a_k x_k) / a_col substituted
    std::vector<std::pair<VectorXd, double>> rows;
    auto add = [&](const VectorXd& r, double b) {
      const double k = r[col] / ae;
      rows.emplace_back(r - k * a, b - k * fa);
    };
    for (Eigen::Index i = 0; i < prep.H.rows(); ++i) add(prep.H.row(i).transpose(), prep.h[i]);
    for (Eigen::Index i = 0; i < prep.F.rows(); ++i) {
      if (i == eq_row) continue;
      add(prep.F.row(i).transpose(), prep.f[i]);
      add(-prep.F.row(i).transpose(), -prep.f[i]);
    }
    MatrixXd M(static_cast<Eigen::Index>(rows.size()), d);
    h.resize(M.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      M.row(static_cast<Eigen::Index>(i)) = rows[i].first.transpose();
      M(static_cast<Eigen::Index>(i), col) = 0.0;
      h[static_cast<Eigen::Index>(i)] = rows[i].second;
    }
    H = drop(M);
    return;
  }
  std::vector<Eigen::Index> pos, neg, zero;
  const double zt = tol().zero_coefficient;
  for (Eigen::Index i = 0; i < H.rows(); ++i) {
    if (H(i, col) > zt) pos.push_back(i);
    else if (H(i, col) < -zt) neg.push_back(i);
    else zero.push_back(i);
  }
  const auto count = static_cast<Eigen::Index>(zero.size() + pos.size() * neg.size());
  MatrixXd M(count, d);
  VectorXd b(count);
  Eigen::Index r = 0;
  for (auto i : zero) {
    M.row(r) = H.row(i);
    M(r, col) = 0.0;
    b[r++] = h[i];
  }
  for (auto i : pos) {
    for (auto j : neg) {
      const double ci = H(i, col), cj = -H(j, col);
      M.row(r) = H.row(i) / ci + H.row(j) / cj;
      M(r, col) = 0.0;
      b[r++] = h[i] / ci + h[j] / cj;
    }
  }
  H = drop(M);
  h = std::move(b);
}

}  // namespace

Polytope project(const Polytope& p, std::span<const int> keep_dims) {
  const int d = p.dim();
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  if (keep_dims.empty()) throw Error(ErrorCode::InvalidArgument, "project: empty coordinate list");
  int prev = -1;
  for (int k : keep_dims) {
    if (k <= prev || k >= d) {
      throw Error(ErrorCode::InvalidArgument,
                  "project: coordinates must be strictly increasing and in range");
    }
    prev = k;
    seen[static_cast<std::size_t>(k)] = 1;
  }
  const int out_dim = static_cast<int>(keep_dims.size());
  if (p.is_empty()) return Polytope::empty(out_dim);

  Polytope cur = minimize(p);
  std::vector<int> cols(static_cast<std::size_t>(d));
  std::iota(cols.begin(), cols.end(), 0);
  while (static_cast<int>(cols.size()) > out_dim) {
    if (cur.is_empty()) return Polytope::empty(out_dim);
    const Prepared prep = prepare(cur);
    if (prep.empty) return Polytope::empty(out_dim);
    // prefer substitution through an equality
    Eigen::Index best_col = -1, best_eq = -1;
    double best_coef = 1e-6;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (seen[static_cast<std::size_t>(cols[c])]) continue;
      for (Eigen::Index e = 0; e < prep.F.rows(); ++e) {
        const double a = std::abs(prep.F(e, static_cast<Eigen::Index>(c)));
        if (a > best_coef) {
          best_coef = a;
          best_col = static_cast<Eigen::Index>(c);
          best_eq = e;
        }
      }
    }
    MatrixXd H;
    VectorXd h;
    if (best_eq >= 0) {
      H = MatrixXd(0, cur.dim());
      h = VectorXd(0);
    } else {
      H = cur.H();
      h = cur.h();
      std::size_t best_cost = std::numeric_limits<std::size_t>::max();
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (seen[static_cast<std::size_t>(cols[c])]) continue;
        std::size_t np = 0, nn = 0;
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
          const double v = H(i, static_cast<Eigen::Index>(c));
          if (v > tol().zero_coefficient) ++np;
          else if (v < -tol().zero_coefficient) ++nn;
        }
        if (np * nn < best_cost) {
          best_cost = np * nn;
          best_col = static_cast<Eigen::Index>(c);
        }
      }
    }
    eliminate_column(H, h, best_col, prep, best_eq);
    cols.erase(cols.begin() + best_col);
    cur = minimize(Polytope(std::move(H), std::move(h)));
  }
  // reorder columns to follow keep_dims
  MatrixXd H(cur.rows(), out_dim);
  for (int k = 0; k < out_dim; ++k) {
    const auto it = std::find(cols.begin(), cols.end(), keep_dims[static_cast<std::size_t>(k)]);
    H.col(k) = cur.H().col(it - cols.begin());
  }
  if (cur.rows() == 1 && cur.H().row(0).squaredNorm() == 0.0) return Polytope::empty(out_dim);
  return Polytope(std::move(H), cur.h());
}

// ---------------------------------------------------------------------------
// Vertex machinery (dimension ≤ 3)

namespace {

void require_low_dim(int d, const char* what) {
  if (d > 3) {
    throw Error(ErrorCode::Unsupported,
                std::string(what) + ": only dimensions up to 3 are supported");
  }
}

double point_scale(const std::vector<VectorXd>& pts) {
  double s = 1.0;
  for (const auto& p : pts) s = std::max(s, p.cwiseAbs().maxCoeff());
  return s;
}

std::vector<VectorXd> dedupe_points(const std::vector<VectorXd>& pts, double eps) {
  std::vector<VectorXd> out;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : out) {
      if ((p - q).cwiseAbs().maxCoeff() <= eps) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(p);
  }
  return out;
}

using Facet = std::pair<VectorXd, double>;

// Facet normals of a full-dimensional point cloud in R^r, r ∈ {1,2,3}.
std::vector<VectorXd> hull_normals_1d(const std::vector<VectorXd>&) {
  return {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0)};
}

double cross2(const VectorXd& o, const VectorXd& a, const VectorXd& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<VectorXd> hull_normals_2d(std::vector<VectorXd> pts, double eps) {
  std::sort(pts.begin(), pts.end(), [](const VectorXd& a, const VectorXd& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  std::vector<VectorXd> hull;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    while (hull.size() >= 2 && cross2(hull[hull.size() - 2], hull.back(), pts[i]) <= eps) {
      hull.pop_back();
    }
    hull.push_back(pts[i]);
  }
  const std::size_t lower = hull.size() + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (hull.size() >= lower && cross2(hull[hull.size() - 2], hull.back(), pts[i]) <= eps) {
      hull.pop_back();
    }
    hull.push_back(pts[i]);
  }
  hull.pop_back();
  std::vector<VectorXd> normals;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const VectorXd e = hull[(i + 1) % hull.size()] - hull[i];
    VectorXd nrm(2);
    nrm << e[1], -e[0];
    if (nrm.norm() > 0) normals.push_back(nrm.normalized());
  }
  return normals;
}

Eigen::Vector3d v3(const VectorXd& v) { return Eigen::Vector3d(v[0], v[1], v[2]); }

std::vector<VectorXd> hull_normals_3d(const std::vector<VectorXd>& pts, double eps) {
  const std::size_t n = pts.size();
  std::vector<Eigen::Vector3d> P;
  P.reserve(n);
  for (const auto& p : pts) P.push_back(v3(p));
  // initial tetrahedron from extreme points
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < n; ++i) if (P[i].x() < P[i0].x()) i0 = i;
  std::size_t i1 = i0;
  double best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (P[i] - P[i0]).norm();
    if (v > best) { best = v; i1 = i; }
  }
  std::size_t i2 = i0;
  best = -1;
  const Eigen::Vector3d dir = (P[i1] - P[i0]).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d w = P[i] - P[i0];
    const double v = (w - w.dot(dir) * dir).norm();
    if (v > best) { best = v; i2 = i; }
  }
  std::size_t i3 = i0;
  best = -1;
  const Eigen::Vector3d pn = (P[i1] - P[i0]).cross(P[i2] - P[i0]).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::abs(pn.dot(P[i] - P[i0]));
    if (v > best) { best = v; i3 = i; }
  }
  const Eigen::Vector3d interior = (P[i0] + P[i1] + P[i2] + P[i3]) / 4.0;

  struct Face {
    std::size_t a, b, c;
    Eigen::Vector3d n;
    double s;
  };
  auto make_face = [&](std::size_t a, std::size_t b, std::size_t c) {
    Face f{a, b, c, (P[b] - P[a]).cross(P[c] - P[a]), 0.0};
    f.n.normalize();
    if (f.n.dot(interior - P[a]) > 0) {
      std::swap(f.b, f.c);
      f.n = -f.n;
    }
    f.s = f.n.dot(P[f.a]);
    return f;
  };
  std::vector<Face> faces = {make_face(i0, i1, i2), make_face(i0, i1, i3),
                             make_face(i0, i2, i3), make_face(i1, i2, i3)};
  for (std::size_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    std::vector<char> visible(faces.size(), 0);
    bool any = false;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (faces[f].n.dot(P[p]) - faces[f].s > eps) visible[f] = any = true;
    }
    if (!any) continue;
    std::map<std::pair<std::size_t, std::size_t>, int> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) continue;
      const auto& F = faces[f];
      edges[{F.a, F.b}]++;
      edges[{F.b, F.c}]++;
      edges[{F.c, F.a}]++;
    }
    std::vector<Face> next;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) next.push_back(faces[f]);
    }
    for (const auto& [e, cnt] : edges) {
      if (edges.count({e.second, e.first})) continue;
      next.push_back(make_face(e.first, e.second, p));
    }
    faces = std::move(next);
  }
  std::vector<VectorXd> normals;
  for (const auto& f : faces) {
    bool dup = false;
    for (const auto& m : normals) {
      if ((v3(m) - f.n).norm() < 1e-9) { dup = true; break; }
    }
    if (!dup) normals.push_back(VectorXd(f.n));
  }
  return normals;
}

}  // namespace

std::vector<VectorXd> vertices(const Polytope& p) {
  const int d = p.dim();
  require_low_dim(d, "vertices");
  if (p.is_empty()) return {};
  if (!is_bounded(p)) throw Error(ErrorCode::Unbounded, "vertices: set is unbounded");
  if (d == 0) return {VectorXd(0)};
  const Polytope m = minimize(p);
  const MatrixXd& H = m.H();
  const VectorXd& h = m.h();
  const Eigen::Index rows = m.rows();
  double scale = 1.0;
  if (rows > 0) scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  const double feas = 1e-7 * scale;
  std::vector<VectorXd> out;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
  // iterate over d-subsets of rows
  std::function<void(Eigen::Index, int)> rec = [&](Eigen::Index start, int depth) {
    if (depth == d) {
      MatrixXd A(d, d);
      VectorXd b(d);
      for (int k = 0; k < d; ++k) {
        A.row(k) = H.row(idx[static_cast<std::size_t>(k)]);
        b[k] = h[idx[static_cast<std::size_t>(k)]];
      }
      Eigen::FullPivLU<MatrixXd> lu(A);
      lu.setThreshold(1e-10);
      if (lu.rank() < d) return;
      const VectorXd x = lu.solve(b);
      if (((H * x - h).array() <= feas).all()) out.push_back(x);
      return;
    }
    for (Eigen::Index i = start; i < rows; ++i) {
      idx[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return dedupe_points(out, 1e-8 * scale);
}

Polytope convex_hull(const std::vector<VectorXd>& points, int dim) {
  require_low_dim(dim, "convex_hull");
  if (points.empty()) return Polytope::empty(dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::DimensionMismatch, "convex_hull: point dimension");
    if (!p.allFinite()) throw Error(ErrorCode::InvalidArgument, "convex_hull: non-finite point");
  }
  if (dim == 0) return Polytope::universe(0);
  const double scale = point_scale(points);
  const std::vector<VectorXd> pts = dedupe_points(points, 1e-12 * scale);
  VectorXd c = VectorXd::Zero(dim);
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  MatrixXd Y(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t i = 0; i < pts.size(); ++i) Y.row(static_cast<Eigen::Index>(i)) = (pts[i] - c).transpose();
  Eigen::JacobiSVD<MatrixXd> svd(Y, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-9 * scale) ++r;
  }
  const MatrixXd V = svd.matrixV();
  const MatrixXd Vr = V.leftCols(r);
  std::vector<Facet> rows;
  if (r > 0) {
    std::vector<VectorXd> z;
    for (const auto& p : pts) z.push_back(Vr.transpose() * (p - c));
    const double eps = 1e-10 * scale;
    std::vector<VectorXd> normals;
    if (r == 1) normals = hull_normals_1d(z);
    else if (r == 2) normals = hull_normals_2d(z, eps * scale);
    else normals = hull_normals_3d(z, eps);
    for (const auto& nz : normals) {
      double off = -kInf;
      for (const auto& q : z) off = std::max(off, nz.dot(q));
      const VectorXd nx = Vr * nz;
      rows.emplace_back(nx, off + nx.dot(c));
    }
  }
  for (int k = r; k < dim; ++k) {
    const VectorXd v = V.col(k);
    double lo = kInf, hi = -kInf;
    for (const auto& p : pts) {
      const double t = v.dot(p - c);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    rows.emplace_back(v, hi + v.dot(c));
    rows.emplace_back(-v, -(lo + v.dot(c)));
  }
  Polytope out = normalize(from_rows(rows, dim));
  return out;
}

Polytope minkowski_sum(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "minkowski_sum: dimension mismatch");
  }
  require_low_dim(a.dim(), "minkowski_sum");
  if (a.is_empty() || b.is_empty()) return Polytope::empty(a.dim());
  const auto va = vertices(a);
  const auto vb = vertices(b);
  std::vector<VectorXd> sums;
  sums.reserve(va.size() * vb.size());
  for (const auto& x : va) {
    for (const auto& y : vb) sums.push_back(x + y);
  }
  return convex_hull(sums, a.dim());
}

Polytope affine_map(const Polytope& p, const MatrixXd& T) {
  if (T.cols() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "affine_map: dimension mismatch");
  }
  const int k = static_cast<int>(T.rows());
  require_low_dim(k, "affine_map");
  require_low_dim(p.dim(), "affine_map");
  if (p.is_empty()) return Polytope::empty(k);
  std::vector<VectorXd> pts;
  for (const auto& v : vertices(p)) pts.push_back(T * v);
  return convex_hull(pts, k);
}

Polytope affine_preimage(const Polytope& p, const MatrixXd& T) {
  if (T.rows() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "affine_preimage: dimension mismatch");
  }
  return Polytope(p.H() * T, p.h());
}

// ---------------------------------------------------------------------------
// Text IO

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string to_text(const Polytope& p) {
  std::string s = "HPOLY " + std::to_string(p.rows()) + " " + std::to_string(p.dim()) + "\n";
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.dim(); ++j) {
      s += format_double(p.H()(i, j));
      s += ' ';
    }
    s += format_double(p.h()[i]);
    s += '\n';
  }
  return s;
}

namespace {

struct Tokenizer {
  std::string_view text;
  std::size_t pos = 0;

  std::string_view next() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return text.substr(start, pos - start);
  }
};

double parse_double(std::string_view tok) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw Error(ErrorCode::Io, "malformed number '" + std::string(tok) + "' in polytope text");
  }
  return v;
}

long parse_count(std::string_view tok) {
  long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v < 0) {
    throw Error(ErrorCode::Io, "malformed polytope header");
  }
  return v;
}

}  // namespace

Polytope from_text(std::string_view text) {
  Tokenizer tk{text};
  if (tk.next() != "HPOLY") throw Error(ErrorCode::Io, "missing HPOLY header");
  const long rows = parse_count(tk.next());
  const long dim = parse_count(tk.next());
  MatrixXd H(rows, dim);
  VectorXd h(rows);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < dim; ++j) H(i, j) = parse_double(tk.next());
    h[i] = parse_double(tk.next());
  }
  if (!tk.next().empty()) throw Error(ErrorCode::Io, "trailing data after polytope");
  try {
    return Polytope(std::move(H), std::move(h));
  } catch (const Error& e) {
    throw Error(ErrorCode::Io, e.what());
  }
}

void write_polytope(const Polytope& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << to_text(p);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

Polytope read_polytope(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace holdmpc
