#include "holdmpc/sets.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace holdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

void LTISystem::validate() const {
  if (A.rows() != A.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
  if (B.rows() != A.rows()) throw Error(ErrorCode::DimensionMismatch, "B must have n rows");
  if (E.rows() != A.rows()) throw Error(ErrorCode::DimensionMismatch, "E must have n rows");
  if (!A.allFinite() || !B.allFinite() || !E.allFinite() || !std::isfinite(Ts)) {
    throw Error(ErrorCode::InvalidArgument, "system matrices must be finite");
  }
}

HoldConfig::HoldConfig(int M_, int N_) : M(M_), N(N_) {
  if (M < 1 || N < 1) throw Error(ErrorCode::InvalidArgument, "M and N must be positive");
  if (N % M != 0) throw Error(ErrorCode::InvalidArgument, "N must be a multiple of M");
}

// ---------------------------------------------------------------------------

DisturbanceSchedule::DisturbanceSchedule(std::vector<Box> boxes) {
  for (auto& b : boxes) {
    sets_.push_back(Polytope::from_box(b));
    boxes_.emplace_back(std::move(b));
  }
  check();
}

DisturbanceSchedule::DisturbanceSchedule(std::vector<Polytope> sets) : sets_(std::move(sets)) {
  boxes_.resize(sets_.size());
  check();
}

DisturbanceSchedule DisturbanceSchedule::repeated(const Box& w, int M) {
  if (M < 1) throw Error(ErrorCode::InvalidArgument, "schedule length must be positive");
  return DisturbanceSchedule(std::vector<Box>(static_cast<std::size_t>(M), w));
}

DisturbanceSchedule DisturbanceSchedule::constant(const VectorXd& w, int M) {
  return repeated(Box(w, w), M);
}

void DisturbanceSchedule::check() const {
  if (sets_.empty()) throw Error(ErrorCode::InvalidArgument, "schedule must not be empty");
  for (const auto& s : sets_) {
    if (s.dim() != sets_.front().dim()) {
      throw Error(ErrorCode::DimensionMismatch, "schedule sets differ in dimension");
    }
  }
  for (std::size_t j = 0; j < sets_.size(); ++j) {
    if (boxes_[j]) continue;
    if (sets_[j].is_empty()) throw Error(ErrorCode::InvalidArgument, "disturbance set is empty");
    if (!is_bounded(sets_[j])) throw Error(ErrorCode::InvalidArgument, "disturbance set is unbounded");
  }
}

double DisturbanceSchedule::support(int j, const VectorXd& c) const {
  const auto& b = box(j);
  if (b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      s += std::max(c[i] * b->lower[i], c[i] * b->upper[i]);
    }
    return s;
  }
  return holdmpc::support(set(j), c);
}

bool DisturbanceSchedule::all_contain_origin() const {
  for (int j = 0; j < length(); ++j) {
    if (!set(j).contains_point(VectorXd::Zero(dim()), 1e-12)) return false;
  }
  return true;
}

std::string DisturbanceSchedule::describe() const {
  std::string s;
  for (int j = 0; j < length(); ++j) {
    if (j) s += ';';
    const auto& b = box(j);
    if (b) {
      s += '[';
      for (int i = 0; i < b->dim(); ++i) {
        if (i) s += ',';
        s += format_double(b->lower[i]) + ':' + format_double(b->upper[i]);
      }
      s += ']';
    } else {
      s += "poly(" + std::to_string(set(j).rows()) + ")";
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<MatrixXd> powers(const MatrixXd& A, int k) {
  std::vector<MatrixXd> p;
  p.push_back(MatrixXd::Identity(A.rows(), A.cols()));
  for (int i = 1; i <= k; ++i) p.push_back(A * p.back());
  return p;
}

void check_common(const LTISystem& sys, const Polytope& X, const Polytope& U, const Polytope& S,
                  const DisturbanceSchedule& sched, int M) {
  sys.validate();
  if (M < 1) throw Error(ErrorCode::InvalidArgument, "M must be positive");
  if (X.dim() != sys.n() || S.dim() != sys.n()) {
    throw Error(ErrorCode::DimensionMismatch, "X and S must live in the state space");
  }
  if (U.dim() != sys.m()) throw Error(ErrorCode::DimensionMismatch, "U must live in the input space");
  if (sched.length() != M) {
    throw Error(ErrorCode::InvalidArgument, "schedule length must equal M");
  }
  if (sched.dim() != sys.o()) {
    throw Error(ErrorCode::DimensionMismatch, "schedule dimension must equal o");
  }
}

// h_r - max_w H_r Σ_{k≤t} A^{t-k} E w_k for every row of (H, h).
VectorXd tightened(const MatrixXd& H, const VectorXd& h, int t, const std::vector<MatrixXd>& Ap,
                   const MatrixXd& E, const DisturbanceSchedule& sched) {
  VectorXd out = h;
  for (int k = 0; k <= t; ++k) {
    const MatrixXd D = H * Ap[static_cast<std::size_t>(t - k)] * E;
    for (Eigen::Index r = 0; r < H.rows(); ++r) {
      const double s = sched.support(k, D.row(r).transpose());
      if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "unbounded disturbance set");
      out[r] -= s;
    }
  }
  return out;
}

// Stacked rows over (x, u) for steps 1..M.  The state part of the row for
// step t+1 is H A^{t+1}, the input part H Σ_{j≤t} A^j B.
struct Stacked {
  MatrixXd Hx;  // state columns
  MatrixXd Hu;  // input columns
  VectorXd h;
};

Stacked stack_rows(const LTISystem& sys, const Polytope& X, const Polytope& S,
                   const DisturbanceSchedule& sched, int M) {
  const int n = sys.n();
  const auto Ap = powers(sys.A, M);
  std::vector<MatrixXd> blocksX, blocksU;
  std::vector<VectorXd> rhs;
  MatrixXd acc = MatrixXd::Zero(n, sys.m());  // Σ_{j≤t} A^j B
  for (int t = 0; t < M; ++t) {
    acc += Ap[static_cast<std::size_t>(t)] * sys.B;
    const Polytope& P = (t == M - 1) ? S : X;
    if (P.rows() == 0) continue;
    blocksX.push_back(P.H() * Ap[static_cast<std::size_t>(t + 1)]);
    blocksU.push_back(P.H() * acc);
    rhs.push_back(tightened(P.H(), P.h(), t, Ap, sys.E, sched));
  }
  Eigen::Index rows = 0;
  for (const auto& b : blocksX) rows += b.rows();
  Stacked st{MatrixXd(rows, n), MatrixXd(rows, sys.m()), VectorXd(rows)};
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < blocksX.size(); ++i) {
    st.Hx.middleRows(r, blocksX[i].rows()) = blocksX[i];
    st.Hu.middleRows(r, blocksX[i].rows()) = blocksU[i];
    st.h.segment(r, blocksX[i].rows()) = rhs[i];
    r += blocksX[i].rows();
  }
  return st;
}

}  // namespace

Polytope error_set(const LTISystem& sys, const DisturbanceSchedule& sched, int k) {
  sys.validate();
  if (k < 1 || k > sched.length()) {
    throw Error(ErrorCode::InvalidArgument, "error_set: k must lie in 1..M");
  }
  if (sched.dim() != sys.o()) throw Error(ErrorCode::DimensionMismatch, "schedule dimension");
  Polytope acc = affine_map(sched.set(0), sys.E);
  for (int j = 1; j < k; ++j) {
    acc = minkowski_sum(affine_map(acc, sys.A), affine_map(sched.set(j), sys.E));
  }
  return acc;
}

Polytope pre_m(const LTISystem& sys, const Polytope& X, const Polytope& U, const Polytope& S,
               const DisturbanceSchedule& sched, int M) {
  check_common(sys, X, U, S, sched, M);
  const int n = sys.n(), m = sys.m();
  if (S.is_empty() || U.is_empty()) return Polytope::empty(n);
  const Stacked st = stack_rows(sys, X, S, sched, M);
  const Eigen::Index rows = st.h.size() + U.rows();
  MatrixXd H = MatrixXd::Zero(rows, n + m);
  VectorXd h(rows);
  H.topLeftCorner(st.h.size(), n) = st.Hx;
  H.block(0, n, st.h.size(), m) = st.Hu;
  h.head(st.h.size()) = st.h;
  H.bottomRightCorner(U.rows(), m) = U.H();
  h.tail(U.rows()) = U.h();
  std::vector<int> keep(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = i;
  return minimize(project(Polytope(std::move(H), std::move(h)), keep));
}

Polytope pre_pi_m(const LTISystem& sys, const Polytope& X, const Polytope& U, const Polytope& S,
                  const DisturbanceSchedule& sched, int M, const FeedbackGain& gain) {
  check_common(sys, X, U, S, sched, M);
  if (gain.K_fb.rows() != sys.m() || gain.K_fb.cols() != sys.n()) {
    throw Error(ErrorCode::DimensionMismatch, "gain must be m x n");
  }
  const int n = sys.n();
  if (S.is_empty() || U.is_empty()) return Polytope::empty(n);
  const Stacked st = stack_rows(sys, X, S, sched, M);
  const Eigen::Index rows = st.h.size() + U.rows();
  MatrixXd H(rows, n);
  VectorXd h(rows);
  H.topRows(st.h.size()) = st.Hx - st.Hu * gain.K_fb;
  h.head(st.h.size()) = st.h;
  H.bottomRows(U.rows()) = -U.H() * gain.K_fb;
  h.tail(U.rows()) = U.h();
  return minimize(Polytope(std::move(H), std::move(h)));
}

std::vector<Polytope> controllable_set(const LTISystem& sys, const Polytope& X, const Polytope& U,
                                       const Polytope& target, const DisturbanceSchedule& sched,
                                       int M, int steps) {
  if (M < 1 || steps < 0 || steps % M != 0) {
    throw Error(ErrorCode::InvalidArgument, "steps must be a non-negative multiple of M");
  }
  std::vector<Polytope> out{minimize(target)};
  for (int i = M; i <= steps; i += M) {
    if (out.back().is_empty()) {
      out.push_back(Polytope::empty(sys.n()));
      continue;
    }
    out.push_back(intersect(pre_m(sys, X, U, out.back(), sched, M), X));
  }
  return out;
}

namespace {

template <typename Pre>
Polytope fixed_point(const Polytope& X, int max_iters, int* iterations, Pre&& pre,
                     const char* name) {
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
  int scratch = 0;
  int& iters = iterations ? *iterations : scratch;
  iters = 0;
  Polytope omega = minimize(X);
  if (omega.is_empty()) return Polytope::empty(X.dim());
  const double r0 = chebyshev_center(omega).radius;
  for (int k = 0; k < max_iters; ++k) {
    iters = k + 1;
    Polytope next = intersect(pre(omega), omega);
    if (next.is_empty()) return Polytope::empty(X.dim());
    // A full-dimensional start that shrinks below tolerance is treated as
    // collapsed to the empty set.
    if (r0 >= kFixedPointTol && chebyshev_center(next).radius < kFixedPointTol) {
      return Polytope::empty(X.dim());
    }
    if (set_equal(next, omega, kFixedPointTol)) return next;
    omega = std::move(next);
  }
  throw NoConvergenceError(std::string(name) + ": no fixed point within max_iters", omega,
                           max_iters);
}

}  // namespace

Polytope max_control_invariant(const LTISystem& sys, const Polytope& X, const Polytope& U,
                               const DisturbanceSchedule& sched, int M, int max_iters,
                               int* iterations) {
  check_common(sys, X, U, X, sched, M);
  return fixed_point(
      X, max_iters, iterations, [&](const Polytope& S) { return pre_m(sys, X, U, S, sched, M); },
      "max_control_invariant");
}

Polytope max_positive_invariant(const LTISystem& sys, const Polytope& X, const Polytope& U,
                                const DisturbanceSchedule& sched, int M,
                                const FeedbackGain& gain, int max_iters,
                                int* iterations) {
  check_common(sys, X, U, X, sched, M);
  return fixed_point(
      X, max_iters, iterations, [&](const Polytope& S) { return pre_pi_m(sys, X, U, S, sched, M, gain); },
      "max_positive_invariant");
}

std::string system_hash(const LTISystem& sys) {
  std::string text;
  auto add = [&](const MatrixXd& M) {
    text += std::to_string(M.rows()) + "x" + std::to_string(M.cols()) + ":";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) text += format_double(M(i, j)) + ",";
    }
  };
  add(sys.A);
  add(sys.B);
  add(sys.E);
  text += format_double(sys.Ts);
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestMagic = "holdmpc-family 1";

std::string slice_name(std::size_t i) { return "slice_" + std::to_string(i) + ".hpoly"; }

}  // namespace

void write_family(const std::string& dir, const SetFamily& family, bool overwrite) {
  const fs::path root(dir);
  std::error_code ec;
  if (fs::exists(root / "manifest", ec)) {
    if (!overwrite) throw Error(ErrorCode::AlreadyExists, "archive '" + dir + "' already exists");
    for (const auto& entry : fs::directory_iterator(root, ec)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("slice_", 0) == 0 && entry.path().extension() == ".hpoly") {
        fs::remove(entry.path(), ec);
      }
    }
  }
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create directory '" + dir + "': " + ec.message());
  for (std::size_t i = 0; i < family.slices.size(); ++i) {
    write_polytope(family.slices[i], (root / slice_name(i)).string());
  }
  std::ofstream out(root / "manifest", std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest in '" + dir + "'");
  out << kManifestMagic << "\n";
  out << "system_hash " << family.manifest.system_hash << "\n";
  out << "M " << family.manifest.M << "\n";
  out << "schedule " << family.manifest.schedule << "\n";
  out << "slice_count " << family.slices.size() << "\n";
  for (const auto& [k, v] : family.manifest.extra) out << k << " " << v << "\n";
  if (!out) throw Error(ErrorCode::Io, "failed writing manifest in '" + dir + "'");
}

SetFamily read_family(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest");
  if (!in) throw Error(ErrorCode::Io, "no manifest in '" + dir + "'");
  std::string line;
  if (!std::getline(in, line) || line != kManifestMagic) {
    throw Error(ErrorCode::Io, "'" + dir + "/manifest' is not a set-family manifest");
  }
  SetFamily fam;
  bool have_count = false, have_m = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    try {
      if (key == "system_hash") fam.manifest.system_hash = value;
      else if (key == "M") { fam.manifest.M = std::stoi(value); have_m = true; }
      else if (key == "schedule") fam.manifest.schedule = value;
      else if (key == "slice_count") { fam.manifest.slice_count = std::stoul(value); have_count = true; }
      else fam.manifest.extra[key] = value;
    } catch (const std::exception&) {
      throw Error(ErrorCode::Io, "malformed manifest line '" + line + "'");
    }
  }
  if (!have_count || !have_m) throw Error(ErrorCode::Io, "manifest lacks M or slice_count");
  for (std::size_t i = 0; i < fam.manifest.slice_count; ++i) {
    fam.slices.push_back(read_polytope((root / slice_name(i)).string()));
  }
  return fam;
}

}  // namespace holdmpc
