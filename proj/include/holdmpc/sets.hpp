#pragma once

// Reachability and invariance under an M-step input hold: precursor sets,
// controllable sets, maximal invariant sets and the disturbance
// forward-reachable sets E_k.

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "holdmpc/error.hpp"
#include "holdmpc/polytope.hpp"

namespace holdmpc {

/// x⁺ = A x + B u + E w.
struct LTISystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
  double Ts = 1.0;  // seconds; informational

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int o() const { return static_cast<int>(E.cols()); }
  /// Throws DimensionMismatch / InvalidArgument.
  void validate() const;
};

/// Per-step disturbance sets W_0 … W_{M-1}; step t uses W_{t mod M}.
class DisturbanceSchedule {
 public:
  DisturbanceSchedule() = default;
  explicit DisturbanceSchedule(std::vector<Box> boxes);
  explicit DisturbanceSchedule(std::vector<Polytope> sets);

  /// M copies of the same box.
  static DisturbanceSchedule repeated(const Box& w, int M);
  /// M copies of the singleton {w}.
  static DisturbanceSchedule constant(const Eigen::VectorXd& w, int M);

  int length() const { return static_cast<int>(sets_.size()); }
  int dim() const { return sets_.empty() ? 0 : sets_.front().dim(); }
  const Polytope& set(int j) const { return sets_.at(static_cast<std::size_t>(j)); }
  /// Box form of W_j when it was given as a box.
  const std::optional<Box>& box(int j) const { return boxes_.at(static_cast<std::size_t>(j)); }
  /// max over w ∈ W_j of cᵀw.
  double support(int j, const Eigen::VectorXd& c) const;
  bool all_contain_origin() const;
  /// Human-readable form used in archive manifests.
  std::string describe() const;

 private:
  void check() const;

  std::vector<Polytope> sets_;
  std::vector<std::optional<Box>> boxes_;
};

/// Hold length M and horizon N with N a multiple of M.
struct HoldConfig {
  int M = 1;
  int N = 1;

  HoldConfig(int M_, int N_);
};

/// u = -K_fb x, held for M steps.
struct FeedbackGain {
  Eigen::MatrixXd K_fb;
};

/// Thrown by the fixed-point routines when max_iters is exhausted.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& what, Polytope last, int iterations)
      : Error(ErrorCode::NoConvergence, what), last_(std::move(last)), iterations_(iterations) {}
  const Polytope& last_iterate() const { return last_; }
  int iterations() const { return iterations_; }

 private:
  Polytope last_;
  int iterations_;
};

inline constexpr int kDefaultMaxIters = 500;
inline constexpr double kFixedPointTol = 1e-7;

/// E_k = ⊕_{j<k} A^{k-1-j} E W_{j mod M}, for 1 ≤ k ≤ M (state dim ≤ 3).
Polytope error_set(const LTISystem& sys, const DisturbanceSchedule& sched, int k);

/// States from which one input held for M steps keeps x_1..x_{M-1} in X
/// and reaches S at step M for every disturbance sequence.
Polytope pre_m(const LTISystem& sys, const Polytope& X, const Polytope& U, const Polytope& S,
               const DisturbanceSchedule& sched, int M);

/// Same, with the held input fixed to u = -K_fb x_0.
Polytope pre_pi_m(const LTISystem& sys, const Polytope& X, const Polytope& U, const Polytope& S,
                  const DisturbanceSchedule& sched, int M, const FeedbackGain& gain);

/// [K_0, K_M, …, K_steps] with K_0 = target and K_i = pre_m(K_{i-M}) ∩ X.
std::vector<Polytope> controllable_set(const LTISystem& sys, const Polytope& X, const Polytope& U,
                                       const Polytope& target, const DisturbanceSchedule& sched,
                                       int M, int steps);

/// Fixed point of Ω ← pre_m(Ω) ∩ Ω starting from X.  `iterations`, if
/// given, receives the number of pre_m evaluations.
Polytope max_control_invariant(const LTISystem& sys, const Polytope& X, const Polytope& U,
                               const DisturbanceSchedule& sched, int M,
                               int max_iters = kDefaultMaxIters, int* iterations = nullptr);

/// Fixed point of Ω ← pre_pi_m(Ω) ∩ Ω starting from X.
Polytope max_positive_invariant(const LTISystem& sys, const Polytope& X, const Polytope& U,
                                const DisturbanceSchedule& sched, int M,
                                const FeedbackGain& gain, int max_iters = kDefaultMaxIters,
                                int* iterations = nullptr);

/// Stable 64-bit FNV-1a digest of (A, B, E, Ts), as 16 hex digits.
std::string system_hash(const LTISystem& sys);

// ---------------------------------------------------------------------------
// Set-family archives: a directory holding `manifest` and slice_<i>.hpoly.

struct FamilyManifest {
  std::string system_hash;
  int M = 1;
  std::string schedule;
  std::size_t slice_count = 0;
  std::map<std::string, std::string> extra;  // additional key/value lines
};

struct SetFamily {
  FamilyManifest manifest;
  std::vector<Polytope> slices;
};

/// Throws AlreadyExists if `dir` already holds a manifest and !overwrite.
void write_family(const std::string& dir, const SetFamily& family, bool overwrite);
/// Throws Io on missing/malformed files or a slice count mismatch.
SetFamily read_family(const std::string& dir);

}  // namespace holdmpc
