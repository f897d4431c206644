#pragma once

// H-representation polytopes {x : Hx ≤ h} and the set algebra built on
// them.  Vertex-based operations (vertices, convex_hull, minkowski_sum,
// affine_map) are limited to dimension ≤ 3.

#include <Eigen/Dense>

#include <atomic>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace holdmpc {

/// Every geometric tolerance in one record.  Containment/equality are
/// measured in the unit-row metric.
struct GeometryTolerances {
  double lp = 1e-10;             // solver tolerance for geometric LPs
  double redundancy = 1e-9;      // row i redundant iff max H_i x ≤ h_i + this
  double containment = 1e-7;     // default for contains / set_equal
  double equality_pair = 1e-8;   // opposite rows this close act as an equality
  double empty = 1e-9;           // Chebyshev radius below -empty ⇒ empty
  double zero_coefficient = 1e-12;
};

const GeometryTolerances& geometry_tolerances();

/// Axis-aligned box, lower ≤ upper componentwise.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  int dim() const { return static_cast<int>(lower.size()); }
};

class Polytope {
 public:
  /// Zero-dimensional universe; mostly useful as a placeholder.
  Polytope();
  /// Throws Error(InvalidArgument) on inconsistent sizes or non-finite data.
  Polytope(Eigen::MatrixXd H, Eigen::VectorXd h);

  /// Canonical empty set: the single row 0ᵀx ≤ -1.
  static Polytope empty(int dim);
  /// All of Rⁿ (no rows).
  static Polytope universe(int dim);
  static Polytope from_box(const Box& box);
  static Polytope from_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  /// {x : lo ≤ x_k ≤ hi} for a single coordinate k.
  static Polytope slab(int dim, int k, double lo, double hi);
  static Polytope point(const Eigen::VectorXd& x);

  int dim() const { return dim_; }
  Eigen::Index rows() const { return H_.rows(); }
  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& h() const { return h_; }

  /// LP-decided; cached after the first query.
  bool is_empty() const;
  bool contains_point(const Eigen::VectorXd& x, double tol = 1e-9) const;
  /// Index of the most violated row, or -1 when x is inside (within tol).
  int violated_row(const Eigen::VectorXd& x, double tol = 1e-9) const;

 private:
  struct EmptinessCache {
    std::atomic<int> state{-1};  // -1 unknown, 0 nonempty, 1 empty
  };

  Eigen::MatrixXd H_;
  Eigen::VectorXd h_;
  int dim_ = 0;
  std::shared_ptr<EmptinessCache> cache_;
};

struct ChebyshevBall {
  Eigen::VectorXd center;
  double radius = 0.0;  // negative for empty sets, +inf if unbounded
};

/// Rows scaled to unit norm; zero rows dropped (or canonical empty).
Polytope normalize(const Polytope& p);
/// Removes every redundant row; the set is unchanged.
Polytope minimize(const Polytope& p);

Polytope intersect(const Polytope& a, const Polytope& b);
/// {x : x + v ∈ a for all v ∈ b}.  Throws EmptySubtrahend/UnboundedSubtrahend.
Polytope pontryagin_diff(const Polytope& a, const Polytope& b);
/// Same, with the subtrahend given through its support function.
Polytope pontryagin_diff(const Polytope& a,
                         const std::function<double(const Eigen::VectorXd&)>& support_b);
Polytope minkowski_sum(const Polytope& a, const Polytope& b);
/// Fourier–Motzkin elimination of every coordinate not in keep_dims.
Polytope project(const Polytope& p, std::span<const int> keep_dims);
bool contains(const Polytope& outer, const Polytope& inner,
              double tol = geometry_tolerances().containment);
bool set_equal(const Polytope& a, const Polytope& b,
               double tol = geometry_tolerances().containment);

bool is_empty(const Polytope& p);
bool is_bounded(const Polytope& p);
ChebyshevBall chebyshev_center(const Polytope& p);
/// max dᵀx over p: -inf when p is empty, +inf when unbounded in d.
double support(const Polytope& p, const Eigen::VectorXd& direction);
std::vector<Eigen::VectorXd> vertices(const Polytope& p);
Polytope convex_hull(const std::vector<Eigen::VectorXd>& points, int dim);
/// {T x : x ∈ p}.
Polytope affine_map(const Polytope& p, const Eigen::MatrixXd& T);
/// {x : T x ∈ p}.
Polytope affine_preimage(const Polytope& p, const Eigen::MatrixXd& T);

// Text format: "HPOLY <rows> <dim>" then one "a_1 … a_dim b" line per row.
std::string format_double(double v);
std::string to_text(const Polytope& p);
Polytope from_text(std::string_view text);
void write_polytope(const Polytope& p, const std::string& path);
Polytope read_polytope(const std::string& path);

}  // namespace holdmpc
