#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "hcad/errors.hpp"

namespace hcad {

/// Counters for numeric guard events, surfaced in training diagnostics.
/// With `trace_guards` set, every branch decision (ReLU signs, norm clamps,
/// small-norm guards, loss saturation) is folded into `guard_hash`; the
/// finite-difference checker uses it to skip coordinates whose perturbation
/// crosses a kink.
struct NumericCounters {
  std::uint64_t norm_clamps = 0;      // tangent norms clamped before cosh/sinh
  std::uint64_t bce_saturations = 0;  // discriminator scores clamped in the loss
  bool trace_guards = false;
  std::uint64_t guard_hash = 1469598103934665603ULL;

  void note_guard(bool taken) {
    if (!trace_guards) return;
    guard_hash ^= taken ? 0x9eULL : 0x31ULL;
    guard_hash *= 1099511628211ULL;
  }

  NumericCounters& operator+=(const NumericCounters& o) {
    norm_clamps += o.norm_clamps;
    bce_saturations += o.bce_saturations;
    return *this;
  }
};

/// Curvature parameter K > 0; the manifold has sectional curvature -1/K.
class Curvature {
 public:
  explicit Curvature(double k) : k_(k), sqrt_k_(0) {
    if (!(k > 0.0)) throw ConfigError("curvature K must be positive, got " + std::to_string(k));
    sqrt_k_ = std::sqrt(k);
  }
  double k() const { return k_; }
  double sqrt_k() const { return sqrt_k_; }

 private:
  double k_;
  double sqrt_k_;
};

/// Point on the hyperboloid {x : <x,x>_L = -K, x0 > 0}, stored in ambient
/// Minkowski coordinates of length d+1.
struct ManifoldPoint {
  Eigen::VectorXd coords;
  Curvature K;

  int dim() const { return static_cast<int>(coords.size()) - 1; }
};

/// Vector in the tangent space at `base`: <base, v>_L = 0.
struct TangentVector {
  Eigen::VectorXd coords;
  ManifoldPoint base;
};

namespace manifold {

/// Small-norm guard: below this tangent norm, exp returns its base point and
/// log returns the zero vector (gradients pass through as identity).
inline constexpr double kNormEps = 1e-12;

/// Default cap on tangent norms (in units of sqrt(K)) before cosh/sinh.
inline constexpr double kDefaultNormClamp = 40.0;

/// Minkowski inner product -u0*v0 + sum_{i>=1} ui*vi.
double minkowski_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// sqrt(max(0, <v,v>_L)) — the Lorentz norm of a (spacelike) tangent vector.
double minkowski_norm(const Eigen::VectorXd& v);

/// The reference point o = (sqrt(K), 0, ..., 0).
ManifoldPoint origin(const Curvature& K, int d);

/// Projects an arbitrary ambient vector onto the tangent space at x.
TangentVector project_tangent(const ManifoldPoint& x, const Eigen::VectorXd& ambient);

ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v,
                      double norm_clamp = kDefaultNormClamp, NumericCounters* counters = nullptr);

TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y);

/// Geodesic distance sqrt(K) * arcosh(-<x,y>_L / K); the arcosh argument is
/// clamped to [1, inf) to absorb roundoff.
double distance(const ManifoldPoint& x, const ManifoldPoint& y);

/// Parallel transport of v from T_x to T_y along the connecting geodesic:
/// P(v) = v - (<log_x(y), v>_L / d(x,y)^2) * (log_x(y) + log_y(x)).
TangentVector parallel_transport(const ManifoldPoint& x, const ManifoldPoint& y,
                                 const TangentVector& v);

/// Lifts a raw feature vector onto the manifold: exp_o((0, x_E)).
ManifoldPoint lift_feature(const Eigen::VectorXd& x_e, const Curvature& K);

// --- Row-batched forms used by the encoder -------------------------------
//
// Rows of H are ambient manifold coordinates; rows of tangent matrices are
// tangent-at-origin vectors whose first coordinate is zero.

/// Lifts each row of X (n x d) onto the hyperboloid, returning n x (d+1).
Eigen::MatrixXd lift_rows(const Eigen::MatrixXd& X, const Curvature& K);

/// exp at the origin of tangent rows U (first column zero), with norm clamp.
Eigen::MatrixXd exp_origin_rows(const Eigen::MatrixXd& U, const Curvature& K,
                                double norm_clamp = kDefaultNormClamp,
                                NumericCounters* counters = nullptr);

/// log at the origin of manifold rows H, returning tangent rows (col 0 == 0).
Eigen::MatrixXd log_origin_rows(const Eigen::MatrixXd& H, const Curvature& K,
                                NumericCounters* counters = nullptr);

/// Hyperbolic matrix multiplication exp_o(W * log_o(h)) applied row-wise.
/// W acts on full ambient tangent coordinates; its first output row is
/// re-zeroed before exp so tangency at the origin is exact.
Eigen::MatrixXd mobius_matvec(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H,
                              const Curvature& K, double norm_clamp = kDefaultNormClamp,
                              NumericCounters* counters = nullptr);

/// Mobius bias addition exp_h(P_{o->h}(b)) applied row-wise. b is a tangent
/// vector at the origin (first coordinate zero). When `transported_out` is
/// given it receives the per-row transported bias P_{o->h}(b).
Eigen::MatrixXd mobius_add_bias(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                                const Curvature& K, double norm_clamp = kDefaultNormClamp,
                                NumericCounters* counters = nullptr,
                                Eigen::MatrixXd* transported_out = nullptr);

}  // namespace manifold
}  // namespace hcad
