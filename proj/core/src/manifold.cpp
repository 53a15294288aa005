#include "hcad/manifold.hpp"

#include <algorithm>
#include <cmath>

namespace hcad::manifold {

namespace {

void check_same_length(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) {
    throw DimensionError("vector length mismatch: " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  if (u.size() < 2) throw DimensionError("ambient vectors need length >= 2");
}

void check_same_manifold(const ManifoldPoint& x, const ManifoldPoint& y) {
  check_same_length(x.coords, y.coords);
  if (x.K.k() != y.K.k()) throw DomainError("points live on hyperboloids of different curvature");
}

// Tangency tolerance scaled by the magnitudes involved.
bool is_tangent(const Eigen::VectorXd& base, const Eigen::VectorXd& v) {
  const double ip = minkowski_inner(base, v);
  const double scale = std::max(1.0, base.norm() * v.norm());
  return std::abs(ip) <= 1e-8 * scale;
}

}  // namespace

double minkowski_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  check_same_length(u, v);
  return -u(0) * v(0) + u.tail(u.size() - 1).dot(v.tail(v.size() - 1));
}

double minkowski_norm(const Eigen::VectorXd& v) {
  if (v.size() < 2) throw DimensionError("ambient vectors need length >= 2");
  const double sq = -v(0) * v(0) + v.tail(v.size() - 1).squaredNorm();
  return std::sqrt(std::max(0.0, sq));
}

ManifoldPoint origin(const Curvature& K, int d) {
  if (d < 1) throw DimensionError("manifold dimension must be >= 1");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d + 1);
  c(0) = K.sqrt_k();
  return ManifoldPoint{std::move(c), K};
}

TangentVector project_tangent(const ManifoldPoint& x, const Eigen::VectorXd& ambient) {
  check_same_length(x.coords, ambient);
  const double ip = minkowski_inner(x.coords, ambient);
  Eigen::VectorXd t = ambient + (ip / x.K.k()) * x.coords;
  return TangentVector{std::move(t), x};
}

ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v, double norm_clamp,
                      NumericCounters* counters) {
  check_same_length(x.coords, v.coords);
  if (!is_tangent(x.coords, v.coords)) {
    throw DomainError("exp_map: vector is not tangent at the base point");
  }
  const double sqrt_k = x.K.sqrt_k();
  double n = minkowski_norm(v.coords);
  if (n < kNormEps) return x;

  Eigen::VectorXd dir = v.coords / n;
  const double max_norm = norm_clamp * sqrt_k;
  if (n > max_norm) {
    n = max_norm;
    if (counters) ++counters->norm_clamps;
  }
  const double lam = n / sqrt_k;
  Eigen::VectorXd out = std::cosh(lam) * x.coords + (sqrt_k * std::sinh(lam)) * dir;
  return ManifoldPoint{std::move(out), x.K};
}

TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y) {
  check_same_manifold(x, y);
  const double k = x.K.k();
  const double ip = minkowski_inner(x.coords, y.coords);
  Eigen::VectorXd u = y.coords + (ip / k) * x.coords;
  const double un = minkowski_norm(u);
  const double d = distance(x, y);
  if (un < kNormEps || d < kNormEps) {
    return TangentVector{Eigen::VectorXd::Zero(x.coords.size()), x};
  }
  return TangentVector{(d / un) * u, x};
}

double distance(const ManifoldPoint& x, const ManifoldPoint& y) {
  check_same_manifold(x, y);
  const double k = x.K.k();
  const double arg = std::max(1.0, -minkowski_inner(x.coords, y.coords) / k);
  return x.K.sqrt_k() * std::acosh(arg);
}

TangentVector parallel_transport(const ManifoldPoint& x, const ManifoldPoint& y,
                                 const TangentVector& v) {
  check_same_manifold(x, y);
  check_same_length(x.coords, v.coords);
  if (!is_tangent(x.coords, v.coords)) {
    throw DomainError("parallel_transport: vector is not tangent at the source point");
  }
  const double d = distance(x, y);
  if (d < kNormEps) return TangentVector{v.coords, y};

  const TangentVector lx = log_map(x, y);
  const TangentVector ly = log_map(y, x);
  const double coef = minkowski_inner(lx.coords, v.coords) / (d * d);
  Eigen::VectorXd out = v.coords - coef * (lx.coords + ly.coords);
  return TangentVector{std::move(out), y};
}

ManifoldPoint lift_feature(const Eigen::VectorXd& x_e, const Curvature& K) {
  if (!x_e.allFinite()) throw DomainError("lift_feature: feature vector has NaN/Inf entries");
  const Eigen::MatrixXd lifted = lift_rows(x_e.transpose(), K);
  return ManifoldPoint{lifted.row(0).transpose(), K};
}

Eigen::MatrixXd lift_rows(const Eigen::MatrixXd& X, const Curvature& K) {
  const auto n = X.rows();
  const auto d = X.cols();
  const double sqrt_k = K.sqrt_k();
  Eigen::MatrixXd out(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = X.row(i).norm();
    if (r < kNormEps) {
      out(i, 0) = sqrt_k;
      out.row(i).tail(d).setZero();
      continue;
    }
    const double lam = r / sqrt_k;
    out(i, 0) = sqrt_k * std::cosh(lam);
    out.row(i).tail(d) = (sqrt_k * std::sinh(lam) / r) * X.row(i);
  }
  return out;
}

Eigen::MatrixXd exp_origin_rows(const Eigen::MatrixXd& U, const Curvature& K, double norm_clamp,
                                NumericCounters* counters) {
  const auto n = U.rows();
  const auto dd = U.cols();  // ambient d+1
  const double sqrt_k = K.sqrt_k();
  const double max_norm = norm_clamp * sqrt_k;
  Eigen::MatrixXd out(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Tangent-at-origin rows have zero first coordinate, so the Lorentz norm
    // equals the Euclidean norm of the spatial part.
    const double r0 = U.row(i).tail(dd - 1).norm();
    if (counters) counters->note_guard(r0 < kNormEps);
    if (r0 < kNormEps) {
      out(i, 0) = sqrt_k;
      out.row(i).tail(dd - 1).setZero();
      continue;
    }
    double r = r0;
    if (counters) counters->note_guard(r > max_norm);
    if (r > max_norm) {
      r = max_norm;
      if (counters) ++counters->norm_clamps;
    }
    const double lam = r / sqrt_k;
    out(i, 0) = sqrt_k * std::cosh(lam);
    out.row(i).tail(dd - 1) = (sqrt_k * std::sinh(lam) / r0) * U.row(i).tail(dd - 1);
  }
  return out;
}

Eigen::MatrixXd log_origin_rows(const Eigen::MatrixXd& H, const Curvature& K,
                                NumericCounters* counters) {
  const auto n = H.rows();
  const auto dd = H.cols();
  const double sqrt_k = K.sqrt_k();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rho = H.row(i).tail(dd - 1).norm();
    if (counters) counters->note_guard(rho < kNormEps);
    if (rho < kNormEps) continue;
    // For points on the manifold, sinh(len/sqrt(K)) = rho/sqrt(K) exactly;
    // the asinh form avoids the arcosh cancellation near the origin.
    const double len = sqrt_k * std::asinh(rho / sqrt_k);
    out.row(i).tail(dd - 1) = (len / rho) * H.row(i).tail(dd - 1);
  }
  return out;
}

Eigen::MatrixXd mobius_matvec(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H,
                              const Curvature& K, double norm_clamp, NumericCounters* counters) {
  if (W.cols() != H.cols()) {
    throw DimensionError("mobius_matvec: W has " + std::to_string(W.cols()) +
                         " columns but rows have ambient dimension " + std::to_string(H.cols()));
  }
  Eigen::MatrixXd tangent = log_origin_rows(H, K);
  Eigen::MatrixXd u = tangent * W.transpose();
  u.col(0).setZero();  // re-zero the first output row of W
  return exp_origin_rows(u, K, norm_clamp, counters);
}

Eigen::MatrixXd mobius_add_bias(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                                const Curvature& K, double norm_clamp, NumericCounters* counters,
                                Eigen::MatrixXd* transported_out) {
  if (b.size() != H.cols()) {
    throw DimensionError("mobius_add_bias: bias length does not match ambient dimension");
  }
  const auto n = H.rows();
  const auto dd = H.cols();
  const double k = K.k();
  const double sqrt_k = K.sqrt_k();
  const double max_norm = norm_clamp * sqrt_k;

  Eigen::VectorXd o = Eigen::VectorXd::Zero(dd);
  o(0) = sqrt_k;

  if (transported_out) transported_out->resize(n, dd);
  Eigen::MatrixXd out(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd h = H.row(i).transpose();
    // Transport b from the origin tangent space to T_h. For tangent inputs the
    // geodesic-transport formula reduces to this algebraic form.
    const double denom = k + sqrt_k * h(0);
    const double s = (-h(0) * b(0) + h.tail(dd - 1).dot(b.tail(dd - 1))) / denom;
    Eigen::VectorXd w = b + s * (o + h);
    if (transported_out) transported_out->row(i) = w.transpose();

    const double n0 = minkowski_norm(w);
    if (counters) counters->note_guard(n0 < kNormEps);
    if (n0 < kNormEps) {
      out.row(i) = h.transpose();
      continue;
    }
    double nn = n0;
    if (counters) counters->note_guard(nn > max_norm);
    if (nn > max_norm) {
      nn = max_norm;
      if (counters) ++counters->norm_clamps;
    }
    const double lam = nn / sqrt_k;
    out.row(i) = (std::cosh(lam) * h + (sqrt_k * std::sinh(lam) / n0) * w).transpose();
  }
  return out;
}

}  // namespace hcad::manifold
