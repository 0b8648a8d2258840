#pragma once

// Classical and adaptive (translated / dilated) Hermite function systems
// sampled on a uniform grid, with analytic parameter Jacobians.

#include "vpnet/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

namespace vpnet {

/// Strictly increasing, uniformly spaced sample positions inside [a, b].
class SampleGrid {
 public:
  SampleGrid(std::vector<double> points, double a, double b)
      : points_(std::move(points)), a_(a), b_(b) {
    if (points_.size() < 2) throw InvalidArgument("SampleGrid: need at least 2 points");
    for (double p : points_)
      if (!std::isfinite(p)) throw InvalidArgument("SampleGrid: non-finite point");
    if (!(a_ <= points_.front() && points_.back() <= b_))
      throw InvalidArgument("SampleGrid: points must lie inside the interval [a, b]");
    spacing_ = (points_.back() - points_.front()) / static_cast<double>(points_.size() - 1);
    if (!(spacing_ > 0.0)) throw InvalidArgument("SampleGrid: points must be strictly increasing");
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const double d = points_[i] - points_[i - 1];
      if (!(d > 0.0)) throw InvalidArgument("SampleGrid: points must be strictly increasing");
      if (std::abs(d - spacing_) > 1e-12 * std::max(spacing_, std::abs(points_[i])))
        throw InvalidArgument("SampleGrid: points are not uniformly spaced");
    }
  }

  /// m points spanning [a, b] end to end.
  static SampleGrid uniform(std::size_t m, double a, double b) {
    if (m < 2) throw InvalidArgument("SampleGrid: need at least 2 points");
    if (!(a < b)) throw InvalidArgument("SampleGrid: need a < b");
    std::vector<double> pts(m);
    const double h = (b - a) / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) pts[i] = a + h * static_cast<double>(i);
    pts.back() = b;
    return SampleGrid(std::move(pts), a, b);
  }

  /// Sample-index grid 0, 1, ..., m-1 with interval [0, m-1].
  static SampleGrid index(std::size_t m) {
    return uniform(m, 0.0, static_cast<double>(m) - 1.0);
  }

  std::size_t size() const noexcept { return points_.size(); }
  std::span<const double> points() const noexcept { return points_; }
  double spacing() const noexcept { return spacing_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }

  friend bool operator==(const SampleGrid& lhs, const SampleGrid& rhs) {
    return lhs.a_ == rhs.a_ && lhs.b_ == rhs.b_ && lhs.points_ == rhs.points_;
  }

 private:
  std::vector<double> points_;
  double a_;
  double b_;
  double spacing_ = 0.0;
};

/// Nonlinear parameters of the adaptive Hermite system.
struct VpParams {
  double tau = 0.0;     ///< translation, grid units
  double lambda = 1.0;  ///< dilation, inverse grid units; must be > 0

  friend bool operator==(const VpParams&, const VpParams&) = default;
};

inline void require_valid(const VpParams& p) {
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda) || !std::isfinite(p.tau))
    throw InvalidArgument("VpParams: lambda must be positive and both parameters finite");
}

/// Phi(theta) on a grid together with dPhi/dtau and dPhi/dlambda.
struct SampledBasis {
  Matrix phi;
  std::vector<Matrix> dphi;  // one m x n matrix per nonlinear parameter
  VpParams params;
  SampleGrid grid;
  /// True when the Gamma check passes and ||phi^T phi - I||_F is below the
  /// fast-path tolerance, i.e. phi^T can stand in for the pseudoinverse.
  bool orthonormal = false;
};

inline constexpr double kFastPathTolerance = 1e-8;

namespace detail {

inline void require_order(std::size_t n) {
  if (n == 0) throw InvalidArgument("Hermite system: n must be >= 1");
}

// Fills out(i, k) = Phi_k(s_i) for k < levels using the normalized recurrence
//   Phi_{k+1} = s sqrt(2/(k+1)) Phi_k - sqrt(k/(k+1)) Phi_{k-1}.
template <typename Points>
Matrix hermite_levels(const Points& s, std::size_t levels) {
  const Index m = static_cast<Index>(s.size());
  const Index n = static_cast<Index>(levels);
  Matrix out(m, n);
  const double c0 = 1.0 / std::sqrt(std::sqrt(std::numbers::pi));
  for (Index i = 0; i < m; ++i) {
    const double t = s[static_cast<std::size_t>(i)];
    double prev = 0.0;
    double cur = c0 * std::exp(-0.5 * t * t);
    out(i, 0) = cur;
    for (Index k = 0; k + 1 < n; ++k) {
      const double kd = static_cast<double>(k);
      const double next = t * std::sqrt(2.0 / (kd + 1.0)) * cur - std::sqrt(kd / (kd + 1.0)) * prev;
      prev = cur;
      cur = next;
      out(i, k + 1) = cur;
    }
  }
  return out;
}

}  // namespace detail

/// Raw Hermite functions Phi_k(t) at arbitrary points (no grid checks).
inline Matrix hermite_functions(std::span<const double> points, std::size_t n) {
  detail::require_order(n);
  if (points.empty()) throw InvalidArgument("hermite_functions: no points");
  return detail::hermite_levels(points, n);
}

/// Column k holds Phi_k at the grid points (unscaled).
inline Matrix classical_hermite(const SampleGrid& grid, std::size_t n) {
  return hermite_functions(grid.points(), n);
}

/// Phi_k(t; tau, lambda) = sqrt(lambda) Phi_k(lambda (t - tau)), each column
/// additionally scaled by sqrt(h) so the discrete Gram matrix approximates the
/// continuous one. dphi = {d/dtau, d/dlambda}.
inline SampledBasis adaptive_hermite(const SampleGrid& grid, std::size_t n, const VpParams& params) {
  detail::require_order(n);
  require_valid(params);
  const std::size_t m = grid.size();
  const double lam = params.lambda;
  const double tau = params.tau;

  std::vector<double> s(m);
  for (std::size_t i = 0; i < m; ++i) s[i] = lam * (grid.points()[i] - tau);

  // n + 1 levels so the derivative identity can reach Phi_n.
  const Matrix levels = detail::hermite_levels(s, n + 1);
  const Index rows = static_cast<Index>(m);
  const Index cols = static_cast<Index>(n);
  const double scale = std::sqrt(lam * grid.spacing());
  const double sqrt_h = std::sqrt(grid.spacing());

  SampledBasis out{Matrix(rows, cols), {Matrix(rows, cols), Matrix(rows, cols)}, params, grid, false};
  for (Index k = 0; k < cols; ++k) {
    const double kd = static_cast<double>(k);
    const double down = std::sqrt(kd / 2.0);
    const double up = std::sqrt((kd + 1.0) / 2.0);
    for (Index i = 0; i < rows; ++i) {
      const double value = levels(i, k);
      const double lower = k > 0 ? levels(i, k - 1) : 0.0;
      const double deriv = down * lower - up * levels(i, k + 1);  // Phi_k'(s)
      const double offset = grid.points()[static_cast<std::size_t>(i)] - tau;
      out.phi(i, k) = scale * value;
      out.dphi[0](i, k) = -lam * scale * deriv;
      out.dphi[1](i, k) = sqrt_h * (value / (2.0 * std::sqrt(lam)) + std::sqrt(lam) * offset * deriv);
    }
  }
  return out;
}

/// Membership in Gamma: tau + 3/lambda <= b and tau - 3/lambda >= a.
inline bool feasible_region_check(const VpParams& params, double a, double b) {
  if (!(params.lambda > 0.0)) throw InvalidArgument("feasible_region_check: lambda must be > 0");
  if (!(a < b)) throw InvalidArgument("feasible_region_check: need a < b");
  const double half = 3.0 / params.lambda;
  return params.tau + half <= b && params.tau - half >= a;
}

inline double orthonormality_residual(const Matrix& phi) {
  const Matrix gram = phi.transpose() * phi;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).norm();
}

/// Builds the adaptive basis and marks it orthonormal when phi^T may replace
/// the pseudoinverse within `tolerance`.
inline SampledBasis adaptive_hermite_checked(const SampleGrid& grid, std::size_t n,
                                             const VpParams& params,
                                             double tolerance = kFastPathTolerance) {
  SampledBasis basis = adaptive_hermite(grid, n, params);
  basis.orthonormal = feasible_region_check(params, grid.a(), grid.b()) &&
                      orthonormality_residual(basis.phi) <= tolerance;
  return basis;
}

/// Singular values below eps * sigma_max * max(m, n) count as zero.
inline double rank_tolerance(double sigma_max, Index rows, Index cols) {
  return std::numeric_limits<double>::epsilon() * sigma_max *
         static_cast<double>(std::max(rows, cols));
}

/// sigma_max / sigma_min, or +infinity when phi is numerically rank deficient.
inline double condition_number(const Matrix& phi) {
  if (phi.size() == 0) throw InvalidArgument("condition_number: empty matrix");
  if (phi.rows() < phi.cols()) throw InvalidArgument("condition_number: need m >= n");
  if (!phi.allFinite()) throw InvalidArgument("condition_number: non-finite entries");
  const Eigen::JacobiSVD<Matrix> svd(phi);
  const Vector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smax > 0.0)) throw InvalidArgument("condition_number: all-zero matrix");
  if (smin < rank_tolerance(smax, phi.rows(), phi.cols()))
    return std::numeric_limits<double>::infinity();
  return smax / smin;
}

struct ConditionSample {
  double tau;
  double lambda;
  double cond;
};

/// Condition number of the adaptive basis for every (tau, lambda) pair,
/// tau-major order.
inline std::vector<ConditionSample> condition_sweep(const SampleGrid& grid, std::size_t n,
                                                    std::span<const double> taus,
                                                    std::span<const double> lambdas) {
  if (taus.empty() || lambdas.empty())
    throw InvalidArgument("condition_sweep: tau and lambda ranges must be non-empty");
  std::vector<ConditionSample> rows;
  rows.reserve(taus.size() * lambdas.size());
  for (double tau : taus)
    for (double lam : lambdas) {
      const SampledBasis basis = adaptive_hermite(grid, n, {tau, lam});
      rows.push_back({tau, lam, condition_number(basis.phi)});
    }
  return rows;
}

/// CSV with header `tau,lambda,cond`; `inf` marks rank deficiency.
inline void write_condition_csv(std::ostream& os, std::span<const ConditionSample> rows) {
  os << "tau,lambda,cond\n";
  char buf[64];
  auto put = [&](double v) {
    if (std::isinf(v)) {
      os << "inf";
    } else {
      std::snprintf(buf, sizeof buf, "%.12g", v);
      os << buf;
    }
  };
  for (const auto& r : rows) {
    put(r.tau);
    os << ',';
    put(r.lambda);
    os << ',';
    put(r.cond);
    os << '\n';
  }
}

/// Callable producing the adaptive Hermite basis for a fixed grid and order;
/// the parametric-basis seam consumed by vp_fit and the VP layer.
struct HermiteBasisBuilder {
  SampleGrid grid;
  std::size_t n;

  SampledBasis operator()(const VpParams& params) const { return adaptive_hermite(grid, n, params); }
};

}  // namespace vpnet
