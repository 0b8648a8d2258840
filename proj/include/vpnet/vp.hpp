#pragma once

// Variable projection operators built on an SVD pseudoinverse: coefficients,
// orthogonal projection, the residual functional r2, and their derivatives
// with respect to one nonlinear parameter (given dPhi/dtheta_j).

#include "vpnet/hermite.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <sstream>

namespace vpnet {

/// Phi together with its Moore-Penrose pseudoinverse.
struct PinvBundle {
  Matrix phi;
  Matrix pinv;
  Index rank = 0;
  Vector singular_values;
  bool fast_path = false;  // pinv == phi^T, no SVD performed

  Index rows() const noexcept { return phi.rows(); }
  Index cols() const noexcept { return phi.cols(); }
};

inline PinvBundle pseudoinverse(const Matrix& phi) {
  if (phi.rows() < phi.cols() || phi.cols() < 1)
    throw InvalidArgument("pseudoinverse: need m >= n >= 1");
  if (!phi.allFinite()) throw InvalidArgument("pseudoinverse: non-finite entries");

  const Eigen::JacobiSVD<Matrix> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? rank_tolerance(sv(0), phi.rows(), phi.cols()) : 0.0;

  PinvBundle out;
  out.phi = phi;
  out.singular_values = sv;
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol && sv(i) > 0.0) {
      inv(i) = 1.0 / sv(i);
      ++out.rank;
    }
  }
  out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

/// Uses phi^T when the basis reports verified discrete orthonormality,
/// otherwise the SVD route.
inline PinvBundle pseudoinverse(const SampledBasis& basis) {
  if (!basis.orthonormal) return pseudoinverse(basis.phi);
  PinvBundle out;
  out.phi = basis.phi;
  out.pinv = basis.phi.transpose();
  out.rank = basis.phi.cols();
  out.singular_values = Vector::Ones(basis.phi.cols());
  out.fast_path = true;
  return out;
}

namespace detail {

inline void require_rows(Index rows, const PinvBundle& b, const char* what) {
  if (rows != b.rows())
    throw InvalidArgument(std::string(what) + ": signal length " + std::to_string(rows) +
                          " does not match basis rows " + std::to_string(b.rows()));
}

inline void require_same_shape(const Matrix& dphi, const PinvBundle& b, const char* what) {
  if (dphi.rows() != b.rows() || dphi.cols() != b.cols())
    throw InvalidArgument(std::string(what) + ": dphi shape does not match phi");
}

}  // namespace detail

/// c = Phi^+ x. Accepts a single signal or a matrix with one signal per column.
template <typename Derived>
Matrix coefficients(const Eigen::MatrixBase<Derived>& x, const PinvBundle& b) {
  detail::require_rows(x.rows(), b, "coefficients");
  return b.pinv * x;
}

/// x_hat = Phi Phi^+ x.
template <typename Derived>
Matrix project(const Eigen::MatrixBase<Derived>& x, const PinvBundle& b) {
  detail::require_rows(x.rows(), b, "project");
  return b.phi * (b.pinv * x);
}

/// r2 = ||x - Phi Phi^+ x||^2 for a single signal.
template <typename Derived>
double residual_r2(const Eigen::MatrixBase<Derived>& x, const PinvBundle& b) {
  detail::require_rows(x.rows(), b, "residual_r2");
  if (x.cols() != 1) throw InvalidArgument("residual_r2: expects a single signal");
  return (x - b.phi * (b.pinv * x)).squaredNorm();
}

/// Derivative of the projector Phi Phi^+:
///   (I - P) dPhi Phi^+ + [(I - P) dPhi Phi^+]^T.
inline Matrix d_projection(const PinvBundle& b, const Matrix& dphi) {
  detail::require_same_shape(dphi, b, "d_projection");
  const Matrix a = (dphi - b.phi * (b.pinv * dphi)) * b.pinv;
  return a + a.transpose();
}

/// Derivative of the pseudoinverse (Golub-Pereyra):
///   -Phi^+ dPhi Phi^+ + Phi^+ Phi^+^T dPhi^T (I - P) + (I - Phi^+ Phi) dPhi^T Phi^+^T Phi^+.
/// Every term is evaluated as an n x m product; the m x m projector is never formed.
inline Matrix d_pinv(const PinvBundle& b, const Matrix& dphi) {
  detail::require_same_shape(dphi, b, "d_pinv");
  const Matrix& phi = b.phi;
  const Matrix& pinv = b.pinv;
  const Index n = phi.cols();
  const Matrix dphi_t = dphi.transpose();                               // n x m
  const Matrix term1 = -(pinv * dphi) * pinv;                           // n x m
  const Matrix gram_inv = pinv * pinv.transpose();                      // n x n
  const Matrix term2 = gram_inv * (dphi_t - (dphi_t * phi) * pinv);     // n x m
  const Matrix null_proj = Matrix::Identity(n, n) - pinv * phi;         // n x n
  const Matrix term3 = null_proj * ((dphi_t * pinv.transpose()) * pinv);
  return term1 + term2 + term3;
}

/// d r2 = -2 x^T (I - P) dPhi Phi^+ x.
template <typename Derived>
double d_r2(const Eigen::MatrixBase<Derived>& x, const PinvBundle& b, const Matrix& dphi) {
  detail::require_rows(x.rows(), b, "d_r2");
  detail::require_same_shape(dphi, b, "d_r2");
  if (x.cols() != 1) throw InvalidArgument("d_r2: expects a single signal");
  const Vector c = b.pinv * x;
  const Vector residual = x - b.phi * c;
  return -2.0 * residual.dot(dphi * c);
}

using BasisBuilder = std::function<SampledBasis(const VpParams&)>;

struct VpFitOptions {
  std::size_t steps = 200;
  double step_size = 1e-2;
  std::size_t max_halvings = 20;
};

struct VpObjective {
  double value = 0.0;        // mean r2 / ||x||^2
  double grad[2] = {0, 0};   // d/dtau, d/dlambda
};

/// Mean of r2(x_i) / ||x_i||^2 over the rows of `signals` and its gradient.
/// Rows with zero norm are skipped.
inline VpObjective vp_objective(const Matrix& signals, const SampledBasis& basis) {
  const PinvBundle b = pseudoinverse(basis.phi);
  VpObjective out;
  std::size_t used = 0;
  for (Index i = 0; i < signals.rows(); ++i) {
    const Vector x = signals.row(i).transpose();
    const double energy = x.squaredNorm();
    if (energy == 0.0) continue;
    const Vector c = b.pinv * x;
    const Vector residual = x - b.phi * c;
    out.value += residual.squaredNorm() / energy;
    for (std::size_t j = 0; j < 2 && j < basis.dphi.size(); ++j)
      out.grad[j] += -2.0 * residual.dot(basis.dphi[j] * c) / energy;
    ++used;
  }
  if (used > 0) {
    out.value /= static_cast<double>(used);
    out.grad[0] /= static_cast<double>(used);
    out.grad[1] /= static_cast<double>(used);
  }
  return out;
}

/// Fits (tau, lambda) to the rows of `signals` by safeguarded gradient descent
/// on the mean normalized residual. The step uses the metric diag(1/lambda^2,
/// lambda^2) so `step_size` is dimensionless; a step that does not decrease the
/// objective is halved up to `max_halvings` times, after which the fit stops.
/// lambda is kept >= lambda_min = 6 / (b - a) of the builder's grid.
inline VpParams vp_fit(const Matrix& signals, const BasisBuilder& builder, VpParams theta,
                       const VpFitOptions& options = {}) {
  require_valid(theta);
  if (options.steps == 0) return theta;
  if (signals.rows() == 0) throw InvalidArgument("vp_fit: no signals");

  SampledBasis basis = builder(theta);
  if (signals.cols() != basis.phi.rows())
    throw InvalidArgument("vp_fit: signal length does not match basis rows");
  const double lambda_min = 6.0 / (basis.grid.b() - basis.grid.a());
  theta.lambda = std::max(theta.lambda, lambda_min);
  basis = builder(theta);

  VpObjective current = vp_objective(signals, basis);
  for (std::size_t it = 0; it < options.steps; ++it) {
    if (!std::isfinite(current.value) || !std::isfinite(current.grad[0]) ||
        !std::isfinite(current.grad[1]))
      throw NumericalError("vp_fit: non-finite objective or gradient", it);

    const double lam2 = theta.lambda * theta.lambda;
    const double dir_tau = -current.grad[0] / lam2;
    const double dir_lambda = -current.grad[1] * lam2;
    double eta = options.step_size;
    bool accepted = false;
    for (std::size_t h = 0; h <= options.max_halvings; ++h, eta *= 0.5) {
      VpParams trial{theta.tau + eta * dir_tau, std::max(lambda_min, theta.lambda + eta * dir_lambda)};
      SampledBasis trial_basis = builder(trial);
      VpObjective next = vp_objective(signals, trial_basis);
      if (std::isfinite(next.value) && next.value < current.value) {
        theta = trial;
        current = next;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return theta;
}

}  // namespace vpnet
