#pragma once

// Cholesky-based building blocks shared by the dense likelihoods, the
// objectives and the conditional-Gaussian formulas.

#include "univc/model.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <span>

namespace univc::dense {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Cholesky factor of a symmetric matrix C together with C^{-1} y.
class Factor {
 public:
  /// Returns nullopt when C is not numerically positive definite.
  static std::optional<Factor> compute(const MatrixXd& C, const VectorXd& y);

  Index n() const { return alpha_.size(); }
  double logdet() const { return logdet_; }
  /// y^T C^{-1} y.
  double quad() const { return quad_; }
  /// C^{-1} y.
  const VectorXd& alpha() const { return alpha_; }
  const Eigen::LLT<MatrixXd>& llt() const { return llt_; }
  /// Explicit C^{-1}, formed from the factor by triangular solves.
  MatrixXd inverse() const;

 private:
  Eigen::LLT<MatrixXd> llt_;
  VectorXd alpha_;
  double logdet_ = 0.0;
  double quad_ = 0.0;
};

/// -1/2 (n log 2pi + log|C| + y^T C^{-1} y).
double gaussian_loglik(const Factor& f);

/// Psi(h2) from an arbitrary list of (sub)kernels of equal shape.
MatrixXd psi(Index n, const VectorXd& h2, std::span<const MatrixXd> kernels);

/// sum_m s_m K_m + s_{M+1} I.
MatrixXd sigma_from_sigma2(Index n, const VectorXd& sigma2,
                           std::span<const MatrixXd> kernels);

/// Partial derivatives of log N(y; 0, tau2 Psi) with respect to h2 (held at
/// tau2), using dSigma/dh2_m = tau2 (K_m - I):
///   -1/2 { tr[Psi^{-1}(K_m - I)] - alpha^T (K_m - I) alpha / tau2 }.
VectorXd h2_partials(const Factor& psi_factor, const MatrixXd& psi_inv,
                     std::span<const MatrixXd> kernels, double tau2);

/// Partial derivative with respect to tau2: -1/2 (n / tau2 - quad / tau2^2).
double tau2_partial(const Factor& psi_factor, double tau2);

/// Log density of N(0, tau2 Psi) from the factor of Psi.
double loglik_scaled(const Factor& psi_factor, double tau2);

/// Partial derivatives of log N(y; 0, Sigma) with respect to sigma2_j, where
/// Sigma = sum s_m K_m + s_{M+1} I (the last direction is the identity).
VectorXd sigma2_partials(const Factor& sigma_factor, const MatrixXd& sigma_inv,
                         std::span<const MatrixXd> kernels);

/// Submatrix A(rows, cols).
MatrixXd submatrix(const MatrixXd& A, std::span<const Index> rows,
                   std::span<const Index> cols);
VectorXd subvector(const VectorXd& v, std::span<const Index> idx);

}  // namespace univc::dense
