#include "univc/dense.hpp"

#include <cmath>

namespace univc::dense {

std::optional<Factor> Factor::compute(const MatrixXd& C, const VectorXd& y) {
  Factor f;
  f.llt_.compute(C);
  if (f.llt_.info() != Eigen::Success) return std::nullopt;
  const auto& L = f.llt_.matrixLLT();
  double logdet = 0.0;
  for (Index i = 0; i < L.rows(); ++i) {
    const double d = L(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    logdet += std::log(d);
  }
  f.logdet_ = 2.0 * logdet;
  f.alpha_ = f.llt_.solve(y);
  f.quad_ = y.dot(f.alpha_);
  if (!std::isfinite(f.quad_)) return std::nullopt;
  return f;
}

MatrixXd Factor::inverse() const {
  MatrixXd inv = MatrixXd::Identity(n(), n());
  llt_.solveInPlace(inv);
  return inv;
}

double gaussian_loglik(const Factor& f) {
  return -0.5 * (static_cast<double>(f.n()) * kLog2Pi + f.logdet() + f.quad());
}

MatrixXd psi(Index n, const VectorXd& h2, std::span<const MatrixXd> kernels) {
  MatrixXd P = MatrixXd::Identity(n, n) * (1.0 - h2.sum());
  for (std::size_t m = 0; m < kernels.size(); ++m) P.noalias() += h2(m) * kernels[m];
  return P;
}

MatrixXd sigma_from_sigma2(Index n, const VectorXd& sigma2,
                           std::span<const MatrixXd> kernels) {
  const Index M = static_cast<Index>(kernels.size());
  MatrixXd S = MatrixXd::Identity(n, n) * sigma2(M);
  for (Index m = 0; m < M; ++m) S.noalias() += sigma2(m) * kernels[m];
  return S;
}

VectorXd h2_partials(const Factor& psi_factor, const MatrixXd& psi_inv,
                     std::span<const MatrixXd> kernels, double tau2) {
  const VectorXd& a = psi_factor.alpha();
  const double tr_inv = psi_inv.trace();
  const double aa = a.squaredNorm();
  VectorXd g(kernels.size());
  for (std::size_t m = 0; m < kernels.size(); ++m) {
    const double tr_k = psi_inv.cwiseProduct(kernels[m]).sum();
    const double aka = a.dot(kernels[m] * a);
    g(m) = -0.5 * ((tr_k - tr_inv) - (aka - aa) / tau2);
  }
  return g;
}

double tau2_partial(const Factor& psi_factor, double tau2) {
  return -0.5 * (static_cast<double>(psi_factor.n()) / tau2 -
                 psi_factor.quad() / (tau2 * tau2));
}

double loglik_scaled(const Factor& psi_factor, double tau2) {
  const double n = static_cast<double>(psi_factor.n());
  return -0.5 * (n * kLog2Pi + n * std::log(tau2) + psi_factor.logdet() +
                 psi_factor.quad() / tau2);
}

VectorXd sigma2_partials(const Factor& sigma_factor, const MatrixXd& sigma_inv,
                         std::span<const MatrixXd> kernels) {
  const Index M = static_cast<Index>(kernels.size());
  const VectorXd& a = sigma_factor.alpha();
  VectorXd g(M + 1);
  for (Index m = 0; m < M; ++m) {
    g(m) = -0.5 * (sigma_inv.cwiseProduct(kernels[m]).sum() - a.dot(kernels[m] * a));
  }
  g(M) = -0.5 * (sigma_inv.trace() - a.squaredNorm());
  return g;
}

MatrixXd submatrix(const MatrixXd& A, std::span<const Index> rows,
                   std::span<const Index> cols) {
  MatrixXd B(rows.size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) B(i, j) = A(rows[i], cols[j]);
  return B;
}

VectorXd subvector(const VectorXd& v, std::span<const Index> idx) {
  VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

}  // namespace univc::dense
