#include "univc/objective.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"

#include <cmath>

namespace univc {

namespace {

// Expected information 0.5 tr(S^{-1} K_j S^{-1} K_l) with K_{M+1} = I.
MatrixXd dense_info(const MatrixXd& sigma_inv, const std::vector<MatrixXd>& kernels) {
  const Index M = static_cast<Index>(kernels.size());
  std::vector<MatrixXd> A;
  A.reserve(M + 1);
  for (const auto& K : kernels) A.push_back(sigma_inv * K);
  A.push_back(sigma_inv);
  MatrixXd I(M + 1, M + 1);
  for (Index j = 0; j <= M; ++j)
    for (Index l = j; l <= M; ++l) {
      I(j, l) = 0.5 * A[j].cwiseProduct(A[l].transpose()).sum();
      I(l, j) = I(j, l);
    }
  return I;
}

std::optional<ProfileEval> dense_profile(const VectorXd& y,
                                         const std::vector<MatrixXd>& kernels,
                                         const VectorXd& h2, bool with_grad) {
  const auto f = dense::Factor::compute(dense::psi(y.size(), h2, kernels), y);
  if (!f || !(f->quad() > 0.0)) return std::nullopt;
  ProfileEval ev;
  ev.tau2 = f->quad() / static_cast<double>(y.size());
  ev.value = dense::loglik_scaled(*f, ev.tau2);
  if (with_grad) ev.grad = dense::h2_partials(*f, f->inverse(), kernels, ev.tau2);
  return ev;
}

}  // namespace

// ---------------------------------------------------------------------------

DenseMarginal::DenseMarginal(VectorXd y, std::vector<MatrixXd> kernels)
    : y_(std::move(y)), kernels_(std::move(kernels)) {
  for (const auto& K : kernels_)
    if (K.rows() != y_.size() || K.cols() != y_.size())
      throw DimensionMismatchError("kernel size does not match response length");
}

double DenseMarginal::scale_hint() const { return y_.squaredNorm() / y_.size(); }

std::optional<ProfileEval> DenseMarginal::profile(const VectorXd& h2, bool with_grad) const {
  return dense_profile(y_, kernels_, h2, with_grad);
}

std::optional<double> DenseMarginal::at_theta(const ThetaParam& t) const {
  if (!(t.tau2 > 0.0)) return std::nullopt;
  const auto f = dense::Factor::compute(dense::psi(y_.size(), t.h2, kernels_), y_);
  if (!f) return std::nullopt;
  return dense::loglik_scaled(*f, t.tau2);
}

std::optional<SigmaEval> DenseMarginal::at_sigma2(const VectorXd& sigma2, bool with_grad) const {
  const auto f =
      dense::Factor::compute(dense::sigma_from_sigma2(y_.size(), sigma2, kernels_), y_);
  if (!f) return std::nullopt;
  SigmaEval ev;
  ev.value = dense::gaussian_loglik(*f);
  if (with_grad) {
    const MatrixXd inv = f->inverse();
    ev.grad = dense::sigma2_partials(*f, inv, kernels_);
    ev.info = dense_info(inv, kernels_);
  }
  return ev;
}

// ---------------------------------------------------------------------------

DenseConditional::DenseConditional(VectorXd y0, VectorXd y1, BlockKernels blocks)
    : y_(stack(y0, y1)), y1_(std::move(y1)), blocks_(std::move(blocks)) {
  if (y0.size() != blocks_.n0 || y1_.size() != blocks_.n1)
    throw DimensionMismatchError("response blocks do not match split");
}

double DenseConditional::scale_hint() const {
  return y_.head(blocks_.n0).squaredNorm() / blocks_.n0;
}

std::optional<ProfileEval> DenseConditional::profile(const VectorXd& h2, bool with_grad) const {
  const MatrixXd P = dense::psi(blocks_.n(), h2, blocks_.full);
  const auto full = dense::Factor::compute(P, y_);
  if (!full) return std::nullopt;
  const auto f11 = dense::Factor::compute(P.bottomRightCorner(blocks_.n1, blocks_.n1), y1_);
  if (!f11) return std::nullopt;
  const double r = full->quad() - f11->quad();
  if (!(r > 0.0)) return std::nullopt;
  ProfileEval ev;
  ev.tau2 = r / static_cast<double>(blocks_.n0);
  ev.value = dense::loglik_scaled(*full, ev.tau2) - dense::loglik_scaled(*f11, ev.tau2);
  if (with_grad) {
    ev.grad = dense::h2_partials(*full, full->inverse(), blocks_.full, ev.tau2) -
              dense::h2_partials(*f11, f11->inverse(), blocks_.k11, ev.tau2);
  }
  return ev;
}

std::optional<double> DenseConditional::at_theta(const ThetaParam& t) const {
  if (!(t.tau2 > 0.0)) return std::nullopt;
  const MatrixXd P = dense::psi(blocks_.n(), t.h2, blocks_.full);
  const auto full = dense::Factor::compute(P, y_);
  if (!full) return std::nullopt;
  const auto f11 = dense::Factor::compute(P.bottomRightCorner(blocks_.n1, blocks_.n1), y1_);
  if (!f11) return std::nullopt;
  return dense::loglik_scaled(*full, t.tau2) - dense::loglik_scaled(*f11, t.tau2);
}

std::optional<SigmaEval> DenseConditional::at_sigma2(const VectorXd& sigma2,
                                                     bool with_grad) const {
  const MatrixXd S = dense::sigma_from_sigma2(blocks_.n(), sigma2, blocks_.full);
  const auto full = dense::Factor::compute(S, y_);
  if (!full) return std::nullopt;
  const auto f11 = dense::Factor::compute(S.bottomRightCorner(blocks_.n1, blocks_.n1), y1_);
  if (!f11) return std::nullopt;
  SigmaEval ev;
  ev.value = dense::gaussian_loglik(*full) - dense::gaussian_loglik(*f11);
  if (with_grad) {
    const MatrixXd inv = full->inverse();
    const MatrixXd inv11 = f11->inverse();
    ev.grad = dense::sigma2_partials(*full, inv, blocks_.full) -
              dense::sigma2_partials(*f11, inv11, blocks_.k11);
    ev.info = dense_info(inv, blocks_.full) - dense_info(inv11, blocks_.k11);
  }
  return ev;
}

// ---------------------------------------------------------------------------

DiagLikelihood::DiagLikelihood(VectorXd y, std::vector<VectorXd> eigs)
    : y_(std::move(y)), eigs_(std::move(eigs)) {
  for (const auto& e : eigs_)
    if (e.size() != y_.size())
      throw DimensionMismatchError("eigenvalue vector length does not match response");
  y2_ = y_.array().square();
}

DiagLikelihood DiagLikelihood::subset(const VectorXd& y, const std::vector<VectorXd>& eigs,
                                      const std::vector<Index>& idx) {
  std::vector<VectorXd> sub;
  for (const auto& e : eigs) sub.push_back(e(idx));
  return DiagLikelihood(y(idx), std::move(sub));
}

double DiagLikelihood::scale_hint() const { return y2_.sum() / y_.size(); }

std::optional<ProfileEval> DiagLikelihood::profile(const VectorXd& h2, bool with_grad) const {
  const Index n = y_.size();
  VectorXd d = VectorXd::Constant(n, 1.0 - h2.sum());
  for (Index m = 0; m < M(); ++m) d.noalias() += h2(m) * eigs_[m];
  if (!(d.minCoeff() > 0.0)) return std::nullopt;
  const VectorXd inv = d.cwiseInverse();
  const double q = y2_.dot(inv);
  if (!(q > 0.0)) return std::nullopt;
  ProfileEval ev;
  const double nn = static_cast<double>(n);
  ev.tau2 = q / nn;
  ev.value = -0.5 * (nn * dense::kLog2Pi + nn * std::log(ev.tau2) +
                     d.array().log().sum() + nn);
  if (with_grad) {
    const VectorXd w = inv - y2_.cwiseProduct(inv.cwiseAbs2()) / ev.tau2;
    ev.grad.resize(M());
    const double base = w.sum();
    for (Index m = 0; m < M(); ++m) ev.grad(m) = -0.5 * (eigs_[m].dot(w) - base);
  }
  return ev;
}

std::optional<double> DiagLikelihood::at_theta(const ThetaParam& t) const {
  if (!(t.tau2 > 0.0)) return std::nullopt;
  VectorXd s(M() + 1);
  s.head(M()) = t.tau2 * t.h2;
  s(M()) = t.tau2 * (1.0 - t.h2.sum());
  const auto ev = at_sigma2(s, false);
  if (!ev) return std::nullopt;
  return ev->value;
}

std::optional<SigmaEval> DiagLikelihood::at_sigma2(const VectorXd& sigma2, bool with_grad) const {
  const Index n = y_.size();
  VectorXd d = VectorXd::Constant(n, sigma2(M()));
  for (Index m = 0; m < M(); ++m) d.noalias() += sigma2(m) * eigs_[m];
  if (!(d.minCoeff() > 0.0)) return std::nullopt;
  const VectorXd inv = d.cwiseInverse();
  SigmaEval ev;
  ev.value = -0.5 * (static_cast<double>(n) * dense::kLog2Pi + d.array().log().sum() +
                     y2_.dot(inv));
  if (with_grad) {
    const VectorXd w = inv - y2_.cwiseProduct(inv.cwiseAbs2());
    const VectorXd inv2 = inv.cwiseAbs2();
    ev.grad.resize(M() + 1);
    ev.info.resize(M() + 1, M() + 1);
    auto lam = [&](Index j) -> VectorXd {
      return j < M() ? eigs_[j] : VectorXd::Ones(n);
    };
    for (Index j = 0; j <= M(); ++j) {
      const VectorXd lj = lam(j);
      ev.grad(j) = -0.5 * lj.dot(w);
      for (Index l = j; l <= M(); ++l) {
        ev.info(j, l) = 0.5 * lj.cwiseProduct(lam(l)).dot(inv2);
        ev.info(l, j) = ev.info(j, l);
      }
    }
  }
  return ev;
}

}  // namespace univc
