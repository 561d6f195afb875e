#pragma once

// Log-likelihood objectives used by the fitters: the marginal likelihood of a
// response block and the conditional likelihood of Y_(0) given Y_(1), in
// dense and diagonal form. Each objective offers
//   * the tau2-profiled likelihood h2 -> l(h2, tau2~(h2)) with its gradient,
//   * the likelihood at a full theta,
//   * the likelihood in the sigma2 parameterization with gradient and
//     Fisher information.
// Evaluations return nullopt when the covariance is not positive definite.

#include "univc/model.hpp"
#include "univc/partition.hpp"

#include <optional>
#include <vector>

namespace univc {

struct ProfileEval {
  double value = 0.0;
  double tau2 = 0.0;
  VectorXd grad;  // d/dh2, empty unless requested
};

struct SigmaEval {
  double value = 0.0;
  VectorXd grad;  // length M + 1
  MatrixXd info;  // expected information, (M + 1) x (M + 1)
};

class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual Index M() const = 0;
  /// Number of observations whose density is evaluated (n0 for conditionals).
  virtual Index n_obs() const = 0;
  /// Mean square of the evaluated response block.
  virtual double scale_hint() const = 0;
  virtual std::optional<ProfileEval> profile(const VectorXd& h2, bool with_grad) const = 0;
  virtual std::optional<double> at_theta(const ThetaParam& t) const = 0;
  virtual std::optional<SigmaEval> at_sigma2(const VectorXd& sigma2, bool with_grad) const = 0;
};

class DenseMarginal final : public Likelihood {
 public:
  DenseMarginal(VectorXd y, std::vector<MatrixXd> kernels);
  Index M() const override { return static_cast<Index>(kernels_.size()); }
  Index n_obs() const override { return y_.size(); }
  double scale_hint() const override;
  std::optional<ProfileEval> profile(const VectorXd& h2, bool with_grad) const override;
  std::optional<double> at_theta(const ThetaParam& t) const override;
  std::optional<SigmaEval> at_sigma2(const VectorXd& sigma2, bool with_grad) const override;

 private:
  VectorXd y_;
  std::vector<MatrixXd> kernels_;
};

/// l_{Y(0)|Y(1)} = l_Y - l_{Y(1)} on dense blocks.
class DenseConditional final : public Likelihood {
 public:
  DenseConditional(VectorXd y0, VectorXd y1, BlockKernels blocks);
  Index M() const override { return blocks_.M(); }
  Index n_obs() const override { return blocks_.n0; }
  double scale_hint() const override;
  std::optional<ProfileEval> profile(const VectorXd& h2, bool with_grad) const override;
  std::optional<double> at_theta(const ThetaParam& t) const override;
  std::optional<SigmaEval> at_sigma2(const VectorXd& sigma2, bool with_grad) const override;

  const BlockKernels& blocks() const { return blocks_; }

 private:
  VectorXd y_;  // (y0, y1)
  VectorXd y1_;
  BlockKernels blocks_;
};

/// Diagonal kernels K_m = diag(eigs_m): O(nM) evaluations. Used both for
/// marginals and, since the blocks are then independent, for conditionals.
class DiagLikelihood final : public Likelihood {
 public:
  DiagLikelihood(VectorXd y, std::vector<VectorXd> eigs);
  /// Restriction to the coordinates idx.
  static DiagLikelihood subset(const VectorXd& y, const std::vector<VectorXd>& eigs,
                               const std::vector<Index>& idx);
  Index M() const override { return static_cast<Index>(eigs_.size()); }
  Index n_obs() const override { return y_.size(); }
  double scale_hint() const override;
  std::optional<ProfileEval> profile(const VectorXd& h2, bool with_grad) const override;
  std::optional<double> at_theta(const ThetaParam& t) const override;
  std::optional<SigmaEval> at_sigma2(const VectorXd& sigma2, bool with_grad) const override;

  const VectorXd& y() const { return y_; }
  const std::vector<VectorXd>& eigs() const { return eigs_; }

 private:
  VectorXd y_;
  VectorXd y2_;
  std::vector<VectorXd> eigs_;
};

}  // namespace univc
