#pragma once

// Gaussian variance-components model
//
//   Y ~ N(0, sigma2_1 K_1 + ... + sigma2_M K_M + sigma2_{M+1} I_n)
//
// in the (sigma2) parameterization and in the proportion parameterization
// theta = (h2_1, ..., h2_M, tau2) with tau2 the total variance, so that
//
//   Sigma(theta) = tau2 * Psi(h2),  Psi(h2) = sum_m h2_m K_m + (1 - sum_m h2_m) I.
//
// All log-likelihoods include the -(n/2) log(2 pi) constant.

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace univc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ThetaParam {
  VectorXd h2;
  double tau2 = 1.0;
  // false for the relaxed estimators that drop h2 >= 0 and sum(h2) < 1.
  bool constrained = true;

  Index M() const { return h2.size(); }
};

struct Sigma2Param {
  // Length M + 1; the last entry is the error variance.
  VectorXd sigma2;

  Index M() const { return sigma2.size() - 1; }
};

struct ResponseVector {
  VectorXd y;
  bool centered = false;

  Index n() const { return y.size(); }
};

/// Fully crossed random-effects layout. Cells are stacked with the first
/// factor varying slowest, so that
///   Z_f = 1_{n_1} (x) ... (x) I_{n_f} (x) ... (x) 1_{n_F}.
/// Only the factors listed in `random` carry a variance component; the others
/// (for example a replicate index) only shape the layout.
struct CrossedDesign {
  std::vector<Index> dims;
  std::vector<Index> random;

  static CrossedDesign all_random(std::vector<Index> dims);

  Index n() const;
  Index n_factors() const { return static_cast<Index>(dims.size()); }
  Index M() const { return static_cast<Index>(random.size()); }
  /// Product of all dims except factor f.
  Index weight(Index f) const;
  void validate() const;
};

/// Shared eigensystem O^T K_m O = Lambda_m. The basis is either the identity,
/// an explicit orthogonal matrix, or the implicit Kronecker basis of a crossed
/// design.
struct EigenStructure {
  std::optional<MatrixXd> basis;
  std::optional<CrossedDesign> crossed;
  std::vector<VectorXd> eigs;

  Index n() const;
  Index M() const { return static_cast<Index>(eigs.size()); }
  bool identity_basis() const { return !basis && !crossed; }
  /// O^T y.
  VectorXd rotate(const VectorXd& y) const;
  /// O y.
  VectorXd unrotate(const VectorXd& z) const;
  MatrixXd materialize_basis() const;
};

enum class Representation { Dense, SharedEigen, Crossed };

const char* to_string(Representation rep);

/// The M known kernels together with an optional structured representation.
class KernelSet {
 public:
  /// Dense kernels. With `validate`, each kernel is symmetrized and checked
  /// for positive semi-definiteness (eigenvalues >= -1e-8 * spectral norm,
  /// negative ones clipped to zero).
  static KernelSet dense(std::vector<MatrixXd> kernels, bool validate = true);
  /// Diagonal kernels K_m = diag(eigs_m).
  static KernelSet diagonal(std::vector<VectorXd> eigs);
  /// K_m = basis * diag(eigs_m) * basis^T. Dense copies, when supplied, are
  /// checked against the reconstruction.
  static KernelSet shared_eigen(MatrixXd basis, std::vector<VectorXd> eigs,
                                std::vector<MatrixXd> dense_copies = {});
  static KernelSet crossed(CrossedDesign design);
  /// M = 0: Sigma = tau2 I_n.
  static KernelSet empty(Index n);
  static KernelSet from_structure(EigenStructure structure,
                                  std::vector<MatrixXd> dense_copies = {});

  Index n() const { return n_; }
  Index M() const { return M_; }
  Representation representation() const { return rep_; }

  bool has_dense() const { return !dense_.empty(); }
  /// Stored dense kernels. Empty for structured sets built without copies.
  const std::vector<MatrixXd>& dense_kernels() const { return dense_; }
  /// Dense kernels, reconstructing them from the structure if not stored.
  std::vector<MatrixXd> materialize_dense() const;

  const EigenStructure* structure() const {
    return structure_ ? &*structure_ : nullptr;
  }

 private:
  Index n_ = 0;
  Index M_ = 0;
  Representation rep_ = Representation::Dense;
  std::vector<MatrixXd> dense_;
  std::optional<EigenStructure> structure_;
};

ThetaParam theta_from_sigma2(const Sigma2Param& s);
Sigma2Param sigma2_from_theta(const ThetaParam& t);

/// Throws InvalidParameterError unless h2 >= 0, sum(h2) < 1 and tau2 > 0.
void validate_constrained(const ThetaParam& t);

MatrixXd assemble_psi(const VectorXd& h2, const KernelSet& K);
MatrixXd assemble_sigma(const ThetaParam& t, const KernelSet& K);

double loglik_dense(const ResponseVector& y, const ThetaParam& t,
                    const KernelSet& K);
/// Gradient with respect to (h2_1, ..., h2_M, tau2).
VectorXd loglik_grad_dense(const ResponseVector& y, const ThetaParam& t,
                           const KernelSet& K);
/// n^{-1} y^T Psi(h2)^{-1} y, the maximizer of tau2 -> loglik.
double profile_tau2(const ResponseVector& y, const VectorXd& h2,
                    const KernelSet& K);

/// Log-likelihood when every kernel is diagonal, K_m = diag(eigs_m), in the
/// sigma2 parameterization. `sigma2` may be outside [0, inf)^M x (0, inf) as
/// long as every per-coordinate variance is positive.
double loglik_diag(const VectorXd& y, const VectorXd& sigma2,
                   const std::vector<VectorXd>& eigs);
VectorXd loglik_grad_diag(const VectorXd& y, const VectorXd& sigma2,
                          const std::vector<VectorXd>& eigs);

/// Per-coordinate variances sum_m sigma2_m lambda_mk + sigma2_{M+1}.
VectorXd diag_variances(const VectorXd& sigma2, const std::vector<VectorXd>& eigs);

}  // namespace univc
