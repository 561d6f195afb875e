#pragma once

// Structure-exploiting constructions: joint diagonalization of mutually
// annihilating kernels, the rotation that makes Sigma diagonal under a
// one-free-component null, the Kronecker eigensystem of crossed designs, and
// spectral truncation.

#include "univc/model.hpp"

#include <optional>
#include <vector>

namespace univc {

/// Shared eigenbasis of kernels with K_m K_l = 0 for m != l. Eigenvectors with
/// |lambda| > 1e-10 ||K_m||_2 are collected per kernel (descending), checked
/// for orthonormality, and the remaining directions are filled by a QR
/// factorization of the residual projector.
EigenStructure joint_diagonalize_annihilating(const std::vector<MatrixXd>& kernels);

/// Rotated response and diagonal kernel set.
struct RotatedProblem {
  ResponseVector y;
  KernelSet kernels;
};
RotatedProblem rotate_problem(const ResponseVector& y, const EigenStructure& E);

/// Eigendecomposition of the kernel `free_index`, used for nulls that pin
/// every other component to zero.
struct NullRotation {
  MatrixXd basis;             // eigenvectors of K_free, eigenvalues descending
  VectorXd eigs;              // eigenvalues of K_free
  std::vector<MatrixXd> rotated;  // O^T K_m O for every m (K_free becomes diagonal)
  Index free_index = 0;
};
NullRotation null_rotation(const KernelSet& K, Index free_index);
/// Variant reusing a known shared basis instead of a fresh eigendecomposition.
NullRotation null_rotation(const KernelSet& K, Index free_index, const EigenStructure& E);

/// Eigensystem of a crossed design with implicit Kronecker basis. Coordinates
/// are ordered: the constant direction first, then the n_f - 1 contrast
/// directions of each random factor (in the order of `random`), then all
/// remaining products in row-major order of the factor levels.
EigenStructure crossed_eigs(const CrossedDesign& d);

/// Explicit indicator matrices Z_f (n x n_f) for the random factors.
std::vector<MatrixXd> build_crossed_Z(const CrossedDesign& d);

/// Zeroes the n - q smallest eigenvalues of K.
MatrixXd approx_truncate(const MatrixXd& K, Index q);

/// Shared eigensystem when one can be read off cheaply: every kernel diagonal
/// (identity basis) or the kernels mutually annihilating.
std::optional<EigenStructure> detect_structure(const std::vector<MatrixXd>& kernels);

namespace crossed {
/// Orthonormal n x n basis whose first column is constant and whose other
/// columns are normalized Helmert contrasts.
MatrixXd factor_basis(Index n);
/// Tensor linear index (first factor slowest) of each rotated coordinate.
std::vector<Index> coordinate_order(const CrossedDesign& d);
VectorXd rotate(const CrossedDesign& d, const VectorXd& y);
VectorXd unrotate(const CrossedDesign& d, const VectorXd& z);
MatrixXd materialize_basis(const CrossedDesign& d);
}  // namespace crossed

}  // namespace univc
