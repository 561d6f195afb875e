#pragma once

// Data splits and the block / conditional-Gaussian quantities they induce.

#include "univc/model.hpp"

#include <cstdint>
#include <vector>

namespace univc {

struct Partition {
  std::vector<Index> idx0;  // Y_(0), sorted
  std::vector<Index> idx1;  // Y_(1), sorted
  std::uint64_t seed = 0;

  Index n0() const { return static_cast<Index>(idx0.size()); }
  Index n1() const { return static_cast<Index>(idx1.size()); }
  Index n() const { return n0() + n1(); }
};

/// Uniform n0-subset for Y_(0) drawn by a seeded shuffle.
Partition make_partition(Index n, Index n0, std::uint64_t seed);
/// Caller-supplied split; idx1 is the complement of idx0 in {0, ..., n-1}.
Partition partition_from_indices(Index n, std::vector<Index> idx0);
/// k seeded folds of near-equal size (sizes differ by at most one).
std::vector<std::vector<Index>> kfold_indices(Index n, Index k, std::uint64_t seed);
/// Fold j as Y_(1), the remaining folds as Y_(0).
Partition fold_partition(Index n, const std::vector<std::vector<Index>>& folds, Index j);

/// Kernels permuted to the order (idx0, idx1) plus copies of the (11) blocks.
struct BlockKernels {
  std::vector<MatrixXd> full;
  std::vector<MatrixXd> k11;
  Index n0 = 0;
  Index n1 = 0;

  Index M() const { return static_cast<Index>(full.size()); }
  Index n() const { return n0 + n1; }
  /// K^m_(ij) for i, j in {0, 1}.
  MatrixXd block(Index m, int i, int j) const;
};

BlockKernels make_blocks(const KernelSet& K, const Partition& split);
BlockKernels make_blocks(const std::vector<MatrixXd>& kernels, const Partition& split);

/// Sigma_(ij)(theta), including the tau2 scale.
MatrixXd block_sigma(const ThetaParam& t, const BlockKernels& B, int i, int j);

struct ConditionalMoments {
  VectorXd mean;
  MatrixXd cov;
};

/// Moments of Y_(0) | Y_(1) = y1. Refuses n0 > 2048.
ConditionalMoments conditional_moments(const ThetaParam& t, const VectorXd& y1,
                                       const BlockKernels& B);

/// log density of y0 given y1, computed as l_Y - l_{Y(1)}.
double cond_loglik(const ThetaParam& t, const VectorXd& y0, const VectorXd& y1,
                   const BlockKernels& B);
/// Same quantity from the explicit conditional moments.
double cond_loglik_moments(const ThetaParam& t, const VectorXd& y0, const VectorXd& y1,
                           const BlockKernels& B);

/// Maximizer in tau2 of the conditional log-likelihood at fixed h2.
double profile_tau2_cond(const VectorXd& h2, const VectorXd& y0, const VectorXd& y1,
                         const BlockKernels& B);

/// Concatenation (y0, y1) in the block order.
VectorXd stack(const VectorXd& y0, const VectorXd& y1);

}  // namespace univc
