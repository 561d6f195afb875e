#include "univc/partition.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"
#include "univc/rng.hpp"

#include <algorithm>
#include <string>

namespace univc {

namespace {

constexpr std::uint64_t kSplitTag = 0x5370;
constexpr Index kMaxSchurRows = 2048;

std::vector<Index> order_of(const Partition& p) {
  std::vector<Index> order = p.idx0;
  order.insert(order.end(), p.idx1.begin(), p.idx1.end());
  return order;
}

dense::Factor factor_or_throw(const MatrixXd& C, const VectorXd& y, const char* what) {
  auto f = dense::Factor::compute(C, y);
  if (!f) throw SingularCovarianceError(std::string(what) + " is not positive definite");
  return std::move(*f);
}

MatrixXd psi_full(const VectorXd& h2, const BlockKernels& B) {
  return dense::psi(B.n(), h2, B.full);
}

}  // namespace

Partition make_partition(Index n, Index n0, std::uint64_t seed) {
  if (n0 < 1 || n0 > n - 1) {
    throw InvalidSplitError("split size n0 = " + std::to_string(n0) + " outside [1, " +
                            std::to_string(n - 1) + "]");
  }
  auto eng = rng::stream(seed, 0, kSplitTag);
  const auto perm = rng::permutation(eng, n);
  Partition p;
  p.seed = seed;
  p.idx0.assign(perm.begin(), perm.begin() + n0);
  p.idx1.assign(perm.begin() + n0, perm.end());
  std::sort(p.idx0.begin(), p.idx0.end());
  std::sort(p.idx1.begin(), p.idx1.end());
  return p;
}

Partition partition_from_indices(Index n, std::vector<Index> idx0) {
  std::sort(idx0.begin(), idx0.end());
  if (std::adjacent_find(idx0.begin(), idx0.end()) != idx0.end())
    throw InvalidSplitError("duplicate indices in Y_(0)");
  if (idx0.empty() || static_cast<Index>(idx0.size()) >= n)
    throw InvalidSplitError("both halves of a split must be nonempty");
  if (idx0.front() < 0 || idx0.back() >= n) throw InvalidSplitError("split index out of range");
  Partition p;
  std::vector<bool> in0(n, false);
  for (Index i : idx0) in0[i] = true;
  for (Index i = 0; i < n; ++i)
    if (!in0[i]) p.idx1.push_back(i);
  p.idx0 = std::move(idx0);
  return p;
}

std::vector<std::vector<Index>> kfold_indices(Index n, Index k, std::uint64_t seed) {
  if (k < 1 || k > n) throw InvalidSplitError("fold count must lie in [1, n]");
  auto eng = rng::stream(seed, 0, kSplitTag + 1);
  const auto perm = rng::permutation(eng, n);
  std::vector<std::vector<Index>> folds(k);
  Index pos = 0;
  for (Index j = 0; j < k; ++j) {
    const Index size = n / k + (j < n % k ? 1 : 0);
    folds[j].assign(perm.begin() + pos, perm.begin() + pos + size);
    std::sort(folds[j].begin(), folds[j].end());
    pos += size;
  }
  return folds;
}

Partition fold_partition(Index n, const std::vector<std::vector<Index>>& folds, Index j) {
  std::vector<bool> in1(n, false);
  for (Index i : folds.at(j)) in1[i] = true;
  std::vector<Index> idx0;
  for (Index i = 0; i < n; ++i)
    if (!in1[i]) idx0.push_back(i);
  return partition_from_indices(n, std::move(idx0));
}

MatrixXd BlockKernels::block(Index m, int i, int j) const {
  const Index r0 = i == 0 ? 0 : n0, nr = i == 0 ? n0 : n1;
  const Index c0 = j == 0 ? 0 : n0, nc = j == 0 ? n0 : n1;
  return full.at(m).block(r0, c0, nr, nc);
}

BlockKernels make_blocks(const std::vector<MatrixXd>& kernels, const Partition& split) {
  const auto order = order_of(split);
  BlockKernels B;
  B.n0 = split.n0();
  B.n1 = split.n1();
  for (const auto& K : kernels) {
    if (K.rows() != split.n()) throw DimensionMismatchError("kernel size does not match split");
    B.full.push_back(dense::submatrix(K, order, order));
    B.k11.push_back(B.full.back().bottomRightCorner(B.n1, B.n1));
  }
  return B;
}

BlockKernels make_blocks(const KernelSet& K, const Partition& split) {
  if (K.n() != split.n()) throw DimensionMismatchError("kernel size does not match split");
  if (K.has_dense()) return make_blocks(K.dense_kernels(), split);
  return make_blocks(K.materialize_dense(), split);
}

MatrixXd block_sigma(const ThetaParam& t, const BlockKernels& B, int i, int j) {
  const Index nr = i == 0 ? B.n0 : B.n1;
  const Index nc = j == 0 ? B.n0 : B.n1;
  MatrixXd S = MatrixXd::Zero(nr, nc);
  for (Index m = 0; m < B.M(); ++m) S.noalias() += t.h2(m) * B.block(m, i, j);
  if (i == j) S.diagonal().array() += 1.0 - t.h2.sum();
  return t.tau2 * S;
}

ConditionalMoments conditional_moments(const ThetaParam& t, const VectorXd& y1,
                                       const BlockKernels& B) {
  if (B.n0 > kMaxSchurRows) {
    throw InvalidParameterError("conditional covariance with n0 = " + std::to_string(B.n0) +
                                " exceeds the dense limit; use a structured path");
  }
  if (y1.size() != B.n1) throw DimensionMismatchError("y1 length does not match split");
  const MatrixXd S11 = block_sigma(t, B, 1, 1);
  const MatrixXd S01 = block_sigma(t, B, 0, 1);
  const auto f = factor_or_throw(S11, y1, "Sigma_(11)");
  ConditionalMoments cm;
  cm.mean = S01 * f.alpha();
  const MatrixXd W = f.llt().solve(S01.transpose());
  cm.cov = block_sigma(t, B, 0, 0) - S01 * W;
  cm.cov = 0.5 * (cm.cov + cm.cov.transpose()).eval();
  return cm;
}

VectorXd stack(const VectorXd& y0, const VectorXd& y1) {
  VectorXd y(y0.size() + y1.size());
  y << y0, y1;
  return y;
}

double cond_loglik(const ThetaParam& t, const VectorXd& y0, const VectorXd& y1,
                   const BlockKernels& B) {
  if (y0.size() != B.n0 || y1.size() != B.n1)
    throw DimensionMismatchError("response blocks do not match split");
  const MatrixXd P = psi_full(t.h2, B);
  const auto full = factor_or_throw(P, stack(y0, y1), "Psi");
  const auto f11 = factor_or_throw(P.bottomRightCorner(B.n1, B.n1), y1, "Psi_(11)");
  return dense::loglik_scaled(full, t.tau2) - dense::loglik_scaled(f11, t.tau2);
}

double cond_loglik_moments(const ThetaParam& t, const VectorXd& y0, const VectorXd& y1,
                           const BlockKernels& B) {
  const auto cm = conditional_moments(t, y1, B);
  const auto f = factor_or_throw(cm.cov, y0 - cm.mean, "Sigma_(0|1)");
  return dense::gaussian_loglik(f);
}

double profile_tau2_cond(const VectorXd& h2, const VectorXd& y0, const VectorXd& y1,
                         const BlockKernels& B) {
  if (y0.size() != B.n0 || y1.size() != B.n1)
    throw DimensionMismatchError("response blocks do not match split");
  const MatrixXd P = psi_full(h2, B);
  const auto full = factor_or_throw(P, stack(y0, y1), "Psi");
  const auto f11 = factor_or_throw(P.bottomRightCorner(B.n1, B.n1), y1, "Psi_(11)");
  const double r = full.quad() - f11.quad();
  if (!(r > 0.0)) throw DegenerateDataError("conditional residual is zero");
  return r / static_cast<double>(B.n0);
}

}  // namespace univc
