#include "univc/structured.hpp"

#include "univc/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace univc {

namespace {

struct SortedEigen {
  VectorXd values;   // descending
  MatrixXd vectors;  // matching columns
};

SortedEigen sorted_eigen(const MatrixXd& K) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
  if (es.info() != Eigen::Success) throw InvalidParameterError("eigendecomposition failed");
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

}  // namespace

EigenStructure joint_diagonalize_annihilating(const std::vector<MatrixXd>& kernels) {
  if (kernels.empty()) throw InvalidParameterError("no kernels to diagonalize");
  const Index n = kernels.front().rows();
  const Index M = static_cast<Index>(kernels.size());
  for (const auto& K : kernels) {
    if (K.rows() != n || K.cols() != n) throw DimensionMismatchError("kernels differ in shape");
  }

  for (Index m = 0; m < M; ++m) {
    for (Index l = m + 1; l < M; ++l) {
      const double resid = (kernels[m] * kernels[l]).norm();
      const double scale = kernels[m].norm() * kernels[l].norm();
      if (resid > 1e-8 * scale) {
        std::ostringstream os;
        os << "kernels " << m + 1 << " and " << l + 1 << " do not annihilate: ||K_" << m + 1
           << " K_" << l + 1 << "||_F = " << resid << " (tolerance " << 1e-8 * scale << ")";
        throw NotJointlyDiagonalizableError(os.str());
      }
    }
  }

  // Eigenvectors with nonzero eigenvalues, kernel by kernel.
  std::vector<VectorXd> columns;
  std::vector<std::pair<Index, double>> owner;
  for (Index m = 0; m < M; ++m) {
    const SortedEigen se = sorted_eigen(kernels[m]);
    const double norm = se.values.cwiseAbs().maxCoeff();
    for (Index k = 0; k < n; ++k) {
      if (norm > 0.0 && std::abs(se.values(k)) > 1e-10 * norm) {
        columns.push_back(se.vectors.col(k));
        owner.emplace_back(m, se.values(k));
      }
    }
  }
  const Index q = static_cast<Index>(columns.size());
  if (q > n) {
    throw NotJointlyDiagonalizableError("more than n eigenvectors with nonzero eigenvalues");
  }
  MatrixXd V(n, q);
  for (Index j = 0; j < q; ++j) V.col(j) = columns[j];
  const double orth_err = q == 0 ? 0.0
      : (V.transpose() * V - MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff();
  if (orth_err > 1e-8) {
    throw NotJointlyDiagonalizableError("eigenvectors of distinct kernels are not orthogonal (" +
                                        std::to_string(orth_err) + ")");
  }

  MatrixXd O(n, n);
  O.leftCols(q) = V;
  if (q < n) {
    // Orthonormal basis of the complement via QR of the residual projector.
    MatrixXd P = MatrixXd::Identity(n, n);
    if (q > 0) P.noalias() -= V * V.transpose();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(P);
    const Index r = n - q;
    MatrixXd C = qr.householderQ() * MatrixXd::Identity(n, r);
    if (q > 0) C.noalias() -= V * (V.transpose() * C);
    Eigen::HouseholderQR<MatrixXd> thin(C);
    C = thin.householderQ() * MatrixXd::Identity(n, r);
    O.rightCols(r) = C;
  }

  EigenStructure E;
  E.eigs.assign(M, VectorXd::Zero(n));
  for (Index j = 0; j < q; ++j) E.eigs[owner[j].first](j) = owner[j].second;
  E.basis = std::move(O);
  return E;
}

RotatedProblem rotate_problem(const ResponseVector& y, const EigenStructure& E) {
  if (y.n() != E.n()) throw DimensionMismatchError("response length does not match basis");
  return {ResponseVector{E.rotate(y.y), y.centered}, KernelSet::diagonal(E.eigs)};
}

NullRotation null_rotation(const KernelSet& K, Index free_index) {
  if (free_index < 0 || free_index >= K.M())
    throw InvalidParameterError("free component index out of range");
  const auto kernels = K.materialize_dense();
  const SortedEigen se = sorted_eigen(kernels[free_index]);
  NullRotation R;
  R.free_index = free_index;
  R.eigs = se.values.cwiseMax(0.0);
  R.basis = se.vectors;
  R.rotated.reserve(kernels.size());
  for (Index m = 0; m < K.M(); ++m) {
    if (m == free_index) {
      R.rotated.emplace_back(R.eigs.asDiagonal());
    } else {
      MatrixXd A = R.basis.transpose() * kernels[m] * R.basis;
      R.rotated.emplace_back(0.5 * (A + A.transpose()));
    }
  }
  return R;
}

NullRotation null_rotation(const KernelSet& K, Index free_index, const EigenStructure& E) {
  if (free_index < 0 || free_index >= K.M())
    throw InvalidParameterError("free component index out of range");
  if (E.M() != K.M() || E.n() != K.n())
    throw DimensionMismatchError("eigen structure does not match kernels");
  NullRotation R;
  R.free_index = free_index;
  R.eigs = E.eigs[free_index];
  R.basis = E.materialize_basis();
  for (Index m = 0; m < K.M(); ++m) R.rotated.emplace_back(E.eigs[m].asDiagonal());
  return R;
}

// ---------------------------------------------------------------------------
// Crossed designs

namespace crossed {

MatrixXd factor_basis(Index n) {
  MatrixXd B = MatrixXd::Zero(n, n);
  B.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  for (Index j = 1; j < n; ++j) {
    const double s = 1.0 / std::sqrt(static_cast<double>(j) * static_cast<double>(j + 1));
    B.col(j).head(j).setConstant(s);
    B(j, j) = -static_cast<double>(j) * s;
  }
  return B;
}

namespace {

std::vector<Index> strides(const CrossedDesign& d) {
  std::vector<Index> s(d.dims.size());
  Index acc = 1;
  for (Index f = d.n_factors() - 1; f >= 0; --f) {
    s[f] = acc;
    acc *= d.dims[f];
  }
  return s;
}

std::vector<Index> multi_index(const CrossedDesign& d, const std::vector<Index>& st, Index lin) {
  std::vector<Index> a(d.dims.size());
  for (Index f = 0; f < d.n_factors(); ++f) {
    a[f] = lin / st[f];
    lin %= st[f];
  }
  return a;
}

// Applies B_f^T (transpose = true) or B_f along every mode of the tensor.
void mode_products(const CrossedDesign& d, VectorXd& T, bool transpose) {
  const auto st = strides(d);
  const Index n = d.n();
  for (Index f = 0; f < d.n_factors(); ++f) {
    const Index nf = d.dims[f];
    const Index right = st[f];
    const Index left = n / (nf * right);
    const MatrixXd B = factor_basis(nf);
    for (Index l = 0; l < left; ++l) {
      Eigen::Map<MatrixXd> X(T.data() + l * nf * right, right, nf);
      if (transpose) X = (X * B).eval();
      else X = (X * B.transpose()).eval();
    }
  }
}

}  // namespace

std::vector<Index> coordinate_order(const CrossedDesign& d) {
  const auto st = strides(d);
  const Index n = d.n();
  std::vector<Index> order;
  order.reserve(n);
  std::vector<bool> used(n, false);
  auto push = [&](Index lin) {
    order.push_back(lin);
    used[lin] = true;
  };
  push(0);
  for (Index f : d.random)
    for (Index a = 1; a < d.dims[f]; ++a) push(a * st[f]);
  for (Index lin = 0; lin < n; ++lin)
    if (!used[lin]) push(lin);
  return order;
}

VectorXd rotate(const CrossedDesign& d, const VectorXd& y) {
  if (y.size() != d.n()) throw DimensionMismatchError("response length does not match design");
  VectorXd T = y;
  mode_products(d, T, true);
  const auto order = coordinate_order(d);
  VectorXd z(y.size());
  for (Index k = 0; k < z.size(); ++k) z(k) = T(order[k]);
  return z;
}

VectorXd unrotate(const CrossedDesign& d, const VectorXd& z) {
  if (z.size() != d.n()) throw DimensionMismatchError("vector length does not match design");
  const auto order = coordinate_order(d);
  VectorXd T(z.size());
  for (Index k = 0; k < z.size(); ++k) T(order[k]) = z(k);
  mode_products(d, T, false);
  return T;
}

MatrixXd materialize_basis(const CrossedDesign& d) {
  const Index n = d.n();
  const auto st = strides(d);
  const auto order = coordinate_order(d);
  std::vector<MatrixXd> B;
  for (Index nf : d.dims) B.push_back(factor_basis(nf));
  MatrixXd O(n, n);
  for (Index k = 0; k < n; ++k) {
    const auto a = multi_index(d, st, order[k]);
    VectorXd col = VectorXd::Ones(1);
    for (Index f = 0; f < d.n_factors(); ++f) {
      const VectorXd& b = B[f].col(a[f]);
      VectorXd next(col.size() * b.size());
      for (Index i = 0; i < col.size(); ++i) next.segment(i * b.size(), b.size()) = col(i) * b;
      col = std::move(next);
    }
    O.col(k) = col;
  }
  return O;
}

}  // namespace crossed

EigenStructure crossed_eigs(const CrossedDesign& d) {
  d.validate();
  const Index n = d.n();
  const auto st = crossed::strides(d);
  const auto order = crossed::coordinate_order(d);
  EigenStructure E;
  E.crossed = d;
  for (Index f : d.random) {
    VectorXd ev = VectorXd::Zero(n);
    const double w = static_cast<double>(d.weight(f));
    for (Index k = 0; k < n; ++k) {
      const auto a = crossed::multi_index(d, st, order[k]);
      bool main_effect = true;
      for (Index j = 0; j < d.n_factors(); ++j)
        if (j != f && a[j] != 0) main_effect = false;
      if (main_effect) ev(k) = w;
    }
    E.eigs.push_back(std::move(ev));
  }
  return E;
}

std::vector<MatrixXd> build_crossed_Z(const CrossedDesign& d) {
  d.validate();
  const Index n = d.n();
  if (n > 10000) {
    throw InvalidParameterError("explicit Z matrices are limited to n <= 10000 (n = " +
                                std::to_string(n) + ")");
  }
  const auto st = crossed::strides(d);
  std::vector<MatrixXd> Z;
  for (Index f : d.random) {
    MatrixXd Zf = MatrixXd::Zero(n, d.dims[f]);
    for (Index i = 0; i < n; ++i) Zf(i, (i / st[f]) % d.dims[f]) = 1.0;
    Z.push_back(std::move(Zf));
  }
  return Z;
}

MatrixXd approx_truncate(const MatrixXd& K, Index q) {
  const Index n = K.rows();
  if (q < 0 || q > n) throw InvalidParameterError("truncation rank must lie in [0, n]");
  if (q == n) return K;
  if (q == 0) return MatrixXd::Zero(n, n);
  const SortedEigen se = sorted_eigen(K);
  const MatrixXd Vq = se.vectors.leftCols(q);
  MatrixXd A = Vq * se.values.head(q).asDiagonal() * Vq.transpose();
  return 0.5 * (A + A.transpose());
}

std::optional<EigenStructure> detect_structure(const std::vector<MatrixXd>& kernels) {
  if (kernels.empty()) return std::nullopt;
  bool all_diagonal = true;
  for (const auto& K : kernels) {
    const double scale = std::max(K.cwiseAbs().maxCoeff(), 1e-300);
    MatrixXd off = K;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 1e-10 * scale) {
      all_diagonal = false;
      break;
    }
  }
  if (all_diagonal) {
    EigenStructure E;
    for (const auto& K : kernels) E.eigs.push_back(K.diagonal().cwiseMax(0.0));
    return E;
  }
  try {
    return joint_diagonalize_annihilating(kernels);
  } catch (const NotJointlyDiagonalizableError&) {
    return std::nullopt;
  }
}

}  // namespace univc
