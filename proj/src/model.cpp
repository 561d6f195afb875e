#include "univc/model.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"
#include "univc/structured.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <sstream>

namespace univc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::SingularCovariance: return "singular-covariance";
    case ErrorKind::DegenerateData: return "degenerate-data";
    case ErrorKind::InvalidSplit: return "invalid-split";
    case ErrorKind::OptimizationFailure: return "optimization-failure";
    case ErrorKind::NotJointlyDiagonalizable: return "not-jointly-diagonalizable";
    case ErrorKind::InvalidDesign: return "invalid-design";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

const char* to_string(Representation rep) {
  switch (rep) {
    case Representation::Dense: return "dense";
    case Representation::SharedEigen: return "shared_eigen";
    case Representation::Crossed: return "crossed";
  }
  return "unknown";
}

namespace {

std::string format_vector(const VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

void require_square(const MatrixXd& K, Index n, std::size_t m) {
  if (K.rows() != n || K.cols() != n) {
    throw DimensionMismatchError("kernel " + std::to_string(m + 1) + " is " +
                                 std::to_string(K.rows()) + "x" + std::to_string(K.cols()) +
                                 ", expected " + std::to_string(n) + "x" + std::to_string(n));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CrossedDesign

CrossedDesign CrossedDesign::all_random(std::vector<Index> dims) {
  CrossedDesign d;
  d.random.resize(dims.size());
  std::iota(d.random.begin(), d.random.end(), Index{0});
  d.dims = std::move(dims);
  return d;
}

Index CrossedDesign::n() const {
  Index n = 1;
  for (Index d : dims) n *= d;
  return n;
}

Index CrossedDesign::weight(Index f) const {
  Index w = 1;
  for (Index k = 0; k < n_factors(); ++k)
    if (k != f) w *= dims[k];
  return w;
}

void CrossedDesign::validate() const {
  if (dims.empty()) throw InvalidDesignError("crossed design needs at least one factor");
  for (std::size_t f = 0; f < dims.size(); ++f) {
    if (dims[f] < 2) {
      throw InvalidDesignError("crossed design factor " + std::to_string(f + 1) +
                               " has " + std::to_string(dims[f]) + " levels; need >= 2");
    }
  }
  if (random.empty()) throw InvalidDesignError("crossed design has no random factor");
  std::vector<bool> seen(dims.size(), false);
  for (Index f : random) {
    if (f < 0 || f >= n_factors())
      throw InvalidDesignError("random factor index " + std::to_string(f) + " out of range");
    if (seen[f]) throw InvalidDesignError("random factor listed twice");
    seen[f] = true;
  }
}

// ---------------------------------------------------------------------------
// EigenStructure

Index EigenStructure::n() const {
  if (crossed) return crossed->n();
  if (basis) return basis->rows();
  return eigs.empty() ? 0 : eigs.front().size();
}

VectorXd EigenStructure::rotate(const VectorXd& y) const {
  if (y.size() != n()) throw DimensionMismatchError("response length does not match basis");
  if (crossed) return crossed::rotate(*crossed, y);
  if (basis) return basis->transpose() * y;
  return y;
}

VectorXd EigenStructure::unrotate(const VectorXd& z) const {
  if (z.size() != n()) throw DimensionMismatchError("vector length does not match basis");
  if (crossed) return crossed::unrotate(*crossed, z);
  if (basis) return *basis * z;
  return z;
}

MatrixXd EigenStructure::materialize_basis() const {
  if (crossed) return crossed::materialize_basis(*crossed);
  if (basis) return *basis;
  return MatrixXd::Identity(n(), n());
}

// ---------------------------------------------------------------------------
// KernelSet

KernelSet KernelSet::dense(std::vector<MatrixXd> kernels, bool validate) {
  if (kernels.empty()) throw InvalidParameterError("dense kernel set needs at least one kernel");
  KernelSet K;
  K.n_ = kernels.front().rows();
  K.M_ = static_cast<Index>(kernels.size());
  for (std::size_t m = 0; m < kernels.size(); ++m) {
    MatrixXd& A = kernels[m];
    require_square(A, K.n_, m);
    if (!validate) continue;
    A = 0.5 * (A + A.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
    const VectorXd& ev = es.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() < -1e-8 * norm) {
      std::ostringstream os;
      os << "kernel " << m + 1 << " is not positive semi-definite (smallest eigenvalue "
         << ev.minCoeff() << ", norm " << norm << ")";
      throw InvalidParameterError(os.str());
    }
    if (ev.minCoeff() < 0.0) {
      const MatrixXd& V = es.eigenvectors();
      A = V * ev.cwiseMax(0.0).asDiagonal() * V.transpose();
      A = 0.5 * (A + A.transpose()).eval();
    }
  }
  K.dense_ = std::move(kernels);
  K.rep_ = Representation::Dense;
  return K;
}

KernelSet KernelSet::diagonal(std::vector<VectorXd> eigs) {
  EigenStructure E;
  E.eigs = std::move(eigs);
  return from_structure(std::move(E));
}

KernelSet KernelSet::shared_eigen(MatrixXd basis, std::vector<VectorXd> eigs,
                                  std::vector<MatrixXd> dense_copies) {
  EigenStructure E;
  E.basis = std::move(basis);
  E.eigs = std::move(eigs);
  return from_structure(std::move(E), std::move(dense_copies));
}

KernelSet KernelSet::crossed(CrossedDesign design) {
  design.validate();
  return from_structure(crossed_eigs(design));
}

KernelSet KernelSet::empty(Index n) {
  KernelSet K;
  K.n_ = n;
  K.M_ = 0;
  K.rep_ = Representation::Dense;
  return K;
}

KernelSet KernelSet::from_structure(EigenStructure E, std::vector<MatrixXd> dense_copies) {
  if (E.eigs.empty()) throw InvalidParameterError("structured kernel set needs eigenvalues");
  KernelSet K;
  K.n_ = E.n();
  K.M_ = E.M();
  for (std::size_t m = 0; m < E.eigs.size(); ++m) {
    if (E.eigs[m].size() != K.n_)
      throw DimensionMismatchError("eigenvalue vector " + std::to_string(m + 1) +
                                   " has wrong length");
    if ((E.eigs[m].array() < 0.0).any()) {
      const double norm = E.eigs[m].cwiseAbs().maxCoeff();
      if (E.eigs[m].minCoeff() < -1e-8 * norm)
        throw InvalidParameterError("kernel " + std::to_string(m + 1) +
                                    " has a negative eigenvalue");
      E.eigs[m] = E.eigs[m].cwiseMax(0.0);
    }
  }
  if (E.basis) {
    const MatrixXd& O = *E.basis;
    if (O.rows() != O.cols()) throw DimensionMismatchError("basis must be square");
    const double err =
        (O.transpose() * O - MatrixXd::Identity(O.cols(), O.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-10) {
      throw InvalidParameterError("basis is not orthonormal (max |O^T O - I| = " +
                                  std::to_string(err) + ")");
    }
  }
  if (!dense_copies.empty()) {
    if (static_cast<Index>(dense_copies.size()) != K.M_)
      throw DimensionMismatchError("number of dense copies does not match eigenvalue vectors");
    const MatrixXd O = E.materialize_basis();
    for (std::size_t m = 0; m < dense_copies.size(); ++m) {
      require_square(dense_copies[m], K.n_, m);
      const MatrixXd R = O * E.eigs[m].asDiagonal() * O.transpose();
      const double scale = std::max(1.0, E.eigs[m].cwiseAbs().maxCoeff());
      if ((R - dense_copies[m]).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw InvalidParameterError("dense kernel " + std::to_string(m + 1) +
                                    " does not match basis * diag(eigs) * basis^T");
    }
  }
  K.rep_ = E.crossed ? Representation::Crossed : Representation::SharedEigen;
  K.dense_ = std::move(dense_copies);
  K.structure_ = std::move(E);
  return K;
}

std::vector<MatrixXd> KernelSet::materialize_dense() const {
  if (has_dense() || !structure_) return dense_;
  const EigenStructure& E = *structure_;
  std::vector<MatrixXd> out;
  out.reserve(E.eigs.size());
  if (E.identity_basis()) {
    for (const auto& ev : E.eigs) out.emplace_back(ev.asDiagonal());
    return out;
  }
  const MatrixXd O = E.materialize_basis();
  for (const auto& ev : E.eigs) {
    MatrixXd A = O * ev.asDiagonal() * O.transpose();
    out.emplace_back(0.5 * (A + A.transpose()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameterizations

ThetaParam theta_from_sigma2(const Sigma2Param& s) {
  if (s.sigma2.size() < 1) throw InvalidParameterError("sigma2 must have length M + 1 >= 1");
  const Index M = s.M();
  for (Index m = 0; m < M; ++m) {
    if (!(s.sigma2(m) >= 0.0))
      throw InvalidParameterError("sigma2_" + std::to_string(m + 1) + " must be >= 0");
  }
  if (!(s.sigma2(M) > 0.0)) {
    throw InvalidParameterError("error variance sigma2_" + std::to_string(M + 1) +
                                " must be > 0 (sigma2 = " + format_vector(s.sigma2) + ")");
  }
  ThetaParam t;
  t.tau2 = s.sigma2.sum();
  t.h2 = s.sigma2.head(M) / t.tau2;
  return t;
}

void validate_constrained(const ThetaParam& t) {
  if (!(t.tau2 > 0.0)) throw InvalidParameterError("tau2 must be > 0");
  for (Index m = 0; m < t.M(); ++m) {
    if (!(t.h2(m) >= 0.0))
      throw InvalidParameterError("h2_" + std::to_string(m + 1) + " must be >= 0");
  }
  if (!(t.h2.sum() < 1.0))
    throw InvalidParameterError("sum(h2) must be < 1 (h2 = " + format_vector(t.h2) + ")");
}

Sigma2Param sigma2_from_theta(const ThetaParam& t) {
  if (t.constrained) validate_constrained(t);
  const Index M = t.M();
  Sigma2Param s;
  s.sigma2.resize(M + 1);
  s.sigma2.head(M) = t.tau2 * t.h2;
  s.sigma2(M) = t.tau2 * (1.0 - t.h2.sum());
  return s;
}

// ---------------------------------------------------------------------------
// Dense likelihood

namespace {

void check_theta(const ThetaParam& t, const KernelSet& K) {
  if (t.M() != K.M())
    throw DimensionMismatchError("h2 has length " + std::to_string(t.M()) + " but there are " +
                                 std::to_string(K.M()) + " kernels");
  if (t.constrained) validate_constrained(t);
  else if (!(t.tau2 > 0.0)) throw InvalidParameterError("tau2 must be > 0");
}

dense::Factor factor_or_throw(const MatrixXd& P, const VectorXd& y, const VectorXd& h2) {
  auto f = dense::Factor::compute(P, y);
  if (!f) {
    throw SingularCovarianceError("Psi(h2) is not positive definite at h2 = " +
                                  format_vector(h2));
  }
  return std::move(*f);
}

}  // namespace

MatrixXd assemble_psi(const VectorXd& h2, const KernelSet& K) {
  const auto kernels = K.materialize_dense();
  return dense::psi(K.n(), h2, kernels);
}

MatrixXd assemble_sigma(const ThetaParam& t, const KernelSet& K) {
  check_theta(t, K);
  return t.tau2 * assemble_psi(t.h2, K);
}

double loglik_dense(const ResponseVector& y, const ThetaParam& t, const KernelSet& K) {
  check_theta(t, K);
  if (y.n() != K.n()) throw DimensionMismatchError("response length does not match kernels");
  const auto f = factor_or_throw(assemble_psi(t.h2, K), y.y, t.h2);
  return dense::loglik_scaled(f, t.tau2);
}

VectorXd loglik_grad_dense(const ResponseVector& y, const ThetaParam& t, const KernelSet& K) {
  check_theta(t, K);
  if (y.n() != K.n()) throw DimensionMismatchError("response length does not match kernels");
  const auto kernels = K.materialize_dense();
  const auto f = factor_or_throw(dense::psi(K.n(), t.h2, kernels), y.y, t.h2);
  VectorXd g(t.M() + 1);
  g.head(t.M()) = dense::h2_partials(f, f.inverse(), kernels, t.tau2);
  g(t.M()) = dense::tau2_partial(f, t.tau2);
  return g;
}

double profile_tau2(const ResponseVector& y, const VectorXd& h2, const KernelSet& K) {
  if (y.n() != K.n()) throw DimensionMismatchError("response length does not match kernels");
  if (h2.size() != K.M()) throw DimensionMismatchError("h2 length does not match kernels");
  if (y.y.isZero(0.0)) throw DegenerateDataError("response is identically zero");
  const auto f = factor_or_throw(assemble_psi(h2, K), y.y, h2);
  return f.quad() / static_cast<double>(y.n());
}

// ---------------------------------------------------------------------------
// Diagonal likelihood

VectorXd diag_variances(const VectorXd& sigma2, const std::vector<VectorXd>& eigs) {
  const Index M = static_cast<Index>(eigs.size());
  if (sigma2.size() != M + 1)
    throw DimensionMismatchError("sigma2 must have length M + 1");
  const Index n = M == 0 ? 0 : eigs.front().size();
  VectorXd d = VectorXd::Constant(n, sigma2(M));
  for (Index m = 0; m < M; ++m) d.noalias() += sigma2(m) * eigs[m];
  return d;
}

namespace {

VectorXd checked_variances(const VectorXd& y, const VectorXd& sigma2,
                           const std::vector<VectorXd>& eigs) {
  VectorXd d = eigs.empty() ? VectorXd::Constant(y.size(), sigma2(0))
                            : diag_variances(sigma2, eigs);
  if (d.size() != y.size()) throw DimensionMismatchError("response length does not match eigenvalues");
  for (Index k = 0; k < d.size(); ++k) {
    if (!(d(k) > 0.0)) {
      throw SingularCovarianceError("per-coordinate variance " + std::to_string(d(k)) +
                                    " at coordinate " + std::to_string(k) +
                                    " is not positive (sigma2 = " + format_vector(sigma2) + ")");
    }
  }
  return d;
}

}  // namespace

double loglik_diag(const VectorXd& y, const VectorXd& sigma2, const std::vector<VectorXd>& eigs) {
  const VectorXd d = checked_variances(y, sigma2, eigs);
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * dense::kLog2Pi + d.array().log().sum() +
                 (y.array().square() / d.array()).sum());
}

VectorXd loglik_grad_diag(const VectorXd& y, const VectorXd& sigma2,
                          const std::vector<VectorXd>& eigs) {
  const VectorXd d = checked_variances(y, sigma2, eigs);
  const Index M = static_cast<Index>(eigs.size());
  // w_k = 1/d_k - y_k^2/d_k^2, and dl/dsigma2_m = -1/2 sum_k lambda_mk w_k.
  const Eigen::ArrayXd w = d.array().inverse() - y.array().square() / d.array().square();
  VectorXd g(M + 1);
  for (Index m = 0; m < M; ++m) g(m) = -0.5 * (eigs[m].array() * w).sum();
  g(M) = -0.5 * w.sum();
  return g;
}

}  // namespace univc
