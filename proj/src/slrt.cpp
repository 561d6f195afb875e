#include "univc/slrt.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"
#include "univc/rng.hpp"
#include "univc/structured.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace univc {

namespace {

constexpr std::uint64_t kUTag = 0x55;
constexpr std::uint64_t kWidthTag = 0x57;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<MatrixXd> diag_matrices(const std::vector<VectorXd>& eigs) {
  std::vector<MatrixXd> out;
  for (const auto& e : eigs) out.emplace_back(e.asDiagonal());
  return out;
}

std::vector<MatrixXd> sub_kernels(const std::vector<MatrixXd>& kernels,
                                  const std::vector<Index>& idx) {
  std::vector<MatrixXd> out;
  for (const auto& K : kernels) out.push_back(dense::submatrix(K, idx, idx));
  return out;
}

FitResult from_null_1d(const Null1dResult& r, Index M, Index free) {
  FitResult f;
  f.theta.h2 = VectorXd::Zero(M);
  f.theta.h2(free) = r.h2;
  f.theta.tau2 = r.tau2;
  f.sigma2 = VectorXd::Zero(M + 1);
  f.sigma2(free) = r.tau2 * r.h2;
  f.sigma2(M) = r.tau2 * (1.0 - r.h2);
  f.loglik = r.loglik;
  f.converged = true;
  f.n_starts = 1;
  return f;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::Auto: return "auto";
    case Method::Naive: return "naive";
    case Method::NullDiag: return "nulldiag";
    case Method::FullDiag: return "fulldiag";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "auto") return Method::Auto;
  if (s == "naive") return Method::Naive;
  if (s == "nulldiag") return Method::NullDiag;
  if (s == "fulldiag") return Method::FullDiag;
  throw UsageError("unknown method '" + s + "' (expected naive, nulldiag or fulldiag)");
}

// ---------------------------------------------------------------------------

struct SplitEngine::Impl {
  Partition split;
  SlrtOptions opts;
  Method method = Method::Naive;
  Index M = 0;
  VectorXd z0;
  std::optional<DenseConditional> cond_dense;
  std::optional<DiagLikelihood> cond_diag;
  std::optional<Index> free_index;
  VectorXd lambda0;
  FitResult theta1;

  const Likelihood& cond() const {
    if (cond_dense) return *cond_dense;
    return *cond_diag;
  }
};

SplitEngine::SplitEngine(const ResponseVector& y, const KernelSet& K, Partition split,
                         SlrtOptions opts, const NullSpec& hint)
    : impl_(std::make_unique<Impl>()) {
  Impl& s = *impl_;
  if (y.n() != K.n()) throw DimensionMismatchError("response length does not match kernels");
  if (split.n() != K.n()) throw InvalidSplitError("partition does not cover the response");
  s.M = K.M();
  s.split = std::move(split);
  s.opts = std::move(opts);
  s.method = s.opts.method;
  const EigenStructure* E = K.structure();
  std::optional<EigenStructure> detected;
  if (s.method == Method::Auto) s.method = E ? Method::FullDiag : Method::Naive;
  if (s.method == Method::FullDiag && !E) {
    detected = detect_structure(K.dense_kernels());
    if (!detected)
      throw NotJointlyDiagonalizableError("the fulldiag method needs a shared eigenbasis");
    E = &*detected;
  }

  const auto& idx0 = s.split.idx0;
  const auto& idx1 = s.split.idx1;
  VectorXd z = E ? E->rotate(y.y) : y.y;
  std::optional<DenseMarginal> alt_dense;
  std::optional<DiagLikelihood> alt_diag;

  if (s.method == Method::FullDiag) {
    alt_diag.emplace(DiagLikelihood::subset(z, E->eigs, idx1));
    s.cond_diag.emplace(DiagLikelihood::subset(z, E->eigs, idx0));
  } else {
    std::vector<MatrixXd> work;
    if (s.method == Method::NullDiag) {
      s.free_index = hint.diagonal_free(s.M);
      if (!s.free_index) {
        throw InvalidParameterError(
            "the nulldiag method needs a null pinning all but one proportion to zero");
      }
      VectorXd lambda;
      if (E) {
        work = diag_matrices(E->eigs);
        lambda = E->eigs[*s.free_index];
      } else {
        NullRotation R = null_rotation(K, *s.free_index);
        z = R.basis.transpose() * y.y;
        work = std::move(R.rotated);
        lambda = R.eigs;
      }
      s.lambda0 = lambda(idx0);
    } else {
      work = E ? diag_matrices(E->eigs) : (K.has_dense() ? K.dense_kernels() : K.materialize_dense());
    }
    alt_dense.emplace(z(idx1), sub_kernels(work, idx1));
    s.cond_dense.emplace(z(idx0), z(idx1), make_blocks(work, s.split));
  }
  s.z0 = z(idx0);

  const Likelihood& alt = alt_dense ? static_cast<const Likelihood&>(*alt_dense) : *alt_diag;
  s.theta1 = s.opts.relaxed_alt ? fit_unconstrained(alt, NullSpec::none(), s.opts.fit)
                                : maximize_profile(alt, NullSpec::none(), s.opts.fit);
}

SplitEngine::~SplitEngine() = default;
SplitEngine::SplitEngine(SplitEngine&&) noexcept = default;
SplitEngine& SplitEngine::operator=(SplitEngine&&) noexcept = default;

const FitResult& SplitEngine::theta1() const { return impl_->theta1; }
const Partition& SplitEngine::split() const { return impl_->split; }
Method SplitEngine::method() const { return impl_->method; }
Index SplitEngine::M() const { return impl_->M; }

SplitResult SplitEngine::evaluate(const NullSpec& null) const {
  const Impl& s = *impl_;
  null.validate(s.M);
  const Likelihood& L0 = s.cond();
  SplitResult out;
  out.theta1 = s.theta1;

  FitOptions fo = s.opts.fit;
  if (null.scale == NullSpec::Scale::H2) {
    fo.extra_starts.push_back(s.theta1.theta.h2);
    const bool use_1d = s.method == Method::NullDiag && null.diagonal_free(s.M) == s.free_index;
    if (use_1d) {
      out.theta0 = from_null_1d(fit_null_1d(s.z0, s.lambda0), s.M, *s.free_index);
      if (s.opts.relaxed_null) {
        std::vector<VectorXd> eigs(s.M, VectorXd::Zero(s.z0.size()));
        eigs[*s.free_index] = s.lambda0;
        DiagLikelihood L1(s.z0, std::move(eigs));
        fo.extra_starts.push_back(out.theta0.theta.h2);
        out.theta0 = fit_unconstrained(L1, null, fo);
      }
    } else {
      out.theta0 = maximize_profile(L0, null, fo);
      if (s.opts.relaxed_null) {
        fo.extra_starts.push_back(out.theta0.theta.h2);
        out.theta0 = fit_unconstrained(L0, null, fo);
      }
    }
  } else {
    if (s.opts.relaxed_null)
      throw InvalidParameterError("relaxed null fits support h2-scale nulls only");
    fo.extra_starts.clear();
    out.theta0 = maximize_sigma2(L0, null, fo, {s.theta1.sigma2});
  }
  out.cond_null = out.theta0.loglik;

  if (s.opts.alt_equals_null) {
    out.theta1 = out.theta0;
    out.cond_alt = out.cond_null;
    out.log_stat = 0.0;
    return out;
  }
  const auto a = L0.at_theta(s.theta1.theta);
  out.cond_alt = a ? *a : kNegInf;
  out.log_stat = a ? *a - out.cond_null : kNegInf;
  return out;
}

SplitResult split_lrt(const ResponseVector& y, const KernelSet& K, const NullSpec& null,
                      const Partition& split, const SlrtOptions& opts) {
  return SplitEngine(y, K, split, opts, null).evaluate(null);
}

// ---------------------------------------------------------------------------

KFoldEngine::KFoldEngine(const ResponseVector& y, const KernelSet& K, Index k,
                         std::uint64_t seed_split, SlrtOptions opts, const NullSpec& hint)
    : seed_(seed_split) {
  const Index n = K.n();
  if (k < 1) throw InvalidSplitError("k must be at least 1");
  if (k == 1) {
    Partition p = make_partition(n, n / 2, seed_split);
    engines_.emplace_back(y, K, std::move(p), opts, hint);
    return;
  }
  if (n < 2 * k)
    throw InvalidSplitError("k-fold splitting needs n >= 2k (n = " + std::to_string(n) + ")");
  const auto folds = kfold_indices(n, k, seed_split);
  for (Index j = 0; j < k; ++j) {
    try {
      engines_.emplace_back(y, K, fold_partition(n, folds, j), opts, hint);
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(j + 1) + ": " + e.what());
    }
  }
}

std::vector<SplitResult> KFoldEngine::evaluate(const NullSpec& null, double* log_mean) const {
  std::vector<SplitResult> out;
  std::vector<double> logs;
  for (std::size_t j = 0; j < engines_.size(); ++j) {
    try {
      out.push_back(engines_[j].evaluate(null));
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(j + 1) + ": " + e.what());
    }
    logs.push_back(out.back().log_stat);
  }
  if (log_mean) *log_mean = log_mean_exp(logs);
  return out;
}

double KFoldEngine::log_stat(const NullSpec& null) const {
  double lm = 0.0;
  evaluate(null, &lm);
  return lm;
}

double log_mean_exp(const std::vector<double>& logs) {
  if (logs.empty()) return kNegInf;
  const double mx = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - mx);
  return mx + std::log(acc / static_cast<double>(logs.size()));
}

double draw_u(std::uint64_t seed_u) {
  auto eng = rng::stream(seed_u, 0, kUTag);
  return rng::uniform_open0(eng);
}

bool rejects(double log_stat, double alpha, double u) {
  return log_stat > std::log(u) - std::log(alpha);
}

Decision randomized_decision(double log_stat, double alpha, std::uint64_t seed_u) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameterError("alpha must lie in (0, 1)");
  Decision d;
  d.u = draw_u(seed_u);
  d.reject = rejects(log_stat, alpha, d.u);
  return d;
}

double p_value(double log_stat, double u) {
  return std::exp(std::min(0.0, std::log(u) - log_stat));
}

SlrtResult kfold_slrt(const ResponseVector& y, const KernelSet& K, const NullSpec& null, Index k,
                      std::uint64_t seed_split, std::uint64_t seed_u, double alpha,
                      const SlrtOptions& opts, bool randomized) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameterError("alpha must lie in (0, 1)");
  KFoldEngine engine(y, K, k, seed_split, opts, null);
  SlrtResult r;
  const auto folds = engine.evaluate(null, &r.log_stat);
  for (const auto& f : folds) {
    r.fold_log_stats.push_back(f.log_stat);
    r.theta1.push_back(f.theta1);
    r.theta0.push_back(f.theta0);
  }
  r.stat = std::exp(r.log_stat);
  r.alpha = alpha;
  r.randomized = randomized;
  r.u = randomized ? draw_u(seed_u) : 1.0;
  r.reject = rejects(r.log_stat, alpha, r.u);
  r.p_value = p_value(r.log_stat, r.u);
  r.seed_split = seed_split;
  r.seed_u = seed_u;
  r.k = k;
  r.null = null;
  r.method = engine.fold(0).method();
  return r;
}

// ---------------------------------------------------------------------------

const char* to_string(CiTarget t) {
  switch (t) {
    case CiTarget::H2: return "h2";
    case CiTarget::Sigma2: return "sigma2";
    case CiTarget::SD: return "sd";
  }
  return "unknown";
}

CiTarget ci_target_from_string(const std::string& s) {
  if (s == "h2") return CiTarget::H2;
  if (s == "sigma2") return CiTarget::Sigma2;
  if (s == "sd" || s == "sigma") return CiTarget::SD;
  throw UsageError("unknown interval target '" + s + "' (expected h2, sigma2 or sd)");
}

NullSpec ci_null(Index component, CiTarget target, double value) {
  switch (target) {
    case CiTarget::H2: return NullSpec::h2({{component, value}});
    case CiTarget::Sigma2: return NullSpec::sigma2({{component, value}});
    case CiTarget::SD: return NullSpec::sigma2({{component, value * value}});
  }
  return {};
}

std::vector<double> CiGrid::values() const {
  if (steps < 1) throw InvalidParameterError("grid needs at least one point");
  if (!(hi >= lo)) throw InvalidParameterError("grid upper end below lower end");
  std::vector<double> v(steps);
  for (int i = 0; i < steps; ++i)
    v[i] = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (steps - 1);
  return v;
}

CiResult confidence_interval(const KFoldEngine& engine, Index component, CiTarget target,
                             const CiGrid& grid, double alpha, double u, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameterError("alpha must lie in (0, 1)");
  if (component < 0 || component >= engine.M())
    throw InvalidParameterError("interval component out of range");
  CiResult r;
  r.alpha = alpha;
  r.u = u;
  r.component = component;
  r.target = target;
  r.log_threshold = std::log(u) - std::log(alpha);
  auto stat_at = [&](double x) { return engine.log_stat(ci_null(component, target, x)); };

  r.curve.x = grid.values();
  for (double x : r.curve.x) r.curve.log_stat.push_back(stat_at(x));
  const auto& f = r.curve.log_stat;
  std::vector<std::size_t> acc;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] <= r.log_threshold) acc.push_back(i);
  if (acc.empty()) {
    r.empty = true;
    r.lower = r.upper = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const std::size_t imin = acc.front(), imax = acc.back();
  r.connected = acc.size() == imax - imin + 1;

  // Bisection between a rejected point `out` and an accepted point `in`.
  auto refine = [&](double out, double in) {
    while (std::abs(in - out) > tol) {
      const double mid = 0.5 * (in + out);
      (stat_at(mid) <= r.log_threshold ? in : out) = mid;
    }
    return in;
  };
  r.lower = imin == 0 ? r.curve.x.front() : refine(r.curve.x[imin - 1], r.curve.x[imin]);
  r.upper = imax + 1 == f.size() ? r.curve.x.back() : refine(r.curve.x[imax + 1], r.curve.x[imax]);
  return r;
}

CiResult confidence_interval(const ResponseVector& y, const KernelSet& K, Index component,
                             CiTarget target, const CiGrid& grid, double alpha, Index k,
                             std::uint64_t seed_split, std::uint64_t seed_u,
                             const SlrtOptions& opts, bool randomized) {
  KFoldEngine engine(y, K, k, seed_split, opts);
  return confidence_interval(engine, component, target, grid, alpha,
                             randomized ? draw_u(seed_u) : 1.0);
}

std::optional<std::pair<double, double>> acceptance_hull(const CiCurve& curve,
                                                         double log_threshold) {
  const auto& x = curve.x;
  const auto& f = curve.log_stat;
  if (x.empty()) return std::nullopt;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  auto take = [&](double a, double b) {
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  };
  if (x.size() == 1) {
    if (f[0] <= log_threshold) take(x[0], x[0]);
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const bool a_in = f[i] <= log_threshold, b_in = f[i + 1] <= log_threshold;
    if (a_in && b_in) {
      take(x[i], x[i + 1]);
    } else if (a_in || b_in) {
      double cross = a_in ? x[i] : x[i + 1];
      if (std::isfinite(f[i]) && std::isfinite(f[i + 1])) {
        const double w = (log_threshold - f[i]) / (f[i + 1] - f[i]);
        cross = x[i] + w * (x[i + 1] - x[i]);
      }
      a_in ? take(x[i], cross) : take(cross, x[i + 1]);
    }
  }
  if (lo > hi) return std::nullopt;
  return std::pair{lo, hi};
}

std::vector<double> ci_width_distribution(const CiCurve& curve, double alpha, int n_draws,
                                          std::uint64_t seed) {
  auto eng = rng::stream(seed, 0, kWidthTag);
  std::vector<double> widths;
  widths.reserve(n_draws);
  for (int i = 0; i < n_draws; ++i) {
    const double u = rng::uniform_open0(eng);
    const auto h = acceptance_hull(curve, std::log(u) - std::log(alpha));
    widths.push_back(h ? h->second - h->first : 0.0);
  }
  return widths;
}

double nonrandomized_width(const CiCurve& curve, double alpha) {
  const auto h = acceptance_hull(curve, -std::log(alpha));
  return h ? h->second - h->first : 0.0;
}

}  // namespace univc
