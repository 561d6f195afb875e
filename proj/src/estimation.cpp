#include "univc/estimation.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"
#include "univc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace univc {

namespace {

constexpr double kSimplexMargin = 1e-8;
constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;
constexpr std::uint64_t kStartTag = 0x5374;

double tie_tolerance(double value) { return 1e-12 * std::max(1.0, std::abs(value)); }

// Euclidean projection onto {x >= 0, sum(x) <= budget}.
VectorXd project_capped_simplex(const VectorXd& v, double budget) {
  VectorXd x = v.cwiseMax(0.0);
  if (x.sum() <= budget) return x;
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - budget) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

VectorXd sigma2_of(const ThetaParam& t) {
  VectorXd s(t.M() + 1);
  s.head(t.M()) = t.tau2 * t.h2;
  s(t.M()) = t.tau2 * (1.0 - t.h2.sum());
  return s;
}

// Free-coordinate view of the h2 problem.
struct Layout {
  Index M = 0;
  std::vector<Index> free;
  VectorXd base;  // pinned values, zeros elsewhere
  double budget = 1.0;
  bool constrained = true;

  VectorXd expand(const VectorXd& xf) const {
    VectorXd h = base;
    for (std::size_t i = 0; i < free.size(); ++i) h(free[i]) = xf(i);
    return h;
  }
  VectorXd restrict(const VectorXd& h) const {
    VectorXd xf(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) xf(i) = h(free[i]);
    return xf;
  }
  VectorXd project(const VectorXd& xf) const {
    return constrained ? project_capped_simplex(xf, budget) : xf;
  }
};

struct Run {
  VectorXd h;
  double value = -std::numeric_limits<double>::infinity();
  double tau2 = 0.0;
  double pg = 0.0;
  int iters = 0;
  bool converged = false;
};

std::optional<Run> ascend(const Likelihood& L, const Layout& lay, const VectorXd& start_f,
                          const FitOptions& opts) {
  VectorXd x = lay.project(start_f);
  auto ev = L.profile(lay.expand(x), true);
  if (!ev) return std::nullopt;
  double f = ev->value;
  double tau2 = ev->tau2;
  VectorXd g = lay.restrict(ev->grad);

  auto proj_grad = [&](const VectorXd& xx, const VectorXd& gg) {
    return (lay.project(xx + gg) - xx).cwiseAbs().maxCoeff();
  };

  Run run;
  double t = 0.1 / std::max(g.cwiseAbs().maxCoeff(), 1e-12);
  t = std::min(t, 1e6);
  for (int it = 0; it < opts.max_iters; ++it) {
    run.pg = proj_grad(x, g);
    if (run.pg < opts.tol_grad) {
      run.converged = true;
      break;
    }
    bool accepted = false;
    bool stalled = false;
    VectorXd xt;
    double ft = 0.0;
    for (int k = 0; k < kMaxHalvings; ++k, t *= 0.5) {
      xt = lay.project(x + t * g);
      const VectorXd d = xt - x;
      if (d.cwiseAbs().maxCoeff() < 1e-14) {
        stalled = true;
        break;
      }
      const auto trial = L.profile(lay.expand(xt), false);
      if (trial && trial->value >= f + kArmijo * g.dot(d)) {
        ft = trial->value;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable ascent step: stationary up to rounding.
      run.converged = stalled;
      break;
    }
    auto evt = L.profile(lay.expand(xt), true);
    if (!evt) break;
    const VectorXd s = xt - x;
    const VectorXd gt = lay.restrict(evt->grad);
    const double sy = s.dot(gt - g);
    t = sy < 0.0 ? s.squaredNorm() / -sy : std::min(4.0 * t, 1e6);
    const double change = std::abs(ft - f);
    x = xt;
    g = gt;
    f = evt->value;
    tau2 = evt->tau2;
    run.iters = it + 1;
    if (change <= opts.tol_obj * std::max(1.0, std::abs(f))) {
      run.pg = proj_grad(x, g);
      run.converged = true;
      break;
    }
  }
  if (run.iters == opts.max_iters) run.pg = proj_grad(x, g);
  run.h = lay.expand(x);
  run.value = f;
  run.tau2 = tau2;
  return run;
}

Layout make_layout(Index M, const NullSpec& null, bool constrained) {
  null.validate(M);
  Layout lay;
  lay.M = M;
  lay.free = null.free(M);
  lay.base = VectorXd::Zero(M);
  double pinned = 0.0;
  for (const auto& [m, v] : null.pinned) {
    lay.base(m) = v;
    pinned += v;
  }
  lay.budget = 1.0 - kSimplexMargin - pinned;
  lay.constrained = constrained;
  return lay;
}

FitResult finish(const ThetaParam& theta, double value, double pg, int iters, bool converged,
                 int n_starts, bool constrained) {
  FitResult r;
  r.theta = theta;
  r.theta.constrained = constrained;
  r.sigma2 = sigma2_of(theta);
  r.loglik = value;
  r.grad_norm = pg;
  r.iterations = iters;
  r.converged = converged;
  r.n_starts = n_starts;
  r.constrained = constrained;
  return r;
}

FitResult dispatch(const Likelihood& L, const NullSpec& null, const FitOptions& opts) {
  if (null.scale == NullSpec::Scale::Sigma2) return maximize_sigma2(L, null, opts);
  return maximize_profile(L, null, opts);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Index> NullSpec::free(Index M) const {
  std::vector<Index> out;
  for (Index m = 0; m < M; ++m)
    if (!pinned.count(m)) out.push_back(m);
  return out;
}

void NullSpec::validate(Index M) const {
  double sum = 0.0;
  for (const auto& [m, v] : pinned) {
    if (m < 0 || m >= M) {
      throw InvalidParameterError("null pins component " + std::to_string(m + 1) +
                                  " but the model has " + std::to_string(M));
    }
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidParameterError("pinned null values must be finite and nonnegative");
    sum += v;
  }
  if (scale == Scale::H2 && !(sum < 1.0))
    throw InvalidParameterError("pinned proportions must sum to less than 1");
}

std::optional<Index> NullSpec::diagonal_free(Index M) const {
  if (scale != Scale::H2) return std::nullopt;
  const auto f = free(M);
  if (f.size() != 1) return std::nullopt;
  for (const auto& [m, v] : pinned)
    if (v != 0.0) return std::nullopt;
  return f.front();
}

std::string NullSpec::describe() const {
  if (pinned.empty()) return "unrestricted";
  std::ostringstream os;
  const char* name = scale == Scale::H2 ? "h" : "s";
  bool first = true;
  for (const auto& [m, v] : pinned) {
    os << (first ? "" : ",") << name << m + 1 << "=" << v;
    first = false;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

FitResult maximize_profile(const Likelihood& L, const NullSpec& null, const FitOptions& opts) {
  if (null.scale != NullSpec::Scale::H2)
    throw InvalidParameterError("profile fitter needs an h2-scale null");
  const Index M = L.M();
  const Layout lay = make_layout(M, null, opts.constrained);
  if (lay.constrained && lay.budget <= 0.0)
    throw InvalidParameterError("pinned proportions leave no room for the error term");
  const Index F = static_cast<Index>(lay.free.size());

  if (F == 0) {
    const auto ev = L.profile(lay.base, true);
    if (!ev) throw OptimizationFailureError("covariance is singular at the pinned null");
    return finish({lay.base, ev->tau2}, ev->value, 0.0, 0, true, 1, opts.constrained);
  }

  std::vector<VectorXd> starts;
  const int n_default = std::clamp(opts.n_starts, 1, 3);
  starts.push_back(VectorXd::Constant(F, 0.5 / static_cast<double>(M)));
  if (n_default >= 2) starts.push_back(VectorXd::Zero(F));
  if (n_default >= 3) {
    auto eng = rng::stream(opts.start_seed, 0, kStartTag);
    std::exponential_distribution<double> ex(1.0);
    VectorXd e(F + 1);
    for (Index i = 0; i <= F; ++i) e(i) = ex(eng);
    starts.push_back(0.9 * e.head(F) / e.sum());
  }
  for (const auto& s : opts.extra_starts) {
    if (s.size() != M) throw DimensionMismatchError("extra start has the wrong length");
    starts.push_back(lay.restrict(s));
  }

  std::vector<Run> runs;
  for (const auto& s : starts) {
    auto r = ascend(L, lay, s, opts);
    if (r) runs.push_back(std::move(*r));
  }
  if (runs.empty())
    throw OptimizationFailureError("no feasible starting point (covariance singular at every start)");

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : runs) best = std::max(best, r.value);
  const Run* pick = nullptr;
  for (const auto& r : runs) {
    if (r.value < best - tie_tolerance(best)) continue;
    if (!pick || lay.restrict(r.h).norm() < lay.restrict(pick->h).norm()) pick = &r;
  }
  return finish({pick->h, pick->tau2}, pick->value, pick->pg, pick->iters, pick->converged,
                static_cast<int>(runs.size()), opts.constrained);
}

FitResult maximize_sigma2(const Likelihood& L, const NullSpec& null, const FitOptions& opts,
                          std::vector<VectorXd> starts) {
  if (null.scale != NullSpec::Scale::Sigma2)
    throw InvalidParameterError("sigma2 fitter needs a sigma2-scale null");
  const Index M = L.M();
  null.validate(M);
  const double v = std::max(L.scale_hint(), 1e-300);
  VectorXd lb = VectorXd::Zero(M + 1);
  lb(M) = 1e-10 * v;
  std::vector<Index> free;
  for (Index j = 0; j <= M; ++j)
    if (!null.pinned.count(j)) free.push_back(j);
  const double eps_active = 1e-9 * v;

  const Index F = static_cast<Index>(free.size());
  {
    VectorXd a = VectorXd::Zero(M + 1);
    a(M) = v;
    starts.push_back(a);
    starts.push_back(VectorXd::Constant(M + 1, v / static_cast<double>(F)));
  }

  auto prepare = [&](VectorXd s) {
    if (s.size() != M + 1) throw DimensionMismatchError("sigma2 start has the wrong length");
    s = s.cwiseMax(lb);
    for (const auto& [m, val] : null.pinned) s(m) = val;
    return s;
  };

  struct SRun {
    VectorXd s;
    double value = -std::numeric_limits<double>::infinity();
    double pg = 0.0;
    int iters = 0;
    bool converged = false;
  };
  std::vector<SRun> runs;
  for (auto& s0 : starts) {
    VectorXd x = prepare(s0);
    auto ev = L.at_sigma2(x, true);
    if (!ev) continue;
    SRun run;
    for (int it = 0; it < opts.max_iters; ++it) {
      const VectorXd& g = ev->grad;
      std::vector<Index> S;
      double pg = 0.0;
      for (Index j : free) {
        const bool at_bound = x(j) <= lb(j) + eps_active && g(j) <= 0.0;
        if (!at_bound) {
          S.push_back(j);
          pg = std::max(pg, std::abs(g(j)));
        }
      }
      run.pg = pg;
      if (S.empty() || pg < opts.tol_grad) {
        run.converged = true;
        break;
      }
      const Index ns = static_cast<Index>(S.size());
      MatrixXd H(ns, ns);
      VectorXd gs(ns);
      for (Index a = 0; a < ns; ++a) {
        gs(a) = g(S[a]);
        for (Index b = 0; b < ns; ++b) H(a, b) = ev->info(S[a], S[b]);
      }
      H.diagonal().array() += 1e-12 * std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
      VectorXd ds = H.ldlt().solve(gs);
      if (!(gs.dot(ds) > 0.0) || !ds.allFinite()) ds = gs / std::max(H.diagonal().maxCoeff(), 1e-300);
      VectorXd d = VectorXd::Zero(M + 1);
      for (Index a = 0; a < ns; ++a) d(S[a]) = ds(a);

      bool accepted = false;
      VectorXd xt;
      std::optional<SigmaEval> evt;
      double t = 1.0;
      for (int k = 0; k < kMaxHalvings; ++k, t *= 0.5) {
        xt = (x + t * d).cwiseMax(lb);
        for (const auto& [m, val] : null.pinned) xt(m) = val;
        const VectorXd step = xt - x;
        auto trial = L.at_sigma2(xt, false);
        if (trial && trial->value >= ev->value + kArmijo * g.dot(step)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        run.converged = true;  // no ascent representable at this scale
        break;
      }
      evt = L.at_sigma2(xt, true);
      if (!evt) break;
      const double change = std::abs(evt->value - ev->value);
      x = xt;
      ev = std::move(evt);
      run.iters = it + 1;
      if (change <= opts.tol_obj * std::max(1.0, std::abs(ev->value))) {
        run.converged = true;
        break;
      }
    }
    run.s = x;
    run.value = ev->value;
    runs.push_back(std::move(run));
  }
  if (runs.empty()) throw OptimizationFailureError("no feasible sigma2 starting point");
  const SRun* best = &runs.front();
  for (const auto& r : runs)
    if (r.value > best->value + tie_tolerance(best->value)) best = &r;

  ThetaParam th;
  th.tau2 = best->s.sum();
  th.h2 = best->s.head(M) / th.tau2;
  FitResult res = finish(th, best->value, best->pg, best->iters, best->converged,
                         static_cast<int>(runs.size()), true);
  res.sigma2 = best->s;
  return res;
}

FitResult fit_marginal(const ResponseVector& y, const KernelSet& K, const FitOptions& opts,
                       const NullSpec& null) {
  if (y.n() != K.n()) throw DimensionMismatchError("response length does not match kernels");
  if (const auto* E = K.structure()) {
    DiagLikelihood L(E->rotate(y.y), E->eigs);
    return dispatch(L, null, opts);
  }
  DenseMarginal L(y.y, K.dense_kernels());
  return dispatch(L, null, opts);
}

FitResult fit_conditional(const VectorXd& y0, const VectorXd& y1, const BlockKernels& B,
                          const NullSpec& null, const FitOptions& opts) {
  DenseConditional L(y0, y1, B);
  return dispatch(L, null, opts);
}

FitResult fit_unconstrained(const Likelihood& L, const NullSpec& null, FitOptions opts) {
  if (null.scale != NullSpec::Scale::H2)
    throw InvalidParameterError("the relaxed fitter supports h2-scale nulls only");
  opts.constrained = false;
  return maximize_profile(L, null, opts);
}

// ---------------------------------------------------------------------------

Null1dResult fit_null_1d(const VectorXd& y0, const VectorXd& lambda) {
  const Index n = y0.size();
  if (lambda.size() != n) throw DimensionMismatchError("eigenvalues do not match response");
  const double nn = static_cast<double>(n);
  const VectorXd y2 = y0.array().square();
  if (!(y2.sum() > 0.0)) throw DegenerateDataError("response is identically zero");
  const VectorXd lm1 = lambda.array() - 1.0;

  auto eval = [&](double h, double* deriv) {
    const VectorXd d = (1.0 + h * lm1.array()).matrix();
    const VectorXd inv = d.cwiseInverse();
    const double tau2 = y2.dot(inv) / nn;
    if (deriv) {
      const VectorXd w = inv - y2.cwiseProduct(inv.cwiseAbs2()) / tau2;
      *deriv = -0.5 * lm1.dot(w);
    }
    return std::pair{-0.5 * (nn * dense::kLog2Pi + nn * std::log(tau2) +
                             d.array().log().sum() + nn),
                     tau2};
  };

  Null1dResult out;
  if (lm1.cwiseAbs().maxCoeff() <= 1e-14) {
    const auto [v, tau2] = eval(0.0, nullptr);
    out.tau2 = tau2;
    out.loglik = v;
    return out;
  }

  const double hmax = 1.0 - kSimplexMargin;
  constexpr int kGrid = 128;
  int best_i = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = eval(hmax * i / kGrid, nullptr).first;
    if (v > best_v) {
      best_v = v;
      best_i = i;
    }
  }
  double a = hmax * std::max(best_i - 1, 0) / kGrid;
  double b = hmax * std::min(best_i + 1, kGrid) / kGrid;

  // Golden section narrows the bracket, bisection on the derivative polishes.
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = eval(c, nullptr).first, fd = eval(d, nullptr).first;
  for (int it = 0; it < 60 && b - a > 1e-7; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = eval(c, nullptr).first;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = eval(d, nullptr).first;
    }
  }
  double da = 0.0, db = 0.0;
  eval(a, &da);
  eval(b, &db);
  double h = 0.5 * (a + b);
  if (da > 0.0 && db < 0.0) {
    for (int it = 0; it < 100 && b - a > 1e-15; ++it) {
      const double mid = 0.5 * (a + b);
      double dm = 0.0;
      eval(mid, &dm);
      (dm > 0.0 ? a : b) = mid;
    }
    h = 0.5 * (a + b);
  }
  double vh = eval(h, nullptr).first;
  for (double cand : {a, b, hmax}) {
    const double vc = eval(cand, nullptr).first;
    if (vc > vh) {
      vh = vc;
      h = cand;
    }
  }
  const auto [v0, tau0] = eval(0.0, nullptr);
  if (v0 >= vh - tie_tolerance(vh)) {
    out.h2 = 0.0;
    out.tau2 = tau0;
    out.loglik = v0;
    return out;
  }
  const auto [vf, tauf] = eval(h, nullptr);
  out.h2 = h;
  out.tau2 = tauf;
  out.loglik = vf;
  return out;
}

}  // namespace univc
