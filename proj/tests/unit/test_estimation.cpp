#include "oracles.hpp"

#include "univc/errors.hpp"
#include "univc/estimation.hpp"
#include "univc/objective.hpp"
#include "univc/simharness.hpp"

#include <doctest.h>

using namespace univc;

namespace {

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("objective gradients match finite differences") {
  std::mt19937_64 eng(21);
  const Index n = 20;
  const std::vector<MatrixXd> K{oracle::random_psd(eng, n, 3), oracle::random_psd(eng, n, 5)};
  const VectorXd y = oracle::random_normal(eng, n);
  const Partition p = make_partition(n, 10, 4);
  const DenseMarginal marg(y, K);
  const DenseConditional cond(oracle::sub(y, p.idx0), oracle::sub(y, p.idx1), make_blocks(K, p));
  std::vector<VectorXd> eigs{oracle::random_normal(eng, n).cwiseAbs(),
                             oracle::random_normal(eng, n).cwiseAbs()};
  const DiagLikelihood diag(y, eigs);
  const VectorXd h = vec2(0.25, 0.3);
  for (const Likelihood* L : std::initializer_list<const Likelihood*>{&marg, &cond, &diag}) {
    const auto e = L->profile(h, true);
    REQUIRE(e);
    const VectorXd fd = oracle::fd_grad(
        [&](const VectorXd& x) { return L->profile(x, false)->value; }, h);
    CHECK((e->grad - fd).norm() / fd.norm() < 1e-7);
    ThetaParam t{h, e->tau2};
    CHECK(*L->at_theta(t) == doctest::Approx(e->value).epsilon(1e-12));

    VectorXd s2(3);
    s2 << 0.4, 0.3, 0.8;
    const auto se = L->at_sigma2(s2, true);
    REQUIRE(se);
    const VectorXd fds = oracle::fd_grad(
        [&](const VectorXd& x) { return L->at_sigma2(x, false)->value; }, s2);
    CHECK((se->grad - fds).norm() / fds.norm() < 1e-7);
    CHECK(se->info.rows() == 3);
    CHECK(se->info.isApprox(se->info.transpose()));
  }
}

TEST_CASE("flat likelihood returns h2 = 0 by the tie rule") {
  std::mt19937_64 eng(22);
  const VectorXd y = oracle::random_normal(eng, 15);
  const KernelSet K = KernelSet::dense({MatrixXd::Identity(15, 15)});
  const FitResult r = fit_marginal({y}, K);
  CHECK(r.theta.h2(0) == 0.0);
  CHECK(r.theta.tau2 == doctest::Approx(y.squaredNorm() / 15).epsilon(1e-12));
}

TEST_CASE("marginal fit dominates a simplex grid") {
  std::mt19937_64 eng(23);
  const Index n = 12;
  const std::vector<MatrixXd> K{oracle::random_psd(eng, n, 2), oracle::random_psd(eng, n, 3)};
  const VectorXd y = oracle::random_normal(eng, n) * 1.5;
  const FitResult r = fit_marginal({y}, KernelSet::dense(K));
  const DenseMarginal L(y, K);
  double best = -1e300;
  for (int i = 0; i <= 50; ++i)
    for (int j = 0; i + j <= 50; ++j) {
      const VectorXd h = vec2(i / 50.0, j / 50.0) * (1.0 - 1e-9);
      if (auto e = L.profile(h, false)) best = std::max(best, e->value);
    }
  CHECK(r.loglik >= best - 1e-6);
  CHECK(r.converged);
  CHECK(r.theta.h2.minCoeff() >= 0.0);
  CHECK(r.theta.h2.sum() < 1.0);
}

TEST_CASE("marginal fit is consistent on diagonal data") {
  const Index n = 200;
  const KernelSet K = ar1_eigen_kernel(n, 0.95);
  double sum = 0.0, sum2 = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const ResponseVector y = gen_data(ThetaParam{VectorXd::Constant(1, 0.3), 1.0}, K, 1000 + r);
    const double h = fit_marginal(y, K).theta.h2(0);
    sum += h;
    sum2 += h * h;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - 0.3) < 3 * se + 0.01);
}

TEST_CASE("conditional fit under fully pinned null is closed form") {
  std::mt19937_64 eng(24);
  const Index n = 16;
  const std::vector<MatrixXd> K{oracle::random_psd(eng, n, 3), oracle::random_psd(eng, n, 2)};
  const Partition p = make_partition(n, 8, 1);
  const BlockKernels B = make_blocks(K, p);
  const VectorXd y = oracle::random_normal(eng, n);
  const VectorXd y0 = oracle::sub(y, p.idx0), y1 = oracle::sub(y, p.idx1);
  const FitResult r = fit_conditional(y0, y1, B, NullSpec::h2({{0, 0.0}, {1, 0.0}}));
  CHECK(r.iterations == 0);
  CHECK(r.theta.tau2 == doctest::Approx(profile_tau2_cond(VectorXd::Zero(2), y0, y1, B)));
}

TEST_CASE("conditional fit matches a grid oracle") {
  std::mt19937_64 eng(25);
  const Index n = 30;
  const std::vector<MatrixXd> K{oracle::random_psd(eng, n, 4), oracle::random_psd(eng, n, 6)};
  const KernelSet KS = KernelSet::dense(K);
  const ResponseVector y = gen_data(ThetaParam{vec2(0.4, 0.3), 1.0}, KS, 77);
  const Partition p = make_partition(n, 15, 2);
  const BlockKernels B = make_blocks(K, p);
  const VectorXd y0 = oracle::sub(y.y, p.idx0), y1 = oracle::sub(y.y, p.idx1);
  const DenseConditional L(y0, y1, B);

  const FitResult free = fit_conditional(y0, y1, B, NullSpec::none());
  double best = -1e300;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; i + j <= 100; ++j)
      if (auto e = L.profile(vec2(i / 100.0, j / 100.0) * (1 - 1e-9), false))
        best = std::max(best, e->value);
  CHECK(free.loglik >= best - 1e-6);

  const FitResult pinned = fit_conditional(y0, y1, B, NullSpec::h2({{0, 0.2}}));
  CHECK(pinned.theta.h2(0) == 0.2);
  double best1 = -1e300;
  for (int j = 0; j <= 4000; ++j) {
    const double h = 0.8 * j / 4000.0 * (1 - 1e-9);
    if (auto e = L.profile(vec2(0.2, h), false)) best1 = std::max(best1, e->value);
  }
  CHECK(std::abs(pinned.loglik - best1) < 1e-4);
  CHECK(pinned.loglik >= best1 - 1e-8);
}

TEST_CASE("relaxed fits") {
  std::mt19937_64 eng(26);
  const Index n = 40;
  const VectorXd y = oracle::random_normal(eng, n);
  const DenseMarginal flat(y, {MatrixXd::Identity(n, n)});
  FitOptions o;
  o.extra_starts = {VectorXd::Constant(1, 0.37)};
  o.n_starts = 1;
  const FitResult r = fit_unconstrained(flat, NullSpec::none(), o);
  CHECK(!r.constrained);
  CHECK(std::abs(r.grad_norm) < 1e-8);

  const std::vector<MatrixXd> K{oracle::random_psd(eng, n, 3), oracle::random_psd(eng, n, 5)};
  for (int rep = 0; rep < 10; ++rep) {
    const VectorXd yy = oracle::random_normal(eng, n);
    const DenseMarginal L(yy, K);
    const FitResult c = maximize_profile(L, NullSpec::h2({{0, 0.1}}), {});
    FitOptions ro;
    ro.extra_starts = {c.theta.h2};
    const FitResult u = fit_unconstrained(L, NullSpec::h2({{0, 0.1}}), ro);
    CHECK(u.loglik >= c.loglik - 1e-12 * std::max(1.0, std::abs(c.loglik)));
    CHECK(u.theta.h2(0) == 0.1);
  }
}

TEST_CASE("constrained and relaxed fits agree for interior truth") {
  const Index n = 400;
  const KernelSet K = KernelSet::diagonal({ar1_eigenvalues(n, 0.95), ar1_eigenvalues(n, 0.5)});
  const ResponseVector y = gen_data(ThetaParam{vec2(0.4, 0.3), 1.0}, K, 5);
  const DiagLikelihood L(y.y, K.structure()->eigs);
  const FitResult c = maximize_profile(L, NullSpec::none(), {});
  FitOptions ro;
  ro.extra_starts = {c.theta.h2};
  const FitResult u = fit_unconstrained(L, NullSpec::none(), ro);
  REQUIRE(c.theta.h2.minCoeff() > 0.0);
  CHECK((c.theta.h2 - u.theta.h2).norm() < 1e-4);
}

TEST_CASE("variance-scale null matches the proportion-scale null at zero") {
  std::mt19937_64 eng(27);
  const Index n = 50;
  const KernelSet K = KernelSet::diagonal({ar1_eigenvalues(n, 0.9), ar1_eigenvalues(n, 0.3)});
  const ResponseVector y = gen_data(ThetaParam{vec2(0.2, 0.4), 2.0}, K, 8);
  const DiagLikelihood L(y.y, K.structure()->eigs);
  const FitResult a = maximize_profile(L, NullSpec::h2({{1, 0.0}}), {});
  const FitResult b = maximize_sigma2(L, NullSpec::sigma2({{1, 0.0}}), {});
  CHECK(b.loglik == doctest::Approx(a.loglik).epsilon(1e-8));
  CHECK(b.sigma2(1) == 0.0);
  CHECK(std::abs(b.sigma2(0) - a.sigma2(0)) < 1e-4 * (1 + a.sigma2(0)));

  const FitResult pinned = maximize_sigma2(L, NullSpec::sigma2({{0, 0.7}}), {});
  CHECK(pinned.sigma2(0) == 0.7);
  double best = -1e300;
  for (int i = 0; i <= 300; ++i)
    for (int j = 1; j <= 300; ++j) {
      VectorXd s(3);
      s << 0.7, 4.0 * i / 300.0, 4.0 * j / 300.0;
      if (auto e = L.at_sigma2(s, false)) best = std::max(best, e->value);
    }
  CHECK(pinned.loglik >= best - 1e-9);
}

TEST_CASE("one-dimensional null fitter") {
  std::mt19937_64 eng(28);
  const VectorXd y0 = oracle::random_normal(eng, 40);
  const Null1dResult flat = fit_null_1d(y0, VectorXd::Ones(40));
  CHECK(flat.h2 == 0.0);
  CHECK(flat.tau2 == doctest::Approx(y0.squaredNorm() / 40));

  const Index n = 120;
  const VectorXd lam = ar1_eigenvalues(n, 0.95);
  const KernelSet KD = KernelSet::diagonal({ar1_eigenvalues(n, 0.3), lam});
  const ResponseVector y = gen_data(ThetaParam{vec2(0.0, 0.5), 1.0}, KD, 3);
  const Partition p = make_partition(n, 60, 6);
  const VectorXd yy0 = oracle::sub(y.y, p.idx0), yy1 = oracle::sub(y.y, p.idx1);
  const Null1dResult r = fit_null_1d(yy0, oracle::sub(lam, p.idx0));
  const BlockKernels B = make_blocks(KD, p);
  const FitResult d = fit_conditional(yy0, yy1, B, NullSpec::h2({{0, 0.0}}));
  CHECK(std::abs(r.h2 - d.theta.h2(1)) < 1e-4);
  CHECK(r.loglik == doctest::Approx(d.loglik).epsilon(1e-9));

  const Null1dResult s = fit_null_1d(3.0 * yy0, oracle::sub(lam, p.idx0));
  CHECK(s.h2 == doctest::Approx(r.h2).epsilon(1e-6));
  CHECK(s.tau2 == doctest::Approx(9.0 * r.tau2).epsilon(1e-6));
}

TEST_CASE("null specifications") {
  CHECK_THROWS_AS(NullSpec::h2({{0, 1.2}}).validate(2), InvalidParameterError);
  CHECK_THROWS_AS(NullSpec::h2({{3, 0.0}}).validate(2), InvalidParameterError);
  CHECK_THROWS_AS(NullSpec::h2({{0, 0.6}, {1, 0.5}}).validate(2), InvalidParameterError);
  CHECK_THROWS_AS(NullSpec::sigma2({{0, -1.0}}).validate(2), InvalidParameterError);
  CHECK(NullSpec::h2({{0, 0.0}}).diagonal_free(2) == Index{1});
  CHECK(!NullSpec::h2({{0, 0.1}}).diagonal_free(2));
  CHECK(NullSpec::h2({{0, 0.0}, {1, 0.25}}).describe() == "h1=0,h2=0.25");
}
