#include "univc/simharness.hpp"

#include "univc/dense.hpp"
#include "univc/errors.hpp"
#include "univc/rng.hpp"
#include "univc/structured.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace univc {

namespace {

constexpr std::uint64_t kDataTag = 0x44;
constexpr std::uint64_t kSplitSeedTag = 0x50;
constexpr std::uint64_t kUSeedTag = 0x55;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ResponseVector gen_data(const Sigma2Param& s, const KernelSet& K, std::uint64_t seed) {
  const Index M = K.M();
  if (s.sigma2.size() != M + 1) throw DimensionMismatchError("sigma2 must have M + 1 entries");
  if (!(s.sigma2(M) > 0.0) || (s.sigma2.head(M).array() < 0.0).any())
    throw InvalidParameterError("variance components must be nonnegative, error variance positive");
  auto eng = rng::stream(seed, 0, kDataTag);
  const VectorXd z = rng::std_normal(eng, K.n());
  ResponseVector y;
  if (const auto* E = K.structure()) {
    const VectorXd d = diag_variances(s.sigma2, E->eigs);
    y.y = E->unrotate(d.cwiseSqrt().cwiseProduct(z));
    return y;
  }
  const MatrixXd S = dense::sigma_from_sigma2(K.n(), s.sigma2, K.dense_kernels());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw SingularCovarianceError("Sigma is not positive definite");
  y.y = llt.matrixL() * z;
  return y;
}

ResponseVector gen_data(const ThetaParam& t, const KernelSet& K, std::uint64_t seed) {
  validate_constrained(t);
  return gen_data(sigma2_from_theta(t), K, seed);
}

MatrixXd ar1_matrix(Index n, double rho) {
  if (!(std::abs(rho) < 1.0)) throw InvalidParameterError("AR(1) correlation must satisfy |rho| < 1");
  if (n < 1) throw InvalidParameterError("n must be positive");
  MatrixXd A(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) A(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  return A;
}

VectorXd ar1_eigenvalues(Index n, double rho) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(ar1_matrix(n, rho), Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

KernelSet ar1_eigen_kernel(Index n, double rho) {
  return KernelSet::diagonal({ar1_eigenvalues(n, rho)});
}

VectorXd spiked_eigenvalues(Index n, Index q, double a1, double a2, double a3, double c) {
  VectorXd e(n);
  const double qd = static_cast<double>(q);
  const double rest = static_cast<double>(n - q);
  for (Index i = 1; i <= q; ++i) e(i - 1) = a2 + (a3 - a2) * static_cast<double>(q - i) / qd;
  for (Index j = 1; j <= n - q; ++j)
    e(q + j - 1) = a1 * static_cast<double>(n - q - j + 1) / rest / c;
  return e;
}

SpikedPair spiked_kernel_pair(Index n, Index q1, Index q2, double a1, double a2, double a3,
                              double c, std::uint64_t seed) {
  if (q1 == q2) throw InvalidParameterError("spiked pair needs q1 != q2 for identifiability");
  if (q1 < 1 || q2 < 1 || q1 >= n || q2 >= n)
    throw InvalidParameterError("spike counts must satisfy 1 <= q < n");
  if (!(a1 > 0.0 && a2 > 0.0 && a3 > a2 && c >= 1.0))
    throw InvalidParameterError("spiked pair needs a1, a2 > 0, a3 > a2 and c >= 1");
  SpikedPair p;
  p.eig1 = spiked_eigenvalues(n, q1, a1, a2, a3, c);
  p.eig2 = spiked_eigenvalues(n, q2, a1, a2, a3, c);
  auto eng = rng::stream(seed, 0, 0x4f);
  const Index r = n - q2;
  Eigen::BDCSVD<MatrixXd> svd(rng::std_normal(eng, r, r), Eigen::ComputeFullU);
  p.O2 = svd.matrixU();

  MatrixXd K1 = p.eig1.asDiagonal();
  MatrixXd K2 = MatrixXd::Zero(n, n);
  K2.topLeftCorner(q2, q2) = p.eig2.head(q2).asDiagonal();
  K2.bottomRightCorner(r, r) = p.O2 * p.eig2.tail(r).asDiagonal() * p.O2.transpose();
  K2 = 0.5 * (K2 + K2.transpose()).eval();

  std::vector<MatrixXd> approx{approx_truncate(K1, q1), approx_truncate(K2, q2)};
  p.exact = KernelSet::dense({std::move(K1), std::move(K2)});
  if (auto E = detect_structure(approx)) {
    p.approx = KernelSet::from_structure(std::move(*E));
  } else {
    p.approx = KernelSet::dense(std::move(approx));
  }
  return p;
}

KernelSet disjoint_support_kernels(Index n, Index M, double rho, std::uint64_t seed,
                                   bool keep_dense) {
  if (M < 1) throw InvalidParameterError("need at least one kernel");
  const Index s = n / (M + 1);
  if (s < 1) throw InvalidParameterError("n too small for disjoint supports");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(ar1_matrix(n, rho));
  const VectorXd lambda = es.eigenvalues().reverse();
  MatrixXd O = es.eigenvectors().rowwise().reverse();
  auto eng = rng::stream(seed, 0, 0x53);
  const auto perm = rng::permutation(eng, n);
  EigenStructure E;
  for (Index m = 0; m < M; ++m) {
    VectorXd e = VectorXd::Zero(n);
    for (Index j = 0; j < s; ++j) {
      const Index k = perm[m * s + j];
      e(k) = lambda(k);
    }
    E.eigs.push_back(std::move(e));
  }
  std::vector<MatrixXd> copies;
  if (keep_dense) {
    for (const auto& e : E.eigs) {
      MatrixXd K = O * e.asDiagonal() * O.transpose();
      copies.push_back(0.5 * (K + K.transpose()));
    }
  }
  E.basis = std::move(O);
  return KernelSet::from_structure(std::move(E), std::move(copies));
}

void parallel_for(Index count, int threads, const std::function<void(Index)>& f) {
  if (threads <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  const int nt = static_cast<int>(std::min<Index>(threads, count));
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

McEstimate binomial_estimate(Index hits, Index total, Index failures) {
  McEstimate e;
  e.count = total;
  e.failures = failures;
  if (total > 0) {
    e.estimate = static_cast<double>(hits) / static_cast<double>(total);
    e.se = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(total));
  }
  return e;
}

// ---------------------------------------------------------------------------

std::vector<CoverageRow> run_coverage(const CoverageSpec& spec) {
  const KernelSet K = KernelSet::diagonal(spec.eigs);
  const Index T = static_cast<Index>(spec.truths.size());
  const Index R = spec.reps;
  // 0 = not covered, 1 = covered, 2 = failed; two bits for the two rules.
  std::vector<char> rand_hit(T * R, 0), nonrand_hit(T * R, 0), failed(T * R, 0);
  SlrtOptions opts;
  opts.fit = spec.fit;
  parallel_for(T * R, spec.threads, [&](Index unit) {
    const Index i = unit / R, r = unit % R;
    const VectorXd& truth = spec.truths[i];
    const std::uint64_t base = rng::derive(spec.seed, static_cast<std::uint64_t>(r), i);
    try {
      const ResponseVector y = gen_data(ThetaParam{truth, spec.tau2}, K, base);
      KFoldEngine eng(y, K, spec.k, rng::derive(base, 0, kSplitSeedTag), opts);
      const double ls = eng.log_stat(NullSpec::h2({{spec.component, truth(spec.component)}}));
      const double u = draw_u(rng::derive(base, 0, kUSeedTag));
      rand_hit[unit] = !rejects(ls, spec.alpha, u);
      nonrand_hit[unit] = !rejects(ls, spec.alpha, 1.0);
    } catch (const Error&) {
      failed[unit] = 1;
    }
  });
  std::vector<CoverageRow> rows;
  for (Index i = 0; i < T; ++i) {
    Index hr = 0, hn = 0, nf = 0;
    for (Index r = 0; r < R; ++r) {
      const Index u = i * R + r;
      if (failed[u]) {
        ++nf;
        continue;
      }
      hr += rand_hit[u];
      hn += nonrand_hit[u];
    }
    rows.push_back({spec.truths[i], binomial_estimate(hr, R - nf, nf),
                    binomial_estimate(hn, R - nf, nf)});
  }
  return rows;
}

io::Table coverage_table(const std::vector<CoverageRow>& rows, Index component) {
  io::Table t;
  if (rows.empty()) return t;
  const Index M = rows.front().truth.size();
  t.columns.push_back("h" + std::to_string(component + 1));
  for (Index m = 0; m < M; ++m)
    if (m != component) t.columns.push_back("h" + std::to_string(m + 1));
  for (const char* c : {"estimate", "se", "lower", "upper", "estimate_nonrandomized",
                        "se_nonrandomized", "failures"})
    t.columns.push_back(c);
  for (const auto& r : rows) {
    std::vector<double> v{r.truth(component)};
    for (Index m = 0; m < M; ++m)
      if (m != component) v.push_back(r.truth(m));
    const auto& e = r.randomized;
    v.insert(v.end(), {e.estimate, e.se, e.estimate - 1.96 * e.se, e.estimate + 1.96 * e.se,
                       r.nonrandomized.estimate, r.nonrandomized.se,
                       static_cast<double>(e.failures)});
    t.add(v);
  }
  return t;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Exact: return "exact";
    case Variant::Approx: return "approx";
    case Variant::Unconstrained: return "unconstrained";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "exact") return Variant::Exact;
  if (s == "approx") return Variant::Approx;
  if (s == "unconstrained") return Variant::Unconstrained;
  throw UsageError("unknown variant '" + s + "' (expected exact, approx or unconstrained)");
}

std::vector<PowerCurve> run_power(const PowerSpec& spec) {
  const Index R = spec.reps;
  const Index G = static_cast<Index>(spec.grid.size());
  const Index V = static_cast<Index>(spec.variants.size());
  if (G == 0) throw InvalidParameterError("power grid is empty");
  // hits[v][r][g]: 0 accept, 1 reject, 2 failure.
  std::vector<std::vector<std::vector<char>>> hits(
      V, std::vector<std::vector<char>>(R, std::vector<char>(G, 0)));
  parallel_for(R, spec.threads, [&](Index r) {
    const std::uint64_t base = rng::derive(spec.seed, static_cast<std::uint64_t>(r), 0);
    ResponseVector y;
    try {
      y = gen_data(ThetaParam{spec.truth, spec.tau2}, spec.exact, base);
    } catch (const Error&) {
      for (Index v = 0; v < V; ++v) std::fill(hits[v][r].begin(), hits[v][r].end(), 2);
      return;
    }
    const std::uint64_t split_seed = rng::derive(base, 0, kSplitSeedTag);
    const double u = draw_u(rng::derive(base, 0, kUSeedTag));
    for (Index v = 0; v < V; ++v) {
      SlrtOptions opts;
      opts.fit = spec.fit;
      const Variant var = spec.variants[v];
      if (var == Variant::Unconstrained) opts.relaxed_alt = opts.relaxed_null = true;
      const KernelSet& K = var == Variant::Approx ? spec.approx : spec.exact;
      try {
        KFoldEngine eng(y, K, 1, split_seed, opts);
        for (Index g = 0; g < G; ++g) {
          try {
            const double ls = eng.log_stat(NullSpec::h2({{spec.component, spec.grid[g]}}));
            hits[v][r][g] = rejects(ls, spec.alpha, u) ? 1 : 0;
          } catch (const Error&) {
            hits[v][r][g] = 2;
          }
        }
      } catch (const Error&) {
        std::fill(hits[v][r].begin(), hits[v][r].end(), 2);
      }
    }
  });
  std::vector<PowerCurve> curves;
  for (Index v = 0; v < V; ++v) {
    PowerCurve c;
    c.variant = spec.variants[v];
    c.hits = hits[v];
    for (Index g = 0; g < G; ++g) {
      Index h = 0, nf = 0;
      for (Index r = 0; r < R; ++r) {
        if (hits[v][r][g] == 2) ++nf;
        else h += hits[v][r][g];
      }
      c.points.push_back(binomial_estimate(h, R - nf, nf));
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

io::Table power_table(const PowerSpec& spec, const PowerCurve& curve) {
  io::Table t;
  t.columns = {"null_value", "estimate", "se", "lower", "upper", "failures"};
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    const auto& e = curve.points[g];
    t.add({spec.grid[g], e.estimate, e.se, e.estimate - 1.96 * e.se, e.estimate + 1.96 * e.se,
           static_cast<double>(e.failures)});
  }
  return t;
}

// ---------------------------------------------------------------------------

TimingResult run_timing(const TimingSpec& spec) {
  TimingResult res;
  for (Index n : spec.ns) {
    VectorXd truth = spec.truth;
    if (truth.size() == 0) {
      truth = VectorXd::Zero(spec.M);
      truth(spec.M - 1) = 0.2;
    }
    if (truth.size() != spec.M) throw DimensionMismatchError("timing truth must have M entries");
    const std::uint64_t base = rng::derive(spec.seed, static_cast<std::uint64_t>(n), 0);
    const KernelSet K = disjoint_support_kernels(n, spec.M, spec.rho, rng::derive(base, 0, 0x4b));
    const ResponseVector y = gen_data(ThetaParam{truth, 1.0}, K, rng::derive(base, 0, kDataTag));
    const Partition split = make_partition(n, n / 2, rng::derive(base, 0, kSplitSeedTag));
    std::map<Index, double> pins;
    for (Index m = 0; m + 1 < spec.M; ++m) pins[m] = 0.0;
    const NullSpec null = NullSpec::h2(pins);

    // Setup cost of discovering the shared basis from dense kernels.
    {
      const auto dense_k = K.materialize_dense();
      const auto t0 = std::chrono::steady_clock::now();
      const EigenStructure E = joint_diagonalize_annihilating(dense_k);
      res.setup_seconds.emplace_back(n, seconds_since(t0));
      (void)E;
    }

    auto run_once = [&](Method m) {
      SlrtOptions opts;
      opts.fit = spec.fit;
      opts.method = m;
      return SplitEngine(y, K, split, opts, null).evaluate(null).log_stat;
    };

    // Warmup runs double as the cross-path equality check.
    std::vector<double> warm_time, warm_stat;
    for (Method m : spec.methods) {
      const auto t0 = std::chrono::steady_clock::now();
      warm_stat.push_back(run_once(m));
      warm_time.push_back(seconds_since(t0));
    }
    for (double s : warm_stat)
      res.max_stat_discrepancy =
          std::max(res.max_stat_discrepancy, std::abs(s - warm_stat.front()));
    const bool ok = res.max_stat_discrepancy <= spec.equality_tol;
    res.equality_ok = res.equality_ok && ok;

    for (std::size_t i = 0; i < spec.methods.size(); ++i) {
      TimingCell cell;
      cell.n = n;
      cell.method = spec.methods[i];
      cell.log_stat = warm_stat[i];
      if (ok) {
        std::vector<double> times;
        double total = 0.0;
        for (int r = 0; r < spec.reps; ++r) {
          if (total + warm_time[i] > spec.cell_timeout) {
            cell.timed_out = true;
            break;
          }
          const auto t0 = std::chrono::steady_clock::now();
          run_once(spec.methods[i]);
          times.push_back(seconds_since(t0));
          total += times.back();
        }
        cell.reps = static_cast<int>(times.size());
        if (!times.empty()) {
          double mean = 0.0;
          for (double t : times) mean += t;
          mean /= times.size();
          double var = 0.0;
          for (double t : times) var += (t - mean) * (t - mean);
          cell.mean = mean;
          cell.sd = times.size() > 1 ? std::sqrt(var / (times.size() - 1)) : 0.0;
        }
      }
      res.cells.push_back(cell);
    }
  }
  return res;
}

io::Table timing_table(const TimingResult& r) {
  io::Table t;
  t.columns = {"n", "method", "mean_seconds", "sd_seconds", "reps", "log_stat", "timed_out",
               "setup_seconds"};
  for (const auto& c : r.cells) {
    double setup = 0.0;
    if (c.method == Method::FullDiag)
      for (const auto& [n, s] : r.setup_seconds)
        if (n == c.n) setup = s;
    t.add_cells({std::to_string(c.n), to_string(c.method), io::format_double(c.mean),
                 io::format_double(c.sd), std::to_string(c.reps), io::format_double(c.log_stat),
                 c.timed_out ? "1" : "0", io::format_double(setup)});
  }
  return t;
}

}  // namespace univc
