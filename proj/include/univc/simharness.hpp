#pragma once

// Data generation, kernel generators and the Monte Carlo experiments:
// coverage of the randomized interval, power under exact / truncated /
// relaxed variants, and timing across the three implementations.

#include "univc/io.hpp"
#include "univc/model.hpp"
#include "univc/slrt.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace univc {

/// y = L z with L the Cholesky factor of Sigma, or per-coordinate scaling
/// followed by O when the kernel set carries a shared eigenbasis.
ResponseVector gen_data(const Sigma2Param& s, const KernelSet& K, std::uint64_t seed);
ResponseVector gen_data(const ThetaParam& t, const KernelSet& K, std::uint64_t seed);

/// (rho^{|i-j|}) as a dense matrix.
MatrixXd ar1_matrix(Index n, double rho);
/// Eigenvalues of the AR(1) correlation matrix, descending.
VectorXd ar1_eigenvalues(Index n, double rho);
KernelSet ar1_eigen_kernel(Index n, double rho);

/// Leading q values evenly spaced from a3 down to a2 (the q-th equals a2);
/// trailing n - q values a1 (n - q - j + 1) / (n - q) / c, j = 1..n-q.
VectorXd spiked_eigenvalues(Index n, Index q, double a1, double a2, double a3, double c);

struct SpikedPair {
  KernelSet exact;   // K1 diagonal, K2 = O2 Lambda2 O2^T
  KernelSet approx;  // truncated kernels, diagonal
  VectorXd eig1;
  VectorXd eig2;
  MatrixXd O2;       // the (n - q2) x (n - q2) orthogonal block
};
SpikedPair spiked_kernel_pair(Index n, Index q1, Index q2, double a1, double a2, double a3,
                              double c, std::uint64_t seed);

/// Kernels O Lambda_m O^T with O the AR(1) eigenvectors and Lambda_m
/// carrying floor(n / (M + 1)) disjoint, randomly chosen eigenvalues each.
KernelSet disjoint_support_kernels(Index n, Index M, double rho, std::uint64_t seed,
                                   bool keep_dense = false);

/// Runs f(r) for r in [0, count) on up to `threads` workers.
void parallel_for(Index count, int threads, const std::function<void(Index)>& f);

struct McEstimate {
  double estimate = 0.0;
  double se = 0.0;
  Index count = 0;
  Index failures = 0;
};
McEstimate binomial_estimate(Index hits, Index total, Index failures = 0);

// ---------------------------------------------------------------------------

struct CoverageSpec {
  std::vector<VectorXd> eigs;       // diagonal kernels
  std::vector<VectorXd> truths;     // h2 vectors, one table row each
  double tau2 = 1.0;
  Index component = 0;
  double alpha = 0.05;
  Index k = 1;
  int reps = 2000;
  std::uint64_t seed = 1;
  int threads = 1;
  FitOptions fit;
};

struct CoverageRow {
  VectorXd truth;
  McEstimate randomized;
  McEstimate nonrandomized;
};

/// Containment of the true value is decided by testing the null that pins the
/// target component at its true value, which is exactly membership in the
/// grid-free acceptance set.
std::vector<CoverageRow> run_coverage(const CoverageSpec& spec);
io::Table coverage_table(const std::vector<CoverageRow>& rows, Index component);

enum class Variant { Exact, Approx, Unconstrained };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct PowerSpec {
  KernelSet exact;
  KernelSet approx;
  VectorXd truth;  // h2
  double tau2 = 1.0;
  Index component = 0;
  std::vector<double> grid;  // null values of h2_component
  std::vector<Variant> variants{Variant::Exact, Variant::Approx, Variant::Unconstrained};
  double alpha = 0.05;
  int reps = 1000;
  std::uint64_t seed = 2;
  int threads = 1;
  FitOptions fit;
};

struct PowerCurve {
  Variant variant = Variant::Exact;
  std::vector<McEstimate> points;      // one per grid value
  std::vector<std::vector<char>> hits; // [rep][grid] rejections, for paired comparisons
};

std::vector<PowerCurve> run_power(const PowerSpec& spec);
io::Table power_table(const PowerSpec& spec, const PowerCurve& curve);

struct TimingSpec {
  std::vector<Index> ns{100, 500, 1000};
  Index M = 2;
  double rho = 0.5;
  VectorXd truth;  // defaults to (0, ..., 0, 0.2)
  int reps = 5;
  std::uint64_t seed = 3;
  std::vector<Method> methods{Method::Naive, Method::NullDiag, Method::FullDiag};
  double equality_tol = 1e-4;
  double cell_timeout = 3600.0;  // seconds
  FitOptions fit;
};

struct TimingCell {
  Index n = 0;
  Method method = Method::Naive;
  double mean = 0.0;
  double sd = 0.0;
  int reps = 0;
  double log_stat = 0.0;
  bool timed_out = false;
};

struct TimingResult {
  std::vector<TimingCell> cells;
  std::vector<std::pair<Index, double>> setup_seconds;  // joint diagonalization per n
  double max_stat_discrepancy = 0.0;
  bool equality_ok = true;
};

TimingResult run_timing(const TimingSpec& spec);
io::Table timing_table(const TimingResult& r);

}  // namespace univc
