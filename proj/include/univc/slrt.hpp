#pragma once

// Split likelihood-ratio statistic, randomized decision rule, k-fold
// averaging, p-values and confidence sets by test inversion.

#include "univc/estimation.hpp"
#include "univc/model.hpp"
#include "univc/objective.hpp"
#include "univc/partition.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace univc {

/// naive: dense conditional likelihood throughout.
/// nulldiag: rotate by the eigenvectors of the free kernel so that Sigma is
///   diagonal under the null; theta0 from the one-dimensional fitter.
/// fulldiag: shared eigenbasis, every evaluation O(nM).
enum class Method { Auto, Naive, NullDiag, FullDiag };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct SlrtOptions {
  FitOptions fit;
  Method method = Method::Auto;
  /// Relaxed estimators (no h2 >= 0, sum(h2) < 1) for theta1 / theta0.
  bool relaxed_alt = false;
  bool relaxed_null = false;
  /// Replace theta1 by theta0 (the statistic is then exactly 1).
  bool alt_equals_null = false;
};

struct SplitResult {
  double log_stat = 0.0;
  double cond_alt = 0.0;   // l_{0|1}(theta1)
  double cond_null = 0.0;  // l_{0|1}(theta0)
  FitResult theta1;
  FitResult theta0;
};

/// One split with its alternative fit done once; nulls are evaluated on
/// demand. Structured kernel sets are rotated before the split indices are
/// applied, so every method sees the same coordinates.
class SplitEngine {
 public:
  /// `hint` selects the free component for the nulldiag rotation.
  SplitEngine(const ResponseVector& y, const KernelSet& K, Partition split,
              SlrtOptions opts = {}, const NullSpec& hint = NullSpec::none());
  ~SplitEngine();
  SplitEngine(SplitEngine&&) noexcept;
  SplitEngine& operator=(SplitEngine&&) noexcept;

  const FitResult& theta1() const;
  const Partition& split() const;
  Method method() const;
  Index M() const;
  SplitResult evaluate(const NullSpec& null) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// log T_n for a single given split.
SplitResult split_lrt(const ResponseVector& y, const KernelSet& K, const NullSpec& null,
                      const Partition& split, const SlrtOptions& opts = {});

/// k = 1: one split with n0 = floor(n / 2). k >= 2: fold j is Y_(1), the
/// other folds form Y_(0); statistics are averaged on the ratio scale.
class KFoldEngine {
 public:
  KFoldEngine(const ResponseVector& y, const KernelSet& K, Index k, std::uint64_t seed_split,
              SlrtOptions opts = {}, const NullSpec& hint = NullSpec::none());

  Index k() const { return static_cast<Index>(engines_.size()); }
  Index M() const { return engines_.front().M(); }
  std::uint64_t seed_split() const { return seed_; }
  const SplitEngine& fold(Index j) const { return engines_.at(j); }
  /// Per-fold results; the averaged log statistic is written to *log_mean.
  std::vector<SplitResult> evaluate(const NullSpec& null, double* log_mean) const;
  double log_stat(const NullSpec& null) const;

 private:
  std::vector<SplitEngine> engines_;
  std::uint64_t seed_ = 0;
};

struct Decision {
  double u = 1.0;
  bool reject = false;
};

/// U on (0, 1] drawn from seed_u.
double draw_u(std::uint64_t seed_u);
/// Reject iff T > u / alpha, decided in log space.
Decision randomized_decision(double log_stat, double alpha, std::uint64_t seed_u);
bool rejects(double log_stat, double alpha, double u);
/// min(1, u / T).
double p_value(double log_stat, double u);
double log_mean_exp(const std::vector<double>& logs);

struct SlrtResult {
  double stat = 0.0;
  double log_stat = 0.0;
  std::vector<double> fold_log_stats;
  std::vector<FitResult> theta1;
  std::vector<FitResult> theta0;
  double u = 1.0;
  double alpha = 0.05;
  bool randomized = true;
  bool reject = false;
  double p_value = 1.0;
  std::uint64_t seed_split = 0;
  std::uint64_t seed_u = 0;
  Index k = 1;
  NullSpec null;
  Method method = Method::Auto;
};

SlrtResult kfold_slrt(const ResponseVector& y, const KernelSet& K, const NullSpec& null, Index k,
                      std::uint64_t seed_split, std::uint64_t seed_u, double alpha = 0.05,
                      const SlrtOptions& opts = {}, bool randomized = true);

// ---------------------------------------------------------------------------
// Confidence sets

enum class CiTarget { H2, Sigma2, SD };
const char* to_string(CiTarget t);
CiTarget ci_target_from_string(const std::string& s);
/// The null that pins `component` at `value` on the target's scale.
NullSpec ci_null(Index component, CiTarget target, double value);

struct CiGrid {
  double lo = 0.0;
  double hi = 1.0;
  int steps = 21;
  std::vector<double> values() const;
};

struct CiCurve {
  std::vector<double> x;
  std::vector<double> log_stat;
};

struct CiResult {
  bool empty = false;
  bool connected = true;
  double lower = 0.0;
  double upper = 0.0;
  double u = 1.0;
  double alpha = 0.05;
  double log_threshold = 0.0;
  Index component = 0;
  CiTarget target = CiTarget::H2;
  CiCurve curve;
};

/// Inverts the (k-fold) test over the grid with folds and u frozen, then
/// refines each boundary crossing by bisection to `tol`.
CiResult confidence_interval(const KFoldEngine& engine, Index component, CiTarget target,
                             const CiGrid& grid, double alpha, double u, double tol = 1e-4);
CiResult confidence_interval(const ResponseVector& y, const KernelSet& K, Index component,
                             CiTarget target, const CiGrid& grid, double alpha, Index k,
                             std::uint64_t seed_split, std::uint64_t seed_u,
                             const SlrtOptions& opts = {}, bool randomized = true);

/// Hull of {x : curve(x) <= log_threshold} under linear interpolation of the
/// log statistic between grid points; nullopt when empty.
std::optional<std::pair<double, double>> acceptance_hull(const CiCurve& curve,
                                                         double log_threshold);
/// Widths for n_draws thresholds u / alpha with u ~ U(0, 1].
std::vector<double> ci_width_distribution(const CiCurve& curve, double alpha, int n_draws,
                                          std::uint64_t seed);
/// Width at u = 1.
double nonrandomized_width(const CiCurve& curve, double alpha);

}  // namespace univc
