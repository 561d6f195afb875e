#pragma once

// Maximum-likelihood fitting by projected gradient ascent on the
// tau2-profiled likelihood, a sigma2-scale fitter for nulls that pin a
// variance rather than a proportion, and the one-dimensional fitter for
// nulls under which Sigma is diagonal.

#include "univc/model.hpp"
#include "univc/objective.hpp"
#include "univc/partition.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace univc {

/// The constraint set Theta_0. Components are 0-based. On the H2 scale the
/// pinned values are proportions h2_m; on the Sigma2 scale they are variances
/// sigma2_m (the remaining parameters stay free).
struct NullSpec {
  enum class Scale { H2, Sigma2 };
  Scale scale = Scale::H2;
  std::map<Index, double> pinned;

  static NullSpec none() { return {}; }
  static NullSpec h2(std::map<Index, double> pins) { return {Scale::H2, std::move(pins)}; }
  static NullSpec sigma2(std::map<Index, double> pins) {
    return {Scale::Sigma2, std::move(pins)};
  }

  bool empty() const { return pinned.empty(); }
  std::vector<Index> free(Index M) const;
  void validate(Index M) const;
  /// The free component when every other component is pinned to h2 = 0.
  std::optional<Index> diagonal_free(Index M) const;
  std::string describe() const;
};

struct FitOptions {
  int max_iters = 500;
  double tol_grad = 1e-6;
  double tol_obj = 1e-10;
  int n_starts = 3;
  std::uint64_t start_seed = 0;
  bool constrained = true;
  /// Additional h2 starting points (projected onto the feasible set).
  std::vector<VectorXd> extra_starts;
};

struct FitResult {
  ThetaParam theta;
  VectorXd sigma2;  // tau2 h2 and tau2 (1 - sum h2)
  double loglik = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  int n_starts = 0;
  bool constrained = true;
};

/// General profile fitter on an h2-scale null (or no null).
FitResult maximize_profile(const Likelihood& L, const NullSpec& null, const FitOptions& opts);
/// Fitter in the sigma2 parameterization with a sigma2-scale null. Starts are
/// full sigma2 vectors; pinned entries are overwritten.
FitResult maximize_sigma2(const Likelihood& L, const NullSpec& null, const FitOptions& opts,
                          std::vector<VectorXd> starts = {});

/// Marginal fit of a response with its kernels. A structured kernel set is
/// rotated and fitted on the diagonal path.
FitResult fit_marginal(const ResponseVector& y, const KernelSet& K, const FitOptions& opts = {},
                       const NullSpec& null = NullSpec::none());
FitResult fit_conditional(const VectorXd& y0, const VectorXd& y1, const BlockKernels& B,
                          const NullSpec& null, const FitOptions& opts = {});
/// The relaxed fit: same ascent without h2 >= 0 and sum(h2) <= 1.
FitResult fit_unconstrained(const Likelihood& L, const NullSpec& null, FitOptions opts = {});

struct Null1dResult {
  double h2 = 0.0;
  double tau2 = 0.0;
  double loglik = 0.0;
};

/// Maximizes l(h2 lambda + 1 - h2, tau2) over h2 in [0, 1) with tau2 profiled.
Null1dResult fit_null_1d(const VectorXd& y0, const VectorXd& lambda);

}  // namespace univc
