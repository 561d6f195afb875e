#pragma once

// Response centering, BLUPs of the random effects and normal QQ plot data.

#include "univc/model.hpp"

#include <vector>

namespace univc {

ResponseVector center_response(const VectorXd& y_raw);

struct BlupResult {
  VectorXd u_hat;              // concatenated over factors
  std::vector<Index> offsets;  // start of each factor's block in u_hat
  VectorXd fitted;             // Z u_hat
  VectorXd resid;              // y - fitted
};

/// u_hat = G Z^T (Z G Z^T + sigma2_{M+1} I)^{-1} y with G = bdiag(sigma2_m I).
BlupResult blup(const VectorXd& y, const std::vector<MatrixXd>& Z, const VectorXd& sigma2);

struct QQData {
  std::vector<double> theoretical;
  std::vector<double> sample;
};

/// Normal quantiles at (i - 0.5) / n against sorted resid / scale.
QQData qq_data(const VectorXd& resid, double scale = 1.0);

}  // namespace univc
