#include "univc/diagnostics.hpp"

#include "univc/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Cholesky>

#include <algorithm>

namespace univc {

ResponseVector center_response(const VectorXd& y_raw) {
  if (y_raw.size() < 2) throw InvalidParameterError("centering needs at least two observations");
  ResponseVector r;
  r.y = y_raw.array() - y_raw.mean();
  r.centered = true;
  return r;
}

BlupResult blup(const VectorXd& y, const std::vector<MatrixXd>& Z, const VectorXd& sigma2) {
  const Index n = y.size();
  const Index M = static_cast<Index>(Z.size());
  if (sigma2.size() != M + 1) throw DimensionMismatchError("sigma2 must have M + 1 entries");
  if (!(sigma2(M) > 0.0)) throw InvalidParameterError("error variance must be positive");
  MatrixXd V = MatrixXd::Identity(n, n) * sigma2(M);
  for (Index m = 0; m < M; ++m) {
    if (Z[m].rows() != n) throw DimensionMismatchError("design matrix rows do not match y");
    if (sigma2(m) < 0.0) throw InvalidParameterError("variance components must be nonnegative");
    V.noalias() += sigma2(m) * Z[m] * Z[m].transpose();
  }
  Eigen::LLT<MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) throw SingularCovarianceError("ZGZ' + s2 I is singular");
  const VectorXd a = llt.solve(y);

  BlupResult r;
  Index total = 0;
  for (const auto& z : Z) {
    r.offsets.push_back(total);
    total += z.cols();
  }
  r.u_hat = VectorXd::Zero(total);
  r.fitted = VectorXd::Zero(n);
  for (Index m = 0; m < M; ++m) {
    if (sigma2(m) == 0.0) continue;
    const VectorXd um = sigma2(m) * (Z[m].transpose() * a);
    r.u_hat.segment(r.offsets[m], um.size()) = um;
    r.fitted.noalias() += Z[m] * um;
  }
  r.resid = y - r.fitted;
  return r;
}

QQData qq_data(const VectorXd& resid, double scale) {
  const Index n = resid.size();
  if (n < 3) throw InvalidParameterError("QQ data needs at least three residuals");
  if (!(scale > 0.0)) throw InvalidParameterError("QQ scale must be positive");
  const boost::math::normal_distribution<double> nd(0.0, 1.0);
  QQData q;
  q.sample.assign(resid.data(), resid.data() + n);
  std::sort(q.sample.begin(), q.sample.end());
  for (auto& s : q.sample) s /= scale;
  for (Index i = 0; i < n; ++i)
    q.theoretical.push_back(boost::math::quantile(nd, (static_cast<double>(i) + 0.5) / n));
  return q;
}

}  // namespace univc
