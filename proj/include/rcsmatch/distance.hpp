#pragma once

// Distance metrics between subjects: absolute propensity-score difference and
// Mahalanobis distance, plus caliper-width derivation from score spread.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcsmatch/errors.hpp"

namespace rcsmatch {

struct MahalanobisContext {
  Eigen::MatrixXd pooled_covariance;  // k x k, symmetric positive definite
  Eigen::MatrixXd inverse;
  // Transpose of the Cholesky factor of the inverse: mahalanobis(x, y) equals
  // the Euclidean distance between whitener*x and whitener*y. Lets the
  // matcher run nearest-neighbor scans in whitened coordinates.
  Eigen::MatrixXd whitener;
  int pool_size = 0;
};

// Sample covariance (n-1) of the union of the two groups being matched,
// inverted through Cholesky so collinear covariates or tiny pools surface as
// SingularCovarianceError.
inline MahalanobisContext pooled_covariance(
    const std::vector<std::vector<double>>& group_a,
    const std::vector<std::vector<double>>& group_b) {
  const std::size_t n = group_a.size() + group_b.size();
  if (n == 0) throw std::invalid_argument("pooled_covariance: empty pools");
  const std::size_t k =
      (group_a.empty() ? group_b : group_a).front().size();
  if (n < k + 2) {
    throw SingularCovarianceError("pooled covariance needs at least k + 2 subjects, got " +
                                  std::to_string(n));
  }

  Eigen::MatrixXd data(n, k);
  std::size_t row = 0;
  for (const auto* group : {&group_a, &group_b}) {
    for (const auto& x : *group) {
      if (x.size() != k) throw DimensionMismatchError(k, x.size());
      for (std::size_t j = 0; j < k; ++j) data(row, j) = x[j];
      ++row;
    }
  }

  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  MahalanobisContext ctx;
  ctx.pool_size = static_cast<int>(n);
  ctx.pooled_covariance =
      centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::LLT<Eigen::MatrixXd> llt(ctx.pooled_covariance);
  if (llt.info() != Eigen::Success) throw SingularCovarianceError();
  ctx.inverse = llt.solve(Eigen::MatrixXd::Identity(k, k));

  Eigen::LLT<Eigen::MatrixXd> inv_llt(ctx.inverse);
  if (inv_llt.info() != Eigen::Success) throw SingularCovarianceError();
  ctx.whitener = Eigen::MatrixXd(inv_llt.matrixL()).transpose();
  return ctx;
}

// sqrt((x - y)' * inverse * (x - y))
inline double mahalanobis(const std::vector<double>& x, const std::vector<double>& y,
                          const MahalanobisContext& ctx) {
  const std::size_t k = static_cast<std::size_t>(ctx.pooled_covariance.rows());
  if (x.size() != k) throw DimensionMismatchError(k, x.size());
  if (y.size() != k) throw DimensionMismatchError(k, y.size());
  Eigen::VectorXd diff(k);
  for (std::size_t j = 0; j < k; ++j) diff[j] = x[j] - y[j];
  const double q = diff.dot(ctx.inverse * diff);
  return std::sqrt(std::max(0.0, q));
}

// Whitened coordinates; Euclidean distance between whitened points equals the
// Mahalanobis distance under ctx.
inline std::vector<double> whiten(const MahalanobisContext& ctx,
                                  const std::vector<double>& x) {
  const std::size_t k = static_cast<std::size_t>(ctx.pooled_covariance.rows());
  if (x.size() != k) throw DimensionMismatchError(k, x.size());
  const Eigen::VectorXd mapped =
      ctx.whitener * Eigen::Map<const Eigen::VectorXd>(x.data(), k);
  return std::vector<double>(mapped.data(), mapped.data() + k);
}

inline double euclidean(const std::vector<double>& x, const std::vector<double>& y) {
  double ss = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    ss += d * d;
  }
  return std::sqrt(ss);
}

inline double ps_distance(double score_i, double score_j) {
  return std::abs(score_i - score_j);
}

// multiplier x sample SD (n-1) of the scores. All-identical scores would give
// width zero and prune everything, so they raise DegenerateScoresError.
inline double caliper_width(const std::vector<double>& scores, double multiplier) {
  if (scores.size() < 2) throw std::invalid_argument("caliper_width: need at least 2 scores");
  if (!(multiplier > 0.0)) throw std::invalid_argument("caliper_width: multiplier must be positive");
  bool all_equal = true;
  for (double s : scores) all_equal = all_equal && s == scores.front();
  if (all_equal) throw DegenerateScoresError();

  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return multiplier * std::sqrt(ss / static_cast<double>(scores.size() - 1));
}

}  // namespace rcsmatch
