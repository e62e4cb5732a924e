#pragma once

// Treatment-effect estimators on a four-group sample:
//   - difference-in-means DID (used on matched samples and for the naive
//     no-matching benchmark), and
//   - regression DID with covariate adjustment (used after one-dimensional
//     matching).
//
// Observations are accumulated in id-sorted order, so estimates are invariant
// to how the groups happen to be ordered -- a requirement for the file
// round-trip to reproduce in-process results bit for bit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"

namespace rcsmatch {

constexpr double kNormalQuantile975 = 1.959964;

struct Estimate {
  double satt = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double d0 = 0.0;  // before-period treated-control mean difference
  double d1 = 0.0;  // after-period treated-control mean difference
  int n_used = 0;
};

namespace detail {

struct GroupMoments {
  double mean = 0.0;
  double variance = 0.0;  // sample (n-1); zero for singleton groups
  std::size_t n = 0;
};

inline GroupMoments outcome_moments(const std::vector<Observation>& group) {
  std::vector<double> ys;
  ys.reserve(group.size());
  std::vector<const Observation*> sorted;
  sorted.reserve(group.size());
  for (const Observation& obs : group) sorted.push_back(&obs);
  std::sort(sorted.begin(), sorted.end(),
            [](const Observation* a, const Observation* b) { return a->id < b->id; });
  for (const Observation* obs : sorted) ys.push_back(obs->outcome);

  GroupMoments m;
  m.n = ys.size();
  for (double y : ys) m.mean += y;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double y : ys) ss += (y - m.mean) * (y - m.mean);
    m.variance = ss / static_cast<double>(m.n - 1);
  }
  return m;
}

}  // namespace detail

// d0 = mean(Y|BT) - mean(Y|BC); d1 = mean(Y|AT) - mean(Y|AC); satt = d1 - d0.
// SE from the four-group independent-means formula.
inline Estimate diff_in_means_did(const Quad& quad) {
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).empty()) throw EmptyGroupError(group_name(g));
  }
  const auto bt = detail::outcome_moments(quad.bt);
  const auto bc = detail::outcome_moments(quad.bc);
  const auto at = detail::outcome_moments(quad.at);
  const auto ac = detail::outcome_moments(quad.ac);

  Estimate est;
  est.d0 = bt.mean - bc.mean;
  est.d1 = at.mean - ac.mean;
  est.satt = est.d1 - est.d0;
  est.se = std::sqrt(bt.variance / static_cast<double>(bt.n) +
                     bc.variance / static_cast<double>(bc.n) +
                     at.variance / static_cast<double>(at.n) +
                     ac.variance / static_cast<double>(ac.n));
  est.ci_low = est.satt - kNormalQuantile975 * est.se;
  est.ci_high = est.satt + kNormalQuantile975 * est.se;
  est.n_used = static_cast<int>(bt.n + bc.n + at.n + ac.n);
  return est;
}

inline Estimate diff_in_means_did(const MatchedQuad& matched) {
  return diff_in_means_did(matched.groups);
}

// OLS of Y on [1, Treated, After, Treated*After, X1..Xk]; satt is the
// interaction coefficient with its classical homoskedastic standard error.
inline Estimate regression_did(const Quad& quad, std::size_t k) {
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).empty()) throw EmptyGroupError(group_name(g));
  }
  std::vector<const Observation*> rows;
  rows.reserve(quad.size());
  for (GroupLabel g : kAllGroups) {
    for (const Observation& obs : quad.group(g)) rows.push_back(&obs);
  }
  std::sort(rows.begin(), rows.end(),
            [](const Observation* a, const Observation* b) { return a->id < b->id; });

  const std::size_t n = rows.size();
  const std::size_t p = 4 + k;
  if (n <= p) throw RankDeficientDesignError();

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd outcome(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& obs = *rows[i];
    if (obs.covariates.size() < k) throw DimensionMismatchError(k, obs.covariates.size());
    const double treated = obs.treated ? 1.0 : 0.0;
    const double after = obs.period == Period::after ? 1.0 : 0.0;
    design(i, 0) = 1.0;
    design(i, 1) = treated;
    design(i, 2) = after;
    design(i, 3) = treated * after;
    for (std::size_t j = 0; j < k; ++j) design(i, 4 + j) = obs.covariates[j];
    outcome[i] = obs.outcome;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(p)) throw RankDeficientDesignError();
  const Eigen::VectorXd beta = qr.solve(outcome);

  const Eigen::VectorXd residuals = outcome - design * beta;
  const double sigma2 =
      residuals.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd xtx = design.transpose() * design;
  const Eigen::MatrixXd xtx_inv =
      xtx.llt().solve(Eigen::MatrixXd::Identity(p, p));

  Estimate est;
  est.satt = beta[3];
  est.se = std::sqrt(sigma2 * xtx_inv(3, 3));
  est.ci_low = est.satt - kNormalQuantile975 * est.se;
  est.ci_high = est.satt + kNormalQuantile975 * est.se;
  est.n_used = static_cast<int>(n);

  // Raw group-mean differences for reference; satt = d1 - d0 only holds for
  // the difference-in-means estimators.
  est.d0 = detail::outcome_moments(quad.bt).mean - detail::outcome_moments(quad.bc).mean;
  est.d1 = detail::outcome_moments(quad.at).mean - detail::outcome_moments(quad.ac).mean;
  return est;
}

inline Estimate regression_did(const MatchedSlices& slices, std::size_t k) {
  return regression_did(slices.groups, k);
}

// The no-matching benchmark: difference-in-means DID on the full quad.
inline Estimate naive_did(const Quad& quad) { return diff_in_means_did(quad); }

}  // namespace rcsmatch
