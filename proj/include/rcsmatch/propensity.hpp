#pragma once

// Logistic regression by iteratively reweighted least squares (Newton steps
// on the log-likelihood), used to estimate propensity scores for group
// membership.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rcsmatch/errors.hpp"

namespace rcsmatch {

struct LabeledCovariates {
  std::vector<double> covariates;
  bool label = false;
};

struct PropensityModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
  bool converged = false;
  int iterations = 0;
  // Sample SD (n-1) of the fitted scores on the training pool; caliper widths
  // derive from it.
  double score_sd = 0.0;
};

namespace detail {

inline double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// log(1 + e^eta) without overflow.
inline double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double log_likelihood(const Eigen::MatrixXd& design,
                             const Eigen::VectorXd& labels,
                             const Eigen::VectorXd& beta) {
  double ll = 0.0;
  const Eigen::VectorXd eta = design * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += labels[i] * eta[i] - softplus(eta[i]);
  }
  return ll;
}

}  // namespace detail

// Maximum-likelihood logistic fit. Newton steps with step halving, so the
// log-likelihood is non-decreasing across iterations; `ll_trace`, when given,
// receives the per-iteration log-likelihood for verification.
//
// Throws OneClassPoolError when every label is identical, SingularDesignError
// when the covariates are rank deficient, and SeparationError when the fit
// diverges (singular Hessian after the first step, or coefficients past the
// divergence guard) -- degenerate scores would corrupt every caliper width
// derived downstream.
inline PropensityModel fit_logistic(const std::vector<LabeledCovariates>& pool,
                                    int max_iter = 100, double tol = 1e-8,
                                    std::vector<double>* ll_trace = nullptr) {
  if (pool.empty()) throw std::invalid_argument("fit_logistic: empty pool");
  const std::size_t k = pool.front().covariates.size();
  const std::size_t n = pool.size();

  bool any_true = false, any_false = false;
  for (const auto& row : pool) (row.label ? any_true : any_false) = true;
  if (!any_true || !any_false) throw OneClassPoolError();

  Eigen::MatrixXd design(n, k + 1);
  Eigen::VectorXd labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = pool[i];
    if (row.covariates.size() != k) throw DimensionMismatchError(k, row.covariates.size());
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double x = row.covariates[j];
      if (!std::isfinite(x)) throw std::invalid_argument("fit_logistic: non-finite covariate");
      design(i, j + 1) = x;
    }
    labels[i] = row.label ? 1.0 : 0.0;
  }

  constexpr double kDivergenceGuard = 1e3;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  double ll = detail::log_likelihood(design, labels, beta);
  if (ll_trace) ll_trace->push_back(ll);

  PropensityModel model;
  model.coefficients.assign(k, 0.0);

  for (int iter = 1; iter <= max_iter; ++iter) {
    model.iterations = iter;
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd probs(n), weights(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = detail::sigmoid(eta[i]);
      weights[i] = probs[i] * (1.0 - probs[i]);
    }
    const Eigen::MatrixXd hessian =
        design.transpose() * weights.asDiagonal() * design;
    const Eigen::VectorXd gradient = design.transpose() * (labels - probs);

    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) {
      // With beta = 0 the weights are constant, so a singular Hessian here
      // means the design itself is rank deficient; later on it means the
      // weights collapsed, i.e. separation.
      if (iter == 1) throw SingularDesignError();
      throw SeparationError();
    }
    const Eigen::VectorXd direction = llt.solve(gradient);

    // Step halving keeps the log-likelihood monotone.
    double step = 1.0;
    Eigen::VectorXd candidate;
    double candidate_ll = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = beta + step * direction;
      candidate_ll = detail::log_likelihood(design, labels, candidate);
      if (candidate_ll >= ll - 1e-12) break;
      step *= 0.5;
    }
    const double max_change = (step * direction).cwiseAbs().maxCoeff();
    beta = candidate;
    ll = candidate_ll;
    if (ll_trace) ll_trace->push_back(ll);

    if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > kDivergenceGuard) {
      throw SeparationError();
    }
    if (max_change < tol) {
      model.converged = true;
      break;
    }
  }

  model.intercept = beta[0];
  for (std::size_t j = 0; j < k; ++j) model.coefficients[j] = beta[j + 1];

  // Sample SD of fitted scores on the training pool, same clamp as predict().
  constexpr double kEps = 1e-12;
  double mean = 0.0;
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = model.intercept;
    for (std::size_t j = 0; j < k; ++j) eta += model.coefficients[j] * design(i, j + 1);
    scores[i] = std::min(1.0 - kEps, std::max(kEps, detail::sigmoid(eta)));
    mean += scores[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  model.score_sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return model;
}

// Propensity score for one covariate vector, clamped away from {0, 1} so the
// logit transform stays finite.
inline double predict(const PropensityModel& model, const std::vector<double>& covariates) {
  if (covariates.size() != model.coefficients.size()) {
    throw DimensionMismatchError(model.coefficients.size(), covariates.size());
  }
  double eta = model.intercept;
  for (std::size_t j = 0; j < covariates.size(); ++j) {
    eta += model.coefficients[j] * covariates[j];
  }
  constexpr double kEps = 1e-12;
  const double score = detail::sigmoid(eta);
  return std::min(1.0 - kEps, std::max(kEps, score));
}

}  // namespace rcsmatch
