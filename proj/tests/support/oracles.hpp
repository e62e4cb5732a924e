#pragma once

// Independent oracles used by the unit and acceptance suites. Each one is a
// deliberately naive computation that shares no code with the library path it
// checks: grid search instead of IRLS, explicit matrix inversion instead of
// QR, a literal replay instead of the matcher's internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracles {

// --- logistic MLE by brute-force grid search (k = 1) -------------------------

struct GridFit {
  double intercept;
  double slope;
};

// Maximizes the exact log-likelihood over (intercept, slope) in [-5,5]^2 at
// the given step. O(steps^2 * n); minutes-scale honest work, so callers keep
// pools tiny.
inline GridFit logistic_grid_search(const std::vector<std::pair<double, int>>& pool,
                                    double step = 1e-3) {
  const auto log_lik = [&pool](double a, double b) {
    double ll = 0.0;
    for (const auto& [x, y] : pool) {
      const double eta = a + b * x;
      const double softplus =
          eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      ll += y * eta - softplus;
    }
    return ll;
  };

  const int n_steps = static_cast<int>(std::lround(10.0 / step));
  GridFit best{0.0, 0.0};
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n_steps; ++i) {
    const double a = -5.0 + i * step;
    for (int j = 0; j <= n_steps; ++j) {
      const double b = -5.0 + j * step;
      const double ll = log_lik(a, b);
      if (ll > best_ll) {
        best_ll = ll;
        best = {a, b};
      }
    }
  }
  return best;
}

// --- ordinary least squares via normal equations ------------------------------

// Solves (X'X) beta = X'y by Gauss-Jordan elimination with explicit inversion
// and returns {beta, se(beta)} with classical homoskedastic standard errors.
struct NormalEquationsFit {
  std::vector<double> beta;
  std::vector<double> se;
};

inline std::vector<std::vector<double>> invert_matrix(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (std::abs(m[pivot][col]) < 1e-12) {
      throw std::runtime_error("oracle: singular matrix");
    }
    std::swap(m[col], m[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double scale = m[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      m[col][c] /= scale;
      inv[col][c] /= scale;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = m[r][col];
      for (std::size_t c = 0; c < n; ++c) {
        m[r][c] -= factor * m[col][c];
        inv[r][c] -= factor * inv[col][c];
      }
    }
  }
  return inv;
}

inline NormalEquationsFit ols_normal_equations(const std::vector<std::vector<double>>& design,
                                               const std::vector<double>& outcome) {
  const std::size_t n = design.size();
  const std::size_t p = design.front().size();
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += design[i][a] * outcome[i];
      for (std::size_t b = 0; b < p; ++b) xtx[a][b] += design[i][a] * design[i][b];
    }
  }
  const auto inv = invert_matrix(xtx);
  NormalEquationsFit fit;
  fit.beta.assign(p, 0.0);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) fit.beta[a] += inv[a][b] * xty[b];
  }
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fitted = 0.0;
    for (std::size_t a = 0; a < p; ++a) fitted += design[i][a] * fit.beta[a];
    rss += (outcome[i] - fitted) * (outcome[i] - fitted);
  }
  const double sigma2 = rss / static_cast<double>(n - p);
  fit.se.assign(p, 0.0);
  for (std::size_t a = 0; a < p; ++a) fit.se[a] = std::sqrt(sigma2 * inv[a][a]);
  return fit;
}

// --- seeded greedy replay ------------------------------------------------------

struct ReplayPair {
  std::int64_t reference_id;
  std::int64_t pool_id;
  double distance;
};

// Literal replay of the seeded greedy pass: reproduce the shuffle draw for
// draw, then walk the references taking the nearest remaining pool unit
// (ties to the lower id), pruning past the caliper.
inline std::vector<ReplayPair> greedy_replay(
    std::vector<std::pair<std::int64_t, double>> reference,
    std::vector<std::pair<std::int64_t, double>> pool, double caliper,
    bool has_caliper, std::uint64_t seed) {
  std::sort(reference.begin(), reference.end());
  std::sort(pool.begin(), pool.end());

  std::mt19937_64 rng(seed);
  const auto uniform_below = [&rng](std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    return r % n;
  };
  for (std::size_t i = reference.size(); i > 1; --i) {
    std::swap(reference[i - 1], reference[uniform_below(i)]);
  }

  std::vector<bool> taken(pool.size(), false);
  std::vector<ReplayPair> pairs;
  for (const auto& [ref_id, ref_value] : reference) {
    std::size_t best = pool.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (taken[j]) continue;
      const double d = std::abs(ref_value - pool[j].second);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best == pool.size() || (has_caliper && best_d > caliper)) continue;
    taken[best] = true;
    pairs.push_back({ref_id, pool[best].first, best_d});
  }
  return pairs;
}

}  // namespace oracles
