#pragma once

// Standardized-difference imbalance diagnostics across the four group
// comparisons: cross-sectional BT:BC and AT:AC, longitudinal BT:AT and BC:AC.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"

namespace rcsmatch {

enum class Comparison : std::uint8_t { bt_bc, at_ac, bt_at, bc_ac };

constexpr Comparison kAllComparisons[] = {Comparison::bt_bc, Comparison::at_ac,
                                          Comparison::bt_at, Comparison::bc_ac};

inline const char* comparison_name(Comparison c) {
  switch (c) {
    case Comparison::bt_bc: return "BT:BC";
    case Comparison::at_ac: return "AT:AC";
    case Comparison::bt_at: return "BT:AT";
    case Comparison::bc_ac: return "BC:AC";
  }
  return "?";
}

// |mean_t - mean_c| / sqrt((s_t^2 + s_c^2) / 2), sample variances (n-1).
// Zero when both variances vanish with equal means; DegenerateSamplesError
// when both variances vanish with different means.
inline double standardized_difference(const std::vector<double>& sample_t,
                                      const std::vector<double>& sample_c) {
  if (sample_t.size() < 2 || sample_c.size() < 2) {
    throw std::invalid_argument("standardized_difference: samples need size >= 2");
  }
  const auto moments = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::pair<double, double>(mean, ss / static_cast<double>(xs.size() - 1));
  };
  const auto [mean_t, var_t] = moments(sample_t);
  const auto [mean_c, var_c] = moments(sample_c);
  if (var_t == 0.0 && var_c == 0.0) {
    if (mean_t == mean_c) return 0.0;
    throw DegenerateSamplesError();
  }
  return std::abs(mean_t - mean_c) / std::sqrt((var_t + var_c) / 2.0);
}

struct BalanceEntry {
  Comparison comparison;
  int covariate;  // 0-based index
  double delta;
  bool balanced;
};

struct BalanceReport {
  std::vector<BalanceEntry> entries;  // one per (comparison, covariate)
  double threshold = 0.10;
};

constexpr double kBalanceThreshold = 0.10;

// One delta per (comparison, covariate), flagged against the threshold.
inline BalanceReport balance_report(const Quad& quad,
                                    double threshold = kBalanceThreshold) {
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).size() < 2) {
      throw std::invalid_argument(std::string("balance_report: group ") +
                                  group_name(g) + " needs size >= 2");
    }
  }
  const std::size_t k = quad.bt.front().covariates.size();
  const auto column = [](const std::vector<Observation>& group, std::size_t j) {
    std::vector<double> xs;
    xs.reserve(group.size());
    for (const Observation& obs : group) xs.push_back(obs.covariates[j]);
    return xs;
  };
  const auto sides = [&](Comparison c) {
    switch (c) {
      case Comparison::bt_bc: return std::pair(&quad.bt, &quad.bc);
      case Comparison::at_ac: return std::pair(&quad.at, &quad.ac);
      case Comparison::bt_at: return std::pair(&quad.bt, &quad.at);
      default: return std::pair(&quad.bc, &quad.ac);
    }
  };

  BalanceReport report;
  report.threshold = threshold;
  for (Comparison c : kAllComparisons) {
    const auto [t_group, c_group] = sides(c);
    for (std::size_t j = 0; j < k; ++j) {
      const double delta =
          standardized_difference(column(*t_group, j), column(*c_group, j));
      report.entries.push_back(
          {c, static_cast<int>(j), delta, delta <= threshold});
    }
  }
  return report;
}

inline BalanceReport balance_report(const MatchedQuad& matched,
                                    double threshold = kBalanceThreshold) {
  return balance_report(matched.groups, threshold);
}

inline BalanceReport balance_report(const MatchedSlices& slices,
                                    double threshold = kBalanceThreshold) {
  return balance_report(slices.groups, threshold);
}

}  // namespace rcsmatch
