#pragma once

// Greedy one-to-one nearest-neighbor matching with optional caliper pruning.
//
// Reference units are visited in a seeded random order (the paper's "randomly
// selected" treated subject); each takes the nearest remaining pool unit,
// unless that distance exceeds the caliper, in which case the reference unit
// goes unmatched and the pool is left untouched. Matched pool units are
// dropped from the pool by default.
//
// Determinism contract: results depend only on the unit sets and the rng
// state, never on input ordering (units are sorted by id before the seeded
// shuffle), and nearest-neighbor ties break toward the lower pool id.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "rcsmatch/rng.hpp"

namespace rcsmatch {

template <typename Value>
struct MatchUnit {
  std::int64_t id;
  Value value;
};

struct MatchedPairRecord {
  std::int64_t reference_id;
  std::int64_t pool_id;
  double distance;
};

struct MatchResult {
  std::vector<MatchedPairRecord> pairs;            // in visit order
  std::vector<std::int64_t> unmatched_reference_ids;  // in visit order
  std::vector<std::int64_t> consumed_pool_ids;     // in consumption order
};

// Core greedy pass. References are visited in the order given (the caller
// owns that order); the pool is scanned in ascending id so ties break toward
// the lower pool id.
template <typename Value, typename Metric>
MatchResult greedy_nn_match_ordered(const std::vector<MatchUnit<Value>>& reference,
                                    std::vector<MatchUnit<Value>> pool,
                                    Metric&& metric, std::optional<double> caliper,
                                    bool with_replacement = false) {
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<bool> taken(pool.size(), false);
  MatchResult result;
  result.pairs.reserve(std::min(reference.size(), pool.size()));

  for (const MatchUnit<Value>& ref : reference) {
    std::size_t best = pool.size();
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (!with_replacement && taken[j]) continue;
      const double d = metric(ref.value, pool[j].value);
      if (d < best_distance) {
        best_distance = d;
        best = j;
      }
    }
    if (best == pool.size() || (caliper && best_distance > *caliper)) {
      result.unmatched_reference_ids.push_back(ref.id);
      continue;
    }
    result.pairs.push_back({ref.id, pool[best].id, best_distance});
    if (!taken[best]) {
      taken[best] = true;
      result.consumed_pool_ids.push_back(pool[best].id);
    }
  }
  return result;
}

template <typename Value, typename Metric>
MatchResult greedy_nn_match(std::vector<MatchUnit<Value>> reference,
                            std::vector<MatchUnit<Value>> pool, Metric&& metric,
                            std::optional<double> caliper, std::mt19937_64& rng,
                            bool with_replacement = false) {
  std::sort(reference.begin(), reference.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  deterministic_shuffle(reference, rng);
  return greedy_nn_match_ordered(reference, std::move(pool),
                                 std::forward<Metric>(metric), caliper,
                                 with_replacement);
}

}  // namespace rcsmatch
