#pragma once

// The two-dimensional matching protocol: each round matches
//   (a) BT against AT   (longitudinal metric),
//   (b) surviving BT against BC   (cross-sectional propensity score),
//   (c) surviving BC against AC   (longitudinal metric),
//   (d) surviving AT against surviving AC   (cross-sectional propensity score),
// where the group named first is the reference side. Survivors of each step
// form the next step's groups; the loop repeats on survivors until all four
// groups have equal cardinality or the round budget runs out.
//
// Each step's propensity model and caliper are fit once, in round 1, on that
// step's training pool (the two groups' union) and reused in later rounds;
// the caliper is the scheme multiplier times the score SD of the training
// pool. Matching order is one seeded shuffle of the whole quad, frozen for
// the run; every step visits its reference units in that order. Both choices
// serve the termination condition: re-deriving calipers from the survivors'
// shrinking score spread (or re-shuffling every pass) keeps the per-round
// loss rate positive forever and the loop can never equalize, while against
// a fixed caliper and a stable visit order re-matching is idempotent, so the
// survivor sets tighten to a fixpoint round whose chain loses nothing and
// whose four groups are equal by construction.
//
// When a fit collapses to identical scores (e.g. exactly twin groups) the
// caliper width is zero and only exact score ties can pair, which is the
// right degenerate limit.
//
// A perfectly separable step pool means the two groups share no common
// support: every pair would be pruned, so the step empties the group rather
// than surfacing the fit divergence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rcsmatch/core.hpp"
#include "rcsmatch/distance.hpp"
#include "rcsmatch/errors.hpp"
#include "rcsmatch/matcher.hpp"
#include "rcsmatch/propensity.hpp"

namespace rcsmatch {

enum class CaliperScale : std::uint8_t { probability, logit };

struct ProtocolConfig {
  Scheme scheme;
  int max_rounds = 20;
  std::uint64_t seed = 0;
  CaliperScale caliper_scale = CaliperScale::probability;
  bool with_replacement = false;
};

// Logistic fit on the union of a step's two groups, label = membership in
// group_a. Steps fit in round 1 and reuse the model afterwards.
inline PropensityModel propensity_for_step(const std::vector<Observation>& group_a,
                                           const std::vector<Observation>& group_b,
                                           int round) {
  std::vector<LabeledCovariates> pool;
  pool.reserve(group_a.size() + group_b.size());
  for (const Observation& obs : group_a) pool.push_back({obs.covariates, true});
  for (const Observation& obs : group_b) pool.push_back({obs.covariates, false});
  try {
    return fit_logistic(pool);
  } catch (const OneClassPoolError&) {
    throw OneClassPoolError("propensity fit in round " + std::to_string(round) +
                            ": a group is empty");
  }
}

namespace detail {

struct StepOutcome {
  MatchResult result;
  std::vector<Observation> matched_reference;  // reference units that paired
  std::vector<Observation> consumed_pool;      // pool units they consumed
};

inline std::vector<Observation> select_by_id(const std::vector<Observation>& group,
                                             const std::vector<std::int64_t>& ids) {
  std::unordered_set<std::int64_t> wanted(ids.begin(), ids.end());
  std::vector<Observation> out;
  out.reserve(ids.size());
  for (const Observation& obs : group) {
    if (wanted.count(obs.id)) out.push_back(obs);
  }
  return out;
}

// One seeded shuffle of the quad's ids, frozen for the protocol run. Steps
// visit their reference units by this rank.
using VisitOrder = std::unordered_map<std::int64_t, std::uint32_t>;

inline VisitOrder make_visit_order(const Quad& quad, std::mt19937_64& rng) {
  std::vector<std::int64_t> ids;
  ids.reserve(quad.size());
  for (GroupLabel g : kAllGroups) {
    for (const Observation& obs : quad.group(g)) ids.push_back(obs.id);
  }
  std::sort(ids.begin(), ids.end());
  deterministic_shuffle(ids, rng);
  VisitOrder order;
  order.reserve(ids.size());
  for (std::size_t rank = 0; rank < ids.size(); ++rank) {
    order.emplace(ids[rank], static_cast<std::uint32_t>(rank));
  }
  return order;
}

template <typename Value>
void sort_by_visit_order(std::vector<MatchUnit<Value>>& units, const VisitOrder& order) {
  std::sort(units.begin(), units.end(),
            [&order](const MatchUnit<Value>& a, const MatchUnit<Value>& b) {
              return order.at(a.id) < order.at(b.id);
            });
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Scoring state for one protocol step, fit in round 1 and reused afterwards.
struct StepScoring {
  PropensityModel model;
  std::optional<double> caliper;
};

// Propensity-score step: fit on the union when no cached scoring exists,
// score both sides (optionally on the logit scale), caliper = multiplier x
// score SD of the training pool.
inline StepOutcome psm_step(const std::vector<Observation>& reference,
                            const std::vector<Observation>& pool,
                            std::optional<double> caliper_multiplier,
                            CaliperScale scale, int round, const VisitOrder& order,
                            bool with_replacement,
                            std::optional<StepScoring>* cache = nullptr) {
  const auto score_with = [&](const PropensityModel& model, const Observation& obs) {
    const double p = predict(model, obs.covariates);
    return scale == CaliperScale::logit ? logit(p) : p;
  };

  const StepScoring* scoring = nullptr;
  std::optional<StepScoring> local;
  if (cache && cache->has_value()) {
    scoring = &cache->value();
  } else {
    StepScoring fresh;
    fresh.model = propensity_for_step(reference, pool, round);
    if (caliper_multiplier) {
      std::vector<double> training_scores;
      training_scores.reserve(reference.size() + pool.size());
      for (const Observation& obs : reference) {
        training_scores.push_back(score_with(fresh.model, obs));
      }
      for (const Observation& obs : pool) {
        training_scores.push_back(score_with(fresh.model, obs));
      }
      fresh.caliper = *caliper_multiplier * sample_sd(training_scores);
    }
    if (cache) {
      *cache = std::move(fresh);
      scoring = &cache->value();
    } else {
      local = std::move(fresh);
      scoring = &local.value();
    }
  }

  std::vector<MatchUnit<double>> ref_units, pool_units;
  ref_units.reserve(reference.size());
  pool_units.reserve(pool.size());
  for (const Observation& obs : reference) {
    ref_units.push_back({obs.id, score_with(scoring->model, obs)});
  }
  for (const Observation& obs : pool) {
    pool_units.push_back({obs.id, score_with(scoring->model, obs)});
  }
  sort_by_visit_order(ref_units, order);

  StepOutcome out;
  out.result = greedy_nn_match_ordered(ref_units, std::move(pool_units),
                                       ps_distance, scoring->caliper, with_replacement);
  std::vector<std::int64_t> matched_ids;
  matched_ids.reserve(out.result.pairs.size());
  for (const auto& pair : out.result.pairs) matched_ids.push_back(pair.reference_id);
  out.matched_reference = select_by_id(reference, matched_ids);
  out.consumed_pool = select_by_id(pool, out.result.consumed_pool_ids);
  return out;
}

// Mahalanobis step: pooled covariance over the union, recomputed this round;
// nearest-neighbor search runs in whitened coordinates. The caliper, when
// configured, is an absolute distance bound.
inline StepOutcome mdm_step(const std::vector<Observation>& reference,
                            const std::vector<Observation>& pool,
                            std::optional<double> caliper, int round,
                            const VisitOrder& order, bool with_replacement) {
  std::vector<std::vector<double>> ref_covs, pool_covs;
  ref_covs.reserve(reference.size());
  pool_covs.reserve(pool.size());
  for (const Observation& obs : reference) ref_covs.push_back(obs.covariates);
  for (const Observation& obs : pool) pool_covs.push_back(obs.covariates);
  MahalanobisContext ctx;
  try {
    ctx = pooled_covariance(ref_covs, pool_covs);
  } catch (const SingularCovarianceError& e) {
    throw SingularCovarianceError("round " + std::to_string(round) + ": " + e.what());
  }

  std::vector<MatchUnit<std::vector<double>>> ref_units, pool_units;
  ref_units.reserve(reference.size());
  pool_units.reserve(pool.size());
  for (const Observation& obs : reference) ref_units.push_back({obs.id, whiten(ctx, obs.covariates)});
  for (const Observation& obs : pool) pool_units.push_back({obs.id, whiten(ctx, obs.covariates)});
  sort_by_visit_order(ref_units, order);

  StepOutcome out;
  out.result = greedy_nn_match_ordered(ref_units, std::move(pool_units),
                                       euclidean, caliper, with_replacement);
  std::vector<std::int64_t> matched_ids;
  matched_ids.reserve(out.result.pairs.size());
  for (const auto& pair : out.result.pairs) matched_ids.push_back(pair.reference_id);
  out.matched_reference = select_by_id(reference, matched_ids);
  out.consumed_pool = select_by_id(pool, out.result.consumed_pool_ids);
  return out;
}

inline StepOutcome longitudinal_step(const std::vector<Observation>& reference,
                                     const std::vector<Observation>& pool,
                                     const Scheme& scheme, CaliperScale scale,
                                     int round, const VisitOrder& order,
                                     bool with_replacement,
                                     std::optional<StepScoring>* cache) {
  if (scheme.longitudinal == LongitudinalMetric::mdm) {
    return mdm_step(reference, pool, scheme.longitudinal_caliper, round, order,
                    with_replacement);
  }
  return psm_step(reference, pool, scheme.longitudinal_caliper, scale, round,
                  order, with_replacement, cache);
}

inline void append_pairs(std::vector<ProtocolPair>& all, const MatchResult& result,
                         PairKind kind, int round) {
  for (const auto& pair : result.pairs) {
    all.push_back({kind, pair.reference_id, pair.pool_id, pair.distance, round});
  }
}

inline void require_nonempty(const Quad& quad) {
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).empty()) throw EmptyGroupError(group_name(g));
  }
}

}  // namespace detail

// Runs the iterative four-group protocol for the 2D schemes. Deterministic
// given (quad, config.seed). Throws GroupEmptiedError when a step matches
// nothing (a group's survivors reach zero) and MaxRoundsExceededError when
// the group sizes never equalize.
inline MatchedQuad run_2dpsm(const Quad& quad, const ProtocolConfig& config) {
  const Scheme& scheme = config.scheme;
  if (scheme.tag != SchemeTag::two_d_1 && scheme.tag != SchemeTag::two_d_2 &&
      scheme.tag != SchemeTag::two_d_3) {
    throw SchemeMismatchError(std::string("run_2dpsm requires a 2d scheme, got ") +
                              scheme_name(scheme.tag));
  }
  if (config.max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  detail::require_nonempty(quad);

  std::mt19937_64 rng(config.seed);
  const detail::VisitOrder order = detail::make_visit_order(quad, rng);
  // Canonical id order inside each group: estimates and fits must not depend
  // on how the caller happened to order the input.
  std::vector<Observation> bt = quad.bt, bc = quad.bc, at = quad.at, ac = quad.ac;
  for (auto* group : {&bt, &bc, &at, &ac}) {
    std::sort(group->begin(), group->end(),
              [](const Observation& a, const Observation& b) { return a.id < b.id; });
  }
  std::vector<ProtocolPair> pairs;
  std::optional<detail::StepScoring> cache_a, cache_b, cache_c, cache_d;

  // No common support between a step's groups (a separable fit) prunes every
  // candidate pair, which empties the reference group.
  const auto emptied_on_separation = [](const char* group, int round, auto&& step) {
    try {
      return step();
    } catch (const SeparationError&) {
      throw GroupEmptiedError(group, round);
    }
  };

  for (int round = 1; round <= config.max_rounds; ++round) {
    // (a) BT vs AT, longitudinal
    auto step_a = emptied_on_separation("BT", round, [&] {
      return detail::longitudinal_step(bt, at, scheme, config.caliper_scale,
                                       round, order, config.with_replacement,
                                       &cache_a);
    });
    detail::append_pairs(pairs, step_a.result, PairKind::bt_at, round);
    if (step_a.matched_reference.empty()) throw GroupEmptiedError("BT", round);

    // (b) matched BT vs BC, cross-sectional PSM
    auto step_b = emptied_on_separation("BT", round, [&] {
      return detail::psm_step(step_a.matched_reference, bc, scheme.cross_caliper,
                              config.caliper_scale, round, order,
                              config.with_replacement, &cache_b);
    });
    detail::append_pairs(pairs, step_b.result, PairKind::bt_bc, round);
    if (step_b.matched_reference.empty()) throw GroupEmptiedError("BT", round);

    // (c) matched BC vs AC, longitudinal
    auto step_c = emptied_on_separation("BC", round, [&] {
      return detail::longitudinal_step(step_b.consumed_pool, ac, scheme,
                                       config.caliper_scale, round, order,
                                       config.with_replacement, &cache_c);
    });
    detail::append_pairs(pairs, step_c.result, PairKind::bc_ac, round);
    if (step_c.matched_reference.empty()) throw GroupEmptiedError("BC", round);

    // (d) matched AT vs matched AC, cross-sectional PSM
    auto step_d = emptied_on_separation("AT", round, [&] {
      return detail::psm_step(step_a.consumed_pool, step_c.consumed_pool,
                              scheme.cross_caliper, config.caliper_scale, round,
                              order, config.with_replacement, &cache_d);
    });
    detail::append_pairs(pairs, step_d.result, PairKind::at_ac, round);
    if (step_d.matched_reference.empty()) throw GroupEmptiedError("AT", round);

    bt = std::move(step_b.matched_reference);
    bc = std::move(step_c.matched_reference);
    at = std::move(step_d.matched_reference);
    ac = std::move(step_d.consumed_pool);

    if (bt.size() == bc.size() && bc.size() == at.size() && at.size() == ac.size()) {
      MatchedQuad matched;
      matched.groups.bt = std::move(bt);
      matched.groups.bc = std::move(bc);
      matched.groups.at = std::move(at);
      matched.groups.ac = std::move(ac);
      sort_groups_by_id(matched.groups);
      matched.pairs = std::move(pairs);
      matched.rounds_used = round;
      return matched;
    }
  }
  throw MaxRoundsExceededError(config.max_rounds);
}

// One-dimensional matching: BT vs BC and AT vs AC independently, propensity
// score with the scheme's cross-sectional caliper, no longitudinal pairing
// and no equal-size loop. The two slices may end up with different sizes.
inline MatchedSlices run_1d(const Quad& quad, const ProtocolConfig& config) {
  if (config.scheme.tag != SchemeTag::one_d) {
    throw SchemeMismatchError(std::string("run_1d requires the 1d scheme, got ") +
                              scheme_name(config.scheme.tag));
  }
  detail::require_nonempty(quad);

  std::mt19937_64 rng(config.seed);
  const detail::VisitOrder order = detail::make_visit_order(quad, rng);
  Quad sorted = quad;
  sort_groups_by_id(sorted);
  MatchedSlices slices;

  const auto slice = [&](const std::vector<Observation>& reference,
                         const std::vector<Observation>& pool, const char* group,
                         PairKind kind) {
    detail::StepOutcome out;
    try {
      out = detail::psm_step(reference, pool, config.scheme.cross_caliper,
                             config.caliper_scale, 1, order, config.with_replacement);
    } catch (const SeparationError&) {
      throw GroupEmptiedError(group, 1);
    }
    detail::append_pairs(slices.pairs, out.result, kind, 1);
    if (out.matched_reference.empty()) throw GroupEmptiedError(group, 1);
    return out;
  };

  auto before = slice(sorted.bt, sorted.bc, "BT", PairKind::bt_bc);
  auto after = slice(sorted.at, sorted.ac, "AT", PairKind::at_ac);

  slices.groups.bt = std::move(before.matched_reference);
  slices.groups.bc = std::move(before.consumed_pool);
  slices.groups.at = std::move(after.matched_reference);
  slices.groups.ac = std::move(after.consumed_pool);
  sort_groups_by_id(slices.groups);
  return slices;
}

}  // namespace rcsmatch
