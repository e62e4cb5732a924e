#pragma once

// Domain types shared by every stage of the matching pipeline: survey
// observations, the four-group before/after x treated/control partition, and
// matching-scheme configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "rcsmatch/errors.hpp"

namespace rcsmatch {

enum class Period : std::uint8_t { before, after };

// One survey respondent. Covariate length must be constant across a dataset;
// partition() infers it from the first observation and enforces it.
struct Observation {
  std::int64_t id = 0;
  std::vector<double> covariates;
  bool treated = false;
  Period period = Period::before;
  double outcome = 0.0;
};

enum class GroupLabel : std::uint8_t { bt, bc, at, ac };

inline const char* group_name(GroupLabel g) {
  switch (g) {
    case GroupLabel::bt: return "BT";
    case GroupLabel::bc: return "BC";
    case GroupLabel::at: return "AT";
    case GroupLabel::ac: return "AC";
  }
  return "?";
}

inline std::optional<GroupLabel> parse_group(const std::string& s) {
  if (s == "BT") return GroupLabel::bt;
  if (s == "BC") return GroupLabel::bc;
  if (s == "AT") return GroupLabel::at;
  if (s == "AC") return GroupLabel::ac;
  return std::nullopt;
}

// The four disjoint groups: before-treated, before-control, after-treated,
// after-control.
struct Quad {
  std::vector<Observation> bt;
  std::vector<Observation> bc;
  std::vector<Observation> at;
  std::vector<Observation> ac;

  const std::vector<Observation>& group(GroupLabel g) const {
    switch (g) {
      case GroupLabel::bt: return bt;
      case GroupLabel::bc: return bc;
      case GroupLabel::at: return at;
      default: return ac;
    }
  }

  std::vector<Observation>& group(GroupLabel g) {
    return const_cast<std::vector<Observation>&>(
        static_cast<const Quad*>(this)->group(g));
  }

  std::size_t size() const {
    return bt.size() + bc.size() + at.size() + ac.size();
  }
};

constexpr GroupLabel kAllGroups[] = {GroupLabel::bt, GroupLabel::bc,
                                     GroupLabel::at, GroupLabel::ac};

// --- matching schemes -------------------------------------------------------

enum class SchemeTag : std::uint8_t { naive, one_d, two_d_1, two_d_2, two_d_3 };

enum class LongitudinalMetric : std::uint8_t { none, psm, mdm };

// A matching scheme: which metric runs in each dimension and how wide the
// calipers are. Calipers are multipliers of the propensity-score standard
// deviation; for the Mahalanobis metric the longitudinal caliper is an
// absolute distance bound (there is no score SD to scale by).
struct Scheme {
  SchemeTag tag = SchemeTag::naive;
  std::optional<double> cross_caliper;
  LongitudinalMetric longitudinal = LongitudinalMetric::none;
  std::optional<double> longitudinal_caliper;

  static Scheme naive() { return {SchemeTag::naive, {}, LongitudinalMetric::none, {}}; }
  static Scheme one_d() { return {SchemeTag::one_d, 0.2, LongitudinalMetric::none, {}}; }
  static Scheme two_d_1() { return {SchemeTag::two_d_1, 1.0, LongitudinalMetric::mdm, {}}; }
  static Scheme two_d_2() { return {SchemeTag::two_d_2, 0.2, LongitudinalMetric::psm, 0.2}; }
  static Scheme two_d_3() { return {SchemeTag::two_d_3, 1.0, LongitudinalMetric::psm, 1.0}; }
};

inline const char* scheme_name(SchemeTag tag) {
  switch (tag) {
    case SchemeTag::naive: return "naive";
    case SchemeTag::one_d: return "1d";
    case SchemeTag::two_d_1: return "2d-1";
    case SchemeTag::two_d_2: return "2d-2";
    case SchemeTag::two_d_3: return "2d-3";
  }
  return "?";
}

inline std::optional<SchemeTag> parse_scheme_tag(const std::string& s) {
  if (s == "naive") return SchemeTag::naive;
  if (s == "1d") return SchemeTag::one_d;
  if (s == "2d-1") return SchemeTag::two_d_1;
  if (s == "2d-2") return SchemeTag::two_d_2;
  if (s == "2d-3") return SchemeTag::two_d_3;
  return std::nullopt;
}

inline Scheme default_scheme(SchemeTag tag) {
  switch (tag) {
    case SchemeTag::naive: return Scheme::naive();
    case SchemeTag::one_d: return Scheme::one_d();
    case SchemeTag::two_d_1: return Scheme::two_d_1();
    case SchemeTag::two_d_2: return Scheme::two_d_2();
    case SchemeTag::two_d_3: return Scheme::two_d_3();
  }
  return Scheme::naive();
}

// --- matched samples ----------------------------------------------------------

// Which pair of groups a match connects; the first-named group is the
// reference side of the greedy pass.
enum class PairKind : std::uint8_t { bt_at, bt_bc, bc_ac, at_ac };

inline const char* pair_kind_name(PairKind k) {
  switch (k) {
    case PairKind::bt_at: return "BT:AT";
    case PairKind::bt_bc: return "BT:BC";
    case PairKind::bc_ac: return "BC:AC";
    case PairKind::at_ac: return "AT:AC";
  }
  return "?";
}

struct ProtocolPair {
  PairKind kind;
  std::int64_t first_id;   // reference-side unit
  std::int64_t second_id;  // pool-side unit
  double distance;
  int round;
};

// Output of the iterative four-group protocol: equal-size groups plus the
// full pair history (all rounds, tagged).
struct MatchedQuad {
  Quad groups;
  std::vector<ProtocolPair> pairs;
  int rounds_used = 0;
};

// Output of one-dimensional matching: the before and after slices are paired
// independently and may end up with different sizes.
struct MatchedSlices {
  Quad groups;
  std::vector<ProtocolPair> pairs;
};

// --- operations -----------------------------------------------------------------

// Splits a dataset into the four groups. Ids must be unique and covariate
// length constant (inferred from the first observation).
inline Quad partition(const std::vector<Observation>& dataset) {
  Quad quad;
  std::unordered_set<std::int64_t> seen;
  seen.reserve(dataset.size());
  const std::size_t k = dataset.empty() ? 0 : dataset.front().covariates.size();
  for (const Observation& obs : dataset) {
    if (!seen.insert(obs.id).second) {
      throw DuplicateIdError(obs.id);
    }
    if (obs.covariates.size() != k) {
      throw RaggedCovariatesError(obs.id, k, obs.covariates.size());
    }
    if (obs.period == Period::before) {
      (obs.treated ? quad.bt : quad.bc).push_back(obs);
    } else {
      (obs.treated ? quad.at : quad.ac).push_back(obs);
    }
  }
  return quad;
}

struct ValidationIssue {
  enum class Kind { empty_group, covariate_length, non_finite } kind;
  std::string message;
  std::optional<std::int64_t> id;
};

// Diagnostic sweep over a quad; returns an empty report iff it is well formed.
inline std::vector<ValidationIssue> validate_quad(const Quad& quad) {
  std::vector<ValidationIssue> issues;
  std::optional<std::size_t> k;
  for (GroupLabel g : kAllGroups) {
    const auto& obs_list = quad.group(g);
    if (obs_list.empty()) {
      issues.push_back({ValidationIssue::Kind::empty_group,
                        std::string("empty group ") + group_name(g),
                        std::nullopt});
    }
    for (const Observation& obs : obs_list) {
      if (!k) k = obs.covariates.size();
      if (obs.covariates.size() != *k) {
        issues.push_back({ValidationIssue::Kind::covariate_length,
                          "observation " + std::to_string(obs.id) + " has " +
                              std::to_string(obs.covariates.size()) +
                              " covariates, expected " + std::to_string(*k),
                          obs.id});
      }
      bool finite = std::isfinite(obs.outcome);
      for (double x : obs.covariates) finite = finite && std::isfinite(x);
      if (!finite) {
        issues.push_back({ValidationIssue::Kind::non_finite,
                          "observation " + std::to_string(obs.id) +
                              " has a non-finite value",
                          obs.id});
      }
    }
  }
  return issues;
}

// Sorts each group by id in place; gives protocol outputs a canonical order.
inline void sort_groups_by_id(Quad& quad) {
  for (GroupLabel g : kAllGroups) {
    auto& group = quad.group(g);
    std::sort(group.begin(), group.end(),
              [](const Observation& a, const Observation& b) { return a.id < b.id; });
  }
}

}  // namespace rcsmatch
