#pragma once

// Optional JSON run configuration. Every value is validated against the same
// invariants as the native types and unknown keys are rejected, so a typo in
// a config file fails loudly instead of silently running defaults.

#include <Eigen/Cholesky>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcsmatch/balance.hpp"
#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"
#include "rcsmatch/protocol.hpp"
#include "rcsmatch/simulator.hpp"

namespace rcsmatch {

struct RunConfig {
  DgpParams dgp;
  StudyOptions options;
  double balance_threshold = kBalanceThreshold;
  std::map<SchemeTag, Scheme> schemes = {
      {SchemeTag::naive, Scheme::naive()},   {SchemeTag::one_d, Scheme::one_d()},
      {SchemeTag::two_d_1, Scheme::two_d_1()}, {SchemeTag::two_d_2, Scheme::two_d_2()},
      {SchemeTag::two_d_3, Scheme::two_d_3()}};
};

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& key : allowed) known = known || key == item.key();
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

inline double require_number(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return obj.at(key).get<double>();
}

inline int require_int(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number_integer()) {
    throw ConfigError(where + "." + key + ": expected an integer");
  }
  return obj.at(key).get<int>();
}

inline void apply_dgp(const Json& obj, DgpParams& dgp) {
  const std::string where = "dgp";
  reject_unknown_keys(obj,
                      {"k", "cov_within_pair", "cov_between_pair", "bt_shift",
                       "shift_levels", "treatment_effect", "outcome_beta",
                       "error_variance", "pool_size", "n_per_period",
                       "treated_counts", "replications"},
                      where);
  if (obj.contains("k")) dgp.k = require_int(obj, "k", where);
  if (obj.contains("cov_within_pair")) dgp.cov_within_pair = require_number(obj, "cov_within_pair", where);
  if (obj.contains("cov_between_pair")) dgp.cov_between_pair = require_number(obj, "cov_between_pair", where);
  if (obj.contains("bt_shift")) dgp.bt_shift = require_number(obj, "bt_shift", where);
  if (obj.contains("shift_levels")) {
    const auto& arr = obj.at("shift_levels");
    if (!arr.is_array() || arr.size() != dgp.shift_levels.size()) {
      throw ConfigError("dgp.shift_levels: expected an array of 5 numbers");
    }
    for (std::size_t i = 0; i < dgp.shift_levels.size(); ++i) {
      dgp.shift_levels[i] = arr.at(i).get<double>();
    }
  }
  if (obj.contains("treatment_effect")) dgp.treatment_effect = require_number(obj, "treatment_effect", where);
  if (obj.contains("outcome_beta")) {
    const auto& arr = obj.at("outcome_beta");
    if (!arr.is_array()) throw ConfigError("dgp.outcome_beta: expected an array");
    dgp.outcome_beta.clear();
    for (const auto& v : arr) dgp.outcome_beta.push_back(v.get<double>());
  }
  if (obj.contains("error_variance")) dgp.error_variance = require_number(obj, "error_variance", where);
  if (obj.contains("pool_size")) dgp.pool_size = require_int(obj, "pool_size", where);
  if (obj.contains("n_per_period")) dgp.n_per_period = require_int(obj, "n_per_period", where);
  if (obj.contains("treated_counts")) {
    const auto& arr = obj.at("treated_counts");
    if (!arr.is_array() || arr.size() != dgp.treated_counts.size()) {
      throw ConfigError("dgp.treated_counts: expected an array of 3 integers");
    }
    for (std::size_t i = 0; i < dgp.treated_counts.size(); ++i) {
      dgp.treated_counts[i] = arr.at(i).get<int>();
    }
  }
  if (obj.contains("replications")) dgp.replications = require_int(obj, "replications", where);
}

inline void apply_protocol(const Json& obj, StudyOptions& options) {
  const std::string where = "protocol";
  reject_unknown_keys(obj, {"max_rounds", "caliper_scale", "with_replacement"}, where);
  if (obj.contains("max_rounds")) options.max_rounds = require_int(obj, "max_rounds", where);
  if (obj.contains("caliper_scale")) {
    const std::string scale = obj.at("caliper_scale").get<std::string>();
    if (scale == "probability") {
      options.caliper_scale = CaliperScale::probability;
    } else if (scale == "logit") {
      options.caliper_scale = CaliperScale::logit;
    } else {
      throw ConfigError("protocol.caliper_scale: expected 'probability' or 'logit'");
    }
  }
  if (obj.contains("with_replacement")) {
    if (!obj.at("with_replacement").is_boolean()) {
      throw ConfigError("protocol.with_replacement: expected a boolean");
    }
    options.with_replacement = obj.at("with_replacement").get<bool>();
  }
}

inline void apply_scheme(const Json& obj, const std::string& name, Scheme& scheme) {
  const std::string where = "schemes." + name;
  reject_unknown_keys(obj, {"cross_caliper", "longitudinal_metric", "longitudinal_caliper"},
                      where);
  if (obj.contains("cross_caliper")) {
    if (obj.at("cross_caliper").is_null()) {
      scheme.cross_caliper.reset();
    } else {
      scheme.cross_caliper = require_number(obj, "cross_caliper", where);
      if (!(*scheme.cross_caliper > 0.0)) {
        throw ConfigError(where + ".cross_caliper: must be positive");
      }
    }
  }
  if (obj.contains("longitudinal_metric")) {
    const std::string metric = obj.at("longitudinal_metric").get<std::string>();
    if (metric == "none") {
      scheme.longitudinal = LongitudinalMetric::none;
    } else if (metric == "psm") {
      scheme.longitudinal = LongitudinalMetric::psm;
    } else if (metric == "mdm") {
      scheme.longitudinal = LongitudinalMetric::mdm;
    } else {
      throw ConfigError(where + ".longitudinal_metric: expected none/psm/mdm");
    }
  }
  if (obj.contains("longitudinal_caliper")) {
    if (obj.at("longitudinal_caliper").is_null()) {
      scheme.longitudinal_caliper.reset();
    } else {
      scheme.longitudinal_caliper = require_number(obj, "longitudinal_caliper", where);
      if (!(*scheme.longitudinal_caliper > 0.0)) {
        throw ConfigError(where + ".longitudinal_caliper: must be positive");
      }
    }
  }
}

inline void validate(const RunConfig& config) {
  const DgpParams& dgp = config.dgp;
  if (dgp.k < 1) throw ConfigError("dgp.k: must be >= 1");
  if (dgp.outcome_beta.size() != static_cast<std::size_t>(dgp.k)) {
    throw ConfigError("dgp.outcome_beta: length must equal dgp.k");
  }
  if (!(dgp.error_variance > 0.0)) throw ConfigError("dgp.error_variance: must be positive");
  if (!(dgp.treatment_effect != 0.0)) {
    throw ConfigError("dgp.treatment_effect: must be nonzero (bias ratio divides by it)");
  }
  if (dgp.n_per_period < 2) throw ConfigError("dgp.n_per_period: must be >= 2");
  for (int count : dgp.treated_counts) {
    if (count < 1 || count >= dgp.n_per_period) {
      throw ConfigError("dgp.treated_counts: each count must be in [1, n_per_period)");
    }
  }
  if (dgp.pool_size < dgp.n_per_period) {
    throw ConfigError("dgp.pool_size: must be >= n_per_period");
  }
  if (dgp.replications < 1) throw ConfigError("dgp.replications: must be >= 1");
  Eigen::LLT<Eigen::MatrixXd> llt(dgp.covariance());
  if (llt.info() != Eigen::Success) {
    throw ConfigError("dgp covariance is not positive definite");
  }
  if (config.options.max_rounds < 1) throw ConfigError("protocol.max_rounds: must be >= 1");
  if (!(config.balance_threshold > 0.0)) {
    throw ConfigError("balance_threshold: must be positive");
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  RunConfig config;
  detail::reject_unknown_keys(root, {"dgp", "protocol", "schemes", "threads", "balance_threshold"},
                              "config");
  if (root.contains("threads")) {
    config.options.threads = detail::require_int(root, "threads", "config");
    if (config.options.threads < 0) throw ConfigError("threads: must be >= 0");
  }
  if (root.contains("balance_threshold")) {
    config.balance_threshold = detail::require_number(root, "balance_threshold", "config");
  }
  if (root.contains("dgp")) detail::apply_dgp(root.at("dgp"), config.dgp);
  if (root.contains("protocol")) detail::apply_protocol(root.at("protocol"), config.options);
  if (root.contains("schemes")) {
    const auto& schemes = root.at("schemes");
    detail::reject_unknown_keys(schemes, {"1d", "2d-1", "2d-2", "2d-3"}, "schemes");
    for (const auto& item : schemes.items()) {
      const SchemeTag tag = *parse_scheme_tag(item.key());
      detail::apply_scheme(item.value(), item.key(), config.schemes.at(tag));
    }
  }
  detail::validate(config);
  return config;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(path + ": config root must be an object");
  try {
    return parse_config(root);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config error in " + path + ": " + e.what());
  }
}

}  // namespace rcsmatch
