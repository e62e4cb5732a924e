#pragma once

// Synthetic-data generation and the Monte Carlo study runner.
//
// Covariate pools are drawn once per scenario (multivariate normal via
// Cholesky transform); each replication samples a dataset from the pools
// without replacement, applies a matching scheme, estimates the treatment
// effect, and the runner aggregates bias / RMSE / coverage over replications.
// Every random stream derives deterministically from the master seed, so a
// study is reproducible bit for bit regardless of thread count.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"
#include "rcsmatch/estimators.hpp"
#include "rcsmatch/protocol.hpp"
#include "rcsmatch/rng.hpp"

namespace rcsmatch {

// Data-generation parameters. Defaults are desk scale: pool_size 100000 keeps
// a full-grid study in minutes on one core; raise it for full-scale runs.
struct DgpParams {
  int k = 4;
  double cov_within_pair = 0.9;   // cov(X1,X2) and cov(X3,X4)
  double cov_between_pair = 0.2;  // every other off-diagonal
  double bt_shift = 0.1;          // before-period treated mean, all covariates
  std::array<double, 5> shift_levels{0.1, 0.3, 0.5, 1.0, 2.0};
  double treatment_effect = 0.6;
  std::vector<double> outcome_beta{std::log(1.25), std::log(1.5),
                                   std::log(1.75), std::log(2.0)};
  double error_variance = 0.5;
  int pool_size = 100000;
  int n_per_period = 1000;
  std::array<int, 3> treated_counts{100, 300, 500};  // prevalence A, B, C
  int replications = 1000;

  // Unit variances; within-pair covariance on (X1,X2) and (X3,X4), the rest
  // at the between-pair value. SPD for the defaults.
  Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(k, k, cov_between_pair);
    for (int i = 0; i < k; ++i) cov(i, i) = 1.0;
    for (int i = 0; i + 1 < k; i += 2) {
      cov(i, i + 1) = cov_within_pair;
      cov(i + 1, i) = cov_within_pair;
    }
    return cov;
  }
};

// One cell of the scenario grid: prevalence letter (A = 9:1, B = 7:3,
// C = 1:1) and covariate-shift level 0..4.
struct ScenarioId {
  char letter = 'A';
  int level = 0;

  int letter_index() const { return letter - 'A'; }
  std::string name() const { return std::string(1, letter) + std::to_string(level); }
  bool operator==(const ScenarioId&) const = default;
};

inline std::optional<ScenarioId> parse_scenario(const std::string& s) {
  if (s.size() != 2) return std::nullopt;
  const char letter = s[0];
  if (letter < 'A' || letter > 'C') return std::nullopt;
  if (s[1] < '0' || s[1] > '4') return std::nullopt;
  return ScenarioId{letter, s[1] - '0'};
}

inline std::vector<ScenarioId> all_scenarios() {
  std::vector<ScenarioId> out;
  for (char letter : {'A', 'B', 'C'}) {
    for (int level = 0; level < 5; ++level) out.push_back({letter, level});
  }
  return out;
}

// --- sampling -----------------------------------------------------------------

// n draws from N(mean, covariance) via the Cholesky transform of iid standard
// normals; one row per draw.
inline Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& covariance, int n,
                                  std::mt19937_64& rng) {
  const Eigen::Index k = mean.size();
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw SingularCovarianceError();
  const Eigen::MatrixXd chol = llt.matrixL();

  NormalStream normals(rng);
  Eigen::MatrixXd out(n, k);
  Eigen::VectorXd z(k);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) z[j] = normals.next();
    out.row(i) = (mean + chol * z).transpose();
  }
  return out;
}

// Deterministic mean of the outcome equation (everything but the noise term).
inline double outcome_mean(const std::vector<double>& x, bool treated,
                           Period period, const DgpParams& params) {
  double y = 0.0;
  if (treated && period == Period::after) y += params.treatment_effect;
  for (std::size_t j = 0; j < x.size(); ++j) y += params.outcome_beta[j] * x[j];
  return y;
}

inline double generate_outcome(const std::vector<double>& x, bool treated,
                               Period period, const DgpParams& params,
                               NormalStream& normals) {
  return outcome_mean(x, treated, period, params) +
         std::sqrt(params.error_variance) * normals.next();
}

// Per-group covariate pools for one scenario.
struct ScenarioPools {
  Eigen::MatrixXd bt, bc, at, ac;  // pool_size x k each
};

inline ScenarioPools build_pools(const ScenarioId& scenario, const DgpParams& params,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd cov = params.covariance();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(params.k);
  const Eigen::VectorXd before_treated =
      Eigen::VectorXd::Constant(params.k, params.bt_shift);
  const Eigen::VectorXd after_treated = Eigen::VectorXd::Constant(
      params.k, params.shift_levels[static_cast<std::size_t>(scenario.level)]);

  ScenarioPools pools;
  pools.bt = sample_mvn(before_treated, cov, params.pool_size, rng);
  pools.bc = sample_mvn(zero, cov, params.pool_size, rng);
  pools.at = sample_mvn(after_treated, cov, params.pool_size, rng);
  pools.ac = sample_mvn(zero, cov, params.pool_size, rng);
  return pools;
}

namespace detail {

// Floyd's algorithm: n distinct indices from [0, limit), insertion order.
inline std::vector<int> sample_indices(int limit, int n, std::mt19937_64& rng) {
  if (n > limit) {
    throw PoolExhaustedError("requested " + std::to_string(n) +
                             " draws from a pool of " + std::to_string(limit));
  }
  std::vector<int> picked;
  picked.reserve(n);
  std::unordered_set<int> seen;
  seen.reserve(n * 2);
  for (int i = limit - n; i < limit; ++i) {
    const int candidate = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(i) + 1));
    if (seen.insert(candidate).second) {
      picked.push_back(candidate);
    } else {
      seen.insert(i);
      picked.push_back(i);
    }
  }
  return picked;
}

inline std::vector<double> pool_row(const Eigen::MatrixXd& pool, int row) {
  std::vector<double> x(pool.cols());
  for (Eigen::Index j = 0; j < pool.cols(); ++j) x[j] = pool(row, j);
  return x;
}

}  // namespace detail

// One replication draw: per period, `treated` treated plus the complement of
// control observations, sampled without replacement from the scenario pools.
// Ids carry a 31-bit draw tag so independent draws never collide.
inline Quad draw_dataset(const ScenarioId& scenario, const DgpParams& params,
                         const ScenarioPools& pools, std::mt19937_64& rng) {
  const int treated = params.treated_counts[static_cast<std::size_t>(scenario.letter_index())];
  const int control = params.n_per_period - treated;
  if (treated <= 0 || control <= 0) {
    throw std::invalid_argument("draw_dataset: per-period counts must be positive");
  }

  const std::int64_t tag = static_cast<std::int64_t>(rng() >> 33);
  std::int64_t next_id = (tag << 21) + 1;

  const auto bt_rows = detail::sample_indices(static_cast<int>(pools.bt.rows()), treated, rng);
  const auto bc_rows = detail::sample_indices(static_cast<int>(pools.bc.rows()), control, rng);
  const auto at_rows = detail::sample_indices(static_cast<int>(pools.at.rows()), treated, rng);
  const auto ac_rows = detail::sample_indices(static_cast<int>(pools.ac.rows()), control, rng);

  NormalStream normals(rng);
  Quad quad;
  const auto fill = [&](std::vector<Observation>& group, const Eigen::MatrixXd& pool,
                        const std::vector<int>& picked, bool is_treated, Period period) {
    group.reserve(picked.size());
    for (int row : picked) {
      Observation obs;
      obs.id = next_id++;
      obs.covariates = detail::pool_row(pool, row);
      obs.treated = is_treated;
      obs.period = period;
      obs.outcome = generate_outcome(obs.covariates, is_treated, period, params, normals);
      group.push_back(std::move(obs));
    }
  };
  fill(quad.bt, pools.bt, bt_rows, true, Period::before);
  fill(quad.bc, pools.bc, bc_rows, false, Period::before);
  fill(quad.at, pools.at, at_rows, true, Period::after);
  fill(quad.ac, pools.ac, ac_rows, false, Period::after);
  return quad;
}

// --- study runner ----------------------------------------------------------------

struct StudyOptions {
  int max_rounds = 20;
  CaliperScale caliper_scale = CaliperScale::probability;
  bool with_replacement = false;
  int threads = 0;  // 0 = hardware concurrency
};

struct ReplicationOutcome {
  bool ok = false;
  std::string failure;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double ci_low = 0.0;
  double ci_high = 0.0;
  int matched_size = 0;
  int rounds_used = 0;
};

// One (scenario, scheme) row, Appendix-style: sizes, moments of the estimate
// distribution, bias ratio, RMSE, CI coverage, and whether the cell completed
// (more than half of the replications failing marks it not applicable).
struct PerformanceRecord {
  SchemeTag scheme;
  ScenarioId scenario;
  double matched_size = std::numeric_limits<double>::quiet_NaN();
  double mean_estimate = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double bias_ratio = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  bool completed = false;
  int successes = 0;  // bookkeeping, not part of the results CSV
  int failures = 0;
};

namespace detail {

inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  const int chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(count, lo + chunk);
    workers.emplace_back([&, t, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

constexpr std::uint64_t kPoolStreamTag = 0x706f6f6c;       // pools
constexpr std::uint64_t kReplicationStreamTag = 0x7265706c;  // replications

inline std::uint64_t scenario_code(const ScenarioId& s) {
  return static_cast<std::uint64_t>(s.letter_index()) * 8 +
         static_cast<std::uint64_t>(s.level) + 1;
}

inline std::uint64_t scheme_code(SchemeTag tag) {
  return static_cast<std::uint64_t>(tag) + 101;
}

}  // namespace detail

inline std::uint64_t pool_seed(std::uint64_t master_seed, const ScenarioId& scenario) {
  return derive_seed(master_seed, {detail::scenario_code(scenario), detail::kPoolStreamTag});
}

inline std::uint64_t replication_seed(std::uint64_t master_seed, const ScenarioId& scenario,
                                      SchemeTag scheme, int replication) {
  return derive_seed(master_seed,
                     {detail::scenario_code(scenario), detail::scheme_code(scheme),
                      detail::kReplicationStreamTag, static_cast<std::uint64_t>(replication)});
}

// Applies one scheme to one drawn dataset.
inline ReplicationOutcome apply_scheme(const Quad& quad, const Scheme& scheme,
                                       const DgpParams& params, const StudyOptions& options,
                                       std::uint64_t protocol_seed) {
  ReplicationOutcome out;
  ProtocolConfig config{scheme, options.max_rounds, protocol_seed,
                        options.caliper_scale, options.with_replacement};
  try {
    Estimate est;
    if (scheme.tag == SchemeTag::naive) {
      est = naive_did(quad);
      out.matched_size = static_cast<int>(quad.size());
      out.rounds_used = 0;
    } else if (scheme.tag == SchemeTag::one_d) {
      const MatchedSlices slices = run_1d(quad, config);
      est = regression_did(slices, static_cast<std::size_t>(params.k));
      out.matched_size = static_cast<int>(slices.groups.size());
      out.rounds_used = 1;
    } else {
      const MatchedQuad matched = run_2dpsm(quad, config);
      est = diff_in_means_did(matched);
      out.matched_size = static_cast<int>(matched.groups.size());
      out.rounds_used = matched.rounds_used;
    }
    out.ok = true;
    out.estimate = est.satt;
    out.ci_low = est.ci_low;
    out.ci_high = est.ci_high;
  } catch (const Error& e) {
    out.ok = false;
    out.failure = e.what();
  }
  return out;
}

inline std::vector<ReplicationOutcome> run_cell(const ScenarioId& scenario,
                                                const Scheme& scheme,
                                                const DgpParams& params,
                                                const StudyOptions& options,
                                                std::uint64_t master_seed,
                                                const ScenarioPools& pools) {
  std::vector<ReplicationOutcome> outcomes(params.replications);
  detail::parallel_for(params.replications, options.threads, [&](int rep) {
    std::mt19937_64 rng(replication_seed(master_seed, scenario, scheme.tag, rep));
    const Quad quad = draw_dataset(scenario, params, pools, rng);
    const std::uint64_t protocol_seed = rng();
    outcomes[static_cast<std::size_t>(rep)] =
        apply_scheme(quad, scheme, params, options, protocol_seed);
  });
  return outcomes;
}

inline PerformanceRecord summarize_cell(const ScenarioId& scenario, SchemeTag scheme,
                                        const std::vector<ReplicationOutcome>& outcomes,
                                        double truth) {
  PerformanceRecord record;
  record.scheme = scheme;
  record.scenario = scenario;

  std::vector<double> estimates;
  estimates.reserve(outcomes.size());
  double size_sum = 0.0;
  int covered = 0;
  for (const auto& outcome : outcomes) {
    if (!outcome.ok) continue;
    estimates.push_back(outcome.estimate);
    size_sum += outcome.matched_size;
    if (outcome.ci_low <= truth && truth <= outcome.ci_high) ++covered;
  }
  const int m = static_cast<int>(estimates.size());
  record.successes = m;
  record.failures = static_cast<int>(outcomes.size()) - m;
  record.completed = 2 * record.failures <= static_cast<int>(outcomes.size());
  if (m == 0) return record;

  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= m;
  double ss = 0.0, sq_err = 0.0;
  for (double e : estimates) {
    ss += (e - mean) * (e - mean);
    sq_err += (e - truth) * (e - truth);
  }
  record.matched_size = size_sum / m;
  record.mean_estimate = mean;
  record.sd = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
  record.bias_ratio = (mean - truth) / truth;
  record.rmse = std::sqrt(sq_err / m);
  record.coverage = static_cast<double>(covered) / m;
  return record;
}

// Full study: pools are built once per scenario and shared across schemes;
// every replication derives its own seed from (master, scenario, scheme,
// index), so records are identical whatever the thread count.
inline std::vector<PerformanceRecord> run_study(const std::vector<ScenarioId>& scenarios,
                                                const std::vector<Scheme>& schemes,
                                                const DgpParams& params,
                                                const StudyOptions& options,
                                                std::uint64_t master_seed) {
  std::vector<PerformanceRecord> records;
  records.reserve(scenarios.size() * schemes.size());
  for (const ScenarioId& scenario : scenarios) {
    const ScenarioPools pools = build_pools(scenario, params, pool_seed(master_seed, scenario));
    for (const Scheme& scheme : schemes) {
      const auto outcomes = run_cell(scenario, scheme, params, options, master_seed, pools);
      records.push_back(summarize_cell(scenario, scheme.tag, outcomes, params.treatment_effect));
    }
  }
  return records;
}

}  // namespace rcsmatch
