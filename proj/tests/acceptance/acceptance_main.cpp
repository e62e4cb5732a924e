// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Runs the full scenario grid at desk scale on a fixed
// master seed; expect single-digit minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rcsmatch/balance.hpp"
#include "rcsmatch/estimators.hpp"
#include "rcsmatch/io.hpp"
#include "rcsmatch/matcher.hpp"
#include "rcsmatch/propensity.hpp"
#include "rcsmatch/protocol.hpp"
#include "rcsmatch/simulator.hpp"
#include "../support/oracles.hpp"

using namespace rcsmatch;

namespace {

constexpr std::uint64_t kMasterSeed = 20240214;
constexpr int kReplications = 500;
constexpr int kMdmReplications = 200;
constexpr double kTruth = 0.6;

struct Criterion {
  int number;
  std::string summary;
  bool passed = true;
  std::vector<std::string> notes;

  void check(bool condition, const std::string& detail) {
    if (!condition) {
      passed = false;
      notes.push_back(detail);
    }
  }
};

struct CellData {
  PerformanceRecord record;
  std::vector<int> matched_sizes;  // successful replications only
};

using Grid = std::map<std::string, CellData>;  // scenario name -> cell

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double median_int(const std::vector<int>& xs) {
  return median(std::vector<double>(xs.begin(), xs.end()));
}

}  // namespace

int main() {
  std::vector<Criterion> criteria;
  const auto scenarios = all_scenarios();
  DgpParams params;  // desk defaults: pool 100000, n 1000
  params.replications = kReplications;
  StudyOptions options;
  options.threads = 0;

  // --- run the grid, one scheme at a time, reusing pools per scenario -----
  std::map<SchemeTag, Grid> grids;
  double criterion1_seconds = 0.0;
  const std::vector<std::pair<Scheme, int>> plan = {
      {Scheme::naive(), kReplications}, {Scheme::one_d(), kReplications},
      {Scheme::two_d_1(), kMdmReplications}, {Scheme::two_d_2(), kReplications},
      {Scheme::two_d_3(), kReplications}};

  for (const ScenarioId& scenario : scenarios) {
    const ScenarioPools pools = build_pools(scenario, params, pool_seed(kMasterSeed, scenario));
    for (const auto& [scheme, replications] : plan) {
      DgpParams cell_params = params;
      cell_params.replications = replications;
      const auto start = std::chrono::steady_clock::now();
      const auto outcomes = run_cell(scenario, scheme, cell_params, options, kMasterSeed, pools);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const bool criterion1_cell =
          scenario.letter == 'B' && scenario.level <= 3 &&
          (scheme.tag == SchemeTag::two_d_2 || scheme.tag == SchemeTag::one_d);
      if (criterion1_cell) criterion1_seconds += seconds;

      CellData cell;
      cell.record = summarize_cell(scenario, scheme.tag, outcomes, kTruth);
      for (const auto& outcome : outcomes) {
        if (outcome.ok) cell.matched_sizes.push_back(outcome.matched_size);
      }
      grids[scheme.tag][scenario.name()] = std::move(cell);
    }
    std::fprintf(stderr, "grid: finished scenario %s\n", scenario.name().c_str());
  }

  // --- criterion 1: unbiasedness of the matched estimators ------------------
  {
    Criterion c{1, "2d-2 and 1d are near-unbiased on B0-B3"};
    char buf[160];
    for (int level = 0; level <= 3; ++level) {
      const std::string cell = std::string("B") + std::to_string(level);
      const auto& two_d = grids[SchemeTag::two_d_2].at(cell).record;
      c.check(two_d.completed, "2d-2 " + cell + " did not complete");
      if (two_d.completed) {
        std::snprintf(buf, sizeof(buf), "2d-2 %s bias ratio %.4f exceeds 0.10",
                      cell.c_str(), two_d.bias_ratio);
        c.check(std::abs(two_d.bias_ratio) <= 0.10, buf);
      }
      const auto& one_d = grids[SchemeTag::one_d].at(cell).record;
      c.check(one_d.completed, "1d " + cell + " did not complete");
      if (one_d.completed) {
        std::snprintf(buf, sizeof(buf), "1d %s bias ratio %.4f exceeds 0.05",
                      cell.c_str(), one_d.bias_ratio);
        c.check(std::abs(one_d.bias_ratio) <= 0.05, buf);
        std::snprintf(buf, sizeof(buf), "1d %s coverage %.3f outside [0.92, 0.98]",
                      cell.c_str(), one_d.coverage);
        c.check(one_d.coverage >= 0.92 && one_d.coverage <= 0.98, buf);
      }
    }
    std::snprintf(buf, sizeof(buf), "sub-grid runtime %.1f s exceeds 600 s",
                  criterion1_seconds);
    c.check(criterion1_seconds < 600.0, buf);
    criteria.push_back(std::move(c));
  }

  // --- criterion 2: naive bias grows monotonically with the shift level -----
  {
    Criterion c{2, "naive estimates rise strictly with the shift level"};
    for (char letter : {'A', 'B', 'C'}) {
      double previous = -1e9;
      for (int level = 0; level <= 4; ++level) {
        const std::string cell = std::string(1, letter) + std::to_string(level);
        const double estimate = grids[SchemeTag::naive].at(cell).record.mean_estimate;
        char buf[120];
        std::snprintf(buf, sizeof(buf), "naive %s estimate %.3f not above previous %.3f",
                      cell.c_str(), estimate, previous);
        c.check(estimate > previous, buf);
        previous = estimate;
      }
      char buf[120];
      std::snprintf(buf, sizeof(buf), "naive %c4 estimate %.3f does not exceed 1.5", letter,
                    previous);
      c.check(previous > 1.5, buf);
    }
    criteria.push_back(std::move(c));
  }

  // --- criterion 3: applicability pattern -----------------------------------
  {
    Criterion c{3, "2d-2 applicability matches the reference pattern (max 1 cell off)"};
    int deviations = 0;
    std::vector<std::string> detail;
    const auto expect = [&](const std::string& cell, bool want_completed) {
      const bool got = grids[SchemeTag::two_d_2].at(cell).record.completed;
      if (got != want_completed) {
        ++deviations;
        detail.push_back("2d-2 " + cell + (got ? " completed" : " not applicable") +
                         std::string(", expected ") + (want_completed ? "completed" : "NA"));
      }
    };
    for (const std::string& cell : {"A2", "A3", "A4"}) expect(cell, false);
    for (const std::string& cell : {"B0", "B1", "B2", "B3"}) expect(cell, true);
    for (const std::string& cell : {"C0", "C1", "C2", "C3"}) expect(cell, true);
    // 2d-3 must complete wherever 2d-2 does.
    for (const auto& [cell, data] : grids[SchemeTag::two_d_2]) {
      if (data.record.completed && !grids[SchemeTag::two_d_3].at(cell).record.completed) {
        ++deviations;
        detail.push_back("2d-3 " + cell + " not applicable although 2d-2 completed");
      }
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%d cells deviate (tolerance 1)", deviations);
    c.check(deviations <= 1, buf);
    for (const auto& line : detail) c.notes.push_back(line);
    criteria.push_back(std::move(c));
  }

  // --- criterion 4: matched-size ordering ------------------------------------
  {
    Criterion c{4, "median matched sizes order by prevalence and level; 1d A0 in [350, 400]"};
    char buf[160];
    for (SchemeTag tag : {SchemeTag::one_d, SchemeTag::two_d_3}) {
      for (int level = 0; level <= 4; ++level) {
        double previous = -1.0;
        for (char letter : {'A', 'B', 'C'}) {
          const std::string cell = std::string(1, letter) + std::to_string(level);
          const double med = median_int(grids[tag].at(cell).matched_sizes);
          std::snprintf(buf, sizeof(buf), "%s %s median size %.0f not above %.0f",
                        scheme_name(tag), cell.c_str(), med, previous);
          c.check(med > previous, buf);
          previous = med;
        }
      }
      for (char letter : {'A', 'B', 'C'}) {
        double previous = std::numeric_limits<double>::infinity();
        for (int level = 0; level <= 4; ++level) {
          const std::string cell = std::string(1, letter) + std::to_string(level);
          const double med = median_int(grids[tag].at(cell).matched_sizes);
          std::snprintf(buf, sizeof(buf), "%s %s median size %.0f increased from %.0f",
                        scheme_name(tag), cell.c_str(), med, previous);
          c.check(med <= previous, buf);
          previous = med;
        }
      }
    }
    const double a0 = median_int(grids[SchemeTag::one_d].at("A0").matched_sizes);
    std::snprintf(buf, sizeof(buf), "1d A0 median matched size %.0f outside [350, 400]", a0);
    c.check(a0 >= 350.0 && a0 <= 400.0, buf);
    criteria.push_back(std::move(c));
  }

  // --- criterion 5: balance reduction ----------------------------------------
  {
    Criterion c{5, "matching reduces imbalance on every completed 2d cell"};
    char buf[200];
    std::vector<double> two_d_2_low_level_deltas;
    for (SchemeTag tag : {SchemeTag::two_d_1, SchemeTag::two_d_2, SchemeTag::two_d_3}) {
      for (const ScenarioId& scenario : scenarios) {
        const auto& cell = grids[tag].at(scenario.name());
        if (!cell.record.completed) continue;

        std::map<Comparison, std::vector<double>> pre, post;
        const ScenarioPools pools =
            build_pools(scenario, params, pool_seed(kMasterSeed, scenario));
        int used = 0;
        for (int rep = 0; rep < 100; ++rep) {
          std::mt19937_64 rng(derive_seed(kMasterSeed, {991, static_cast<std::uint64_t>(rep),
                                                        static_cast<std::uint64_t>(tag)}));
          const Quad quad = draw_dataset(scenario, params, pools, rng);
          ProtocolConfig config;
          config.scheme = default_scheme(tag);
          config.seed = rng();
          MatchedQuad matched;
          try {
            matched = run_2dpsm(quad, config);
          } catch (const Error&) {
            continue;
          }
          if (matched.groups.bt.size() < 2) continue;  // too small to score
          ++used;
          const auto before = balance_report(quad);
          const auto after = balance_report(matched);
          for (const auto& entry : before.entries) pre[entry.comparison].push_back(entry.delta);
          for (const auto& entry : after.entries) {
            post[entry.comparison].push_back(entry.delta);
            if (tag == SchemeTag::two_d_2 && scenario.level <= 1) {
              two_d_2_low_level_deltas.push_back(entry.delta);
            }
          }
        }
        std::snprintf(buf, sizeof(buf), "%s %s: no successful balance replications",
                      scheme_name(tag), scenario.name().c_str());
        c.check(used > 0, buf);
        for (Comparison comparison : kAllComparisons) {
          const double pre_median = median(pre[comparison]);
          const double post_median = median(post[comparison]);
          std::snprintf(buf, sizeof(buf), "%s %s %s: post median %.4f above pre median %.4f",
                        scheme_name(tag), scenario.name().c_str(),
                        comparison_name(comparison), post_median, pre_median);
          c.check(post_median <= pre_median, buf);
        }
      }
    }
    int within = 0;
    for (double delta : two_d_2_low_level_deltas) {
      if (delta <= 0.10) ++within;
    }
    const double fraction =
        two_d_2_low_level_deltas.empty()
            ? 0.0
            : static_cast<double>(within) / two_d_2_low_level_deltas.size();
    std::snprintf(buf, sizeof(buf),
                  "2d-2 levels 0-1: only %.1f%% of post-matching deltas are within 0.10",
                  100.0 * fraction);
    c.check(fraction >= 0.90, buf);
    criteria.push_back(std::move(c));
  }

  // --- criterion 6: oracle equivalence ----------------------------------------
  {
    Criterion c{6, "implementations agree with their independent oracles"};
    char buf[160];

    // Logistic MLE vs grid search on the committed pools.
    const std::vector<std::vector<std::pair<double, int>>> pools = {
        {{0, 0}, {1, 1}, {2, 0}, {3, 1}},
        {{1.5, 1}, {2.0, 1}, {3.0, 1}, {3.5, 1}, {0.0, 0}, {0.5, 0}, {0.5, 0}, {2.0, 0}}};
    for (std::size_t i = 0; i < pools.size(); ++i) {
      const auto oracle = oracles::logistic_grid_search(pools[i]);
      std::vector<LabeledCovariates> pool;
      for (const auto& [x, y] : pools[i]) pool.push_back({{x}, y == 1});
      const auto model = fit_logistic(pool);
      std::snprintf(buf, sizeof(buf), "logistic pool %zu: |intercept %.6f - %.6f| > 1e-3", i,
                    model.intercept, oracle.intercept);
      c.check(std::abs(model.intercept - oracle.intercept) <= 1e-3, buf);
      std::snprintf(buf, sizeof(buf), "logistic pool %zu: |slope %.6f - %.6f| > 1e-3", i,
                    model.coefficients[0], oracle.slope);
      c.check(std::abs(model.coefficients[0] - oracle.slope) <= 1e-3, buf);
    }

    // Regression DID vs explicit normal equations.
    {
      Quad quad;
      auto add = [&quad](std::int64_t id, double x, bool treated, Period period, double y) {
        Observation o;
        o.id = id;
        o.covariates = {x};
        o.treated = treated;
        o.period = period;
        o.outcome = y;
        quad.group(treated ? (period == Period::before ? GroupLabel::bt : GroupLabel::at)
                           : (period == Period::before ? GroupLabel::bc : GroupLabel::ac))
            .push_back(o);
      };
      add(1, 0.2, true, Period::before, 1.0);
      add(2, 1.1, true, Period::before, 2.1);
      add(3, -0.4, false, Period::before, 0.3);
      add(4, 0.9, false, Period::before, 1.4);
      add(5, 0.5, true, Period::after, 2.9);
      add(6, 1.4, true, Period::after, 4.4);
      add(7, -0.1, false, Period::after, 0.8);
      add(8, 0.7, false, Period::after, 1.9);

      std::vector<std::vector<double>> design;
      std::vector<double> outcome;
      for (GroupLabel g : kAllGroups) {
        for (const auto& o : quad.group(g)) {
          design.push_back({1.0, o.treated ? 1.0 : 0.0,
                            o.period == Period::after ? 1.0 : 0.0,
                            (o.treated && o.period == Period::after) ? 1.0 : 0.0,
                            o.covariates[0]});
          outcome.push_back(o.outcome);
        }
      }
      const auto oracle = oracles::ols_normal_equations(design, outcome);
      const auto est = regression_did(quad, 1);
      std::snprintf(buf, sizeof(buf), "regression satt %.12f vs oracle %.12f", est.satt,
                    oracle.beta[3]);
      c.check(std::abs(est.satt - oracle.beta[3]) <= 1e-9, buf);
      std::snprintf(buf, sizeof(buf), "regression se %.12f vs oracle %.12f", est.se,
                    oracle.se[3]);
      c.check(std::abs(est.se - oracle.se[3]) <= 1e-9, buf);
    }

    // Greedy matcher vs the seeded replay oracle on n <= 10 fixtures.
    {
      const std::vector<std::pair<std::int64_t, double>> reference = {
          {1, 0.12}, {2, 0.35}, {3, 0.36}, {4, 0.70}, {5, 0.71},
          {6, 0.05}, {7, 0.52}, {8, 0.53}, {9, 0.91}, {10, 0.30}};
      const std::vector<std::pair<std::int64_t, double>> pool = {
          {101, 0.10}, {102, 0.33}, {103, 0.40}, {104, 0.69}, {105, 0.75},
          {106, 0.50}, {107, 0.55}, {108, 0.90}, {109, 0.28}};
      for (std::uint64_t seed : {1ULL, 9ULL, 77ULL, 4040ULL}) {
        for (double caliper : {0.02, 0.10, 1.0}) {
          std::vector<MatchUnit<double>> ref_units, pool_units;
          for (const auto& [id, v] : reference) ref_units.push_back({id, v});
          for (const auto& [id, v] : pool) pool_units.push_back({id, v});
          std::mt19937_64 rng(seed);
          const auto result =
              greedy_nn_match(ref_units, pool_units, ps_distance, caliper, rng);
          const auto expected = oracles::greedy_replay(reference, pool, caliper, true, seed);
          bool equal = result.pairs.size() == expected.size();
          for (std::size_t i = 0; equal && i < expected.size(); ++i) {
            equal = result.pairs[i].reference_id == expected[i].reference_id &&
                    result.pairs[i].pool_id == expected[i].pool_id &&
                    result.pairs[i].distance == expected[i].distance;
          }
          std::snprintf(buf, sizeof(buf), "greedy replay mismatch at seed %llu caliper %.2f",
                        static_cast<unsigned long long>(seed), caliper);
          c.check(equal, buf);
        }
      }
    }

    // Mahalanobis with identity covariance equals the Euclidean distance.
    {
      MahalanobisContext ctx;
      ctx.pooled_covariance = Eigen::MatrixXd::Identity(3, 3);
      ctx.inverse = Eigen::MatrixXd::Identity(3, 3);
      ctx.pool_size = 10;
      std::mt19937_64 rng(5150);
      NormalStream normals(rng);
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(3), y(3);
        for (int j = 0; j < 3; ++j) {
          x[j] = normals.next();
          y[j] = normals.next();
        }
        const double difference = std::abs(mahalanobis(x, y, ctx) - euclidean(x, y));
        std::snprintf(buf, sizeof(buf), "identity mahalanobis differs from euclidean by %.2e",
                      difference);
        c.check(difference <= 1e-12, buf);
      }
    }
    criteria.push_back(std::move(c));
  }

  // --- criterion 7: RMSE identity ----------------------------------------------
  {
    Criterion c{7, "RMSE^2 = bias^2 + SD^2 (m-1)/m on every record"};
    char buf[160];
    for (const auto& [tag, grid] : grids) {
      for (const auto& [cell, data] : grid) {
        const auto& record = data.record;
        if (record.successes == 0) continue;
        const double bias = record.bias_ratio * kTruth;
        const double m = record.successes;
        const double lhs = record.rmse * record.rmse;
        const double rhs = bias * bias + record.sd * record.sd * (m - 1.0) / m;
        std::snprintf(buf, sizeof(buf), "%s %s: |%.12f - %.12f| > 1e-9", scheme_name(tag),
                      cell.c_str(), lhs, rhs);
        c.check(std::abs(lhs - rhs) <= 1e-9, buf);
      }
    }
    criteria.push_back(std::move(c));
  }

  // --- criterion 8: byte-identical determinism ----------------------------------
  {
    Criterion c{8, "identical master seeds give byte-identical results CSVs"};
    DgpParams small = params;
    small.replications = 100;
    const std::vector<ScenarioId> subset = {{'A', 1}, {'B', 2}, {'C', 3}};
    const std::vector<Scheme> schemes = {Scheme::naive(), Scheme::one_d(), Scheme::two_d_1(),
                                         Scheme::two_d_2(), Scheme::two_d_3()};
    StudyOptions two_threads = options;
    two_threads.threads = 2;
    StudyOptions three_threads = options;
    three_threads.threads = 3;
    const auto run_a = run_study(subset, schemes, small, two_threads, 777);
    const auto run_b = run_study(subset, schemes, small, three_threads, 777);

    const auto dir = std::filesystem::temp_directory_path();
    const std::string path_a = (dir / "acceptance_run_a.csv").string();
    const std::string path_b = (dir / "acceptance_run_b.csv").string();
    write_results_csv(path_a, run_a);
    write_results_csv(path_b, run_b);
    const auto read_all = [](const std::string& path) {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream buffer;
      buffer << in.rdbuf();
      return buffer.str();
    };
    const std::string bytes_a = read_all(path_a);
    c.check(!bytes_a.empty(), "first study produced an empty CSV");
    c.check(bytes_a == read_all(path_b), "results CSVs differ across thread counts");
    criteria.push_back(std::move(c));
  }

  // --- report ---------------------------------------------------------------------
  int failures = 0;
  for (const auto& criterion : criteria) {
    std::printf("[%s] criterion %d: %s\n", criterion.passed ? "PASS" : "FAIL",
                criterion.number, criterion.summary.c_str());
    for (const auto& note : criterion.notes) {
      std::printf("       - %s\n", note.c_str());
    }
    if (!criterion.passed) ++failures;
  }
  std::printf("%d of %zu acceptance criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
