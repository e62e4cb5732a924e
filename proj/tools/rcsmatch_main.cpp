// rcsmatch command line: Monte Carlo studies over the scenario grid, matching
// of user datasets, treatment-effect estimation, and results rendering.
//
// Exit codes: 0 success, 2 input/config error, 3 runtime matching or
// estimation failure.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcsmatch/balance.hpp"
#include "rcsmatch/config.hpp"
#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"
#include "rcsmatch/estimators.hpp"
#include "rcsmatch/io.hpp"
#include "rcsmatch/protocol.hpp"
#include "rcsmatch/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

struct SimulateArgs {
  std::string scenario;
  std::string scheme;
  std::string out;
  std::string config_path;
  std::uint64_t seed = 0;
  int replications = -1;  // -1: keep config/default
  int pool_size = -1;
  int threads = -1;
};

struct MatchArgs {
  std::string input;
  std::string scheme;
  std::string out;
  std::string balance_out;
  std::string config_path;
  std::uint64_t seed = 0;
};

struct EstimateArgs {
  std::string input;
  std::string estimator;
  std::string out;
};

struct ReportArgs {
  std::string input;
  std::string format = "markdown";
  std::string out;
};

rcsmatch::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return rcsmatch::RunConfig{};
  return rcsmatch::load_config(path);
}

int cmd_simulate(const SimulateArgs& args) {
  using namespace rcsmatch;
  RunConfig config = load_config_or_default(args.config_path);
  if (args.replications > 0) config.dgp.replications = args.replications;
  if (args.pool_size > 0) config.dgp.pool_size = args.pool_size;
  if (args.threads >= 0) config.options.threads = args.threads;

  std::vector<ScenarioId> scenarios;
  if (args.scenario == "all") {
    scenarios = all_scenarios();
  } else {
    const auto parsed = parse_scenario(args.scenario);
    if (!parsed) throw ConfigError("unknown scenario '" + args.scenario + "'");
    scenarios.push_back(*parsed);
  }

  std::vector<Scheme> schemes;
  if (args.scheme == "all") {
    for (const auto& [tag, scheme] : config.schemes) schemes.push_back(scheme);
  } else {
    const auto tag = parse_scheme_tag(args.scheme);
    if (!tag) throw ConfigError("unknown scheme '" + args.scheme + "'");
    schemes.push_back(config.schemes.at(*tag));
  }

  const auto records =
      run_study(scenarios, schemes, config.dgp, config.options, args.seed);
  write_results_csv(args.out, records);
  return kExitOk;
}

int cmd_match(const MatchArgs& args) {
  using namespace rcsmatch;
  RunConfig config = load_config_or_default(args.config_path);

  const auto tag = parse_scheme_tag(args.scheme);
  if (!tag) throw ConfigError("unknown scheme '" + args.scheme + "'");
  if (*tag == SchemeTag::naive) {
    throw ConfigError("scheme 'naive' performs no matching; use estimate directly");
  }

  const LoadedDataset dataset = read_observations_csv(args.input);
  const Quad quad = partition(dataset.observations);
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).empty()) {
      throw CsvError(args.input + ": empty group " + group_name(g));
    }
  }

  ProtocolConfig protocol{config.schemes.at(*tag), config.options.max_rounds,
                          args.seed, config.options.caliper_scale,
                          config.options.with_replacement};

  std::unordered_map<std::int64_t, RowAnnotation> annotations;
  Quad matched_groups;
  if (*tag == SchemeTag::one_d) {
    const MatchedSlices slices = run_1d(quad, protocol);
    annotations = annotate_pairs(slices.pairs, 1);
    matched_groups = slices.groups;
  } else {
    const MatchedQuad matched = run_2dpsm(quad, protocol);
    annotations = annotate_pairs(matched.pairs, matched.rounds_used);
    matched_groups = matched.groups;
  }

  write_matched_csv(args.out, dataset, annotations);
  if (!args.balance_out.empty()) {
    write_balance_csv(args.balance_out,
                      balance_report(matched_groups, config.balance_threshold));
  }
  return kExitOk;
}

int cmd_estimate(const EstimateArgs& args) {
  using namespace rcsmatch;
  const LoadedDataset dataset = read_observations_csv(args.input);
  const Quad quad = partition(dataset.observations);
  for (GroupLabel g : kAllGroups) {
    if (quad.group(g).empty()) {
      throw CsvError(args.input + ": empty group " + group_name(g));
    }
  }

  Estimate est;
  if (args.estimator == "diff") {
    est = diff_in_means_did(quad);
  } else if (args.estimator == "regression") {
    est = regression_did(quad, dataset.k);
  } else {
    throw ConfigError("unknown estimator '" + args.estimator + "' (expected diff|regression)");
  }
  write_estimate_json(args.out, est);
  return kExitOk;
}

std::string render_cell(double value, int decimals) {
  if (!std::isfinite(value)) return "-";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

int cmd_report(const ReportArgs& args) {
  using namespace rcsmatch;
  auto records = read_results_csv(args.input);
  if (records.empty()) throw CsvError(args.input + ": no result rows");

  // Scheme blocks in fixed order, scenarios ordered within each block.
  std::stable_sort(records.begin(), records.end(),
                   [](const PerformanceRecord& a, const PerformanceRecord& b) {
                     if (a.scheme != b.scheme) return a.scheme < b.scheme;
                     if (a.scenario.letter != b.scenario.letter) {
                       return a.scenario.letter < b.scenario.letter;
                     }
                     return a.scenario.level < b.scenario.level;
                   });

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!args.out.empty()) {
    file.open(args.out);
    if (!file) throw CsvError("cannot write " + args.out);
    out = &file;
  }

  if (args.format == "csv") {
    *out << "scheme,scenario,matched_size,mean_estimate,sd,bias_ratio,rmse,coverage,completed\n";
    for (const auto& r : records) {
      *out << scheme_name(r.scheme) << ',' << r.scenario.name() << ','
           << format_double(r.matched_size) << ',' << format_double(r.mean_estimate)
           << ',' << format_double(r.sd) << ',' << format_double(r.bias_ratio) << ','
           << format_double(r.rmse) << ',' << format_double(r.coverage) << ','
           << (r.completed ? "true" : "false") << '\n';
    }
    return kExitOk;
  }
  if (args.format != "markdown") {
    throw ConfigError("unknown format '" + args.format + "' (expected markdown|csv)");
  }

  *out << "| Scheme | Scenario | Matched size | Mean estimate | SD | Bias ratio "
          "| RMSE | Coverage | Completed |\n";
  *out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : records) {
    *out << "| " << scheme_name(r.scheme) << " | " << r.scenario.name() << " | "
         << render_cell(r.matched_size, 0) << " | " << render_cell(r.mean_estimate, 3)
         << " | " << render_cell(r.sd, 3) << " | " << render_cell(r.bias_ratio, 3)
         << " | " << render_cell(r.rmse, 3) << " | " << render_cell(r.coverage, 3)
         << " | " << (r.completed ? "Y" : "NA") << " |\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-dimensional matching for repeated cross-sectional data"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study over the scenario grid");
  simulate->add_option("--scenario", sim.scenario, "Scenario cell (A0..C4) or 'all'")->required();
  simulate->add_option("--scheme", sim.scheme, "Matching scheme (naive|1d|2d-1|2d-2|2d-3) or 'all'")->required();
  simulate->add_option("--replications", sim.replications, "Replications per cell");
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--out", sim.out, "Results CSV path")->required();
  simulate->add_option("--config", sim.config_path, "JSON config file");
  simulate->add_option("--pool-size", sim.pool_size, "Covariate pool size per group");
  simulate->add_option("--threads", sim.threads, "Worker threads (0 = hardware)");

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "Apply a matching scheme to a dataset CSV");
  match_cmd->add_option("--input", match.input, "Dataset CSV")->required();
  match_cmd->add_option("--scheme", match.scheme, "Matching scheme (1d|2d-1|2d-2|2d-3)")->required();
  match_cmd->add_option("--seed", match.seed, "Seed for the matching order");
  match_cmd->add_option("--out", match.out, "Matched CSV path")->required();
  match_cmd->add_option("--balance", match.balance_out, "Balance report CSV path");
  match_cmd->add_option("--config", match.config_path, "JSON config file");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate the treatment effect from a quad CSV");
  estimate->add_option("--input", est.input, "Matched or raw dataset CSV")->required();
  estimate->add_option("--estimator", est.estimator, "diff|regression")->required();
  estimate->add_option("--out", est.out, "Estimate JSON path")->required();

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Render a results CSV as a table");
  report->add_option("--input", rep.input, "Results CSV")->required();
  report->add_option("--format", rep.format, "markdown|csv");
  report->add_option("--out", rep.out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*match_cmd) return cmd_match(match);
    if (*estimate) return cmd_estimate(est);
    if (*report) return cmd_report(rep);
  } catch (const rcsmatch::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const rcsmatch::CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const rcsmatch::DuplicateIdError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const rcsmatch::RaggedCovariatesError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const rcsmatch::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
