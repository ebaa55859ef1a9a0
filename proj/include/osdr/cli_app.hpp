#pragma once

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osdr/core.hpp"
#include "osdr/experiment.hpp"

namespace osdr {

namespace detail {

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : split_list(text)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects a comma-separated integer list");
    }
  }
  if (seeds.empty())
    throw ConfigError("--seeds expects a comma-separated integer list");
  return seeds;
}

}  // namespace detail

// Entry point shared by the installed binary and in-process tests. `args`
// excludes the program name. Exit codes: 0 success, 2 configuration problems,
// 1 anything else.
inline int cli_main(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Streaming supervised dimensionality reduction experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seeds_flag;
  std::string out_flag;
  int jobs = 1;

  const auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "Experiment configuration file")
        ->required();
    cmd->add_option("--seeds", seeds_flag,
                    "Override the config's seed list (comma-separated)");
    cmd->add_option("--out", out_flag, "Override the output directory");
    cmd->add_option("--jobs", jobs, "Worker threads for the run grid")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* run =
      app.add_subcommand("run", "Execute a single-point experiment");
  add_run_flags(run);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Execute an experiment over its swept parameter grid");
  add_run_flags(sweep);

  std::string agg_a, agg_b, compare_out;
  CLI::App* compare = app.add_subcommand(
      "compare", "Join two aggregate files and report metric deltas");
  compare->add_option("baseline", agg_a, "Baseline aggregate.csv")->required();
  compare->add_option("candidate", agg_b, "Candidate aggregate.csv")
      ->required();
  compare->add_option("-o,--out", compare_out,
                      "Write the comparison here instead of stdout");

  try {
    // The vector overload consumes arguments back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (compare->parsed()) {
      std::ifstream a(agg_a), b(agg_b);
      if (!a) throw IoError("cannot open aggregate file '" + agg_a + "'");
      if (!b) throw IoError("cannot open aggregate file '" + agg_b + "'");
      const std::string table = compare_aggregates(a, b);
      if (compare_out.empty()) {
        out << table;
      } else {
        std::ofstream sink(compare_out);
        if (!sink)
          throw IoError("cannot write comparison to '" + compare_out + "'");
        sink << table;
      }
      return 0;
    }

    const bool sweeping = sweep->parsed();
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
    ExperimentConfig cfg = parse_experiment_config(in);
    if (sweeping && cfg.sweep_axes.empty())
      throw ConfigError("sweep requires at least one sweep.* axis");
    if (!sweeping && !cfg.sweep_axes.empty())
      throw ConfigError(
          "this config sweeps parameters; use the sweep subcommand");
    if (!seeds_flag.empty()) cfg.seeds = detail::parse_seed_list(seeds_flag);
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    validate_experiment(cfg);

    const ExperimentOutcome outcome = run_experiment(cfg, jobs);
    write_artifacts(cfg, outcome);
    out << format_summary(outcome);
    out << "artifacts: " << cfg.out_dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace osdr
