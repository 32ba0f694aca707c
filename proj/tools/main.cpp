// seqdesign: run, summarize and plot sequential-design experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "seqdesign/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

namespace sd = seqdesign;

int cmd_run(const std::string& config_path) {
  const auto cfg = sd::harness::load_config(config_path);
  std::cerr << "running " << cfg.strategies.size() << " strategies x " << cfg.n_replicates << " replicates on "
            << cfg.testbed << " with " << sd::harness::thread_count() << " threads\n";
  const auto summary = sd::harness::run_experiment(cfg);
  std::cout << summary.record_path << '\n';
  std::cerr << "cells run " << summary.cells_run << ", skipped " << summary.cells_skipped << ", failed "
            << summary.cells_failed << '\n';
  if (summary.numerical_failures > 0) return kNumericalError;
  return summary.cells_failed > 0 ? kConfigError : 0;
}

int cmd_summarize(const std::string& record_path, const std::string& out_path) {
  const auto rows = sd::harness::summarize(sd::harness::read_record(record_path));
  if (rows.empty()) throw sd::ConfigError("no successful rows in " + record_path);
  const std::string target = out_path.empty()
                                 ? (std::filesystem::path(record_path).parent_path() / "summary.csv").string()
                                 : out_path;
  sd::harness::write_summary(rows, target);
  std::cout << target << '\n';
  return 0;
}

int cmd_plot(const std::string& summary_path, const std::string& outdir) {
  for (const auto& path : sd::harness::emit_plots(sd::harness::read_summary(summary_path), outdir)) {
    std::cout << path << '\n';
  }
  return 0;
}

int cmd_oracle(const std::string& suite) {
  const int failures = sd::oracles::run_battery(suite, std::cout);
  std::cout << (failures == 0 ? "all oracle checks passed" : std::to_string(failures) + " oracle checks failed")
            << '\n';
  return failures == 0 ? 0 : kNumericalError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential design for GP surrogates of Bayesian inverse problems"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string record_path, summary_out;
  auto* summarize = app.add_subcommand("summarize", "Per-iteration means and 95% CIs of a record");
  summarize->add_option("record", record_path, "Experiment record CSV")->required();
  summarize->add_option("-o,--output", summary_out, "Summary CSV (default: next to the record)");

  std::string summary_path, plot_dir;
  auto* plot = app.add_subcommand("plot", "SVG charts from a summary");
  plot->add_option("summary", summary_path, "Summary CSV")->required();
  plot->add_option("-o,--output", plot_dir, "Output directory")->required();

  std::string suite;
  auto* oracle = app.add_subcommand("oracle", "Compare the library against reference computations");
  oracle->add_option("suite", suite, "gp | inverse | design | testbeds | criterion | all")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*summarize) return cmd_summarize(record_path, summary_out);
    if (*plot) return cmd_plot(summary_path, plot_dir);
    if (*oracle) return cmd_oracle(suite);
  } catch (const sd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const sd::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return 0;
}
