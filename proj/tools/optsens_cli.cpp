#include "optsens/experiment.hpp"
#include "optsens/parallel.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Greedy sensor selection for hyper-parameterized linear Bayesian inverse problems"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides [output] dir)");
  app.add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed, "baseline seed (overrides [baselines] seed)");

  auto* build_rb = app.add_subcommand("build-rb", "build and certify the reduced basis");
  auto* select = app.add_subcommand("select", "run greedy sensor selection");
  auto* baselines = app.add_subcommand("baselines", "draw random and Chebyshev reference sets");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate all sensor sets on the test grid");
  auto* report = app.add_subcommand("report", "write plotting inputs and print the summary");
  auto* run_all = app.add_subcommand("run-all", "build-rb, select, baselines, evaluate and report");

  CLI11_PARSE(app, argc, argv);

  try {
    optsens::RunOptions options;
    options.config = optsens::load_config(config_path);
    options.out_dir = out_dir.empty() ? options.config.output_dir : out_dir;
    options.seed = seed;
    options.log = &std::cerr;
    optsens::set_thread_count(threads);

    const bool all = run_all->parsed();
    if (all || build_rb->parsed()) (void)optsens::cmd_build_rb(options);
    if (all || select->parsed()) (void)optsens::cmd_select(options);
    if (all || baselines->parsed()) (void)optsens::cmd_baselines(options);
    if (all || evaluate->parsed()) (void)optsens::cmd_evaluate(options);
    if (all || report->parsed()) {
      const optsens::ReportSummary summary = optsens::cmd_report(options);
      fmt::print("sets: {}\nspearman: {:.6f}\nverdict: {}\n", summary.set_count, summary.spearman,
                 summary.verdict() ? "greedy dominates random means" : "greedy does not dominate random means");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return optsens::exit_code_for(e);
  }
  return optsens::kExitOk;
}
