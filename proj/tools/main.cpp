#include <iostream>

#include <CLI11.hpp>

#include "hiertmle/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical TMLE for community-level stochastic interventions"};
  app.require_subcommand(1);
  hiertmle::CliOptions opts;

  auto add_common = [&opts](CLI::App* sub) {
    sub->add_option("--config,-c", opts.config, "JSON run config");
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out,-o", opts.out, "output file (default: stdout or config 'output')");
  };
  auto* simulate = app.add_subcommand("simulate", "draw a dataset from the config's DGP");
  add_common(simulate);
  auto* estimate = app.add_subcommand("estimate", "estimate every configured intervention");
  add_common(estimate);
  auto* benchmark = app.add_subcommand("benchmark", "replicate estimation against the oracle");
  add_common(benchmark);
  auto* report = app.add_subcommand("report", "print a saved JSON report as a table");
  report->add_option("--in,-i", opts.in, "report JSON")->required();
  report->add_option("--out,-o", opts.out, "write the table to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : hiertmle::kExitUsage;
  }
  for (auto* sub : {simulate, estimate, benchmark, report}) {
    if (sub->parsed()) opts.command = sub->get_name();
  }
  if (opts.command != "report" && !opts.config) {
    std::cerr << "error: --config is required\n";
    return hiertmle::kExitUsage;
  }
  return hiertmle::run_cli(opts, std::cout, std::cerr);
}
