#include "hiertmle/cli.hpp"

#include "hiertmle/config.hpp"
#include "hiertmle/errors.hpp"
#include "hiertmle/pipeline.hpp"
#include "hiertmle/serialization.hpp"
#include "text_util.hpp"

namespace hiertmle {

namespace {

RunConfig load_config(const CliOptions& o) {
  if (!o.config) throw ConfigError("--config is required for '" + o.command + "'");
  RunConfig cfg = load_run_config(*o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.seed_source = SeedSource::Flag;
  }
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.threads = *o.threads;
  }
  return cfg;
}

std::optional<std::filesystem::path> output_path(const CliOptions& o, const RunConfig* cfg) {
  if (o.out) return o.out;
  if (cfg && cfg->output) return cfg->output;
  return std::nullopt;
}

void emit(const std::string& text, const std::optional<std::filesystem::path>& path,
          std::ostream& out, std::ostream& err) {
  if (path) {
    write_text_file(*path, text);
    err << "wrote " << path->string() << '\n';
  } else {
    out << text;
  }
}

void log_seed(const RunConfig& cfg, std::ostream& err) {
  err << "seed " << cfg.seed << " (source: " << to_string(cfg.seed_source) << ")\n";
}

int simulate(const CliOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(o);
  if (!cfg.dgp) throw ConfigError("simulate needs a 'dgp' block");
  log_seed(cfg, err);
  auto data = load_input(cfg);
  emit(format_dataset_csv(data), output_path(o, &cfg), out, err);
  return kExitOk;
}

int estimate(const CliOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(o);
  log_seed(cfg, err);
  auto data = load_input(cfg);
  auto result = run_estimation(data, cfg);
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  std::string json = report_json(result);
  auto path = output_path(o, &cfg);
  emit(json, path, out, err);
  if (path) out << format_report_table(json);
  return kExitOk;
}

int benchmark(const CliOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(o);
  log_seed(cfg, err);
  auto result = run_benchmark(cfg);
  for (const auto& r : result.rows) {
    if (!r.error.empty()) {
      err << "warning: replicate " << r.replicate << " (" << r.intervention << ") failed: " << r.error
          << '\n';
    }
  }
  auto path = output_path(o, &cfg);
  emit(benchmark_csv(result), path, out, err);
  (path ? out : err) << format_benchmark_table(result);
  return kExitOk;
}

int report(const CliOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.in) throw ConfigError("--in is required for 'report'");
  std::string text = read_text_file(*o.in);
  emit(format_report_table(text), o.out, out, err);
  return kExitOk;
}

}  // namespace

int run_cli(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (options.command == "simulate") return simulate(options, out, err);
    if (options.command == "estimate") return estimate(options, out, err);
    if (options.command == "benchmark") return benchmark(options, out, err);
    if (options.command == "report") return report(options, out, err);
    err << "error: unknown command '" << options.command << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const OutcomeOutOfBounds& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const WeightError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvariantError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace hiertmle
