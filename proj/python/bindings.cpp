#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hiertmle/config.hpp"
#include "hiertmle/errors.hpp"
#include "hiertmle/pipeline.hpp"
#include "hiertmle/serialization.hpp"

namespace py = pybind11;
using namespace hiertmle;

namespace {

RunConfig config_from(const std::string& text, const std::string& base_dir,
                      std::optional<std::uint64_t> seed, std::optional<std::size_t> threads) {
  RunConfig cfg = parse_run_config(text, base_dir);
  if (seed) {
    cfg.seed = *seed;
    cfg.seed_source = SeedSource::Flag;
  }
  if (threads) {
    if (*threads < 1) throw ConfigError("threads must be >= 1");
    cfg.threads = *threads;
  }
  return cfg;
}

std::string estimate(const std::string& config, std::optional<std::string> data_csv,
                     const std::string& base_dir, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_from(config, base_dir, seed, std::nullopt);
  py::gil_scoped_release release;
  if (data_csv) {
    DatasetSchema schema;
    schema.bounds = cfg.outcome_bounds;
    return report_json(run_estimation(parse_dataset(*data_csv, schema), cfg));
  }
  return report_json(run_estimation(load_input(cfg), cfg));
}

std::string simulate(const std::string& config, const std::string& base_dir,
                     std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_from(config, base_dir, seed, std::nullopt);
  if (!cfg.dgp) throw ConfigError("simulate needs a 'dgp' block");
  py::gil_scoped_release release;
  return format_dataset_csv(load_input(cfg));
}

std::string benchmark(const std::string& config, const std::string& base_dir,
                      std::optional<std::uint64_t> seed, std::optional<std::size_t> threads) {
  RunConfig cfg = config_from(config, base_dir, seed, threads);
  py::gil_scoped_release release;
  return benchmark_csv(run_benchmark(cfg));
}

py::list oracle(const std::string& config, std::optional<std::size_t> draws,
                std::optional<std::uint64_t> seed, std::optional<std::size_t> threads) {
  RunConfig cfg = config_from(config, {}, seed, threads);
  if (!cfg.dgp) throw ConfigError("the oracle needs a 'dgp' block");
  std::vector<OracleResult> results;
  {
    py::gil_scoped_release release;
    for (std::size_t k = 0; k < cfg.interventions.size(); ++k) {
      results.push_back(oracle_psi(*cfg.dgp, cfg.interventions[k], draws.value_or(cfg.oracle_draws),
                                   derive_seed(cfg.seed, 5), cfg.threads));
    }
  }
  py::list out;
  for (std::size_t k = 0; k < results.size(); ++k) {
    py::dict d;
    d["intervention"] = cfg.interventions[k].name;
    d["psi0"] = results[k].psi0;
    d["mc_se"] = results[k].mc_se;
    d["draws"] = results[k].draws;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Targeted maximum likelihood estimation for hierarchical data";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
#define HIERTMLE_PY_ERROR(Name) py::register_exception<Name>(m, #Name, base)
  HIERTMLE_PY_ERROR(OutcomeOutOfBounds);
  HIERTMLE_PY_ERROR(WeightError);
  HIERTMLE_PY_ERROR(ParseError);
  HIERTMLE_PY_ERROR(SchemaError);
  HIERTMLE_PY_ERROR(InvariantError);
  HIERTMLE_PY_ERROR(IoError);
  HIERTMLE_PY_ERROR(UnfittedReference);
  HIERTMLE_PY_ERROR(UnsupportedValue);
  HIERTMLE_PY_ERROR(DegenerateSupport);
  HIERTMLE_PY_ERROR(SeparationError);
  HIERTMLE_PY_ERROR(InsufficientData);
  HIERTMLE_PY_ERROR(NonConvergence);
  HIERTMLE_PY_ERROR(DimensionMismatch);
  HIERTMLE_PY_ERROR(AllWeightsZero);
  HIERTMLE_PY_ERROR(MismatchedRuns);
  HIERTMLE_PY_ERROR(SpecError);
  HIERTMLE_PY_ERROR(ConfigError);
#undef HIERTMLE_PY_ERROR

  m.def("estimate", &estimate, py::arg("config"), py::arg("data_csv") = py::none(),
        py::arg("base_dir") = "", py::arg("seed") = py::none(),
        "Run the estimation described by a JSON config; returns the JSON report.");
  m.def("simulate", &simulate, py::arg("config"), py::arg("base_dir") = "",
        py::arg("seed") = py::none(), "Draw a dataset from the config's DGP as CSV text.");
  m.def("benchmark", &benchmark, py::arg("config"), py::arg("base_dir") = "",
        py::arg("seed") = py::none(), py::arg("threads") = py::none(),
        "Replicate estimation on fresh DGP draws; returns the benchmark CSV.");
  m.def("oracle", &oracle, py::arg("config"), py::arg("draws") = py::none(),
        py::arg("seed") = py::none(), py::arg("threads") = py::none());
  m.def("format_report", &format_report_table, py::arg("report_json"));
  m.def(
      "dataset_fingerprint",
      [](const std::string& csv) { return dataset_fingerprint(parse_dataset(csv)); },
      py::arg("data_csv"));
  m.def(
      "make_grid",
      [](const std::vector<double>& values, std::size_t k, const std::string& strategy) {
        return make_grid(values, k, bin_strategy_from_string(strategy)).cutoffs;
      },
      py::arg("values"), py::arg("k"), py::arg("strategy") = "equal_width");
  m.def(
      "unscale_estimate",
      [](double psi, double se, double lo, double hi) {
        OutcomeBounds b{lo, hi};
        b.validate();
        auto r = unscale_estimate(psi, se, b);
        return py::make_tuple(r.psi, r.se);
      },
      py::arg("psi"), py::arg("se"), py::arg("lo"), py::arg("hi"));
  m.def("dgp_presets", &dgp_preset_names);
}
