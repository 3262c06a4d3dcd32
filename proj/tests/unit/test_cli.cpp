#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "hiertmle/cli.hpp"
#include "hiertmle/config.hpp"
#include "hiertmle/errors.hpp"
#include "hiertmle/pipeline.hpp"
#include "hiertmle/serialization.hpp"
#include "text_util.hpp"

using namespace hiertmle;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hiertmle_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    write_text_file(path / name, text);
    return path / name;
  }
};

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::string& command, std::optional<fs::path> config, std::optional<fs::path> out = {},
           std::optional<fs::path> in = {}) {
  CliOptions o;
  o.command = command;
  o.config = config;
  o.out = out;
  o.in = in;
  std::ostringstream so, se;
  int code = run_cli(o, so, se);
  return {code, so.str(), se.str()};
}

const char* kSmallDgp = R"({
  "dgp": {"preset": "well_specified", "communities": 40, "n": 5},
  "interventions": [
    {"name": "a0", "kind": "static", "a_star": 0},
    {"name": "a1", "kind": "static", "a_star": 1}
  ],
  "contrasts": [{"first": "a0", "second": "a1"}],
  "outcome": {"level": "pooled_individual"},
  "benchmark": {"replicates": 10, "oracle_draws": 10000}
})";

}  // namespace

TEST_CASE("config defaults and seed source") {
  auto cfg = parse_run_config(kSmallDgp);
  CHECK(cfg.seed == 42);
  CHECK(cfg.seed_source == SeedSource::Default);
  CHECK(cfg.dgp->communities == 40);
  CHECK(cfg.dgp->n_min == 5);
  CHECK(cfg.interventions.size() == 2);
  CHECK(cfg.contrasts.size() == 1);
  CHECK(cfg.outcome.level == OutcomeLevel::PooledIndividual);
}

TEST_CASE("config errors carry a line anchor") {
  const std::string unknown = "{\n  \"dgp\": {\"preset\": \"linear\"},\n  \"interventions\": [],\n  \"bogus\": 1\n}";
  try {
    parse_run_config(unknown);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string what = e.what();
    CHECK(what.find("bogus") != std::string::npos);
    CHECK(what.find("line 4") != std::string::npos);
  }
  try {
    parse_run_config("{\n \"seed\": 1,\n \"dgp\": {\n}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  const std::string bad_kind = "{\"dgp\": {\"preset\": \"linear\"},\n\"interventions\": [{\"kind\": \"teleport\"}]}";
  CHECK_THROWS_WITH_AS(parse_run_config(bad_kind), doctest::Contains("line 2"), ConfigError);
}

TEST_CASE("config invariants") {
  CHECK_THROWS_AS(parse_run_config(R"({"dgp": {"preset": "linear"}, "interventions": []})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"input": "x.csv", "dgp": {"preset": "linear"},
      "interventions": [{"kind": "static", "a_star": 1}]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"dgp": {"preset": "linear"},
      "interventions": [{"kind": "static", "a_star": 1, "name": "x"}],
      "contrasts": [{"first": "x", "second": "y"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"dgp": {"preset": "linear"},
      "interventions": [{"kind": "static", "a_star": 1}],
      "targeting": {"level": "individual"}})"), ConfigError);
  auto cfg = parse_run_config(R"({"dgp": {"preset": "linear"}, "seed": 9,
      "interventions": [{"kind": "shift", "nu": {"intercept": 0.1, "w": [0.5]}},
                        {"kind": "table", "table": {"*": [[0, 0.5], [1, 0.5]]}}]})");
  CHECK(cfg.seed_source == SeedSource::Config);
  CHECK(cfg.interventions[0].nu.w_coef == std::vector<double>{0.5});
  CHECK(cfg.interventions[1].table.at("*").size() == 2);
  CHECK(cfg.interventions[0].name != cfg.interventions[1].name);
}

TEST_CASE("simulate writes one row per individual and logs the default seed") {
  TempDir dir("sim");
  auto config = dir.write("run.json", kSmallDgp);
  auto r = run("simulate", config, dir.path / "data.csv");
  REQUIRE(r.code == kExitOk);
  CHECK(r.err.find("seed 42 (source: default)") != std::string::npos);
  auto lines = split_lines(read_text_file(dir.path / "data.csv"));
  std::size_t rows = 0;
  for (std::size_t k = 1; k < lines.size(); ++k) rows += !trim(lines[k]).empty();
  CHECK(rows == 40 * 5);
}

TEST_CASE("exit codes") {
  TempDir dir("codes");
  auto bad = dir.write("bad.json", "{\n \"dgp\": {\"preset\": \"linear\"},\n \"interventions\": [\n");
  auto r = run("simulate", bad);
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("line") != std::string::npos);
  CHECK(run("estimate", dir.path / "missing.json").code == kExitData);
  auto missing_input = dir.write("in.json", R"({"input": "nothere.csv",
      "interventions": [{"kind": "static", "a_star": 1}]})");
  CHECK(run("estimate", missing_input).code == kExitData);
  auto outside = dir.write("out.json", R"({"dgp": {"preset": "well_specified", "communities": 30},
      "interventions": [{"kind": "static", "a_star": 3}]})");
  auto o = run("estimate", outside);
  CHECK(o.code == kExitRuntime);
  CHECK(o.err.find("support") != std::string::npos);
}

TEST_CASE("estimate is reproducible and complete") {
  TempDir dir("est");
  auto config = dir.write("run.json", kSmallDgp);
  auto a = run("estimate", config, dir.path / "a.json");
  auto b = run("estimate", config, dir.path / "b.json");
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  auto ja = read_text_file(dir.path / "a.json");
  CHECK(ja == read_text_file(dir.path / "b.json"));
  auto j = nlohmann::json::parse(ja);
  for (const char* key : {"seed", "seed_source", "dataset", "density", "outcome", "estimates", "contrasts", "warnings"}) {
    CHECK(j.contains(key));
  }
  REQUIRE(j["estimates"].size() == 2);
  for (const auto& e : j["estimates"]) {
    for (const char* key : {"intervention", "level", "variant", "communities", "psi_hat", "se", "ci", "scaled", "diagnostics"}) {
      CHECK(e.contains(key));
    }
    CHECK(e["diagnostics"].contains("positivity"));
    CHECK(e["diagnostics"]["fluctuation"]["converged"].get<bool>());
  }
  CHECK(j["contrasts"].size() == 1);

  auto rep = run("report", std::nullopt, std::nullopt, dir.path / "a.json");
  CHECK(rep.code == kExitOk);
  CHECK(rep.out.find("a1 - a0") != std::string::npos);
}

TEST_CASE("seed flag overrides the config") {
  auto cfg = parse_run_config(kSmallDgp);
  cfg.seed = 7;
  cfg.seed_source = SeedSource::Flag;
  auto d1 = load_input(cfg);
  auto d2 = load_input(parse_run_config(kSmallDgp));
  CHECK(dataset_fingerprint(d1) != dataset_fingerprint(d2));
}

TEST_CASE("individual level on varying community sizes records a warning") {
  auto cfg = parse_run_config(R"({
    "dgp": {"preset": "well_specified", "communities": 40, "n_min": 3, "n_max": 6},
    "interventions": [{"name": "a1", "kind": "static", "a_star": 1}],
    "outcome": {"level": "pooled_individual"},
    "targeting": {"level": "individual"}})");
  auto res = run_estimation(load_input(cfg), cfg);
  bool found = false;
  for (const auto& w : res.warnings) found = found || w.find("constant N") != std::string::npos;
  CHECK(found);
  auto j = nlohmann::json::parse(report_json(res));
  CHECK(j["warnings"].size() >= 1);
}

TEST_CASE("benchmark rows and aggregate") {
  auto cfg = parse_run_config(kSmallDgp);
  cfg.interventions.pop_back();
  cfg.contrasts.clear();
  auto res = run_benchmark(cfg);
  auto csv = benchmark_csv(res);
  auto lines = split_lines(csv);
  std::size_t rows = 0, aggregate = 0;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    if (trim(lines[k]).empty()) continue;
    auto f = split_csv_line(lines[k]);
    REQUIRE(f.size() == 10);
    if (f[1] == "all") {
      ++aggregate;
    } else {
      ++rows;
      CHECK((f[7] == "0" || f[7] == "1"));
    }
  }
  CHECK(rows == 10);
  CHECK(aggregate == 1);

  cfg.threads = 3;
  CHECK(benchmark_csv(run_benchmark(cfg)) == csv);
}
