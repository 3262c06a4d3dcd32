#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hiertmle/density.hpp"
#include "hiertmle/individual_g.hpp"
#include "hiertmle/interventions.hpp"
#include "hiertmle/outcome.hpp"
#include "hiertmle/simulate.hpp"
#include "hiertmle/tmle.hpp"

namespace hiertmle {

struct ContrastSpec {
  std::string first;
  std::string second;
};

enum class SeedSource { Default, Config, Flag };
std::string_view to_string(SeedSource s);

/// A full run: where the data comes from, the interventions, and the
/// settings of every estimation stage. Relative paths in the config file
/// are resolved against the file's directory.
struct RunConfig {
  std::optional<std::filesystem::path> input;
  std::optional<DGPSpec> dgp;
  std::uint64_t seed = 42;
  SeedSource seed_source = SeedSource::Default;
  std::optional<OutcomeBounds> outcome_bounds;
  std::vector<InterventionSpec> interventions;
  std::vector<ContrastSpec> contrasts;

  DensityConfig density;
  std::optional<std::vector<double>> fixed_density_masses;
  OutcomeConfig outcome;
  std::optional<std::filesystem::path> neighbor_map_path;
  TargetingConfig targeting;
  IndividualDensityConfig individual_g;
  bool include_eic = false;

  std::size_t replicates = 10;
  std::size_t oracle_draws = 100000;
  std::size_t threads = 1;
  std::optional<std::filesystem::path> output;

  /// Checks cross-field invariants (exactly one data source, intervention
  /// names unique, contrasts refer to declared interventions, ...).
  void validate() const;
  /// Everything `validate` checks except the data source.
  void validate_settings() const;
};

/// Parses the JSON run config. Syntax errors and semantic errors are
/// reported as ConfigError with a line anchor.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses a DGP block (`{"preset": ..., overrides...}`) from JSON text.
DGPSpec parse_dgp_spec(const std::string& json_text);

}  // namespace hiertmle
