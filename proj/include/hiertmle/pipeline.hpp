#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiertmle/config.hpp"
#include "hiertmle/inference.hpp"
#include "hiertmle/simulate.hpp"

namespace hiertmle {

struct DensitySummary {
  ExposureType exposure_type = ExposureType::Continuous;
  std::size_t support_size = 0;
  std::optional<BinStrategy> strategy;  // continuous supports only
  bool fixed = false;
  SelectionSummary selection;
};

struct OutcomeSummary {
  OutcomeLevel level = OutcomeLevel::Community;
  OutcomeLoss loss = OutcomeLoss::Bernoulli;
  bool neighbor_features = false;
  SelectionSummary selection;
};

struct EstimationResult {
  std::uint64_t seed = 0;
  SeedSource seed_source = SeedSource::Default;
  std::string fingerprint;
  std::size_t communities = 0;
  std::size_t individuals = 0;
  OutcomeBounds bounds;
  DensitySummary density;
  OutcomeSummary outcome;
  std::vector<EstimateReport> reports;
  std::vector<ContrastReport> contrasts;
  std::vector<std::string> warnings;
  bool include_eic = false;
};

/// Dataset named by the config: the CSV at `input`, or a draw from `dgp`.
/// A seed given in the config or on the command line overrides the DGP seed.
HierarchicalDataset load_input(const RunConfig& cfg);

/// Fits ĝ and Q̄ once, then targets each intervention and builds contrasts.
/// Stage seeds are derived from cfg.seed.
EstimationResult run_estimation(const HierarchicalDataset& data, const RunConfig& cfg);

struct BenchmarkRow {
  std::string intervention;
  std::size_t replicate = 0;
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double psi0 = 0.0;
  bool covered = false;
  double bias = 0.0;
  double mc_se = 0.0;
  std::string error;  // empty when the replicate succeeded
};

struct BenchmarkSummary {
  std::string intervention;
  double psi0 = 0.0;
  double oracle_mc_se = 0.0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double mean_psi_hat = 0.0;
  double bias = 0.0;
  double empirical_sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkSummary> summaries;
};

/// Replicates estimation on fresh draws from cfg.dgp and compares against
/// the Monte Carlo oracle. Replicate r draws its data from seed stream
/// 1000 + r, so rows do not depend on cfg.threads.
BenchmarkResult run_benchmark(const RunConfig& cfg);

}  // namespace hiertmle
