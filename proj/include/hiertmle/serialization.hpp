#pragma once

#include <string>

#include "hiertmle/pipeline.hpp"

namespace hiertmle {

/// Deterministic JSON report: keys in a fixed order, no timestamps, doubles
/// printed round-trip exact. Non-finite values become null.
std::string report_json(const EstimationResult& result);

/// Per-replicate rows followed by one aggregate row per intervention
/// (replicate = "all", covered = coverage fraction).
std::string benchmark_csv(const BenchmarkResult& result);

/// Human-readable table of a report produced by `report_json`.
std::string format_report_table(const std::string& report_json_text);

std::string format_benchmark_table(const BenchmarkResult& result);

}  // namespace hiertmle
