#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace hiertmle {

struct CliOptions {
  std::string command;  // simulate | estimate | benchmark | report
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> in;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

/// Exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,  // ConfigError, SpecError
  kExitData = 3,    // unreadable or malformed input files
  kExitRuntime = 4, // estimation failures
};

/// Runs one subcommand. Results go to `out` (or the --out file), logs and
/// error messages to `err`.
int run_cli(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace hiertmle
