#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace canalsense::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitDomain = 2,
  kExitNumerical = 3,
  kExitValidation = 4,
};

/// `--out`, then CANALSENSE_OUT, then ./canalsense-out.
[[nodiscard]] std::filesystem::path output_directory(const RunConfig& cfg);

// Each command writes its files under output_directory(cfg), reports to
// `out`, and throws the library error types on failure.
void cmd_simulate(const RunConfig& cfg, std::ostream& out);
void cmd_build_rb(const RunConfig& cfg, std::ostream& out);
void cmd_calibrate(const RunConfig& cfg, std::ostream& out);
void cmd_sobol(const RunConfig& cfg, std::ostream& out);
/// Throws ValidationError after writing the report if any check fails.
void cmd_validate(const RunConfig& cfg, std::ostream& out);
void cmd_export_samples(const RunConfig& cfg, std::ostream& out);

/// Parses arguments (without the program name), runs the command and maps
/// errors to exit codes.
[[nodiscard]] int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace canalsense::cli
