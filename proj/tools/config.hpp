#pragma once

// Flat `key = value` run configuration with per-field provenance.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canalsense/channel.hpp"
#include "canalsense/pde.hpp"
#include "canalsense/uq.hpp"

namespace canalsense::cli {

enum class Source { default_value, file, flag };

[[nodiscard]] const char* to_string(Source s);

enum class Fault { none, source_sign, basis_scale };

struct RunConfig {
  NominalConfig model;
  PhysicalParams truth;  ///< parameters simulated by `simulate`; defaults to the nominal ones
  std::vector<Distribution> distributions = table1_distributions();
  double dx = 5.0;
  double dt = 5.0;
  std::size_t snapshots = 100;
  std::optional<std::size_t> m;  ///< empty means auto
  std::size_t n = 30000;
  double level = 0.95;
  std::uint64_t seed = 1;
  bool full = false;
  int threads = 0;
  std::size_t calib_m_min = 3;
  std::size_t calib_m_max = 14;
  std::size_t validation_count = 1000;
  std::optional<double> calib_c;  ///< injected rule constants skip the fit
  std::optional<double> calib_q;
  std::size_t certify_count = 100;
  std::size_t certify_m = 8;
  Fault fault = Fault::none;
  std::string basis_path;  ///< load this basis instead of building one
  std::string out_dir;

  std::map<std::string, Source> provenance;

  [[nodiscard]] Grid grid() const { return build_grid(model.L, model.T_star, dx, dt); }
  /// Throws ConfigError naming the first violated field.
  void validate() const;
};

/// Every recognized key, in echo order.
[[nodiscard]] const std::vector<std::string>& config_keys();

/// Sets one field from text. Throws ConfigError("unknown key <k>") or a type error naming the key.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value, Source source);

/// Current value of a field in the same text form set_value accepts.
[[nodiscard]] std::string get_value(const RunConfig& cfg, const std::string& key);

/// Reads `key = value` lines; `#` starts a comment. Errors carry the line number.
void apply_config_stream(RunConfig& cfg, std::istream& is, Source source);
void apply_config_file(RunConfig& cfg, const std::string& path);

[[nodiscard]] RunConfig default_config();

/// `key = value  # source` for every field except threads, which must not
/// influence any output file.
void echo_config(std::ostream& os, const RunConfig& cfg);

}  // namespace canalsense::cli
