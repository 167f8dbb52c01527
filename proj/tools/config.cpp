#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "canalsense/errors.hpp"
#include "canalsense/io.hpp"

namespace canalsense::cli {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void type_error(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("key " + key + ": expected " + expected + ", got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) type_error(key, text, "a number");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) type_error(key, text, "a nonnegative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  type_error(key, text, "true or false");
}

Distribution parse_distribution(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  const auto open = v.find('(');
  const auto comma = v.find(',');
  if (open == std::string::npos || comma == std::string::npos || v.back() != ')' || comma < open) {
    type_error(key, text, "normal(mean, sd) or uniform(lo, hi)");
  }
  const std::string kind = trim(v.substr(0, open));
  const double a = parse_double(key, v.substr(open + 1, comma - open - 1));
  const double b = parse_double(key, v.substr(comma + 1, v.size() - comma - 2));
  if (kind == "normal") return Distribution::normal(a, b);
  if (kind == "uniform") return Distribution::uniform(a, b);
  type_error(key, text, "normal(mean, sd) or uniform(lo, hi)");
}

std::string format_distribution(const Distribution& d) {
  return std::string(d.kind == Distribution::Kind::normal ? "normal(" : "uniform(") + fmt_double(d.a) + ", " +
         fmt_double(d.b) + ")";
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field real_field(double RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
          [member](const RunConfig& c) { return fmt_double(c.*member); }};
}

Field size_field(std::size_t RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<std::size_t>(parse_u64(k, v));
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field model_real(double NominalConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.model.*member = parse_double(k, v); },
          [member](const RunConfig& c) { return fmt_double(c.model.*member); }};
}

Field optional_real(std::optional<double> RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            if (trim(v) == "none") {
              (c.*member).reset();
            } else {
              c.*member = parse_double(k, v);
            }
          },
          [member](const RunConfig& c) { return (c.*member) ? fmt_double(*(c.*member)) : std::string("none"); }};
}

std::vector<std::pair<std::string, Field>> build_registry() {
  std::vector<std::pair<std::string, Field>> reg;
  const auto& names = param_names();
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const std::string name(names[i]);
    reg.emplace_back(name, Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                                   auto a = c.model.nominal.to_array();
                                   a[i] = parse_double(k, v);
                                   c.model.nominal = PhysicalParams::from_array(a);
                                 },
                                 [i](const RunConfig& c) { return fmt_double(c.model.nominal.to_array()[i]); }});
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const std::string name(names[i]);
    reg.emplace_back("true." + name, Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                                             auto a = c.truth.to_array();
                                             a[i] = parse_double(k, v);
                                             c.truth = PhysicalParams::from_array(a);
                                           },
                                           [i](const RunConfig& c) { return fmt_double(c.truth.to_array()[i]); }});
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const std::string name(names[i]);
    reg.emplace_back("dist." + name,
                     Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                             c.distributions.at(i) = parse_distribution(k, v);
                           },
                           [i](const RunConfig& c) { return format_distribution(c.distributions.at(i)); }});
  }
  reg.emplace_back("k_0", model_real(&NominalConfig::k_0));
  reg.emplace_back("k_L", model_real(&NominalConfig::k_L));
  reg.emplace_back("Q_star", model_real(&NominalConfig::Q_star));
  reg.emplace_back("g", model_real(&NominalConfig::g));
  reg.emplace_back("L", model_real(&NominalConfig::L));
  reg.emplace_back("T_star", model_real(&NominalConfig::T_star));
  reg.emplace_back("bc_linearization",
                   Field{[](RunConfig& c, const std::string&, const std::string& v) {
                           c.model.linearization = boundary_linearization_from_string(trim(v));
                         },
                         [](const RunConfig& c) { return std::string(to_string(c.model.linearization)); }});
  reg.emplace_back("dx", real_field(&RunConfig::dx));
  reg.emplace_back("dt", real_field(&RunConfig::dt));
  reg.emplace_back("snapshots", size_field(&RunConfig::snapshots));
  reg.emplace_back("m", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                if (trim(v) == "auto") {
                                  c.m.reset();
                                } else {
                                  c.m = static_cast<std::size_t>(parse_u64(k, v));
                                }
                              },
                              [](const RunConfig& c) { return c.m ? std::to_string(*c.m) : std::string("auto"); }});
  reg.emplace_back("n", size_field(&RunConfig::n));
  reg.emplace_back("level", real_field(&RunConfig::level));
  reg.emplace_back("seed", Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                                 [](const RunConfig& c) { return std::to_string(c.seed); }});
  reg.emplace_back("full", Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.full = parse_bool(k, v); },
                                 [](const RunConfig& c) { return std::string(c.full ? "true" : "false"); }});
  reg.emplace_back("threads", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                      c.threads = static_cast<int>(parse_u64(k, v));
                                    },
                                    [](const RunConfig& c) { return std::to_string(c.threads); }});
  reg.emplace_back("calib_m_min", size_field(&RunConfig::calib_m_min));
  reg.emplace_back("calib_m_max", size_field(&RunConfig::calib_m_max));
  reg.emplace_back("validation_count", size_field(&RunConfig::validation_count));
  reg.emplace_back("calib_c", optional_real(&RunConfig::calib_c));
  reg.emplace_back("calib_q", optional_real(&RunConfig::calib_q));
  reg.emplace_back("certify_count", size_field(&RunConfig::certify_count));
  reg.emplace_back("certify_m", size_field(&RunConfig::certify_m));
  reg.emplace_back("inject_fault", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                           const std::string t = trim(v);
                                           if (t == "none") {
                                             c.fault = Fault::none;
                                           } else if (t == "source_sign") {
                                             c.fault = Fault::source_sign;
                                           } else if (t == "basis_scale") {
                                             c.fault = Fault::basis_scale;
                                           } else {
                                             type_error(k, v, "none, source_sign or basis_scale");
                                           }
                                         },
                                         [](const RunConfig& c) {
                                           switch (c.fault) {
                                             case Fault::source_sign:
                                               return std::string("source_sign");
                                             case Fault::basis_scale:
                                               return std::string("basis_scale");
                                             default:
                                               return std::string("none");
                                           }
                                         }});
  reg.emplace_back("basis", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.basis_path = trim(v); },
                                  [](const RunConfig& c) { return c.basis_path; }});
  reg.emplace_back("out", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = trim(v); },
                                [](const RunConfig& c) { return c.out_dir; }});
  return reg;
}

const std::vector<std::pair<std::string, Field>>& registry() {
  static const auto reg = build_registry();
  return reg;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : registry()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown key " + key);
}

}  // namespace

const char* to_string(Source s) {
  switch (s) {
    case Source::file:
      return "file";
    case Source::flag:
      return "flag";
    default:
      return "default";
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& entry : registry()) out.push_back(entry.first);
    return out;
  }();
  return keys;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value, Source source) {
  field(key).set(cfg, key, value);
  cfg.provenance[key] = source;
  // Simulated parameters follow the nominal ones unless set on their own.
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (key != param_names()[i]) continue;
    const std::string truth_key = "true." + key;
    if (cfg.provenance[truth_key] == Source::default_value) field(truth_key).set(cfg, truth_key, value);
  }
}

std::string get_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

void apply_config_stream(RunConfig& cfg, std::istream& is, Source source) {
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    }
    try {
      set_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), source);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    apply_config_stream(cfg, in, Source::file);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.truth = cfg.model.nominal;
  for (const auto& key : config_keys()) cfg.provenance[key] = Source::default_value;
  return cfg;
}

void RunConfig::validate() const {
  try {
    model.validate();
    (void)grid();
    for (const auto& d : distributions) d.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (distributions.size() != kNumParams) throw ConfigError("dist: need one law per parameter");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level: must lie in (0, 1)");
  if (n < 2) throw ConfigError("n: must be at least 2");
  if (snapshots < 1) throw ConfigError("snapshots: must be at least 1");
  if (m && *m < 1) throw ConfigError("m: must be at least 1 or auto");
  if (calib_m_min < 1 || calib_m_min >= calib_m_max) throw ConfigError("calib_m_min: need 1 <= calib_m_min < calib_m_max");
  if (validation_count < 2) throw ConfigError("validation_count: must be at least 2");
  if (certify_count < 1 || certify_m < 1) throw ConfigError("certify_count, certify_m: must be at least 1");
  if (calib_c.has_value() != calib_q.has_value()) throw ConfigError("calib_c, calib_q: set both or neither");
  if (calib_c && !(*calib_c > 0.0)) throw ConfigError("calib_c: must be positive");
  if (calib_q && !(*calib_q > 0.0 && *calib_q < 1.0)) throw ConfigError("calib_q: must lie in (0, 1)");
}

void echo_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& key : config_keys()) {
    if (key == "threads" || key == "out") continue;
    const auto it = cfg.provenance.find(key);
    const Source src = it == cfg.provenance.end() ? Source::default_value : it->second;
    os << key << " = " << get_value(cfg, key) << "  # " << to_string(src) << '\n';
  }
}

}  // namespace canalsense::cli
