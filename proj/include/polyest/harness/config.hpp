#pragma once

// Experiment configuration: JSON schema, validation, and typed parameter
// access for scenario code.

#include <polyest/distributions.hpp>
#include <polyest/errors.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace polyest::harness {

using json = nlohmann::json;

struct ExperimentConfig {
  std::string scenario;
  std::vector<std::size_t> sample_sizes;
  std::size_t replicates = 1;
  std::uint64_t base_seed = 0;
  /// Results go to <output_path>.csv and <output_path>.json; empty keeps
  /// them in memory only.
  std::string output_path;
  unsigned workers = 1;
  /// Scenario parameters; merged over the scenario defaults at run time.
  json params = json::object();
};

namespace detail {

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

[[nodiscard]] inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* const known[] = {"scenario", "sample_sizes", "replicates", "base_seed",
                                      "output_path", "workers",    "params"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config field '" + key + "'");
  }
  ExperimentConfig c;
  c.scenario = detail::get_field<std::string>(j, "scenario", "config");
  c.sample_sizes = detail::get_field<std::vector<std::size_t>>(j, "sample_sizes", "config");
  if (j.contains("replicates")) {
    const auto r = detail::get_field<long long>(j, "replicates", "config");
    if (r < 1) throw ConfigError("replicates must be >= 1");
    c.replicates = static_cast<std::size_t>(r);
  }
  if (j.contains("base_seed")) c.base_seed = detail::get_field<std::uint64_t>(j, "base_seed", "config");
  if (j.contains("output_path")) c.output_path = detail::get_field<std::string>(j, "output_path", "config");
  if (j.contains("workers")) {
    const auto w = detail::get_field<long long>(j, "workers", "config");
    if (w < 1) throw ConfigError("workers must be >= 1");
    c.workers = static_cast<unsigned>(w);
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ConfigError("params must be an object");
    c.params = j.at("params");
  }
  if (c.sample_sizes.empty()) throw ConfigError("sample_sizes must not be empty");
  for (auto n : c.sample_sizes)
    if (n == 0) throw ConfigError("sample sizes must be positive");
  return c;
}

[[nodiscard]] inline json config_to_json(const ExperimentConfig& c) {
  return json{{"scenario", c.scenario},       {"sample_sizes", c.sample_sizes}, {"replicates", c.replicates},
              {"base_seed", c.base_seed},     {"output_path", c.output_path},   {"workers", c.workers},
              {"params", c.params}};
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Typed read-only view of scenario parameters; every failure is a ConfigError.
class Params {
 public:
  explicit Params(json j) : j_(std::move(j)) {}

  [[nodiscard]] const json& raw() const { return j_; }

  template <class T>
  [[nodiscard]] T get(const char* key) const {
    return detail::get_field<T>(j_, key, "params");
  }

  [[nodiscard]] double positive(const char* key) const {
    const double v = get<double>(key);
    if (!(v > 0.0)) throw ConfigError(std::string("params.") + key + " must be > 0");
    return v;
  }

  [[nodiscard]] Distribution distribution(const char* key) const {
    if (!j_.contains(key)) throw ConfigError(std::string("params.") + key + " is missing");
    return parse_distribution(j_.at(key), key);
  }

  static Distribution parse_distribution(const json& d, const std::string& where) {
    try {
      return make_distribution(d.at("family").get<std::string>(), d.value("params", std::vector<double>{}));
    } catch (const json::exception& e) {
      throw ConfigError("params." + where + ": " + e.what());
    } catch (const UnsupportedDistribution& e) {
      throw ConfigError("params." + where + ": " + e.what());
    }
  }

 private:
  json j_;
};

}  // namespace polyest::harness
