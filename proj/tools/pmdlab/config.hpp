#pragma once

// Scenario configuration: a flat key-value store loaded from a config file
// (either `key = value` lines or a JSON object) plus `--set` overrides, and
// the typed parameter sets of each subcommand.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmdlab/error.hpp"
#include "pmdlab/sampling.hpp"
#include "pmdlab/trainer.hpp"

namespace pmdlab::cli {

using json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

class KeyValues {
 public:
  /// `key = value` per line, `#` starts a comment; a file whose first non-blank character
  /// is `{` is read as a JSON object instead.
  static KeyValues from_file(const std::filesystem::path& path);
  static KeyValues from_text(const std::string& text, const std::string& origin = "config");

  /// `key=value`.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long> get_longs(const std::string& key, const std::vector<long>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed, const std::string& command) const;

 private:
  std::map<std::string, std::string> values_;
};

struct CommonOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  unsigned jobs = 1;
};

struct ExactParams {
  std::vector<double> p_grid{0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> tau_grid{0.05, 0.1, 0.5, 1.0};
  std::vector<Method> methods{Method::mean, Method::part};
  double lambda_tol = 1e-12;
};

struct FiguresParams {
  std::vector<double> fig1_p_grid;
  std::vector<double> fig1_tau_grid{0.05, 0.1, 0.2, 0.5, 1.0, 10.0, 1e6};
  std::vector<double> fig2_p_grid;
  double fig2_tau = 0.1;
  SweepConfig sweep;
};

struct TrainParams {
  TrainConfig train;
  std::size_t states = 20;
  std::size_t actions = 20;
  std::size_t k_min = 1;
  std::size_t k_max = 6;
  std::uint64_t instance_seed = 0;
};

ExactParams parse_exact(const KeyValues& kv);
FiguresParams parse_figures(const KeyValues& kv, const CommonOptions& common);
SweepConfig parse_estimate(const KeyValues& kv, const CommonOptions& common);
TrainParams parse_train(const KeyValues& kv, const CommonOptions& common);

json to_json(const ExactParams& p);
json to_json(const FiguresParams& p);
json to_json(const SweepConfig& c);
json to_json(const TrainParams& p);

}  // namespace pmdlab::cli
