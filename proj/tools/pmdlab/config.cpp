#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pmdlab/io.hpp"

namespace pmdlab::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string json_scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return format_double(v.get<double>());
  throw ConfigError("key '" + key + "': unsupported JSON value");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated list '" + raw + "'");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    return parse_double(trim(s));
  } catch (const InvalidArgument&) {
    throw ConfigError("key '" + key + "': '" + s + "' is not a number");
  }
}

long to_long(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
  }
  return v;
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("key '" + key + "': " + what);
}

}  // namespace

KeyValues KeyValues::from_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
    for (const auto& [key, v] : doc.items()) {
      if (v.is_array()) {
        std::string joined;
        for (const auto& item : v) {
          if (!joined.empty()) joined += ',';
          joined += json_scalar(item, key);
        }
        kv.set(key, joined);
      } else {
        kv.set(key, json_scalar(v, key));
      }
    }
    return kv;
  }
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return from_text(text, path.string());
}

void KeyValues::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

long KeyValues::get_long(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_long(key, it->second);
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string t = trim(it->second);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("key '" + key + "': '" + it->second + "' is not a nonnegative integer");
  }
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = trim(it->second);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> KeyValues::get_doubles(const std::string& key,
                                           const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(it->second)) out.push_back(to_double(key, s));
  return out;
}

std::vector<long> KeyValues::get_longs(const std::string& key,
                                       const std::vector<long>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<long> out;
  for (const auto& s : split_list(it->second)) out.push_back(to_long(key, s));
  return out;
}

std::vector<std::string> KeyValues::get_strings(const std::string& key,
                                                const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

void KeyValues::reject_unknown(const std::set<std::string>& allowed,
                               const std::string& command) const {
  for (const auto& [key, value] : values_) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' for command '" + command + "'");
    }
  }
}

namespace {

const std::set<std::string> kCommonKeys{"seed", "jobs", "out"};

std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert(kCommonKeys.begin(), kCommonKeys.end());
  return keys;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

void check_probabilities(const std::vector<double>& grid, const std::string& key, bool closed) {
  for (double p : grid) {
    check(std::isfinite(p) && (closed ? (p >= 0.0 && p <= 1.0) : (p > 0.0 && p < 1.0)), key,
          closed ? "entries must lie in [0, 1]" : "entries must lie in (0, 1)");
  }
}

void check_taus(const std::vector<double>& grid, const std::string& key) {
  for (double t : grid) check(std::isfinite(t) && t > 0.0, key, "entries must be positive and finite");
}

SweepConfig sweep_from(const KeyValues& kv, const CommonOptions& common, const std::string& pre) {
  SweepConfig c;
  c.p_grid = kv.get_doubles(pre + "p_grid", c.p_grid);
  c.n_grid = kv.get_longs(pre + "n_grid", c.n_grid);
  c.tau = kv.get_double(pre + "tau", c.tau);
  c.trials = kv.get_long(pre + "trials", c.trials);
  c.delta = kv.get_double(pre + "delta", c.delta);
  c.seed = common.seed;
  c.jobs = common.jobs;
  check_probabilities(c.p_grid, pre + "p_grid", false);
  for (long n : c.n_grid) check(n >= 2, pre + "n_grid", "entries must be >= 2");
  check(std::isfinite(c.tau) && c.tau > 0.0, pre + "tau", "must be positive and finite");
  check(c.trials >= 1, pre + "trials", "must be >= 1");
  check(c.delta > 0.0 && c.delta < 1.0, pre + "delta", "must lie in (0, 1)");
  return c;
}

}  // namespace

ExactParams parse_exact(const KeyValues& kv) {
  kv.reject_unknown(with_common({"p", "p_grid", "tau", "tau_grid", "method", "lambda_tol"}), "exact");
  ExactParams e;
  check(!(kv.has("p") && kv.has("p_grid")), "p", "give either 'p' or 'p_grid', not both");
  check(!(kv.has("tau") && kv.has("tau_grid")), "tau", "give either 'tau' or 'tau_grid', not both");
  const std::string pk = kv.has("p") ? "p" : "p_grid";
  const std::string tk = kv.has("tau") ? "tau" : "tau_grid";
  e.p_grid = kv.get_doubles(pk, e.p_grid);
  e.tau_grid = kv.get_doubles(tk, e.tau_grid);
  check_probabilities(e.p_grid, pk, false);
  check_taus(e.tau_grid, tk);
  if (kv.has("method")) {
    e.methods.clear();
    for (const auto& m : kv.get_strings("method", {})) {
      try {
        e.methods.push_back(parse_method(m));
      } catch (const InvalidArgument&) {
        throw ConfigError("key 'method': unknown method '" + m + "' (expected mean or part)");
      }
    }
  }
  e.lambda_tol = kv.get_double("lambda_tol", e.lambda_tol);
  check(e.lambda_tol > 0.0 && e.lambda_tol < 1.0, "lambda_tol", "must lie in (0, 1)");
  return e;
}

FiguresParams parse_figures(const KeyValues& kv, const CommonOptions& common) {
  kv.reject_unknown(with_common({"fig1_p_grid", "fig1_tau_grid", "fig2_p_grid", "fig2_tau",
                                 "est_p_grid", "est_n_grid", "est_tau", "est_trials", "est_delta"}),
                    "figures");
  FiguresParams f;
  f.fig1_p_grid = kv.get_doubles("fig1_p_grid", linspace(0.0, 1.0, 21));
  f.fig1_tau_grid = kv.get_doubles("fig1_tau_grid", f.fig1_tau_grid);
  f.fig2_p_grid = kv.get_doubles("fig2_p_grid", linspace(0.01, 0.99, 99));
  f.fig2_tau = kv.get_double("fig2_tau", f.fig2_tau);
  check_probabilities(f.fig1_p_grid, "fig1_p_grid", true);
  check_taus(f.fig1_tau_grid, "fig1_tau_grid");
  check_probabilities(f.fig2_p_grid, "fig2_p_grid", false);
  check(std::isfinite(f.fig2_tau) && f.fig2_tau > 0.0, "fig2_tau", "must be positive and finite");
  f.sweep = sweep_from(kv, common, "est_");
  return f;
}

SweepConfig parse_estimate(const KeyValues& kv, const CommonOptions& common) {
  kv.reject_unknown(with_common({"p_grid", "n_grid", "tau", "trials", "delta"}), "estimate");
  return sweep_from(kv, common, "");
}

TrainParams parse_train(const KeyValues& kv, const CommonOptions& common) {
  kv.reject_unknown(
      with_common({"method", "tau", "K", "inner_steps", "inner_step_size", "global_steps",
                   "probe_steps", "mini_steps", "clip", "clip_headroom", "states", "actions",
                   "k_min", "k_max", "instance_seed"}),
      "train");
  TrainParams t;
  auto& c = t.train;
  const std::string m = kv.get_string("method", std::string(to_string(c.method)));
  try {
    c.method = parse_train_method(m);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("key 'method': ") + e.what());
  }
  c.tau = kv.get_double("tau", c.tau);
  c.rollouts_per_state = kv.get_long("K", c.rollouts_per_state);
  c.inner_steps = kv.get_long("inner_steps", c.inner_steps);
  c.inner_step_size = kv.get_double("inner_step_size", c.inner_step_size);
  c.global_steps = kv.get_long("global_steps", c.global_steps);
  c.probe_steps = kv.get_long("probe_steps", c.probe_steps);
  c.mini_steps = kv.get_long("mini_steps", c.mini_steps);
  c.clip = kv.get_bool("clip", c.clip);
  c.clip_headroom = kv.get_double("clip_headroom", c.clip_headroom);
  c.seed = common.seed;
  c.jobs = common.jobs;
  check(std::isfinite(c.tau) && c.tau > 0.0, "tau", "must be positive and finite");
  check(c.rollouts_per_state >= 2, "K", "must be >= 2");
  check(c.inner_steps >= 1, "inner_steps", "must be >= 1");
  check(std::isfinite(c.inner_step_size) && c.inner_step_size > 0.0, "inner_step_size",
        "must be positive");
  check(c.global_steps >= 0, "global_steps", "must be >= 0");
  check(c.probe_steps >= 0, "probe_steps", "must be >= 0");
  check(c.mini_steps >= 1 && c.mini_steps <= c.rollouts_per_state, "mini_steps",
        "must lie in [1, K]");
  check(c.clip_headroom >= 1.0, "clip_headroom", "must be >= 1");
  const long states = kv.get_long("states", 20), actions = kv.get_long("actions", 20);
  const long k_min = kv.get_long("k_min", 1), k_max = kv.get_long("k_max", 6);
  check(states >= 1, "states", "must be >= 1");
  check(actions >= 2, "actions", "must be >= 2");
  check(k_min >= 1, "k_min", "must be >= 1");
  check(k_max >= k_min && k_max < actions, "k_max", "must lie in [k_min, actions - 1]");
  t.states = static_cast<std::size_t>(states);
  t.actions = static_cast<std::size_t>(actions);
  t.k_min = static_cast<std::size_t>(k_min);
  t.k_max = static_cast<std::size_t>(k_max);
  t.instance_seed = kv.get_u64("instance_seed", t.instance_seed);
  return t;
}

json to_json(const ExactParams& p) {
  json methods = json::array();
  for (auto m : p.methods) methods.push_back(to_string(m));
  return json{{"p_grid", p.p_grid}, {"tau_grid", p.tau_grid}, {"method", methods},
              {"lambda_tol", p.lambda_tol}};
}

json to_json(const SweepConfig& c) {
  return json{{"p_grid", c.p_grid}, {"n_grid", c.n_grid}, {"tau", c.tau},
              {"trials", c.trials}, {"delta", c.delta}};
}

json to_json(const FiguresParams& p) {
  return json{{"fig1_p_grid", p.fig1_p_grid}, {"fig1_tau_grid", p.fig1_tau_grid},
              {"fig2_p_grid", p.fig2_p_grid}, {"fig2_tau", p.fig2_tau},
              {"estimation", to_json(p.sweep)}};
}

json to_json(const TrainParams& p) {
  const auto& c = p.train;
  return json{{"method", to_string(c.method)},
              {"tau", c.tau},
              {"K", c.rollouts_per_state},
              {"inner_steps", c.inner_steps},
              {"inner_step_size", c.inner_step_size},
              {"global_steps", c.global_steps},
              {"probe_steps", c.effective_probe_steps()},
              {"mini_steps", c.mini_steps},
              {"clip", c.clip},
              {"clip_headroom", c.clip_headroom},
              {"states", p.states},
              {"actions", p.actions},
              {"k_min", p.k_min},
              {"k_max", p.k_max},
              {"instance_seed", p.instance_seed}};
}

}  // namespace pmdlab::cli
