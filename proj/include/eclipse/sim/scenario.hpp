#pragma once

// Scenario description and its flat key=value file format.
//
//   # comment
//   honest_nodes = 10000
//   policy = 0423
//
// Unknown keys and malformed values are errors.

#include <eclipse/connmgr.hpp>
#include <eclipse/dht.hpp>
#include <eclipse/types.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eclipse::sim {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VictimRole { regular, bootstrap };

struct Scenario {
  int honest_nodes = 10000;
  double churn_per_min = -1;  // negative: honest_nodes / 30
  double reachable_fraction = 0.3;
  int bootstrap_nodes = 8;

  ConnMgrConfig connmgr = ConnMgrConfig::defaults();
  EvictionPolicy policy = EvictionPolicy::v0423();
  VictimRole victim_role = VictimRole::regular;

  int warmup_minutes = 5;
  int attack_minutes = 50;
  int max_setup_minutes = 30;
  bool attack = true;
  int cover_depth = 0;  // zero: ceil(log2 honest_nodes) + 8
  int safety_margin = 10;
  bool maintain_eclipse = false;
  int maintenance_connections = 4;
  int attacker_hosts = 1;

  // Honest traffic toward the victim.
  double demand_median_per_min = 7.0;
  double demand_sigma = 0.57;
  double discovery_per_conn_per_min = 0.5;
  int honest_bitswap_max = 10;

  Duration lookup_interval = std::chrono::seconds(10);
  Duration refresh_interval = std::chrono::minutes(10);
  Duration sample_interval = std::chrono::seconds(1);

  std::uint64_t store_records = std::uint64_t{1} << 22;
  std::string store_dir;

  int runs = 100;
  std::uint64_t seed = 1;

  double effective_churn_per_min() const { return churn_per_min < 0 ? honest_nodes / 30.0 : churn_per_min; }

  void validate() const {
    connmgr.validate();
    if (honest_nodes < bootstrap_nodes + 1) throw ScenarioError("honest_nodes too small");
    if (bootstrap_nodes < 1) throw ScenarioError("bootstrap_nodes must be >= 1");
    if (reachable_fraction <= 0 || reachable_fraction > 1) throw ScenarioError("reachable_fraction must be in (0, 1]");
    if (warmup_minutes < 5) throw ScenarioError("warmup must be at least 5 minutes");
    if (attack_minutes < 1) throw ScenarioError("attack_minutes must be >= 1");
    if (runs < 1) throw ScenarioError("runs must be >= 1");
    if (maintenance_connections < 4) throw ScenarioError("maintenance_connections must be >= 4");
    if (attacker_hosts < 1) throw ScenarioError("attacker_hosts must be >= 1");
    if (churn_per_min >= 0 && churn_per_min > honest_nodes) throw ScenarioError("churn_per_min exceeds population");
  }
};

namespace detail {

inline std::string_view trim_ws(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ScenarioError("invalid value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

inline double parse_double(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ScenarioError("invalid value for " + std::string(key) + ": '" + s + "'");
  return d;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ScenarioError("invalid boolean for " + std::string(key) + ": '" + std::string(v) + "'");
}

}  // namespace detail

inline EvictionPolicy parse_policy(std::string_view v) {
  if (v == "0423") return EvictionPolicy::v0423();
  if (v == "0500") return EvictionPolicy::v0500();
  if (v == "0600") return EvictionPolicy::v0600();
  throw ScenarioError("policy must be 0423, 0500 or 0600");
}

/// Applies one key=value pair to `s`.
inline void set_scenario_key(Scenario& s, std::string_view key, std::string_view v) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_number;
  if (key == "honest_nodes") s.honest_nodes = parse_number<int>(key, v);
  else if (key == "churn_per_min") s.churn_per_min = parse_double(key, v);
  else if (key == "reachable_fraction") s.reachable_fraction = parse_double(key, v);
  else if (key == "bootstrap_nodes") s.bootstrap_nodes = parse_number<int>(key, v);
  else if (key == "low_water") s.connmgr.low_water = parse_number<int>(key, v);
  else if (key == "high_water") s.connmgr.high_water = parse_number<int>(key, v);
  else if (key == "grace_s") s.connmgr.grace_period = std::chrono::seconds(parse_number<int>(key, v));
  else if (key == "policy") s.policy = parse_policy(v);
  else if (key == "relay_mode") {
    if (v == "per_connection") s.connmgr.relay_score_mode = RelayScoreMode::per_connection;
    else if (v == "fixed") s.connmgr.relay_score_mode = RelayScoreMode::fixed;
    else throw ScenarioError("relay_mode must be per_connection or fixed");
  } else if (key == "dht_score_mode") {
    if (v == "prefix_based") s.connmgr.dht_score_mode = DhtScoreMode::prefix_based;
    else if (v == "low_buckets_protected") s.connmgr.dht_score_mode = DhtScoreMode::low_buckets_protected;
    else throw ScenarioError("dht_score_mode must be prefix_based or low_buckets_protected");
  } else if (key == "victim_role") {
    if (v == "regular") s.victim_role = VictimRole::regular;
    else if (v == "bootstrap") s.victim_role = VictimRole::bootstrap;
    else throw ScenarioError("victim_role must be regular or bootstrap");
  } else if (key == "warmup_minutes") s.warmup_minutes = parse_number<int>(key, v);
  else if (key == "attack_minutes") s.attack_minutes = parse_number<int>(key, v);
  else if (key == "max_setup_minutes") s.max_setup_minutes = parse_number<int>(key, v);
  else if (key == "attack") s.attack = parse_bool(key, v);
  else if (key == "cover_depth") s.cover_depth = parse_number<int>(key, v);
  else if (key == "safety_margin") s.safety_margin = parse_number<int>(key, v);
  else if (key == "maintain_eclipse") s.maintain_eclipse = parse_bool(key, v);
  else if (key == "maintenance_connections") s.maintenance_connections = parse_number<int>(key, v);
  else if (key == "attacker_hosts") s.attacker_hosts = parse_number<int>(key, v);
  else if (key == "demand_median_per_min") s.demand_median_per_min = parse_double(key, v);
  else if (key == "demand_sigma") s.demand_sigma = parse_double(key, v);
  else if (key == "discovery_per_conn_per_min") s.discovery_per_conn_per_min = parse_double(key, v);
  else if (key == "honest_bitswap_max") s.honest_bitswap_max = parse_number<int>(key, v);
  else if (key == "lookup_interval_s") s.lookup_interval = std::chrono::seconds(parse_number<int>(key, v));
  else if (key == "refresh_interval_s") s.refresh_interval = std::chrono::seconds(parse_number<int>(key, v));
  else if (key == "sample_interval_s") s.sample_interval = std::chrono::seconds(parse_number<int>(key, v));
  else if (key == "store_records") s.store_records = parse_number<std::uint64_t>(key, v);
  else if (key == "store_dir") s.store_dir = std::string(v);
  else if (key == "runs") s.runs = parse_number<int>(key, v);
  else if (key == "seed") s.seed = parse_number<std::uint64_t>(key, v);
  else throw ScenarioError("unknown scenario key: " + std::string(key));
}

inline Scenario parse_scenario(std::istream& in) {
  Scenario s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = detail::trim_ws(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ScenarioError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim_ws(view.substr(0, eq));
    const auto value = detail::trim_ws(view.substr(eq + 1));
    if (key.empty()) throw ScenarioError("line " + std::to_string(lineno) + ": empty key");
    set_scenario_key(s, key, value);
  }
  s.validate();
  return s;
}

inline Scenario parse_scenario(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_scenario(in);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  return parse_scenario(in);
}

}  // namespace eclipse::sim
