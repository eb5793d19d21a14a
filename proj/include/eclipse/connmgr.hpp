#pragma once

// Scored connection bookkeeping and the periodic lowWater/highWater trim.

#include <eclipse/identity.hpp>
#include <eclipse/types.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eclipse {

namespace tags {
inline constexpr std::string_view dht = "dht";
inline constexpr std::string_view bitswap = "bitswap";
inline constexpr std::string_view relay = "relay";
}  // namespace tags

enum class Direction { inbound, outbound };
enum class RelayScoreMode { per_connection, fixed };
enum class DhtScoreMode { prefix_based, low_buckets_protected };

inline constexpr int kDhtBaseScore = 5;
inline constexpr int kRelayBaseScore = 2;

struct ConnMgrConfig {
  int low_water = 600;
  int high_water = 900;
  Duration grace_period = std::chrono::seconds(20);
  Duration trim_interval = std::chrono::minutes(1);
  RelayScoreMode relay_score_mode = RelayScoreMode::per_connection;
  DhtScoreMode dht_score_mode = DhtScoreMode::prefix_based;

  void validate() const {
    if (low_water < 0 || low_water >= high_water) throw std::invalid_argument("low_water must be below high_water");
    if (trim_interval != std::chrono::minutes(1)) throw std::invalid_argument("trim interval is fixed at one minute");
    if (grace_period < Duration{0}) throw std::invalid_argument("grace period must be non-negative");
  }

  static ConnMgrConfig defaults() { return {}; }
  static ConnMgrConfig bootstrap_grade() {
    ConnMgrConfig c;
    c.low_water = 1000;
    c.high_water = 2000;
    c.grace_period = std::chrono::seconds(60);
    return c;
  }
};

class ClosedConnectionError : public std::logic_error {
 public:
  ClosedConnectionError() : std::logic_error("connection is closed") {}
};

struct Connection {
  NodeId remote;
  PeerAddress remote_address;
  Direction direction = Direction::inbound;
  SimTime established_at{0};
  std::map<std::string, int, std::less<>> tags;
  int relayed_virtual_count = 0;
  bool closed = false;

  bool has_tag(std::string_view t) const { return tags.find(t) != tags.end(); }
  int tag(std::string_view t) const {
    auto it = tags.find(t);
    return it == tags.end() ? 0 : it->second;
  }
};

/// DHT contribution for a resident peer.
inline int dht_tag_value(const NodeId& remote, const NodeId& owner, DhtScoreMode mode) {
  return mode == DhtScoreMode::prefix_based ? kDhtBaseScore + common_prefix_len(remote, owner) : kDhtBaseScore;
}

inline int relay_tag_value(const Connection& c, RelayScoreMode mode) {
  return mode == RelayScoreMode::per_connection ? kRelayBaseScore + c.relayed_virtual_count : kRelayBaseScore;
}

inline int score(const Connection& conn, const NodeId& owner, const ConnMgrConfig& config) {
  int total = 0;
  for (const auto& [name, points] : conn.tags) {
    if (name == tags::dht) {
      total += dht_tag_value(conn.remote, owner, config.dht_score_mode);
    } else if (name == tags::relay) {
      total += relay_tag_value(conn, config.relay_score_mode);
    } else {
      total += points;
    }
  }
  return total;
}

/// Adds points under `tag`. The DHT tag is a formula of the current state, so
/// it is replaced rather than accumulated.
inline void award(Connection& conn, std::string_view tag, int points) {
  if (conn.closed) throw ClosedConnectionError();
  if (points < 0) throw std::invalid_argument("points must be non-negative");
  auto it = conn.tags.find(tag);
  if (it == conn.tags.end()) {
    conn.tags.emplace(std::string(tag), points);
  } else if (tag == tags::dht) {
    it->second = points;
  } else {
    it->second += points;
  }
}

inline void untag(Connection& conn, std::string_view tag) {
  if (conn.closed) throw ClosedConnectionError();
  if (auto it = conn.tags.find(tag); it != conn.tags.end()) conn.tags.erase(it);
}

inline bool in_grace(const Connection& c, SimTime now, const ConnMgrConfig& config) {
  return now - c.established_at < config.grace_period;
}

/// Closes non-grace connections in ascending score order (older first, then
/// farther from owner) until exactly low_water non-grace connections remain.
/// Nothing happens unless the non-grace count exceeds high_water. Grace-period
/// connections are neither counted nor closed; protected connections count
/// but are skipped. Returns the closed connections; `connections` keeps only
/// the survivors.
inline std::vector<Connection> trim(std::vector<Connection>& connections, const ConnMgrConfig& config, SimTime now,
                                    const NodeId& owner,
                                    const std::function<bool(const Connection&)>& is_protected = {}) {
  std::vector<std::size_t> candidates;
  std::size_t non_grace = 0;
  for (std::size_t i = 0; i < connections.size(); ++i) {
    if (in_grace(connections[i], now, config)) continue;
    ++non_grace;
    if (!is_protected || !is_protected(connections[i])) candidates.push_back(i);
  }
  if (non_grace <= static_cast<std::size_t>(config.high_water)) return {};

  struct Key {
    int score;
    SimTime established_at;
    Distance distance;
  };
  std::vector<Key> keys(connections.size());
  for (auto i : candidates) {
    keys[i] = {score(connections[i], owner, config), connections[i].established_at,
               xor_distance(connections[i].remote, owner)};
  }
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    const auto& ka = keys[a];
    const auto& kb = keys[b];
    if (ka.score != kb.score) return ka.score < kb.score;
    if (ka.established_at != kb.established_at) return ka.established_at < kb.established_at;
    return ka.distance > kb.distance;
  });

  const std::size_t excess = non_grace - static_cast<std::size_t>(config.low_water);
  const std::size_t n_close = std::min(excess, candidates.size());
  std::vector<bool> close(connections.size(), false);
  for (std::size_t j = 0; j < n_close; ++j) close[candidates[j]] = true;

  std::vector<Connection> closed;
  closed.reserve(n_close);
  std::vector<Connection> survivors;
  survivors.reserve(connections.size() - n_close);
  for (std::size_t i = 0; i < connections.size(); ++i) {
    if (close[i]) {
      closed.push_back(std::move(connections[i]));
      closed.back().closed = true;
    } else {
      survivors.push_back(std::move(connections[i]));
    }
  }
  connections = std::move(survivors);
  return closed;
}

/// The set of live connections of one node, keyed by remote id.
class ConnectionManager {
 public:
  ConnectionManager(NodeId owner, ConnMgrConfig config) : owner_(owner), config_(config) { config_.validate(); }

  const ConnMgrConfig& config() const { return config_; }
  const NodeId& owner() const { return owner_; }
  std::size_t size() const { return conns_.size(); }
  bool contains(const NodeId& remote) const { return conns_.contains(remote); }

  Connection* find(const NodeId& remote) {
    auto it = conns_.find(remote);
    return it == conns_.end() ? nullptr : &it->second;
  }
  const Connection* find(const NodeId& remote) const {
    auto it = conns_.find(remote);
    return it == conns_.end() ? nullptr : &it->second;
  }

  /// Registers a new connection. Returns false when one already exists.
  bool open(const Contact& remote, Direction dir, SimTime now) {
    Connection c;
    c.remote = remote.id;
    c.remote_address = remote.address;
    c.direction = dir;
    c.established_at = now;
    return conns_.emplace(remote.id, std::move(c)).second;
  }

  bool close(const NodeId& remote) { return conns_.erase(remote) > 0; }

  /// Awards points on the connection to `remote`; unknown peers are ignored.
  bool award(const NodeId& remote, std::string_view tag, int points) {
    auto* c = find(remote);
    if (c == nullptr) return false;
    eclipse::award(*c, tag, points);
    return true;
  }

  int score_of(const NodeId& remote) const {
    const auto* c = find(remote);
    return c == nullptr ? 0 : score(*c, owner_, config_);
  }

  std::size_t non_grace_count(SimTime now) const {
    std::size_t n = 0;
    for (const auto& [id, c] : conns_) n += in_grace(c, now, config_) ? 0 : 1;
    return n;
  }

  std::vector<Connection> trim(SimTime now, const std::function<bool(const Connection&)>& is_protected = {}) {
    std::vector<Connection> all;
    all.reserve(conns_.size());
    for (auto& [id, c] : conns_) all.push_back(std::move(c));
    auto closed = eclipse::trim(all, config_, now, owner_, is_protected);
    conns_.clear();
    for (auto& c : all) {
      auto id = c.remote;
      conns_.emplace(id, std::move(c));
    }
    return closed;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [id, c] : conns_) fn(c);
  }

 private:
  NodeId owner_;
  ConnMgrConfig config_;
  std::map<NodeId, Connection> conns_;
};

}  // namespace eclipse
