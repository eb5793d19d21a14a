#pragma once

// Honest peer behaviour: bootstrap, DHT message handling, swarm maintenance,
// connectivity monitoring and content lookup. Wires the routing table and the
// connection manager together according to the policy version.

#include <eclipse/connmgr.hpp>
#include <eclipse/dht.hpp>
#include <eclipse/identity.hpp>
#include <eclipse/types.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

namespace eclipse {

struct NodeConfig {
  NodeId id;
  PeerAddress address;
  std::vector<Contact> bootstrap_peers;  // static for the node's lifetime
  ConnMgrConfig connmgr;
  EvictionPolicy policy;
  bool dht_server_mode = true;
  bool reachable = true;
  int k = kDefaultBucketSize;
  int alpha = 3;
  int max_lookup_rounds = 16;
};

struct QueryReply {
  std::vector<Contact> peers;
  std::vector<Contact> providers;
  Duration rtt{0};
};

/// What a node needs from the world around it. Calls are synchronous; the
/// returned round-trip time feeds the usefulness rule.
class Network {
 public:
  virtual ~Network() = default;
  virtual SimTime now() const = 0;
  /// Opens a link to whatever answers at `to.address` under `to.id`.
  virtual bool dial(const Contact& self, const Contact& to) = 0;
  /// Notifies `remote` that `self` closed their link.
  virtual void disconnect(const NodeId& self, const NodeId& remote) = 0;
  virtual std::optional<QueryReply> find_node(const Contact& self, const Contact& to, const NodeId& target) = 0;
  virtual std::optional<QueryReply> get_providers(const Contact& self, const Contact& to, const NodeId& cid) = 0;
  virtual std::optional<Duration> ping(const Contact& self, const Contact& to) = 0;
  /// Dials the claimed address back to check that it is reachable.
  virtual bool dial_back(const Contact& self, const Contact& claimed) = 0;
  /// Bitswap want: does `remote` hold the block?
  virtual bool has_block(const Contact& self, const NodeId& remote, const NodeId& cid) = 0;
};

enum class ConnectivityAction { none, rebootstrap };
enum class RelayEvent { advertise, open_virtual, close_virtual };
enum class ProviderOutcome { found_via_swarm, found_via_dht, not_found };

inline constexpr std::size_t kMinOpenConnections = 4;

struct NodeStats {
  std::uint64_t rebootstraps = 0;
  std::uint64_t dht_messages = 0;
  std::uint64_t lookups = 0;
  std::uint64_t trims = 0;
  std::uint64_t trimmed = 0;
};

struct LookupResult {
  std::vector<Contact> closest;
  std::vector<Contact> providers;
  std::size_t queried = 0;
};

class Node {
 public:
  Node(NodeConfig config, Network& net, std::uint64_t rng_seed = 1)
      : config_(std::move(config)),
        net_(&net),
        table_(config_.id, config_.policy, config_.k),
        conns_(config_.id, config_.connmgr),
        rng_(rng_seed) {}

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const NodeConfig& config() const { return config_; }
  const NodeId& id() const { return config_.id; }
  Contact contact() const { return {config_.id, config_.address}; }
  const RoutingTable& routing_table() const { return table_; }
  const ConnectionManager& connections() const { return conns_; }
  const NodeStats& stats() const { return stats_; }
  SimTime now() const { return net_->now(); }

  // -- transport events ----------------------------------------------------

  void on_inbound_connection(const Contact& from) {
    if (!conns_.open(from, Direction::inbound, now())) return;
    sync_dht_tag(from.id);
  }

  /// The remote closed the link or vanished.
  void on_remote_closed(const NodeId& remote) {
    if (!conns_.close(remote)) return;
    after_connection_loss(remote);
  }

  void close_connection(const NodeId& remote) {
    if (!conns_.close(remote)) return;
    net_->disconnect(config_.id, remote);
    after_connection_loss(remote);
  }

  // -- operations ----------------------------------------------------------

  /// Dials every configured bootstrap peer and asks each for our own id.
  void bootstrap() {
    for (const auto& bp : config_.bootstrap_peers) {
      if (!ensure_connection(bp)) continue;
      ++stats_.dht_messages;
      auto reply = net_->find_node(contact(), bp, config_.id);
      if (!reply) continue;
      table_.record_outbound_success(bp.id, now());
      consider(bp, true, true);
      for (const auto& p : reply->peers) {
        if (p.id == config_.id) continue;
        if (ensure_connection(p)) consider(p, true, true);
      }
    }
  }

  /// Closest residents for `target`; the querier is then considered for
  /// insertion. Addresses are taken at face value unless the policy verifies
  /// reachability.
  std::vector<Contact> handle_find_node(const Contact& from, bool claims_server, const NodeId& target) {
    std::vector<Contact> out;
    if (!table_.empty()) {
      for (const auto& p : table_.closest(target, config_.k)) out.push_back(p.contact());
    }
    inbound_insertion(from, claims_server);
    return out;
  }

  /// Pings are insertion events as well.
  void handle_ping(const Contact& from, bool claims_server) { inbound_insertion(from, claims_server); }

  /// Stateless check run once a minute: rebootstrap below four connections.
  ConnectivityAction connectivity_monitor() const {
    return conns_.size() < kMinOpenConnections ? ConnectivityAction::rebootstrap : ConnectivityAction::none;
  }

  ConnectivityAction on_monitor_timer() {
    const auto action = connectivity_monitor();
    if (action == ConnectivityAction::rebootstrap) {
      ++stats_.rebootstraps;
      bootstrap();
    }
    return action;
  }

  /// Unsolicited block adverts earn a point whether or not the block was
  /// wanted; nothing is stored.
  void handle_bitswap_advert(const NodeId& from, const NodeId& /*block*/) { conns_.award(from, tags::bitswap, 1); }

  /// Relay events multiplex virtual connections over the existing link.
  bool handle_relay(const NodeId& from, RelayEvent event) {
    auto* c = find_connection(from);
    if (c == nullptr) return false;
    switch (event) {
      case RelayEvent::advertise:
        award(*c, tags::relay, 0);
        break;
      case RelayEvent::open_virtual:
        if (c->closed) throw ClosedConnectionError();
        ++c->relayed_virtual_count;
        break;
      case RelayEvent::close_virtual:
        if (c->relayed_virtual_count == 0) throw std::logic_error("no relayed virtual connection to close");
        --c->relayed_virtual_count;
        break;
    }
    return true;
  }

  /// Swarm first; the DHT only on a miss.
  ProviderOutcome find_providers(const NodeId& cid) {
    std::vector<NodeId> remotes;
    conns_.for_each([&](const Connection& c) { remotes.push_back(c.remote); });
    for (const auto& r : remotes) {
      if (net_->has_block(contact(), r, cid)) return ProviderOutcome::found_via_swarm;
    }
    auto result = lookup(cid, true);
    for (const auto& p : result.providers) {
      if (p.id == config_.id) continue;
      if (ensure_connection(p)) return ProviderOutcome::found_via_dht;
    }
    return ProviderOutcome::not_found;
  }

  /// Iterative Kademlia lookup with `alpha` parallel queries per round.
  LookupResult lookup(const NodeId& target, bool want_providers = false) {
    ++stats_.lookups;
    std::map<Distance, Contact> shortlist;
    for (const auto& p : table_.closest(target, config_.k)) shortlist.emplace(xor_distance(p.id, target), p.contact());
    std::set<NodeId> queried;
    std::vector<std::pair<NodeId, Duration>> responders;
    LookupResult result;

    for (int round = 0; round < config_.max_lookup_rounds; ++round) {
      std::vector<Contact> batch;
      int seen = 0;
      for (const auto& [d, c] : shortlist) {
        if (seen++ >= config_.k) break;
        if (queried.contains(c.id)) continue;
        batch.push_back(c);
        if (static_cast<int>(batch.size()) >= config_.alpha) break;
      }
      if (batch.empty()) break;
      for (const auto& c : batch) {
        queried.insert(c.id);
        std::optional<QueryReply> reply;
        if (ensure_connection(c)) {
          ++stats_.dht_messages;
          reply = want_providers ? net_->get_providers(contact(), c, target) : net_->find_node(contact(), c, target);
        }
        if (!reply) {
          shortlist.erase(xor_distance(c.id, target));
          continue;
        }
        ++result.queried;
        responders.emplace_back(c.id, reply->rtt);
        table_.record_outbound_success(c.id, now());
        consider(c, true, true);
        for (const auto& p : reply->peers) {
          if (p.id != config_.id) shortlist.emplace(xor_distance(p.id, target), p);
        }
        for (const auto& p : reply->providers) result.providers.push_back(p);
      }
      if (want_providers && !result.providers.empty()) break;
    }

    if (!responders.empty()) {
      Duration fastest = Duration::max();
      for (const auto& [id, rtt] : responders) fastest = std::min(fastest, rtt);
      for (const auto& [id, rtt] : responders) table_.record_usefulness(id, rtt, fastest, now());
    }
    for (const auto& [d, c] : shortlist) {
      if (static_cast<int>(result.closest.size()) >= config_.k) break;
      result.closest.push_back(c);
    }
    return result;
  }

  /// Random-target lookup, then dial what it returned up to high_water.
  void discover() { discover_toward(random_node_id(rng_)); }

  void discover_toward(const NodeId& target) {
    auto result = lookup(target);
    for (const auto& c : result.closest) {
      if (conns_.size() >= static_cast<std::size_t>(config_.connmgr.high_water)) break;
      if (conns_.contains(c.id)) continue;
      if (ensure_connection(c)) consider(c, true, true);
    }
  }

  /// One lookup per occupied bucket; usefulness-based tables also ping and
  /// evict stale residents.
  void refresh_buckets() {
    for (int i : table_.occupied_buckets()) discover_toward(random_id_at_prefix(config_.id, i, rng_));
    if (table_.policy().usefulness_based()) {
      auto evicted = table_.refresh(now(), [&](const PeerRecord& p) {
        ++stats_.dht_messages;
        return net_->ping(contact(), p.contact()).has_value();
      });
      for (const auto& e : evicted) untag_dht(e.id);
    }
  }

  /// Once-a-minute connection manager pass.
  std::vector<Connection> run_trim() {
    ++stats_.trims;
    std::function<bool(const Connection&)> is_protected;
    std::set<NodeId> protected_ids;
    if (config_.connmgr.dht_score_mode == DhtScoreMode::low_buckets_protected) {
      auto occupied = table_.occupied_buckets();
      for (std::size_t j = 0; j < std::min<std::size_t>(2, occupied.size()); ++j) {
        for (const auto& p : table_.bucket(occupied[j])) protected_ids.insert(p.id);
      }
      is_protected = [&](const Connection& c) { return protected_ids.contains(c.remote); };
    }
    auto closed = conns_.trim(now(), is_protected);
    stats_.trimmed += closed.size();
    for (const auto& c : closed) {
      net_->disconnect(config_.id, c.remote);
      after_connection_loss(c.remote);
    }
    return closed;
  }

  /// Dials `c` unless already connected.
  bool ensure_connection(const Contact& c) {
    if (c.id == config_.id) return false;
    if (conns_.contains(c.id)) return true;
    if (!net_->dial(contact(), c)) return false;
    conns_.open(c, Direction::outbound, now());
    sync_dht_tag(c.id);
    return true;
  }

  Connection* find_connection(const NodeId& remote) { return conns_.find(remote); }

  /// Test hook: the table as seen by the node.
  RoutingTable& mutable_routing_table() { return table_; }

 private:
  void inbound_insertion(const Contact& from, bool claims_server) {
    if (!claims_server || from.id == config_.id) return;
    const bool verified = table_.policy().limits_hosts() ? net_->dial_back(contact(), from) : false;
    consider(from, verified, false);
  }

  void consider(const Contact& c, bool verified, bool outbound) {
    if (c.id == config_.id) return;
    // Under the connection-driven policy only connected peers are resident.
    if (table_.policy().connection_driven() && !conns_.contains(c.id)) return;
    PeerRecord rec;
    rec.id = c.id;
    rec.address = c.address;
    rec.last_successful_outbound_query = now();
    rec.last_useful = now();
    rec.reachable_verified = verified;
    auto outcome = table_.try_add(rec, now());
    if (outcome.kind == AddOutcome::Kind::replaced) untag_dht(outcome.evicted->id);
    if (outcome.inserted()) sync_dht_tag(c.id);
    (void)outbound;
  }

  void after_connection_loss(const NodeId& remote) {
    if (table_.policy().connection_driven()) table_.remove(remote);
  }

  void sync_dht_tag(const NodeId& remote) {
    auto* c = conns_.find(remote);
    if (c == nullptr) return;
    if (table_.contains(remote)) {
      award(*c, tags::dht, dht_tag_value(remote, config_.id, config_.connmgr.dht_score_mode));
    } else {
      untag(*c, tags::dht);
    }
  }

  void untag_dht(const NodeId& remote) {
    if (auto* c = conns_.find(remote)) untag(*c, tags::dht);
  }

  NodeConfig config_;
  Network* net_;
  RoutingTable table_;
  ConnectionManager conns_;
  std::mt19937_64 rng_;
  NodeStats stats_;
};

}  // namespace eclipse
