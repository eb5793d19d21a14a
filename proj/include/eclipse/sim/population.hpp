#pragma once

// Lightweight honest network: a fixed number of slots whose occupants are
// replaced on churn. Reachable occupants run in DHT server mode and answer
// find_node with the globally k closest online servers.

#include <eclipse/identity.hpp>
#include <eclipse/types.hpp>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

namespace eclipse::sim {

struct HonestPeer {
  NodeId id;
  PeerAddress address;
  bool server = false;
  bool bootstrap = false;

  Contact contact() const { return {id, address}; }
};

inline constexpr std::uint16_t kHonestPort = 4001;
inline constexpr std::uint32_t kFirstHonestHost = 0x0A000000;

class HonestPopulation {
 public:
  HonestPopulation(int size, int bootstrap_count, double reachable_fraction, std::mt19937_64& rng)
      : reachable_fraction_(reachable_fraction) {
    peers_.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      peers_.push_back(fresh(rng, i < bootstrap_count));
      by_id_.emplace(peers_.back().id, peers_.size() - 1);
      if (peers_.back().server) servers_.push_back(peers_.back().id);
    }
    std::sort(servers_.begin(), servers_.end());
    bootstrap_count_ = bootstrap_count;
  }

  std::size_t size() const { return peers_.size(); }
  std::size_t server_count() const { return servers_.size(); }
  const HonestPeer& at(std::size_t slot) const { return peers_.at(slot); }
  int bootstrap_count() const { return bootstrap_count_; }

  std::vector<Contact> bootstrap_contacts() const {
    std::vector<Contact> out;
    for (int i = 0; i < bootstrap_count_; ++i) out.push_back(peers_[static_cast<std::size_t>(i)].contact());
    return out;
  }

  const HonestPeer* find(const NodeId& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &peers_[it->second];
  }

  /// Is something online that answers at `c.address` under `c.id`?
  const HonestPeer* resolve(const Contact& c) const {
    const auto* p = find(c.id);
    return p != nullptr && p->address == c.address ? p : nullptr;
  }

  /// Uniform slot among those subject to churn.
  std::size_t random_churnable(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(bootstrap_count_), peers_.size() - 1);
    return d(rng);
  }

  std::size_t random_slot(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> d(0, peers_.size() - 1);
    return d(rng);
  }

  /// Replaces the occupant of `slot`; returns the departed peer.
  HonestPeer replace(std::size_t slot, std::mt19937_64& rng) {
    HonestPeer old = peers_.at(slot);
    by_id_.erase(old.id);
    if (old.server) servers_.erase(std::lower_bound(servers_.begin(), servers_.end(), old.id));
    peers_[slot] = fresh(rng, old.bootstrap);
    const auto& now = peers_[slot];
    by_id_.emplace(now.id, slot);
    if (now.server) servers_.insert(std::lower_bound(servers_.begin(), servers_.end(), now.id), now.id);
    return old;
  }

  /// The `count` online servers closest to `target`, ascending, skipping
  /// `exclude`.
  std::vector<Contact> closest_servers(const NodeId& target, int count,
                                       const std::optional<NodeId>& exclude = std::nullopt) const {
    const std::size_t want = static_cast<std::size_t>(count) + (exclude ? 1 : 0);
    // Ids sharing a longer prefix with target are always closer, and each
    // prefix range is contiguous in sorted order.
    std::size_t lo = 0;
    std::size_t hi = servers_.size();
    for (int p = 1; p <= kIdBits; ++p) {
      auto [a, b] = prefix_range(target, p);
      if (b - a < want) break;
      lo = a;
      hi = b;
    }
    std::vector<std::pair<Distance, std::size_t>> cand;
    cand.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      if (exclude && servers_[i] == *exclude) continue;
      cand.emplace_back(xor_distance(servers_[i], target), i);
    }
    const auto n = std::min(cand.size(), static_cast<std::size_t>(count));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end());
    std::vector<Contact> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(find(servers_[cand[i].second])->contact());
    return out;
  }

 private:
  HonestPeer fresh(std::mt19937_64& rng, bool bootstrap) {
    HonestPeer p;
    do {
      p.id = random_node_id(rng);
    } while (by_id_.contains(p.id));
    p.address = {next_host_++, kHonestPort};
    std::bernoulli_distribution reach(reachable_fraction_);
    p.server = bootstrap || reach(rng);
    p.bootstrap = bootstrap;
    return p;
  }

  /// [first, last) indices of servers sharing the top `p` bits with target.
  std::pair<std::size_t, std::size_t> prefix_range(const NodeId& target, int p) const {
    NodeId low = target;
    NodeId high = target;
    for (int i = p; i < kIdBits; ++i) {
      low.set_bit(i, false);
      high.set_bit(i, true);
    }
    auto a = std::lower_bound(servers_.begin(), servers_.end(), low);
    auto b = std::upper_bound(a, servers_.end(), high);
    return {static_cast<std::size_t>(a - servers_.begin()), static_cast<std::size_t>(b - servers_.begin())};
  }

  double reachable_fraction_;
  int bootstrap_count_ = 0;
  std::uint32_t next_host_ = kFirstHonestHost;
  std::vector<HonestPeer> peers_;
  std::unordered_map<NodeId, std::size_t, NodeIdHash> by_id_;
  std::vector<NodeId> servers_;  // sorted
};

}  // namespace eclipse::sim
