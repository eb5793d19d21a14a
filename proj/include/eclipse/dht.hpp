#pragma once

// Kademlia routing table with flat k-buckets indexed by common prefix length
// and three versioned eviction policies.

#include <eclipse/identity.hpp>
#include <eclipse/types.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace eclipse {

inline constexpr int kDefaultBucketSize = 20;
inline constexpr int kBucketCount = kIdBits;

enum class PolicyVariant {
  ConnectionDriven0423,     // residency tied to a live connection
  Usefulness0500,           // usefulness-based eviction, disconnected peers kept
  UsefulnessIpDiverse0600,  // 0500 plus per-host limit and reachability check
};

inline std::string_view to_string(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::ConnectionDriven0423: return "0423";
    case PolicyVariant::Usefulness0500: return "0500";
    case PolicyVariant::UsefulnessIpDiverse0600: return "0600";
  }
  return "?";
}

struct EvictionPolicy {
  PolicyVariant variant = PolicyVariant::ConnectionDriven0423;
  Duration eviction_grace = std::chrono::minutes(45);
  int max_peers_per_host = 3;  // 0600 only

  static EvictionPolicy v0423() { return {PolicyVariant::ConnectionDriven0423, std::chrono::minutes(45), 3}; }
  static EvictionPolicy v0500() { return {PolicyVariant::Usefulness0500, std::chrono::minutes(45), 3}; }
  static EvictionPolicy v0600() { return {PolicyVariant::UsefulnessIpDiverse0600, std::chrono::minutes(45), 3}; }

  bool connection_driven() const { return variant == PolicyVariant::ConnectionDriven0423; }
  bool usefulness_based() const { return !connection_driven(); }
  bool limits_hosts() const { return variant == PolicyVariant::UsefulnessIpDiverse0600; }
};

struct PeerRecord {
  NodeId id;
  PeerAddress address;
  SimTime last_successful_outbound_query{0};
  SimTime last_useful{0};
  bool reachable_verified = false;

  Contact contact() const { return {id, address}; }
};

enum class RejectReason { full, ip_diversity, unverified, already_present };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::full: return "full";
    case RejectReason::ip_diversity: return "ip_diversity";
    case RejectReason::unverified: return "unverified";
    case RejectReason::already_present: return "already_present";
  }
  return "?";
}

struct AddOutcome {
  enum class Kind { added, rejected, replaced };
  Kind kind = Kind::added;
  std::optional<RejectReason> reason;
  std::optional<PeerRecord> evicted;

  static AddOutcome added() { return {}; }
  static AddOutcome rejected(RejectReason r) { return {Kind::rejected, r, std::nullopt}; }
  static AddOutcome replaced(PeerRecord e) { return {Kind::replaced, std::nullopt, std::move(e)}; }

  bool inserted() const { return kind != Kind::rejected; }
};

class RoutingTable {
 public:
  RoutingTable(NodeId owner, EvictionPolicy policy, int k = kDefaultBucketSize)
      : owner_(owner), policy_(policy), k_(k) {
    if (k_ < 1) throw std::invalid_argument("bucket size must be >= 1");
  }

  const NodeId& owner() const { return owner_; }
  const EvictionPolicy& policy() const { return policy_; }
  int bucket_size() const { return k_; }
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }

  int bucket_index(const NodeId& id) const { return common_prefix_len(owner_, id); }

  std::span<const PeerRecord> bucket(int i) const { return buckets_.at(static_cast<std::size_t>(i)); }

  bool contains(const NodeId& id) const { return index_.contains(id); }

  const PeerRecord* find(const NodeId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    return &*locate(id, it->second);
  }

  int peers_from_host(std::uint32_t host) const {
    auto it = host_counts_.find(host);
    return it == host_counts_.end() ? 0 : it->second;
  }

  /// Indices of nonempty buckets, ascending.
  std::vector<int> occupied_buckets() const {
    std::vector<int> out;
    for (int i = 0; i < kBucketCount; ++i) {
      if (!buckets_[static_cast<std::size_t>(i)].empty()) out.push_back(i);
    }
    return out;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& b : buckets_) {
      for (const auto& p : b) fn(p);
    }
  }

  AddOutcome try_add(const PeerRecord& peer, SimTime now) {
    if (peer.id == owner_) throw std::invalid_argument("routing table owner cannot be added to its own table");
    if (contains(peer.id)) return AddOutcome::rejected(RejectReason::already_present);
    if (policy_.limits_hosts()) {
      if (peers_from_host(peer.address.host) >= policy_.max_peers_per_host) {
        return AddOutcome::rejected(RejectReason::ip_diversity);
      }
      if (!peer.reachable_verified) return AddOutcome::rejected(RejectReason::unverified);
    }

    const int bi = bucket_index(peer.id);
    auto& b = buckets_[static_cast<std::size_t>(bi)];
    if (static_cast<int>(b.size()) < k_) {
      insert(bi, peer);
      return AddOutcome::added();
    }
    if (policy_.connection_driven()) return AddOutcome::rejected(RejectReason::full);

    // Evict the least recently useful resident beyond the grace period;
    // ties go to the one farther from the owner.
    auto victim = b.end();
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (now - it->last_useful <= policy_.eviction_grace) continue;
      if (victim == b.end() || it->last_useful < victim->last_useful ||
          (it->last_useful == victim->last_useful &&
           xor_distance(it->id, owner_) > xor_distance(victim->id, owner_))) {
        victim = it;
      }
    }
    if (victim == b.end()) return AddOutcome::rejected(RejectReason::full);
    PeerRecord evicted = *victim;
    erase(bi, victim);
    insert(bi, peer);
    return AddOutcome::replaced(std::move(evicted));
  }

  bool remove(const NodeId& id) {
    auto it = index_.find(id);
    if (it == index_.end()) return false;
    const int bi = it->second;
    erase(bi, locate(id, bi));
    return true;
  }

  /// Up to `count` residents nearest to `target` by XOR distance, ascending.
  std::vector<PeerRecord> closest(const NodeId& target, int count) const {
    if (count < 1) throw std::invalid_argument("closest count must be >= 1");
    std::vector<std::pair<Distance, const PeerRecord*>> all;
    all.reserve(size());
    for_each([&](const PeerRecord& p) { all.emplace_back(xor_distance(p.id, target), &p); });
    const auto n = std::min(all.size(), static_cast<std::size_t>(count));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<PeerRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*all[i].second);
    return out;
  }

  /// Pings every resident without a successful outbound query within the
  /// eviction grace period; non-responders are evicted, responders refreshed.
  std::vector<PeerRecord> refresh(SimTime now, const std::function<bool(const PeerRecord&)>& ping_fn) {
    if (!policy_.usefulness_based()) throw std::logic_error("refresh requires a usefulness-based policy");
    std::vector<NodeId> stale;
    for_each([&](const PeerRecord& p) {
      if (now - p.last_successful_outbound_query > policy_.eviction_grace) stale.push_back(p.id);
    });
    std::vector<PeerRecord> evicted;
    for (const auto& id : stale) {
      auto it = index_.find(id);
      if (it == index_.end()) continue;
      auto rec = locate(id, it->second);
      if (ping_fn(*rec)) {
        rec->last_successful_outbound_query = now;
      } else {
        evicted.push_back(*rec);
        erase(it->second, rec);
      }
    }
    return evicted;
  }

  /// A responder is useful if it took at most twice the fastest response time.
  void record_usefulness(const NodeId& id, Duration response_time, Duration fastest_time, SimTime now) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    if (response_time <= 2 * fastest_time) locate(id, it->second)->last_useful = now;
  }

  void record_outbound_success(const NodeId& id, SimTime now) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    locate(id, it->second)->last_successful_outbound_query = now;
  }

  void update_address(const NodeId& id, PeerAddress addr) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    auto rec = locate(id, it->second);
    if (rec->address.host != addr.host) {
      --host_counts_[rec->address.host];
      ++host_counts_[addr.host];
    }
    rec->address = addr;
  }

 private:
  using Bucket = std::vector<PeerRecord>;

  Bucket::iterator locate(const NodeId& id, int bi) {
    auto& b = buckets_[static_cast<std::size_t>(bi)];
    return std::find_if(b.begin(), b.end(), [&](const PeerRecord& p) { return p.id == id; });
  }
  Bucket::const_iterator locate(const NodeId& id, int bi) const {
    const auto& b = buckets_[static_cast<std::size_t>(bi)];
    return std::find_if(b.begin(), b.end(), [&](const PeerRecord& p) { return p.id == id; });
  }

  void insert(int bi, const PeerRecord& p) {
    buckets_[static_cast<std::size_t>(bi)].push_back(p);
    index_.emplace(p.id, bi);
    ++host_counts_[p.address.host];
  }

  void erase(int bi, Bucket::iterator it) {
    if (--host_counts_[it->address.host] == 0) host_counts_.erase(it->address.host);
    index_.erase(it->id);
    buckets_[static_cast<std::size_t>(bi)].erase(it);
  }

  NodeId owner_;
  EvictionPolicy policy_;
  int k_;
  std::array<Bucket, kBucketCount> buckets_{};
  std::unordered_map<NodeId, int, NodeIdHash> index_;
  std::unordered_map<std::uint32_t, int> host_counts_;
};

}  // namespace eclipse
