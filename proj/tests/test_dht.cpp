#include <eclipse/dht.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace eclipse;
using namespace std::chrono_literals;

namespace {

PeerRecord peer_at(const NodeId& owner, int cpl, std::mt19937_64& rng, std::uint32_t host = 0, SimTime t = 0ms) {
  PeerRecord p;
  p.id = random_id_at_prefix(owner, cpl, rng);
  p.address = {host == 0 ? static_cast<std::uint32_t>(rng()) : host, 4001};
  p.last_successful_outbound_query = t;
  p.last_useful = t;
  p.reachable_verified = true;
  return p;
}

void check_placement(const RoutingTable& rt) {
  std::size_t total = 0;
  for (int i = 0; i < kBucketCount; ++i) {
    ASSERT_LE(static_cast<int>(rt.bucket(i).size()), rt.bucket_size());
    for (const auto& p : rt.bucket(i)) ASSERT_EQ(common_prefix_len(rt.owner(), p.id), i);
    total += rt.bucket(i).size();
  }
  ASSERT_EQ(total, rt.size());
  ASSERT_LE(rt.size(), static_cast<std::size_t>(kBucketCount * rt.bucket_size()));
  ASSERT_FALSE(rt.contains(rt.owner()));
}

}  // namespace

TEST(RoutingTable, EmptyBucketAcceptsUnderEveryPolicy) {
  std::mt19937_64 rng(1);
  const auto owner = random_node_id(rng);
  for (auto pol : {EvictionPolicy::v0423(), EvictionPolicy::v0500(), EvictionPolicy::v0600()}) {
    RoutingTable rt(owner, pol);
    EXPECT_EQ(rt.try_add(peer_at(owner, 3, rng), 0ms).kind, AddOutcome::Kind::added);
  }
}

TEST(RoutingTable, OwnerCannotBeAdded) {
  std::mt19937_64 rng(1);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0423());
  PeerRecord self;
  self.id = owner;
  EXPECT_THROW(rt.try_add(self, 0ms), std::invalid_argument);
}

TEST(RoutingTable, DuplicateRejected) {
  std::mt19937_64 rng(1);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  auto p = peer_at(owner, 0, rng);
  rt.try_add(p, 0ms);
  auto o = rt.try_add(p, 0ms);
  EXPECT_EQ(o.kind, AddOutcome::Kind::rejected);
  EXPECT_EQ(*o.reason, RejectReason::already_present);
}

TEST(RoutingTable, ConnectionDrivenFullBucketRejects) {
  std::mt19937_64 rng(2);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0423());
  for (int i = 0; i < 20; ++i) ASSERT_TRUE(rt.try_add(peer_at(owner, 1, rng), 0ms).inserted());
  auto o = rt.try_add(peer_at(owner, 1, rng), std::chrono::hours(10));
  EXPECT_EQ(o.kind, AddOutcome::Kind::rejected);
  EXPECT_EQ(*o.reason, RejectReason::full);
}

TEST(RoutingTable, UsefulnessEvictsStaleResidentBeyondGrace) {
  std::mt19937_64 rng(3);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  const SimTime now = std::chrono::minutes(100);
  std::vector<PeerRecord> residents;
  for (int i = 0; i < 20; ++i) residents.push_back(peer_at(owner, 2, rng, 0, now - 10min));
  residents[7].last_useful = now - 46min;
  for (const auto& r : residents) ASSERT_TRUE(rt.try_add(r, now - 50min).inserted());
  auto o = rt.try_add(peer_at(owner, 2, rng, 0, now), now);
  ASSERT_EQ(o.kind, AddOutcome::Kind::replaced);
  EXPECT_EQ(o.evicted->id, residents[7].id);
  EXPECT_FALSE(rt.contains(residents[7].id));
}

TEST(RoutingTable, UsefulnessKeepsFreshResidents) {
  std::mt19937_64 rng(3);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  const SimTime now = std::chrono::minutes(100);
  for (int i = 0; i < 20; ++i) rt.try_add(peer_at(owner, 2, rng, 0, now - 45min), now);
  auto o = rt.try_add(peer_at(owner, 2, rng, 0, now), now);
  EXPECT_EQ(o.kind, AddOutcome::Kind::rejected);
  EXPECT_EQ(*o.reason, RejectReason::full);
}

TEST(RoutingTable, EvictionTieBreaksToFartherResident) {
  std::mt19937_64 rng(4);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  const SimTime now = std::chrono::minutes(200);
  std::vector<PeerRecord> rs;
  for (int i = 0; i < 20; ++i) rs.push_back(peer_at(owner, 0, rng, 0, now - 60min));
  for (const auto& r : rs) rt.try_add(r, now);
  const auto farthest = *std::max_element(rs.begin(), rs.end(), [&](const auto& a, const auto& b) {
    return xor_distance(a.id, owner) < xor_distance(b.id, owner);
  });
  auto o = rt.try_add(peer_at(owner, 0, rng, 0, now), now);
  ASSERT_EQ(o.kind, AddOutcome::Kind::replaced);
  EXPECT_EQ(o.evicted->id, farthest.id);
}

TEST(RoutingTable, IpDiversityCapsHostAtThree) {
  std::mt19937_64 rng(5);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0600());
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(rt.try_add(peer_at(owner, i, rng, 77), 0ms).inserted());
  auto o = rt.try_add(peer_at(owner, 5, rng, 77), 0ms);
  EXPECT_EQ(o.kind, AddOutcome::Kind::rejected);
  EXPECT_EQ(*o.reason, RejectReason::ip_diversity);
  EXPECT_EQ(rt.peers_from_host(77), 3);
}

TEST(RoutingTable, UnverifiedRejectedOnlyUnder0600) {
  std::mt19937_64 rng(6);
  const auto owner = random_node_id(rng);
  auto p = peer_at(owner, 4, rng);
  p.reachable_verified = false;
  RoutingTable strict(owner, EvictionPolicy::v0600());
  EXPECT_EQ(*strict.try_add(p, 0ms).reason, RejectReason::unverified);
  RoutingTable lax(owner, EvictionPolicy::v0500());
  EXPECT_TRUE(lax.try_add(p, 0ms).inserted());
  RoutingTable old(owner, EvictionPolicy::v0423());
  EXPECT_TRUE(old.try_add(p, 0ms).inserted());
}

TEST(RoutingTable, RemoveSemantics) {
  std::mt19937_64 rng(7);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0423());
  EXPECT_FALSE(rt.remove(random_node_id(rng)));
  auto p = peer_at(owner, 9, rng, 12);
  rt.try_add(p, 0ms);
  EXPECT_TRUE(rt.remove(p.id));
  EXPECT_TRUE(rt.empty());
  EXPECT_EQ(rt.peers_from_host(12), 0);
}

TEST(RoutingTable, ClosestAgainstBruteForce) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto owner = random_node_id(rng);
    RoutingTable rt(owner, EvictionPolicy::v0500());
    std::vector<PeerRecord> all;
    for (int i = 0; i < 400; ++i) {
      auto p = peer_at(owner, static_cast<int>(rng() % 12), rng);
      if (rt.try_add(p, 0ms).inserted()) all.push_back(p);
    }
    const auto target = random_node_id(rng);
    std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
      return xor_distance(a.id, target) < xor_distance(b.id, target);
    });
    const auto got = rt.closest(target, 20);
    ASSERT_EQ(got.size(), std::min<std::size_t>(20, all.size()));
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i].id, all[i].id);
  }
}

TEST(RoutingTable, ClosestSmallCases) {
  std::mt19937_64 rng(9);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0423());
  EXPECT_TRUE(rt.closest(random_node_id(rng), 5).empty());
  auto only = peer_at(owner, 1, rng);
  rt.try_add(only, 0ms);
  auto r = rt.closest(random_node_id(rng), 5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, only.id);
  EXPECT_THROW(rt.closest(owner, 0), std::invalid_argument);
}

TEST(RoutingTable, ClosestByExplicitDistances) {
  NodeId owner;
  owner.set_bit(0, true);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  const NodeId target;  // zero
  for (int v : {3, 1, 2}) {
    PeerRecord p;
    p.id.bytes[31] = static_cast<std::uint8_t>(v);
    p.address = {static_cast<std::uint32_t>(v), 1};
    rt.try_add(p, 0ms);
  }
  auto r = rt.closest(target, 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].id.bytes[31], 1);
  EXPECT_EQ(r[1].id.bytes[31], 2);
}

TEST(RoutingTable, RefreshPingsOnlyStalePeers) {
  std::mt19937_64 rng(10);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  const SimTime now = 3h;
  auto fresh = peer_at(owner, 0, rng, 0, now - 5min);
  auto stale_dead = peer_at(owner, 1, rng, 0, now - 50min);
  auto stale_alive = peer_at(owner, 2, rng, 0, now - 50min);
  for (const auto& p : {fresh, stale_dead, stale_alive}) rt.try_add(p, now - 50min);
  int pings = 0;
  auto evicted = rt.refresh(now, [&](const PeerRecord& p) {
    ++pings;
    return p.id == stale_alive.id;
  });
  EXPECT_EQ(pings, 2);
  ASSERT_EQ(evicted.size(), 1u);
  EXPECT_EQ(evicted[0].id, stale_dead.id);
  EXPECT_TRUE(rt.contains(fresh.id));
  EXPECT_EQ(rt.find(stale_alive.id)->last_successful_outbound_query, now);
  EXPECT_TRUE(rt.refresh(now, [](const PeerRecord&) { return false; }).empty());
}

TEST(RoutingTable, RefreshRequiresUsefulnessPolicy) {
  RoutingTable rt(NodeId{}, EvictionPolicy::v0423());
  EXPECT_THROW(rt.refresh(0ms, [](const PeerRecord&) { return true; }), std::logic_error);
}

TEST(RoutingTable, UsefulnessRule) {
  std::mt19937_64 rng(11);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0500());
  auto p = peer_at(owner, 0, rng, 0, 0ms);
  rt.try_add(p, 0ms);
  rt.record_usefulness(p.id, 100ms, 100ms, 10s);
  EXPECT_EQ(rt.find(p.id)->last_useful, 10s);
  rt.record_usefulness(p.id, 210ms, 100ms, 20s);
  EXPECT_EQ(rt.find(p.id)->last_useful, 10s);
  rt.record_usefulness(p.id, 200ms, 100ms, 30s);
  EXPECT_EQ(rt.find(p.id)->last_useful, 30s);
  rt.record_usefulness(random_node_id(rng), 1ms, 1ms, 40s);  // unknown: no-op
}

TEST(RoutingTableProperty, CapacityUnderAdversarialInsertion) {
  std::mt19937_64 rng(12);
  const auto owner = random_node_id(rng);
  for (auto pol : {EvictionPolicy::v0423(), EvictionPolicy::v0500()}) {
    RoutingTable rt(owner, pol);
    for (int i = 0; i < 200000; ++i) {
      const int cpl = static_cast<int>(rng() % 256);
      rt.try_add(peer_at(owner, cpl, rng, 0, SimTime{i}), SimTime{std::chrono::hours(i)});
    }
    check_placement(rt);
  }
}

TEST(RoutingTableProperty, HostLimitUnderAdversarialInsertion) {
  std::mt19937_64 rng(13);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0600());
  for (int i = 0; i < 100000; ++i) {
    auto p = peer_at(owner, static_cast<int>(rng() % 40), rng, 1 + static_cast<std::uint32_t>(rng() % 5),
                     SimTime{std::chrono::minutes(i)});
    rt.try_add(p, SimTime{std::chrono::minutes(i)});
    if (i % 997 == 0) {
      rt.refresh(SimTime{std::chrono::minutes(i)}, [&](const PeerRecord&) { return rng() % 2 == 0; });
    }
  }
  for (std::uint32_t h = 1; h <= 5; ++h) EXPECT_LE(rt.peers_from_host(h), 3);
  std::map<std::uint32_t, int> count;
  rt.for_each([&](const PeerRecord& p) { ++count[p.address.host]; });
  for (const auto& [h, n] : count) EXPECT_LE(n, 3);
  check_placement(rt);
}

TEST(RoutingTable, AddressUpdateMovesHostCounts) {
  std::mt19937_64 rng(14);
  const auto owner = random_node_id(rng);
  RoutingTable rt(owner, EvictionPolicy::v0600());
  auto p = peer_at(owner, 1, rng, 5);
  rt.try_add(p, 0ms);
  rt.update_address(p.id, {6, 1});
  EXPECT_EQ(rt.peers_from_host(5), 0);
  EXPECT_EQ(rt.peers_from_host(6), 1);
}
