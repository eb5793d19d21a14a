#include <eclipse/connmgr.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace eclipse;
using namespace std::chrono_literals;

namespace {

Connection make_conn(const NodeId& remote, SimTime at, int bitswap = 0) {
  Connection c;
  c.remote = remote;
  c.established_at = at;
  if (bitswap > 0) award(c, tags::bitswap, bitswap);
  return c;
}

ConnMgrConfig cfg(int low, int high, Duration grace = 20s) {
  ConnMgrConfig c;
  c.low_water = low;
  c.high_water = high;
  c.grace_period = grace;
  return c;
}

}  // namespace

TEST(Score, DhtTagPrefixBased) {
  std::mt19937_64 rng(1);
  const auto owner = random_node_id(rng);
  auto c = make_conn(random_id_at_prefix(owner, 7, rng), 0ms);
  award(c, tags::dht, 0);
  EXPECT_EQ(score(c, owner, ConnMgrConfig{}), 12);
  auto fixed = ConnMgrConfig{};
  fixed.dht_score_mode = DhtScoreMode::low_buckets_protected;
  EXPECT_EQ(score(c, owner, fixed), 5);
}

TEST(Score, DhtTagRandomPairs) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto owner = random_node_id(rng);
    const auto remote = random_node_id(rng);
    auto c = make_conn(remote, 0ms);
    award(c, tags::dht, 0);
    ASSERT_EQ(score(c, owner, ConnMgrConfig{}), 5 + common_prefix_len(owner, remote));
  }
}

TEST(Score, RelayModes) {
  Connection c = make_conn(NodeId{}, 0ms);
  award(c, tags::relay, 0);
  c.relayed_virtual_count = 100;
  ConnMgrConfig per;
  ConnMgrConfig fixed;
  fixed.relay_score_mode = RelayScoreMode::fixed;
  EXPECT_EQ(score(c, NodeId{}, per), 102);
  EXPECT_EQ(score(c, NodeId{}, fixed), 2);
}

TEST(Score, SumsAcrossTags) {
  std::mt19937_64 rng(3);
  const auto owner = random_node_id(rng);
  auto c = make_conn(random_id_at_prefix(owner, 2, rng), 0ms, 4);
  award(c, tags::dht, 0);
  award(c, tags::relay, 0);
  c.relayed_virtual_count = 3;
  EXPECT_EQ(score(c, owner, ConnMgrConfig{}), 4 + 7 + 5);
}

TEST(Award, AccumulatesExceptDht) {
  Connection c = make_conn(NodeId{}, 0ms);
  award(c, tags::bitswap, 3);
  award(c, tags::bitswap, 2);
  EXPECT_EQ(c.tag(tags::bitswap), 5);
  award(c, tags::dht, 9);
  award(c, tags::dht, 4);
  EXPECT_EQ(c.tag(tags::dht), 4);
  untag(c, tags::bitswap);
  EXPECT_FALSE(c.has_tag(tags::bitswap));
  EXPECT_THROW(award(c, tags::bitswap, -1), std::invalid_argument);
  c.closed = true;
  EXPECT_THROW(award(c, tags::bitswap, 1), ClosedConnectionError);
  EXPECT_THROW(untag(c, tags::dht), ClosedConnectionError);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(ConnMgrConfig::defaults().validate());
  EXPECT_NO_THROW(ConnMgrConfig::bootstrap_grade().validate());
  EXPECT_THROW(cfg(900, 900).validate(), std::invalid_argument);
  EXPECT_THROW(cfg(-1, 900).validate(), std::invalid_argument);
  auto c = cfg(1, 2);
  c.trim_interval = 2min;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(cfg(1, 2, -1s).validate(), std::invalid_argument);
}

TEST(Trim, NineHundredFiftyClosesThreeHundredFiftyLowest) {
  std::mt19937_64 rng(4);
  const auto owner = random_node_id(rng);
  std::vector<Connection> conns;
  for (int i = 0; i < 950; ++i) conns.push_back(make_conn(random_node_id(rng), 0ms, i + 1));
  const auto closed = trim(conns, cfg(600, 900), 1min, owner);
  ASSERT_EQ(closed.size(), 350u);
  ASSERT_EQ(conns.size(), 600u);
  for (const auto& c : closed) {
    EXPECT_LE(c.tag(tags::bitswap), 350);
    EXPECT_TRUE(c.closed);
  }
}

TEST(Trim, BelowHighWaterClosesNothing) {
  std::mt19937_64 rng(5);
  std::vector<Connection> conns;
  for (int i = 0; i < 899; ++i) conns.push_back(make_conn(random_node_id(rng), 0ms));
  EXPECT_TRUE(trim(conns, cfg(600, 900), 1min, NodeId{}).empty());
  EXPECT_EQ(conns.size(), 899u);
}

TEST(Trim, GraceConnectionsSurviveAndDoNotCount) {
  std::mt19937_64 rng(6);
  std::vector<Connection> conns;
  std::set<NodeId> grace;
  for (int i = 0; i < 950; ++i) conns.push_back(make_conn(random_node_id(rng), 0ms, 5));
  for (int i = 0; i < 50; ++i) {
    conns.push_back(make_conn(random_node_id(rng), 55s));
    grace.insert(conns.back().remote);
  }
  const auto closed = trim(conns, cfg(600, 900), 60s, NodeId{});
  EXPECT_EQ(closed.size(), 350u);
  EXPECT_EQ(conns.size(), 650u);
  for (const auto& c : closed) EXPECT_FALSE(grace.contains(c.remote));
}

TEST(Trim, TieBreaksOlderThenFarther) {
  NodeId owner;
  std::vector<Connection> conns;
  NodeId near, far, young;
  near.bytes[31] = 1;
  far.bytes[0] = 0x80;
  young.bytes[0] = 0x40;
  conns.push_back(make_conn(near, 0ms));
  conns.push_back(make_conn(far, 0ms));
  conns.push_back(make_conn(young, 1s));
  auto copy = conns;
  auto closed = trim(copy, cfg(2, 2), 1min, owner);
  ASSERT_EQ(closed.size(), 1u);
  EXPECT_EQ(closed[0].remote, far);
  copy = conns;
  closed = trim(copy, cfg(1, 2), 1min, owner);
  ASSERT_EQ(closed.size(), 2u);
  EXPECT_EQ(closed[0].remote, near);
  EXPECT_EQ(closed[1].remote, far);
}

TEST(Trim, ProtectedConnectionsCountButSurvive) {
  std::mt19937_64 rng(7);
  std::vector<Connection> conns;
  std::set<NodeId> prot;
  for (int i = 0; i < 10; ++i) {
    conns.push_back(make_conn(random_node_id(rng), 0ms));
    if (i < 4) prot.insert(conns.back().remote);
  }
  const auto closed = trim(conns, cfg(3, 5), 1min, NodeId{}, [&](const Connection& c) { return prot.contains(c.remote); });
  EXPECT_EQ(closed.size(), 6u);
  for (const auto& id : prot) {
    EXPECT_TRUE(std::any_of(conns.begin(), conns.end(), [&](const Connection& c) { return c.remote == id; }));
  }
}

TEST(TrimProperty, RandomizedBottomSelection) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10000; ++trial) {
    const int low = 1 + static_cast<int>(rng() % 30);
    const int high = low + 1 + static_cast<int>(rng() % 30);
    const int n = static_cast<int>(rng() % 100);
    const auto owner = random_node_id(rng);
    const SimTime now = 100s;
    auto config = cfg(low, high);
    std::vector<Connection> conns;
    for (int i = 0; i < n; ++i) {
      const SimTime at = (rng() % 4 == 0) ? now - std::chrono::seconds(rng() % 20) : now - std::chrono::seconds(20 + rng() % 80);
      auto c = make_conn(random_node_id(rng), at, static_cast<int>(rng() % 25));
      if (rng() % 3 == 0) award(c, tags::dht, 0);
      conns.push_back(c);
    }
    std::size_t pre_non_grace = 0;
    for (const auto& c : conns) pre_non_grace += in_grace(c, now, config) ? 0 : 1;
    const auto before = conns;
    const auto closed = trim(conns, config, now, owner);
    ASSERT_EQ(closed.size() + conns.size(), before.size());

    std::size_t post_non_grace = 0;
    int min_survivor = INT32_MAX;
    for (const auto& c : conns) {
      if (in_grace(c, now, config)) continue;
      ++post_non_grace;
      min_survivor = std::min(min_survivor, score(c, owner, config));
    }
    if (pre_non_grace > static_cast<std::size_t>(high)) {
      ASSERT_EQ(post_non_grace, static_cast<std::size_t>(low));
    } else {
      ASSERT_TRUE(closed.empty());
    }
    for (const auto& c : closed) {
      ASSERT_FALSE(in_grace(c, now, config));
      ASSERT_LE(score(c, owner, config), min_survivor);
    }
    std::size_t grace_before = 0, grace_after = 0;
    for (const auto& c : before) grace_before += in_grace(c, now, config) ? 1 : 0;
    for (const auto& c : conns) grace_after += in_grace(c, now, config) ? 1 : 0;
    ASSERT_EQ(grace_before, grace_after);
  }
}

TEST(TrimProperty, AwardingNeverWorsensPosition) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Connection> conns;
    for (int i = 0; i < 40; ++i) conns.push_back(make_conn(random_node_id(rng), 0ms, static_cast<int>(rng() % 10)));
    const auto pick = conns[rng() % conns.size()].remote;
    auto a = conns;
    auto closed_a = trim(a, cfg(10, 20), 1min, NodeId{});
    const bool survived_a = std::none_of(closed_a.begin(), closed_a.end(), [&](const auto& c) { return c.remote == pick; });
    auto b = conns;
    for (auto& c : b)
      if (c.remote == pick) award(c, tags::bitswap, 1 + static_cast<int>(rng() % 5));
    auto closed_b = trim(b, cfg(10, 20), 1min, NodeId{});
    const bool survived_b = std::none_of(closed_b.begin(), closed_b.end(), [&](const auto& c) { return c.remote == pick; });
    ASSERT_TRUE(!survived_a || survived_b);
  }
}

TEST(ConnectionManager, OpenCloseAwardTrim) {
  std::mt19937_64 rng(10);
  ConnectionManager cm(random_node_id(rng), cfg(2, 3));
  std::vector<Contact> peers;
  for (int i = 0; i < 5; ++i) {
    peers.push_back({random_node_id(rng), {static_cast<std::uint32_t>(i + 1), 4001}});
    ASSERT_TRUE(cm.open(peers.back(), Direction::inbound, 0ms));
  }
  EXPECT_FALSE(cm.open(peers[0], Direction::outbound, 0ms));
  EXPECT_TRUE(cm.award(peers[0].id, tags::bitswap, 3));
  EXPECT_FALSE(cm.award(random_node_id(rng), tags::bitswap, 3));
  EXPECT_EQ(cm.score_of(peers[0].id), 3);
  EXPECT_EQ(cm.non_grace_count(10s), 0u);
  EXPECT_TRUE(cm.trim(10s).empty());
  EXPECT_EQ(cm.trim(1min).size(), 3u);
  EXPECT_EQ(cm.size(), 2u);
  EXPECT_TRUE(cm.contains(peers[0].id));
  EXPECT_TRUE(cm.close(peers[0].id));
  EXPECT_FALSE(cm.close(peers[0].id));
}
