#pragma once

// One simulated run: honest population with churn, a fully modelled victim
// node, and optionally the attacker, all driven by one event queue.

#include <eclipse/attacker.hpp>
#include <eclipse/idstore.hpp>
#include <eclipse/node.hpp>
#include <eclipse/sim/engine.hpp>
#include <eclipse/sim/metrics.hpp>
#include <eclipse/sim/population.hpp>
#include <eclipse/sim/scenario.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <unordered_map>

namespace eclipse::sim {

inline constexpr PeerAddress kVictimAddress{1, kHonestPort};
inline constexpr int kMinLatencyMs = 20;
inline constexpr int kMaxLatencyMs = 200;

/// Fixed one-way latency for a host pair, uniform in [20, 200] ms.
inline Duration one_way_latency(std::uint32_t a, std::uint32_t b, std::uint64_t salt) {
  if (a > b) std::swap(a, b);
  const auto h = splitmix64(salt ^ ((std::uint64_t{a} << 32) | b));
  return Duration{kMinLatencyMs + static_cast<std::int64_t>(h % (kMaxLatencyMs - kMinLatencyMs + 1))};
}

/// Whether an honest peer holds a content id; a sparse deterministic catalog.
inline bool holds_content(const NodeId& peer, const NodeId& cid) {
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < 8; ++i) h = (h << 8) | static_cast<std::uint8_t>(peer.bytes[i] ^ cid.bytes[i]);
  return splitmix64(h) % 512 == 0;
}

class World final : public Network {
 public:
  World(const Scenario& scenario, std::uint64_t seed, const IdStore* store)
      : sc_(scenario),
        rng_(splitmix64(seed ^ 0x5eed)),
        latency_salt_(splitmix64(seed ^ 0x1a7e)),
        population_(scenario.honest_nodes, scenario.bootstrap_nodes, scenario.reachable_fraction, rng_),
        store_(store) {
    sc_.validate();
    NodeConfig vc;
    vc.id = random_node_id(rng_);
    vc.address = kVictimAddress;
    vc.bootstrap_peers = population_.bootstrap_contacts();
    vc.connmgr = sc_.connmgr;
    vc.policy = sc_.policy;
    victim_ = std::make_unique<Node>(vc, *this, splitmix64(seed ^ 0x71c7));
    std::lognormal_distribution<double> demand(std::log(sc_.demand_median_per_min), sc_.demand_sigma);
    demand_per_min_ = sc_.demand_sigma > 0 ? demand(rng_) : sc_.demand_median_per_min;
  }

  World(const World&) = delete;
  World& operator=(const World&) = delete;

  // -- access ----------------------------------------------------------------

  Node& victim() { return *victim_; }
  const Node& victim() const { return *victim_; }
  Attacker* attacker() { return attacker_.get(); }
  const HonestPopulation& population() const { return population_; }
  EventQueue& events() { return events_; }
  double demand_per_min() const { return demand_per_min_; }
  std::size_t honest_links() const { return links_.size(); }
  bool is_attacker(const NodeId& id) const { return attacker_ && attacker_->controls(id); }

  Sample sample() const {
    Sample s;
    s.t = std::chrono::duration_cast<std::chrono::seconds>(events_.now()).count();
    victim_->connections().for_each([&](const Connection& c) {
      if (is_attacker(c.remote)) ++s.swarm_attacker;
      else ++s.swarm_honest;
    });
    victim_->routing_table().for_each([&](const PeerRecord& p) {
      if (is_attacker(p.id)) ++s.rt_attacker;
      else ++s.rt_honest;
    });
    s.rt_fully_poisoned = s.rt_honest == 0 && s.rt_attacker > 0;
    s.fully_eclipsed = s.swarm_honest == 0 && s.rt_honest == 0;
    return s;
  }

  // -- protocol ----------------------------------------------------------------

  /// Bootstraps the victim and arms background processes.
  void start() {
    victim_->bootstrap();
    const auto trim_phase = Duration{std::uniform_int_distribution<std::int64_t>(1, 59999)(rng_)};
    every(trim_phase, std::chrono::minutes(1), [this] { victim_->run_trim(); });
    every(trim_phase + std::chrono::seconds(30), std::chrono::minutes(1), [this] { victim_->on_monitor_timer(); });
    const auto lookup_phase = Duration{std::uniform_int_distribution<std::int64_t>(0, sc_.lookup_interval.count() - 1)(rng_)};
    every(lookup_phase, sc_.lookup_interval, [this] { victim_->discover(); });
    every(sc_.refresh_interval, sc_.refresh_interval, [this] { victim_->refresh_buckets(); });
    every(Duration{0}, std::chrono::seconds(1), [this] { honest_second(); });
  }

  /// Starts attacking at the current instant.
  void launch_attack() {
    if (store_ == nullptr || store_->empty()) throw std::runtime_error("attack requires a populated id store");
    AttackConfig ac;
    ac.target = victim_->id();
    ac.target_address = kVictimAddress;
    ac.cover_depth = sc_.cover_depth > 0 ? sc_.cover_depth : default_cover_depth(population_.size());
    ac.safety_margin = sc_.safety_margin;
    ac.maintain_eclipse = sc_.maintain_eclipse;
    ac.maintenance_connections = sc_.maintenance_connections;
    ac.hosts = sc_.attacker_hosts;
    cover_ = query_cover(*store_, ac.target, ac.cover_depth, kDefaultBucketSize);
    attacker_ = std::make_unique<Attacker>(ac, cover_, attack_side_);
    every(Duration{0}, std::chrono::seconds(1), [this] { attacker_->tick(); });
  }

  /// The full run protocol; returns the sampled timeline.
  MetricsTimeline run() {
    MetricsTimeline tl;
    start();
    const auto setup_deadline = SimTime{std::chrono::minutes(sc_.max_setup_minutes)};
    while (victim_->connections().size() <= static_cast<std::size_t>(sc_.connmgr.high_water)) {
      if (events_.now() >= setup_deadline) {
        tl.aborted = true;
        return tl;
      }
      events_.run_until(events_.now() + std::chrono::seconds(1));
    }
    const SimTime metrics_start = events_.now();
    const SimTime attack_start = metrics_start + std::chrono::minutes(sc_.warmup_minutes);
    const SimTime end = attack_start + std::chrono::minutes(sc_.attack_minutes);
    tl.metrics_start_s = seconds(metrics_start);
    tl.attack_start_s = seconds(attack_start);
    tl.attack_end_s = seconds(end);
    bool launched = false;
    for (SimTime t = metrics_start; t <= end; t += sc_.sample_interval) {
      events_.run_until(t);
      if (!launched && t >= attack_start) {
        tl.pre_attack_rt_honest = static_cast<int>(victim_->routing_table().size());
        auto occ = victim_->routing_table().occupied_buckets();
        tl.deepest_pre_attack_bucket = occ.empty() ? -1 : occ.back();
        if (sc_.attack) launch_attack();
        launched = true;
      }
      tl.samples.push_back(sample());
    }
    return tl;
  }

  // -- Network (victim side) -------------------------------------------------

  SimTime now() const override { return events_.now(); }

  bool dial(const Contact& /*self*/, const Contact& to) override {
    if (is_attacker(to.id)) {
      const auto* s = attacker_->sybil(to.id);
      return s->address == to.address && attacker_->accept_inbound(to.id);
    }
    const auto* p = population_.resolve(to);
    if (p == nullptr || !p->server) return false;
    open_link(*p);
    return true;
  }

  void disconnect(const NodeId& /*self*/, const NodeId& remote) override {
    if (is_attacker(remote)) {
      if (attacker_->on_disconnect(remote)) events_.schedule(events_.now(), [this] { attacker_->react(); });
      return;
    }
    links_.erase(remote);
  }

  std::optional<QueryReply> find_node(const Contact& /*self*/, const Contact& to, const NodeId& target) override {
    if (is_attacker(to.id)) {
      return QueryReply{attacker_->respond_as_sybil(to.id, target), {}, rtt(to.address.host)};
    }
    const auto* p = population_.resolve(to);
    if (p == nullptr || !p->server) return std::nullopt;
    return QueryReply{population_.closest_servers(target, kDefaultBucketSize, p->id), {}, rtt(p->address.host)};
  }

  std::optional<QueryReply> get_providers(const Contact& self, const Contact& to, const NodeId& cid) override {
    auto reply = find_node(self, to, cid);
    if (!reply || is_attacker(to.id)) return reply;
    for (std::size_t i = 0; i < population_.size() && reply->providers.size() < kDefaultBucketSize; ++i) {
      const auto& p = population_.at(i);
      if (p.server && holds_content(p.id, cid)) reply->providers.push_back(p.contact());
    }
    return reply;
  }

  std::optional<Duration> ping(const Contact& /*self*/, const Contact& to) override {
    if (is_attacker(to.id)) return rtt(to.address.host);
    const auto* p = population_.resolve(to);
    if (p == nullptr || !p->server) return std::nullopt;
    return rtt(p->address.host);
  }

  bool dial_back(const Contact& /*self*/, const Contact& claimed) override {
    if (is_attacker(claimed.id)) return attacker_->sybil(claimed.id)->address == claimed.address;
    const auto* p = population_.resolve(claimed);
    return p != nullptr && p->server;
  }

  bool has_block(const Contact& /*self*/, const NodeId& remote, const NodeId& cid) override {
    if (is_attacker(remote)) return false;
    const auto* p = population_.find(remote);
    return p != nullptr && holds_content(p->id, cid);
  }

 private:
  /// The victim as seen from the attacker's single host.
  class AttackSide final : public AttackNetwork {
   public:
    explicit AttackSide(World& w) : w_(&w) {}
    SimTime now() const override { return w_->now(); }

    bool dial(const Contact& sybil, const Contact& target) override {
      if (target.id != w_->victim_->id() || target.address != kVictimAddress) return false;
      w_->victim_->on_inbound_connection(sybil);
      return true;
    }

    void hang_up(const NodeId& sybil, const NodeId& /*target*/) override { w_->victim_->on_remote_closed(sybil); }

    std::optional<std::vector<Contact>> find_node(const Contact& sybil, const NodeId& /*target*/,
                                                  const NodeId& key) override {
      if (!w_->victim_->connections().contains(sybil.id)) return std::nullopt;
      return w_->victim_->handle_find_node(sybil, true, key);
    }

    bool ping(const Contact& sybil, const NodeId& /*target*/) override {
      if (!w_->victim_->connections().contains(sybil.id)) return false;
      w_->victim_->handle_ping(sybil, true);
      return true;
    }

    void bitswap_advert(const NodeId& sybil, const NodeId& /*target*/, const NodeId& block) override {
      w_->victim_->handle_bitswap_advert(sybil, block);
    }

    void relay(const NodeId& sybil, const NodeId& /*target*/, RelayEvent event) override {
      w_->victim_->handle_relay(sybil, event);
    }

   private:
    World* w_;
  };

  struct Link {
    std::uint64_t generation = 0;
    bool server = false;
  };

  static std::int64_t seconds(SimTime t) { return std::chrono::duration_cast<std::chrono::seconds>(t).count(); }

  Duration rtt(std::uint32_t host) const { return 2 * one_way_latency(kVictimAddress.host, host, latency_salt_); }

  void every(Duration first, Duration period, std::function<void()> fn) {
    auto shared = std::make_shared<std::function<void()>>(std::move(fn));
    auto step = std::make_shared<std::function<void()>>();
    *step = [this, shared, period, weak = std::weak_ptr<std::function<void()>>(step)] {
      (*shared)();
      if (auto s = weak.lock()) events_.schedule_in(period, [s] { (*s)(); });
    };
    timers_.push_back(step);
    events_.schedule(events_.now() + first, [step] { (*step)(); });
  }

  /// Registers a live honest link and schedules its organic Bitswap traffic.
  void open_link(const HonestPeer& p) {
    const auto gen = ++link_generation_;
    links_[p.id] = Link{gen, p.server};
    const int budget = std::uniform_int_distribution<int>(0, sc_.honest_bitswap_max)(rng_);
    std::uniform_int_distribution<std::int64_t> when(1000, 120000);
    for (int i = 0; i < budget; ++i) {
      events_.schedule_in(Duration{when(rng_)}, [this, id = p.id, gen] {
        auto it = links_.find(id);
        if (it == links_.end() || it->second.generation != gen) return;
        victim_->handle_bitswap_advert(id, id);
      });
    }
  }

  /// An honest peer opens a link to the victim and, in server mode, sends
  /// a find_node, which is an insertion event.
  void honest_arrival(std::size_t slot, const NodeId& key) {
    const auto& p = population_.at(slot);
    if (links_.contains(p.id) || victim_->connections().contains(p.id)) return;
    victim_->on_inbound_connection(p.contact());
    open_link(p);
    if (p.server) victim_->handle_find_node(p.contact(), true, key);
  }

  /// Churn and inbound arrivals for the coming second.
  void honest_second() {
    const double churn = sc_.effective_churn_per_min() / 60.0;
    std::size_t server_links = 0;
    for (const auto& [id, l] : links_) server_links += l.server ? 1 : 0;
    const double arrivals = (demand_per_min_ + sc_.discovery_per_conn_per_min * static_cast<double>(server_links)) / 60.0;
    std::uniform_int_distribution<std::int64_t> offset(0, 999);

    const int n_churn = churn > 0 ? std::poisson_distribution<int>(churn)(rng_) : 0;
    for (int i = 0; i < n_churn; ++i) {
      const auto slot = population_.random_churnable(rng_);
      events_.schedule_in(Duration{offset(rng_)}, [this, slot] { churn_slot(slot); });
    }
    const int n_arr = arrivals > 0 ? std::poisson_distribution<int>(arrivals)(rng_) : 0;
    for (int i = 0; i < n_arr; ++i) {
      const auto slot = population_.random_slot(rng_);
      const auto key = random_node_id(rng_);
      events_.schedule_in(Duration{offset(rng_)}, [this, slot, key] { honest_arrival(slot, key); });
    }
  }

  void churn_slot(std::size_t slot) {
    const auto old = population_.replace(slot, rng_);
    if (links_.erase(old.id) > 0 || victim_->connections().contains(old.id)) victim_->on_remote_closed(old.id);
    if (sc_.victim_role == VictimRole::bootstrap) {
      // Joiners bootstrap against the victim with a query for their own id.
      honest_arrival(slot, population_.at(slot).id);
    }
  }

  Scenario sc_;
  std::mt19937_64 rng_;
  std::uint64_t latency_salt_;
  HonestPopulation population_;
  const IdStore* store_;
  EventQueue events_;
  std::unique_ptr<Node> victim_;
  AttackSide attack_side_{*this};
  std::unique_ptr<Attacker> attacker_;
  CoverSet cover_;
  std::unordered_map<NodeId, Link, NodeIdHash> links_;
  std::uint64_t link_generation_ = 0;
  double demand_per_min_ = 0;
  std::vector<std::shared_ptr<std::function<void()>>> timers_;
};

inline MetricsTimeline run(const Scenario& scenario, int run_index, const IdStore* store) {
  World world(scenario, run_seed(scenario.seed, run_index), store);
  return world.run();
}

}  // namespace eclipse::sim
