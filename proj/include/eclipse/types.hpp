#pragma once

#include <eclipse/identity.hpp>

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>

namespace eclipse {

/// Simulated durations and timestamps share millisecond resolution; a
/// timestamp is the duration since the start of the simulation.
using Duration = std::chrono::milliseconds;
using SimTime = std::chrono::milliseconds;

using namespace std::chrono_literals;

/// Simulated transport address: one host number per machine, one port per
/// listening identity.
struct PeerAddress {
  std::uint32_t host = 0;
  std::uint16_t port = 0;
  friend constexpr auto operator<=>(const PeerAddress&, const PeerAddress&) = default;
};

struct PeerAddressHash {
  std::size_t operator()(const PeerAddress& a) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{a.host} << 16) | a.port);
  }
};

/// An identifier together with the address it was advertised under.
struct Contact {
  NodeId id;
  PeerAddress address;
  friend bool operator==(const Contact&, const Contact&) = default;
};

}  // namespace eclipse
