#pragma once

// Prefix-binned store of mined (seed, id) pairs and bucket-cover queries.
//
// On disk a store is a directory of bin files named after the bin prefix as
// four lowercase hex digits ("0000" .. "3fff" for 14-bit bins). Each file is
// a headerless sequence of 40-byte records: 32-byte big-endian id followed by
// the 8-byte big-endian seed. Bins can be merged by concatenation.

#include <eclipse/identity.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace eclipse {

struct IdRecord {
  PrivateSeed seed;
  NodeId id;

  static IdRecord mine(std::uint64_t seed) {
    PrivateSeed s{seed};
    return {s, derive_node_id(s)};
  }
  friend bool operator==(const IdRecord&, const IdRecord&) = default;
};

inline constexpr std::size_t kRecordBytes = 40;
inline constexpr int kDefaultBinBits = 14;

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string bin_file_name(std::uint32_t prefix) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04x", prefix);
  return buf;
}

inline void encode_record(const IdRecord& r, std::uint8_t* out) {
  std::copy(r.id.bytes.begin(), r.id.bytes.end(), out);
  for (int i = 0; i < 8; ++i) out[kIdBytes + 7 - i] = static_cast<std::uint8_t>(r.seed.value() >> (8 * i));
}

inline IdRecord decode_record(const std::uint8_t* in) {
  NodeId id;
  std::copy(in, in + kIdBytes, id.bytes.begin());
  std::uint64_t seed = 0;
  for (std::size_t i = 0; i < 8; ++i) seed = (seed << 8) | in[kIdBytes + i];
  if (seed == 0) throw StoreError("record with zero seed");
  return {PrivateSeed{seed}, id};
}

class IdStore {
 public:
  explicit IdStore(int bin_prefix_bits = kDefaultBinBits) : bits_(bin_prefix_bits) {
    if (bits_ < 1 || bits_ > 20) throw std::invalid_argument("bin_prefix_bits must be in [1, 20]");
    bins_.resize(std::size_t{1} << bits_);
  }

  int bin_prefix_bits() const { return bits_; }
  std::size_t bin_count() const { return bins_.size(); }
  std::size_t total_count() const { return total_; }
  bool empty() const { return total_ == 0; }

  std::uint32_t bin_of(const NodeId& id) const { return id.prefix(bits_); }

  void insert(const IdRecord& r) {
    bins_[bin_of(r.id)].push_back(r);
    ++total_;
  }

  /// Derives ids for seeds [seed_start, seed_start + count) and bins them.
  std::size_t mine(std::uint64_t seed_start, std::uint64_t count) {
    if (count < 1) throw std::invalid_argument("mine count must be >= 1");
    if (seed_start == 0) throw std::invalid_argument("seed_start must be nonzero");
    for (std::uint64_t s = seed_start; s < seed_start + count; ++s) insert(IdRecord::mine(s));
    return count;
  }

  std::span<const IdRecord> bin(std::uint32_t prefix) const { return bins_.at(prefix); }

  /// Writes every nonempty bin, replacing existing bin files.
  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::uint32_t p = 0; p < bins_.size(); ++p) {
      if (bins_[p].empty()) continue;
      write_bin(dir, p, bins_[p], std::ios::trunc);
    }
  }

  /// Appends the records of this store to the bin files under `dir`.
  void append_to(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::uint32_t p = 0; p < bins_.size(); ++p) {
      if (bins_[p].empty()) continue;
      write_bin(dir, p, bins_[p], std::ios::app);
    }
  }

  static IdStore load(const std::filesystem::path& dir, int bin_prefix_bits = kDefaultBinBits);

 private:
  static void write_bin(const std::filesystem::path& dir, std::uint32_t prefix,
                        const std::vector<IdRecord>& recs, std::ios::openmode mode) {
    std::ofstream out(dir / bin_file_name(prefix), std::ios::binary | std::ios::out | mode);
    if (!out) throw StoreError("cannot open bin file for writing: " + (dir / bin_file_name(prefix)).string());
    std::vector<std::uint8_t> buf(recs.size() * kRecordBytes);
    for (std::size_t i = 0; i < recs.size(); ++i) encode_record(recs[i], buf.data() + i * kRecordBytes);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw StoreError("write failed: " + (dir / bin_file_name(prefix)).string());
  }

  int bits_;
  std::vector<std::vector<IdRecord>> bins_;
  std::size_t total_ = 0;
};

/// Records persisted under one bin, in insertion order. A missing bin file is
/// an empty bin.
inline std::vector<IdRecord> load_bin(const std::filesystem::path& dir, std::uint32_t prefix,
                                      int bin_prefix_bits = kDefaultBinBits) {
  if (prefix >= (std::uint32_t{1} << bin_prefix_bits)) throw std::out_of_range("bin prefix out of range");
  const auto path = dir / bin_file_name(prefix);
  std::vector<IdRecord> out;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open bin file: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % kRecordBytes != 0) throw StoreError("truncated bin file: " + path.string());
  out.reserve(buf.size() / kRecordBytes);
  for (std::size_t off = 0; off < buf.size(); off += kRecordBytes) {
    auto r = decode_record(buf.data() + off);
    if (r.id.prefix(bin_prefix_bits) != prefix) throw StoreError("record filed under wrong bin: " + path.string());
    out.push_back(r);
  }
  return out;
}

inline IdStore IdStore::load(const std::filesystem::path& dir, int bin_prefix_bits) {
  if (!std::filesystem::is_directory(dir)) throw StoreError("store directory not found: " + dir.string());
  IdStore store(bin_prefix_bits);
  for (std::uint32_t p = 0; p < store.bins_.size(); ++p) {
    for (const auto& r : load_bin(dir, p, bin_prefix_bits)) store.insert(r);
  }
  return store;
}

/// Mines [seed_start, seed_start + count) straight into `dir` in chunks.
/// Bins are appended; a run can be resumed from any completed chunk boundary,
/// which is logged to `dir/ranges.log` as "start count" lines.
inline void mine_to_directory(const std::filesystem::path& dir, std::uint64_t seed_start, std::uint64_t count,
                              int bin_prefix_bits = kDefaultBinBits, std::uint64_t chunk = 1u << 20) {
  if (count < 1) throw std::invalid_argument("mine count must be >= 1");
  std::filesystem::create_directories(dir);
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t n = std::min(chunk, count - done);
    IdStore delta(bin_prefix_bits);
    delta.mine(seed_start + done, n);
    delta.append_to(dir);
    std::ofstream log(dir / "ranges.log", std::ios::app);
    log << (seed_start + done) << ' ' << n << '\n';
    if (!log) throw StoreError("cannot write ranges.log");
    done += n;
  }
}

struct CoverBucket {
  int index = 0;
  std::vector<IdRecord> records;  // ascending seed
  bool complete = false;          // holds the requested per-bucket count
};

struct CoverSet {
  NodeId target;
  std::vector<CoverBucket> buckets;  // buckets[i].index == i

  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& b : buckets) n += b.records.size();
    return n;
  }
  /// Number of leading buckets that are completely covered.
  int satisfied_depth() const {
    int d = 0;
    while (d < static_cast<int>(buckets.size()) && buckets[static_cast<std::size_t>(d)].complete) ++d;
    return d;
  }
};

/// For each bucket index i in [0, depth), up to `per_bucket` records whose id
/// shares exactly i leading bits with `target`, choosing the lowest seeds.
inline CoverSet query_cover(const IdStore& store, const NodeId& target, int depth, int per_bucket) {
  if (depth < 1 || depth > kIdBits) throw std::invalid_argument("cover depth must be in [1, 256]");
  if (per_bucket < 1) throw std::invalid_argument("per_bucket must be >= 1");
  if (store.empty()) throw StoreError("cover query against an empty store");

  const int bits = store.bin_prefix_bits();
  const std::uint32_t tp = target.prefix(bits);
  const auto by_seed = [](const IdRecord& a, const IdRecord& b) { return a.seed < b.seed; };

  CoverSet cover{target, {}};
  cover.buckets.reserve(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    // Max-heap on seed keeps the per_bucket lowest seeds seen so far.
    std::priority_queue<IdRecord, std::vector<IdRecord>, decltype(by_seed)> best(by_seed);
    auto offer = [&](const IdRecord& r) {
      if (static_cast<int>(best.size()) < per_bucket) {
        best.push(r);
      } else if (r.seed < best.top().seed) {
        best.pop();
        best.push(r);
      }
    };
    if (i < bits) {
      // Every record of these bins has exactly i common bits with target.
      const int free_bits = bits - 1 - i;
      const std::uint32_t first = ((tp >> free_bits) ^ 1U) << free_bits;
      for (std::uint32_t p = first; p < first + (std::uint32_t{1} << free_bits); ++p) {
        for (const auto& r : store.bin(p)) offer(r);
      }
    } else {
      for (const auto& r : store.bin(tp)) {
        if (common_prefix_len(r.id, target) == i) offer(r);
      }
    }
    CoverBucket b;
    b.index = i;
    b.records.reserve(best.size());
    for (; !best.empty(); best.pop()) b.records.push_back(best.top());
    std::reverse(b.records.begin(), b.records.end());
    b.complete = static_cast<int>(b.records.size()) >= per_bucket;
    cover.buckets.push_back(std::move(b));
  }
  return cover;
}

}  // namespace eclipse
