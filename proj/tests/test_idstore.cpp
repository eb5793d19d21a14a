#include <eclipse/idstore.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

using namespace eclipse;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("idstore_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<IdRecord> all_records(const IdStore& s) {
  std::vector<IdRecord> out;
  for (std::uint32_t p = 0; p < s.bin_count(); ++p)
    for (const auto& r : s.bin(p)) out.push_back(r);
  return out;
}

}  // namespace

TEST(IdStore, SingleRecordLandsInItsBin) {
  IdStore s;
  s.mine(1, 1);
  ASSERT_EQ(s.total_count(), 1u);
  const auto id = derive_node_id(PrivateSeed{1});
  ASSERT_EQ(s.bin(id.prefix(14)).size(), 1u);
  EXPECT_EQ(s.bin(id.prefix(14))[0].id, id);
}

TEST(IdStore, MostBinsNonemptyAtEightPerBin) {
  IdStore s;
  s.mine(1, (1u << 14) * 8);
  std::size_t nonempty = 0, total = 0;
  for (std::uint32_t p = 0; p < s.bin_count(); ++p) {
    nonempty += s.bin(p).empty() ? 0 : 1;
    total += s.bin(p).size();
    for (const auto& r : s.bin(p)) ASSERT_EQ(r.id.prefix(14), p);
  }
  EXPECT_EQ(total, s.total_count());
  EXPECT_GE(nonempty, (1u << 14) * 9 / 10);
}

TEST(IdStore, RejectsBadArguments) {
  IdStore s;
  EXPECT_THROW(s.mine(1, 0), std::invalid_argument);
  EXPECT_THROW(s.mine(0, 5), std::invalid_argument);
  EXPECT_THROW(IdStore(0), std::invalid_argument);
}

TEST(IdStore, DisjointRangesCommute) {
  IdStore a, b;
  a.mine(1, 5000);
  a.mine(5001, 5000);
  b.mine(5001, 5000);
  b.mine(1, 5000);
  auto ra = all_records(a), rb = all_records(b);
  auto by_seed = [](const IdRecord& x, const IdRecord& y) { return x.seed < y.seed; };
  std::sort(ra.begin(), ra.end(), by_seed);
  std::sort(rb.begin(), rb.end(), by_seed);
  EXPECT_EQ(ra, rb);
}

TEST(IdStore, PersistRoundTrip) {
  TempDir dir;
  IdStore s;
  s.mine(1, 20000);
  s.save(dir.path());
  const auto back = IdStore::load(dir.path());
  ASSERT_EQ(back.total_count(), s.total_count());
  for (std::uint32_t p = 0; p < s.bin_count(); ++p) {
    ASSERT_EQ(std::vector<IdRecord>(back.bin(p).begin(), back.bin(p).end()),
              std::vector<IdRecord>(s.bin(p).begin(), s.bin(p).end()));
  }
}

TEST(IdStore, LoadBinFormatAndMissingBins) {
  TempDir dir;
  IdStore s;
  s.mine(1, 1);
  s.save(dir.path());
  const auto id = derive_node_id(PrivateSeed{1});
  const auto p = id.prefix(14);
  auto recs = load_bin(dir.path(), p);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].id, id);
  EXPECT_EQ(recs[0].seed.value(), 1u);
  EXPECT_TRUE(load_bin(dir.path(), (p + 1) % (1u << 14)).empty());
  EXPECT_EQ(fs::file_size(dir.path() / bin_file_name(p)), kRecordBytes);
  EXPECT_THROW(load_bin(dir.path(), 1u << 14), std::out_of_range);

  // Byte layout: id then big-endian seed.
  std::ifstream in(dir.path() / bin_file_name(p), std::ios::binary);
  std::vector<char> raw(kRecordBytes);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  EXPECT_EQ(static_cast<std::uint8_t>(raw[0]), id.bytes[0]);
  EXPECT_EQ(static_cast<std::uint8_t>(raw[39]), 1);
  EXPECT_EQ(static_cast<std::uint8_t>(raw[32]), 0);
}

TEST(IdStore, BinFileNames) {
  EXPECT_EQ(bin_file_name(0), "0000");
  EXPECT_EQ(bin_file_name(0x3fff), "3fff");
}

TEST(IdStore, TruncatedAndMisfiledBinsAreRejected) {
  TempDir dir;
  IdStore s;
  s.mine(1, 1);
  s.save(dir.path());
  const auto p = derive_node_id(PrivateSeed{1}).prefix(14);
  fs::copy_file(dir.path() / bin_file_name(p), dir.path() / bin_file_name(p ^ 1));
  EXPECT_THROW(load_bin(dir.path(), p ^ 1), StoreError);
  fs::resize_file(dir.path() / bin_file_name(p), kRecordBytes - 3);
  EXPECT_THROW(load_bin(dir.path(), p), StoreError);
}

TEST(IdStore, MineToDirectoryIsResumableAndMergeable) {
  TempDir a, b;
  mine_to_directory(a.path(), 1, 30000, kDefaultBinBits, 7000);
  mine_to_directory(b.path(), 1, 12000, kDefaultBinBits, 5000);
  mine_to_directory(b.path(), 12001, 18000, kDefaultBinBits, 9000);
  const auto sa = IdStore::load(a.path());
  const auto sb = IdStore::load(b.path());
  ASSERT_EQ(sa.total_count(), 30000u);
  for (std::uint32_t p = 0; p < sa.bin_count(); ++p) {
    ASSERT_EQ(std::vector<IdRecord>(sa.bin(p).begin(), sa.bin(p).end()),
              std::vector<IdRecord>(sb.bin(p).begin(), sb.bin(p).end()));
  }
  std::ifstream log(a.path() / "ranges.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST(IdStore, LoadMissingDirectoryFails) { EXPECT_THROW(IdStore::load("/nonexistent/store"), StoreError); }

TEST(Cover, EmptyStoreIsAnError) {
  IdStore s;
  EXPECT_THROW(query_cover(s, NodeId{}, 1, 1), StoreError);
}

TEST(Cover, ArgumentValidation) {
  IdStore s;
  s.mine(1, 10);
  EXPECT_THROW(query_cover(s, NodeId{}, 0, 1), std::invalid_argument);
  EXPECT_THROW(query_cover(s, NodeId{}, 257, 1), std::invalid_argument);
  EXPECT_THROW(query_cover(s, NodeId{}, 1, 0), std::invalid_argument);
}

TEST(Cover, DepthOneSingleRecord) {
  IdStore s;
  s.mine(1, 1000);
  std::mt19937_64 rng(1);
  const auto t = random_node_id(rng);
  const auto c = query_cover(s, t, 1, 1);
  ASSERT_EQ(c.buckets.size(), 1u);
  ASSERT_EQ(c.buckets[0].records.size(), 1u);
  EXPECT_EQ(common_prefix_len(c.buckets[0].records[0].id, t), 0);
}

TEST(Cover, StoredTargetNeverInBucketZero) {
  IdStore s;
  s.mine(1, 1000);
  const auto t = derive_node_id(PrivateSeed{17});
  const auto c = query_cover(s, t, 1, 1000);
  for (const auto& r : c.buckets[0].records) EXPECT_NE(r.id, t);
}

TEST(Cover, MatchesBruteForceAndPicksLowestSeeds) {
  IdStore s;
  s.mine(1, 200000);
  std::mt19937_64 rng(99);
  const auto all = all_records(s);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = random_node_id(rng);
    const auto c = query_cover(s, t, 24, 20);
    for (int i = 0; i < 24; ++i) {
      std::vector<std::uint64_t> want;
      for (const auto& r : all)
        if (common_prefix_len(r.id, t) == i) want.push_back(r.seed.value());
      std::sort(want.begin(), want.end());
      if (want.size() > 20) want.resize(20);
      std::vector<std::uint64_t> got;
      for (const auto& r : c.buckets[static_cast<std::size_t>(i)].records) got.push_back(r.seed.value());
      ASSERT_EQ(got, want) << "bucket " << i;
      EXPECT_EQ(c.buckets[static_cast<std::size_t>(i)].complete, want.size() == 20);
    }
  }
}

TEST(Cover, FullBucketsAtTwentyTimesTwoToTheDepth) {
  // Same ratio as depth 20 over 20 * 2^21 records, scaled down.
  IdStore s;
  s.mine(1, 20u << 13);
  std::mt19937_64 rng(4);
  const auto c = query_cover(s, random_node_id(rng), 12, 20);
  EXPECT_EQ(c.satisfied_depth(), 12);
  EXPECT_EQ(c.record_count(), 240u);
}
