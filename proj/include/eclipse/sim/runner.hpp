#pragma once

// Multi-run execution and result files.

#include <eclipse/idstore.hpp>
#include <eclipse/sim/metrics.hpp>
#include <eclipse/sim/scenario.hpp>
#include <eclipse/sim/world.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace eclipse::sim {

/// The id store a scenario asks for: loaded from store_dir, or mined in
/// memory from seed 1.
inline IdStore prepare_store(const Scenario& sc) {
  if (!sc.store_dir.empty()) return IdStore::load(sc.store_dir);
  IdStore store;
  if (sc.attack) store.mine(1, sc.store_records);
  return store;
}

struct BatchResult {
  std::vector<MetricsTimeline> timelines;  // indexed by run
  std::vector<RunSummary> summaries;
  EclipseCurve curve;
};

/// Runs `runs` independent replicas, `threads` at a time. Output does not
/// depend on the thread count.
inline BatchResult run_batch(const Scenario& sc, int runs, const IdStore& store, unsigned threads = 0,
                             const std::function<void(int, const MetricsTimeline&)>& on_done = {}) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(runs));
  BatchResult out;
  out.timelines.resize(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  std::mutex report;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int i = next++; i < runs; i = next++) {
      try {
        out.timelines[static_cast<std::size_t>(i)] = run(sc, i, &store);
      } catch (...) {
        std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
        return;
      }
      if (on_done) {
        std::lock_guard lock(report);
        on_done(i, out.timelines[static_cast<std::size_t>(i)]);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (int i = 0; i < runs; ++i) out.summaries.push_back(summarize(out.timelines[static_cast<std::size_t>(i)], i));
  out.curve = aggregate(out.timelines, std::int64_t{sc.attack_minutes} * 60,
                        std::chrono::duration_cast<std::chrono::seconds>(sc.sample_interval).count());
  return out;
}

inline std::string run_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%03d.csv", i);
  return buf;
}

inline void write_batch(const std::filesystem::path& dir, const BatchResult& r) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < r.timelines.size(); ++i) {
    write_file(dir / run_file_name(static_cast<int>(i)), write_timeline_csv, r.timelines[i]);
  }
  write_file(dir / "curve.csv", write_curve_csv, r.curve);
  write_file(dir / "summary.csv", write_summary_csv, r.summaries);
}

}  // namespace eclipse::sim
