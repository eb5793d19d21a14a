// Command-line front end: mine ids, query covers, run scenarios, plot curves.

#include <eclipse/idstore.hpp>
#include <eclipse/sim/plot.hpp>
#include <eclipse/sim/runner.hpp>
#include <eclipse/sim/scenario.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace eclipse;

namespace {

int cmd_mine(std::uint64_t start, std::uint64_t count, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  mine_to_directory(out, start, count);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "mined " << count << " ids in " << secs << " s (" << static_cast<double>(count) / std::max(secs, 1e-9)
            << " ids/s)\n";
  return 0;
}

int cmd_cover(const std::string& target_hex, int depth, int k, const std::string& store_dir) {
  const auto target = node_id_from_hex(target_hex);
  const auto store = IdStore::load(store_dir);
  const auto cover = query_cover(store, target, depth, k);
  std::cout << "bucket_index,seed,id_hex\n";
  for (const auto& b : cover.buckets) {
    for (const auto& r : b.records) std::cout << b.index << ',' << r.seed.value() << ',' << to_hex(r.id) << '\n';
  }
  for (const auto& b : cover.buckets) {
    if (!b.complete) std::cerr << "bucket " << b.index << ": only " << b.records.size() << " of " << k << '\n';
  }
  return 0;
}

int cmd_run(const std::string& scenario_path, std::optional<int> runs, std::optional<std::uint64_t> seed,
            const std::string& out, unsigned threads) {
  auto sc = sim::load_scenario(scenario_path);
  if (runs) sc.runs = *runs;
  if (seed) sc.seed = *seed;
  sc.validate();
  std::cerr << "preparing id store\n";
  const auto store = sim::prepare_store(sc);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = sim::run_batch(sc, sc.runs, store, threads, [&](int i, const sim::MetricsTimeline& tl) {
    const auto s = sim::summarize(tl, i);
    std::cerr << "run " << i << (s.aborted ? " aborted" : "")
              << " poisoned=" << (s.t_poisoned ? std::to_string(*s.t_poisoned) : "-")
              << " eclipsed=" << (s.t_eclipsed ? std::to_string(*s.t_eclipsed) : "-") << '\n';
  });
  sim::write_batch(out, result);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto end = std::int64_t{sc.attack_minutes} * 60;
  std::cerr << "done in " << secs << " s; P(eclipsed at end)=" << result.curve.at(end).p_fully_eclipsed
            << " P(swarm<10 at end)=" << result.curve.at(end).p_swarm_below_10 << '\n';
  return 0;
}

int cmd_plot(const std::string& in, const std::string& out) {
  fs::path p = in;
  if (fs::is_directory(p)) p /= "curve.csv";
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  const auto curve = sim::read_curve_csv(f);
  std::ofstream o(out);
  if (!o) throw std::runtime_error("cannot write " + out);
  sim::write_svg(o, sim::curve_series(curve), "Eclipse probability over attack time");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eclipse attack simulator"};
  app.require_subcommand(1);

  std::uint64_t start = 1, count = 1;
  std::string out;
  auto* mine = app.add_subcommand("mine", "Mine (seed, id) pairs into a binned store");
  mine->add_option("--start", start, "First seed")->required();
  mine->add_option("--count", count, "Number of seeds")->required();
  mine->add_option("--out", out, "Store directory")->required();

  std::string target, store_dir;
  int depth = 20, k = 20;
  auto* cover = app.add_subcommand("cover", "Print a bucket cover for a target as CSV");
  cover->add_option("--target", target, "Target id as 64 hex digits")->required();
  cover->add_option("--depth", depth, "Number of buckets");
  cover->add_option("--k", k, "Records per bucket");
  cover->add_option("--store", store_dir, "Store directory")->required();

  std::string scenario;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  auto* run = app.add_subcommand("run", "Run a scenario and write CSV results");
  run->add_option("--scenario", scenario, "Scenario file")->required();
  run->add_option("--runs", runs, "Override the number of runs");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--threads", threads, "Worker threads (0: all cores)");

  std::string in;
  auto* plot = app.add_subcommand("plot", "Render curve.csv as SVG");
  plot->add_option("--in", in, "Result directory or curve.csv")->required();
  plot->add_option("--out", out, "SVG file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*mine) return cmd_mine(start, count, out);
    if (*cover) return cmd_cover(target, depth, k, store_dir);
    if (*run) return cmd_run(scenario, runs, seed, out, threads);
    if (*plot) return cmd_plot(in, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
