#pragma once

// Per-run timelines, first-hitting-time curves across runs, and their CSV
// forms.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eclipse::sim {

struct Sample {
  std::int64_t t = 0;  // seconds since run start
  int swarm_honest = 0;
  int swarm_attacker = 0;
  int rt_honest = 0;
  int rt_attacker = 0;
  bool rt_fully_poisoned = false;
  bool fully_eclipsed = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct MetricsTimeline {
  std::vector<Sample> samples;
  std::int64_t metrics_start_s = 0;
  std::int64_t attack_start_s = 0;   // simulated seconds since run start
  std::int64_t attack_end_s = 0;
  bool aborted = false;
  int pre_attack_rt_honest = 0;
  int deepest_pre_attack_bucket = -1;

  /// Seconds after attack start at which `pred` first holds.
  template <class Pred>
  std::optional<std::int64_t> first_hit(Pred pred) const {
    for (const auto& s : samples) {
      if (s.t >= attack_start_s && pred(s)) return s.t - attack_start_s;
    }
    return std::nullopt;
  }

  std::optional<std::int64_t> time_to_eclipse() const {
    return first_hit([](const Sample& s) { return s.fully_eclipsed; });
  }
  std::optional<std::int64_t> time_to_poisoned() const {
    return first_hit([](const Sample& s) { return s.rt_fully_poisoned; });
  }
  std::optional<std::int64_t> time_to_swarm_below(int n) const {
    return first_hit([n](const Sample& s) { return s.swarm_honest < n; });
  }
};

inline constexpr int kSwarmSuppressionThreshold = 10;

struct CurvePoint {
  std::int64_t t = 0;  // seconds since attack start
  double p_fully_eclipsed = 0;
  double p_swarm_below_10 = 0;
};

struct EclipseCurve {
  std::vector<CurvePoint> points;
  std::size_t runs = 0;

  /// Probability at the last point not after `t`.
  const CurvePoint& at(std::int64_t t) const {
    if (points.empty()) throw std::out_of_range("empty curve");
    auto it = std::upper_bound(points.begin(), points.end(), t,
                               [](std::int64_t v, const CurvePoint& p) { return v < p.t; });
    return it == points.begin() ? points.front() : *std::prev(it);
  }
};

struct RunSummary {
  int run_index = 0;
  bool aborted = false;
  std::int64_t attack_start_s = 0;
  std::optional<std::int64_t> t_poisoned;
  std::optional<std::int64_t> t_eclipsed;
  std::optional<std::int64_t> t_swarm_below_10;
  int pre_attack_rt_honest = 0;
  int min_rt_honest = 0;
  int final_rt_honest = 0;
  int max_rt_attacker = 0;
};

inline RunSummary summarize(const MetricsTimeline& tl, int run_index) {
  RunSummary s;
  s.run_index = run_index;
  s.aborted = tl.aborted;
  s.attack_start_s = tl.attack_start_s;
  s.t_poisoned = tl.time_to_poisoned();
  s.t_eclipsed = tl.time_to_eclipse();
  s.t_swarm_below_10 = tl.time_to_swarm_below(kSwarmSuppressionThreshold);
  s.pre_attack_rt_honest = tl.pre_attack_rt_honest;
  s.min_rt_honest = std::numeric_limits<int>::max();
  for (const auto& x : tl.samples) {
    if (x.t < tl.attack_start_s) continue;
    s.min_rt_honest = std::min(s.min_rt_honest, x.rt_honest);
    s.max_rt_attacker = std::max(s.max_rt_attacker, x.rt_attacker);
  }
  if (s.min_rt_honest == std::numeric_limits<int>::max()) s.min_rt_honest = 0;
  s.final_rt_honest = tl.samples.empty() ? 0 : tl.samples.back().rt_honest;
  return s;
}

/// Empirical first-hitting-time CDFs over non-aborted runs, one point per
/// `step` seconds from attack start to `duration_s`.
inline EclipseCurve aggregate(const std::vector<MetricsTimeline>& timelines, std::int64_t duration_s,
                              std::int64_t step = 1) {
  if (timelines.empty()) throw std::invalid_argument("aggregate needs at least one timeline");
  if (step < 1) throw std::invalid_argument("step must be >= 1");
  std::vector<std::int64_t> ecl;
  std::vector<std::int64_t> sup;
  std::size_t n = 0;
  constexpr auto never = std::numeric_limits<std::int64_t>::max();
  for (const auto& tl : timelines) {
    if (tl.aborted) continue;
    ++n;
    ecl.push_back(tl.time_to_eclipse().value_or(never));
    sup.push_back(tl.time_to_swarm_below(kSwarmSuppressionThreshold).value_or(never));
  }
  std::sort(ecl.begin(), ecl.end());
  std::sort(sup.begin(), sup.end());
  EclipseCurve curve;
  curve.runs = n;
  for (std::int64_t t = 0; t <= duration_s; t += step) {
    CurvePoint p;
    p.t = t;
    if (n > 0) {
      p.p_fully_eclipsed =
          static_cast<double>(std::upper_bound(ecl.begin(), ecl.end(), t) - ecl.begin()) / static_cast<double>(n);
      p.p_swarm_below_10 =
          static_cast<double>(std::upper_bound(sup.begin(), sup.end(), t) - sup.begin()) / static_cast<double>(n);
    }
    curve.points.push_back(p);
  }
  return curve;
}

// -- CSV -------------------------------------------------------------------

inline constexpr const char* kTimelineHeader =
    "t,swarm_honest,swarm_attacker,rt_honest,rt_attacker,rt_fully_poisoned,fully_eclipsed";
inline constexpr const char* kCurveHeader = "t_seconds,p_fully_eclipsed,p_swarm_below_10";

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_timeline_csv(std::ostream& out, const MetricsTimeline& tl) {
  out << kTimelineHeader << '\n';
  for (const auto& s : tl.samples) {
    out << s.t << ',' << s.swarm_honest << ',' << s.swarm_attacker << ',' << s.rt_honest << ',' << s.rt_attacker << ','
        << (s.rt_fully_poisoned ? 1 : 0) << ',' << (s.fully_eclipsed ? 1 : 0) << '\n';
  }
}

inline std::string format_probability(double p) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << p;
  return os.str();
}

inline void write_curve_csv(std::ostream& out, const EclipseCurve& c) {
  out << kCurveHeader << '\n';
  for (const auto& p : c.points) {
    out << p.t << ',' << format_probability(p.p_fully_eclipsed) << ',' << format_probability(p.p_swarm_below_10)
        << '\n';
  }
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::int64_t to_int(const std::string& s) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw CsvError("bad integer field: '" + s + "'");
  }
  if (used != s.size()) throw CsvError("bad integer field: '" + s + "'");
  return v;
}

inline bool to_flag(const std::string& s) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw CsvError("bad flag field: '" + s + "'");
}
}  // namespace detail

inline MetricsTimeline read_timeline_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTimelineHeader) throw CsvError("missing timeline header");
  MetricsTimeline tl;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw CsvError("timeline row must have 7 fields");
    Sample s;
    s.t = detail::to_int(f[0]);
    s.swarm_honest = static_cast<int>(detail::to_int(f[1]));
    s.swarm_attacker = static_cast<int>(detail::to_int(f[2]));
    s.rt_honest = static_cast<int>(detail::to_int(f[3]));
    s.rt_attacker = static_cast<int>(detail::to_int(f[4]));
    s.rt_fully_poisoned = detail::to_flag(f[5]);
    s.fully_eclipsed = detail::to_flag(f[6]);
    tl.samples.push_back(s);
  }
  return tl;
}

inline EclipseCurve read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw CsvError("missing curve header");
  EclipseCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw CsvError("curve row must have 3 fields");
    CurvePoint p;
    p.t = detail::to_int(f[0]);
    try {
      p.p_fully_eclipsed = std::stod(f[1]);
      p.p_swarm_below_10 = std::stod(f[2]);
    } catch (const std::exception&) {
      throw CsvError("bad probability field");
    }
    c.points.push_back(p);
  }
  return c;
}

inline void write_summary_csv(std::ostream& out, const std::vector<RunSummary>& runs) {
  out << "run,aborted,attack_start_s,t_poisoned_s,t_eclipsed_s,t_swarm_below_10_s,pre_attack_rt_honest,"
         "min_rt_honest,final_rt_honest,max_rt_attacker\n";
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : runs) {
    out << r.run_index << ',' << (r.aborted ? 1 : 0) << ',' << r.attack_start_s << ',' << opt(r.t_poisoned) << ','
        << opt(r.t_eclipsed) << ',' << opt(r.t_swarm_below_10) << ',' << r.pre_attack_rt_honest << ','
        << r.min_rt_honest << ',' << r.final_rt_honest << ',' << r.max_rt_attacker << '\n';
  }
}

template <class Writer, class Value>
void write_file(const std::filesystem::path& path, Writer&& writer, const Value& v) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CsvError("cannot open for writing: " + path.string());
  writer(out, v);
  out.flush();
  if (!out) throw CsvError("write failed: " + path.string());
}

}  // namespace eclipse::sim
