// Copyright 2026 The flextopo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flextopo/sim.hpp"

namespace flextopo {

/// Workloads counted by default: everything except requests for a whole
/// server and the lowest-priority workload(s).
inline std::set<std::string> default_hit_rate_filter(std::span<const WorkloadSpec> workloads,
                                                     const TopologySpec& topology) {
  int lowest = 0;
  for (const auto& w : workloads) lowest = lowest == 0 ? w.priority : std::min(lowest, w.priority);
  std::set<std::string> out;
  for (const auto& w : workloads) {
    if (w.request.gpus >= topology.gpu_count() || w.priority == lowest) continue;
    out.insert(w.name);
  }
  return out;
}

struct HitRate {
  long long satisfied = 0;
  long long attempted = 0;
  double rate() const { return static_cast<double>(satisfied) / static_cast<double>(attempted); }
};

/// Share of records for the filtered workloads whose placement honored every
/// requested QoS dimension. Failed attempts count as misses.
inline HitRate hit_rate(std::span<const PreemptionRecord> records, const std::set<std::string>& filter) {
  HitRate h;
  for (const auto& r : records) {
    if (!filter.count(r.preemptor)) continue;
    ++h.attempted;
    h.satisfied += r.qos_satisfied ? 1 : 0;
  }
  if (h.attempted == 0) throw Error("hit rate over an empty record set");
  return h;
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
template <typename T>
T percentile(std::vector<T> values, double p) {
  if (values.empty()) throw Error("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  long long rank = static_cast<long long>(std::ceil(p / 100.0 * n));
  rank = std::clamp<long long>(rank, 1, static_cast<long long>(values.size()));
  return values[static_cast<std::size_t>(rank - 1)];
}

template <typename T>
double mean(const std::vector<T>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : values) sum += static_cast<double>(v);
  return sum / static_cast<double>(values.size());
}

struct Distribution {
  std::size_t count = 0;
  double p50 = 0.0;
  double p90 = 0.0;
  double mean = 0.0;
};

template <typename T>
Distribution summarize(const std::vector<T>& values) {
  Distribution d;
  d.count = values.size();
  if (values.empty()) return d;
  d.p50 = static_cast<double>(percentile(values, 50.0));
  d.p90 = static_cast<double>(percentile(values, 90.0));
  d.mean = flextopo::mean(values);
  return d;
}

struct LatencyStats {
  Distribution wall_time_us;
  Distribution evaluations;
  Distribution exhaustive_evaluations;  // empty unless measured
};

/// Sourcing cost per (workload, mode) over records that went through
/// candidate sourcing, i.e. did not fit without preemption.
inline std::map<std::pair<std::string, std::string>, LatencyStats> latency_summary(
    std::span<const PreemptionRecord> records) {
  std::map<std::pair<std::string, std::string>, std::vector<const PreemptionRecord*>> groups;
  for (const auto& r : records) {
    if (r.outcome == Outcome::kPlaced) continue;
    groups[{r.preemptor, std::string(to_string(r.mode))}].push_back(&r);
  }
  std::map<std::pair<std::string, std::string>, LatencyStats> out;
  for (const auto& [key, rs] : groups) {
    std::vector<double> wall;
    std::vector<long long> evals;
    std::vector<long long> exhaustive;
    for (const auto* r : rs) {
      wall.push_back(r->wall_time_us);
      evals.push_back(r->evaluations);
      if (r->exhaustive_evaluations >= 0) exhaustive.push_back(r->exhaustive_evaluations);
    }
    out[key] = {summarize(wall), summarize(evals), summarize(exhaustive)};
  }
  return out;
}

inline constexpr const char* kRecordsCsvHeader =
    "cycle,index,mode,preemptor,preemptor_gpus,outcome,instance,server,victims,achieved_class,"
    "qos_satisfied,evaluations,exhaustive_evaluations,wall_time_us";

inline void write_records_csv(std::ostream& out, std::span<const PreemptionRecord> records) {
  out << kRecordsCsvHeader << '\n';
  char wall[32];
  for (const auto& r : records) {
    std::snprintf(wall, sizeof(wall), "%.3f", r.wall_time_us);
    out << r.cycle << ',' << r.index << ',' << to_string(r.mode) << ',' << r.preemptor << ','
        << r.preemptor_gpus << ',' << to_string(r.outcome) << ',' << r.instance << ',' << r.server << ','
        << r.victims << ',' << (r.achieved ? to_string(*r.achieved) : std::string_view("none")) << ','
        << (r.qos_satisfied ? 1 : 0) << ',' << r.evaluations << ',' << r.exhaustive_evaluations << ','
        << wall << '\n';
  }
}

inline void write_timeseries_csv(std::ostream& out, const RunMetrics& m) {
  out << "cycle,workload,placed,evicted,released,killed,end\n";
  for (std::size_t c = 0; c < m.timeseries.size(); ++c) {
    for (const auto& [name, k] : m.timeseries[c]) {
      out << c << ',' << name << ',' << k.placed << ',' << k.evicted << ',' << k.released << ','
          << k.killed << ',' << k.end << '\n';
    }
  }
}

inline nlohmann::ordered_json distribution_json(const Distribution& d) {
  nlohmann::ordered_json j;
  j["count"] = d.count;
  j["p50"] = d.p50;
  j["p90"] = d.p90;
  j["mean"] = d.mean;
  return j;
}

/// Structured summary of one run. `include_timing` drops wall-time fields
/// when false so the document is a pure function of the inputs.
inline nlohmann::ordered_json summary_json(const RunMetrics& m, const std::set<std::string>& filter,
                                           bool include_timing = true) {
  nlohmann::ordered_json j;
  j["scenario"] = m.scenario;
  j["mode"] = std::string(to_string(m.mode));
  j["cycle_semantics"] = std::string(to_string(m.semantics));
  j["seed"] = m.seed;
  j["records"] = m.records.size();
  std::map<std::string, long long> outcomes;
  for (const auto& r : m.records) ++outcomes[std::string(to_string(r.outcome))];
  j["outcomes"] = outcomes;
  if (!filter.empty()) {
    bool any = false;
    for (const auto& r : m.records) any = any || filter.count(r.preemptor) > 0;
    if (any) {
      const HitRate h = hit_rate(m.records, filter);
      j["hit_rate"] = {{"workloads", filter},
                       {"satisfied", h.satisfied},
                       {"attempted", h.attempted},
                       {"rate", h.rate()}};
    }
  }
  nlohmann::ordered_json per_workload = nlohmann::ordered_json::array();
  for (const auto& [key, stats] : latency_summary(m.records)) {
    nlohmann::ordered_json s;
    s["workload"] = key.first;
    s["mode"] = key.second;
    long long attempted = 0;
    long long satisfied = 0;
    for (const auto& r : m.records) {
      if (r.preemptor != key.first) continue;
      ++attempted;
      satisfied += r.qos_satisfied ? 1 : 0;
    }
    s["attempted"] = attempted;
    s["qos_satisfied"] = satisfied;
    s["evaluations"] = distribution_json(stats.evaluations);
    if (stats.exhaustive_evaluations.count > 0) {
      s["exhaustive_evaluations"] = distribution_json(stats.exhaustive_evaluations);
    }
    if (include_timing) s["wall_time_us"] = distribution_json(stats.wall_time_us);
    per_workload.push_back(std::move(s));
  }
  j["sourcing"] = std::move(per_workload);
  j["saturation"] = m.saturation.placed;
  return j;
}

}  // namespace flextopo
