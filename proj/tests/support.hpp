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
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "flextopo/flextopo.hpp"

#ifndef FLEXTOPO_SCENARIO_DIR
#define FLEXTOPO_SCENARIO_DIR "scenarios"
#endif

namespace flextopo::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(FLEXTOPO_SCENARIO_DIR) + "/" + name + ".yaml";
}

inline Scenario scenario(const std::string& name) { return load_scenario(scenario_path(name)); }

// State right after the scenario's initial placements or saturation.
inline ClusterState initial_state(const Scenario& sc) {
  Simulator sim(sc, SimOptions{});
  sim.initialize();
  return sim.state();
}

inline WorkloadSpec workload(std::string name, int priority, bool preemptible, int cpu, int gpu,
                             QosLevel numa = QosLevel::kNone, QosLevel socket = QosLevel::kNone,
                             int replicas = 0) {
  WorkloadSpec w;
  w.name = std::move(name);
  w.priority = priority;
  w.preemptible = preemptible;
  w.request = {cpu, gpu};
  w.qos = {numa, socket};
  w.initial_replicas = replicas;
  return w;
}

inline std::vector<int> range(int lo, int hi) {
  std::vector<int> out;
  for (int i = lo; i <= hi; ++i) out.push_back(i);
  return out;
}

inline int total_free_gpus(const FlexTopoGraph& g) { return g.free_view().free_gpus; }

// Conservation: free + allocated equals the spec totals, and every owner is
// consistent between cores, GPUs and groups.
inline ::testing::AssertionResult conserved(const FlexTopoGraph& g) {
  int free_cores = 0;
  int alloc_cores = 0;
  for (const auto& c : g.cores()) {
    if (c.status == Status::kFree) {
      ++free_cores;
      if (!c.used_by.empty()) return ::testing::AssertionFailure() << "free core with owner " << c.id;
    } else {
      ++alloc_cores;
      if (c.used_by.empty()) return ::testing::AssertionFailure() << "allocated core without owner " << c.id;
    }
  }
  int free_gpus = 0;
  int alloc_gpus = 0;
  int retired = 0;  // failed and free
  for (const auto& gpu : g.gpus()) {
    if (gpu.status == Status::kFree) {
      gpu.healthy ? ++free_gpus : ++retired;
      if (!gpu.used_by.empty()) return ::testing::AssertionFailure() << "free gpu with owner";
    } else {
      ++alloc_gpus;
      if (gpu.used_by.empty()) return ::testing::AssertionFailure() << "allocated gpu without owner";
    }
  }
  const auto& spec = g.spec();
  if (free_cores + alloc_cores != spec.core_count()) return ::testing::AssertionFailure() << "core total";
  if (free_gpus + alloc_gpus + retired != spec.gpu_count()) return ::testing::AssertionFailure() << "gpu total";
  const FreeView v = g.free_view();
  if (v.free_cores != free_cores || v.free_gpus != free_gpus) {
    return ::testing::AssertionFailure() << "free_view disagrees with statuses";
  }
  for (const auto& grp : g.core_groups()) {
    bool any = false;
    for (int c = grp.id * spec.coregroup_size; c < (grp.id + 1) * spec.coregroup_size; ++c) {
      any = any || g.cores()[c].status == Status::kAllocated;
    }
    if (any != (grp.status == Status::kAllocated)) return ::testing::AssertionFailure() << "group status";
    if (any == grp.used_by.empty()) return ::testing::AssertionFailure() << "group used_by";
  }
  return ::testing::AssertionSuccess();
}

// Brute-force feasibility oracle for one request on a free-capacity state.
// Enumerates every GPU subset and every split of the cores over NUMA nodes,
// and checks the QoS rules directly.
struct PlacementOracle {
  const Layout& l;

  bool numa_ok(const std::vector<int>& gpus_on, const std::vector<int>& cores_on, int g, int c) const {
    const auto& spec = l.spec();
    int spanned = 0;
    for (int n = 0; n < l.numa_count(); ++n) spanned += (gpus_on[n] + cores_on[n]) > 0;
    if (g <= spec.gpus_per_numa && c <= spec.cores_per_numa) return spanned == 1;
    if (g == 0) {
      return spanned == (c + spec.cores_per_numa - 1) / spec.cores_per_numa;
    }
    for (int n = 0; n < l.numa_count(); ++n) {
      if (cores_on[n] > 0 && gpus_on[n] == 0) return false;
      if (cores_on[n] < gpus_on[n] * (c / g)) return false;
    }
    return true;
  }

  bool socket_ok(const std::vector<int>& gpus_on, const std::vector<int>& cores_on, int g, int c) const {
    const auto& spec = l.spec();
    std::vector<bool> used(l.socket_count(), false);
    for (int n = 0; n < l.numa_count(); ++n) {
      if (gpus_on[n] + cores_on[n] > 0) used[l.socket_of_numa(n)] = true;
    }
    const int spanned = static_cast<int>(std::count(used.begin(), used.end(), true));
    const int gps = spec.gpus_per_socket();
    const int cps = spec.cores_per_socket();
    const int minimal = std::max({1, (g + gps - 1) / gps, (c + cps - 1) / cps});
    return spanned <= minimal;
  }

  // Tightest alignment among placements honoring the guaranteed dimensions
  // of `qos`, or nullopt when none exists.
  std::optional<AlignmentClass> best(const FreeState& free, const ResourceRequest& req,
                                     const TopologyQos& qos, bool first_only = false) const {
    const int n_gpu = l.gpu_count();
    const int numas = l.numa_count();
    std::optional<AlignmentClass> out;
    std::vector<int> suffix(numas + 1, 0);  // free cores on nodes n..end
    for (int n = numas - 1; n >= 0; --n) suffix[n] = suffix[n + 1] + free.cores[n];
    for (std::uint64_t gm = 0; gm < (std::uint64_t{1} << n_gpu); ++gm) {
      if (first_only && out) break;
      if (std::popcount(gm) != req.gpus || (gm & ~free.gpus) != 0) continue;
      std::vector<int> gpus_on(numas, 0);
      for (int i = 0; i < n_gpu; ++i) {
        if (gm >> i & 1) ++gpus_on[l.numa_of_gpu(i)];
      }
      std::vector<int> cores_on(numas, 0);
      std::function<void(int, int)> split = [&](int n, int left) {
        if (left > suffix[n]) return;
        if (n == numas) {
          if (left != 0) return;
          if (qos.numa == QosLevel::kGuaranteed && !numa_ok(gpus_on, cores_on, req.gpus, req.cpu_cores)) {
            return;
          }
          if (qos.socket == QosLevel::kGuaranteed &&
              !socket_ok(gpus_on, cores_on, req.gpus, req.cpu_cores)) {
            return;
          }
          std::uint64_t mask = 0;
          for (int k = 0; k < numas; ++k) {
            if (gpus_on[k] + cores_on[k] > 0) mask |= std::uint64_t{1} << k;
          }
          const AlignmentClass c = FlexTopoGraph::classify_numa_mask(l, mask);
          if (!out || c > *out) out = c;
          return;
        }
        for (int take = 0; take <= std::min(left, free.cores[n]) && !(first_only && out); ++take) {
          cores_on[n] = take;
          split(n + 1, left - take);
        }
        cores_on[n] = 0;
      };
      split(0, req.cpu_cores);
    }
    return out;
  }

  bool feasible(const FreeState& free, const ResourceRequest& req, const TopologyQos& qos) const {
    return best(free, req, qos, true).has_value();
  }
};

// True when `footprint` honors every guaranteed dimension of `w`, judged by
// the oracle's own reading of the rules.
inline bool guarantees_hold(const Layout& l, const ResourceSet& footprint, const WorkloadSpec& w) {
  std::vector<int> gpus_on(l.numa_count(), 0);
  std::vector<int> cores_on(l.numa_count(), 0);
  for (int g : footprint.gpus) ++gpus_on[l.numa_of_gpu(g)];
  for (int c : footprint.cores) ++cores_on[l.numa_of_core(c)];
  const PlacementOracle o{l};
  const int g = static_cast<int>(footprint.gpus.size());
  const int c = static_cast<int>(footprint.cores.size());
  if (w.qos.numa == QosLevel::kGuaranteed && !o.numa_ok(gpus_on, cores_on, g, c)) return false;
  if (w.qos.socket == QosLevel::kGuaranteed && !o.socket_ok(gpus_on, cores_on, g, c)) return false;
  return true;
}

// Alignment class of a footprint computed from the spec alone: NUMA nodes
// are numbered socket by socket.
inline AlignmentClass oracle_class(const TopologySpec& spec, const ResourceSet& footprint) {
  std::set<int> numas;
  for (int c : footprint.cores) numas.insert(c / spec.cores_per_numa);
  for (int g : footprint.gpus) numas.insert(spec.gpu_numa.empty() ? g / spec.gpus_per_numa : spec.gpu_numa[g]);
  if (numas.size() <= 1) return AlignmentClass::kSingleNuma;
  std::set<int> sockets;
  for (int n : numas) sockets.insert(n / spec.numas_per_socket);
  return sockets.size() == 1 ? AlignmentClass::kSingleSocket : AlignmentClass::kCrossSocket;
}

// Smallest victim sets on `server` whose eviction lets `preemptor` fit with
// its guaranteed QoS, by brute force over every subset of eligible victims.
// Empty when even evicting all of them is not enough.
inline std::set<std::set<std::string>> minimal_victim_sets(const ClusterState& st, std::size_t server,
                                                           const WorkloadSpec& preemptor) {
  const FlexTopoGraph& g = st.server(server);
  const Layout& l = g.layout();
  FreeState base;
  for (const auto& c : g.cores()) base.cores[l.numa_of_core(c.id)] += c.status == Status::kFree ? 1 : 0;
  for (int i = 0; i < l.gpu_count(); ++i) {
    const auto& gpu = g.gpus()[i];
    if (gpu.status == Status::kFree && gpu.healthy) base.gpus |= std::uint64_t{1} << i;
  }
  std::vector<const Instance*> eligible;
  for (const auto& [id, inst] : st.instances()) {
    const WorkloadSpec& w = st.workload(inst.workload);
    if (inst.server == server && w.preemptible && w.priority < preemptor.priority) eligible.push_back(&inst);
  }
  const PlacementOracle oracle{l};
  const TopologyQos qos = preemptor.qos.guaranteed_only();
  const int m = static_cast<int>(eligible.size());
  std::set<std::set<std::string>> out;
  for (int k = 1; k <= m && out.empty(); ++k) {
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
      if (std::popcount(mask) != k) continue;
      FreeState free = base;
      std::set<std::string> ids;
      for (int i = 0; i < m; ++i) {
        if (!(mask >> i & 1)) continue;
        ids.insert(eligible[i]->id);
        for (int c : eligible[i]->footprint.cores) ++free.cores[l.numa_of_core(c)];
        for (int gpu : eligible[i]->footprint.gpus) free.gpus |= std::uint64_t{1} << gpu;
      }
      if (oracle.feasible(free, preemptor.request, qos)) out.insert(std::move(ids));
    }
  }
  return out;
}

// A single-server cluster with a random mix of instances. Victim workloads
// are preemptible with priorities below 1000; the preemptor has 1000.
struct RandomNode {
  ClusterState state;
  WorkloadSpec preemptor;
};

inline RandomNode random_node(std::mt19937_64& rng, int max_victims = 10) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const QosLevel levels[] = {QosLevel::kNone, QosLevel::kBestEffort, QosLevel::kGuaranteed};
  std::vector<WorkloadSpec> ws;
  ws.push_back(workload("v1", 100, true, 8, 1));
  ws.push_back(workload("v2", 200, true, 16, 2));
  ws.push_back(workload("v3", 300, true, 4, 0));
  ws.push_back(workload("v4", 150, true, 8, 1, QosLevel::kGuaranteed));
  ws.push_back(workload("fixed", 2000, false, 8, 1));
  const int pg = pick(1, 4);
  const int pc = pg * 8 - (pick(0, 1) ? 4 : 0);
  ws.push_back(workload("P", 1000, false, pc, pg, levels[pick(0, 2)], levels[pick(0, 2)]));
  ClusterState st = ClusterState::homogeneous(rtx4090_preset(), 1, ws);
  int victims = 0;
  const int target = pick(0, max_victims);
  for (int attempt = 0; attempt < 40 && victims < target; ++attempt) {
    const int which = pick(0, 4);
    const WorkloadSpec& w = ws[which];
    TopologyQos q = w.qos;
    if (pick(0, 1)) q = {};
    auto rs = find_placement(st.server(0), w.request, q);
    if (!rs) continue;
    st.place(w.name, 0, *rs);
    if (w.preemptible) ++victims;
  }
  return {std::move(st), ws.back()};
}

// Small saturated cluster replaying `events` random scale-up, scale-down and
// GPU-failure events spread over ten cycles.
inline Scenario random_event_scenario(std::mt19937_64& rng, int events = 100) {
  Scenario sc;
  sc.name = "random";
  sc.topology_name = "rtx4090";
  sc.topology = rtx4090_preset();
  sc.servers = 4;
  sc.workloads = {
      workload("hi", 1000, false, 16, 2, QosLevel::kGuaranteed, QosLevel::kBestEffort, 4),
      workload("mid", 500, true, 16, 2, QosLevel::kBestEffort, QosLevel::kBestEffort, 4),
      workload("lo", 100, true, 8, 1, QosLevel::kNone, QosLevel::kNone, 6),
      workload("cpu", 300, true, 4, 0, QosLevel::kNone, QosLevel::kNone, 2),
  };
  sc.seed = rng();
  const int cycles = 10;
  for (int i = 0; i < events; ++i) {
    Event e;
    e.cycle = i * cycles / events;
    const unsigned roll = rng() % 10;
    if (roll < 5) {
      e.kind = EventKind::kScaleUp;
    } else if (roll < 8) {
      e.kind = EventKind::kScaleDown;
    } else {
      e.kind = EventKind::kGpuFailure;
    }
    if (e.kind == EventKind::kGpuFailure) {
      e.server = "node-00" + std::to_string(rng() % 4);
      e.gpu = static_cast<int>(rng() % 8);
    } else {
      e.workload = sc.workloads[rng() % sc.workloads.size()].name;
      e.delta = 1 + static_cast<int>(rng() % 2);
    }
    sc.events.push_back(e);
  }
  return sc;
}

// Everything a run produces except wall-time measurements.
inline std::string fingerprint(const RunMetrics& m) {
  std::vector<PreemptionRecord> records = m.records;
  for (auto& r : records) r.wall_time_us = 0.0;
  std::ostringstream os;
  write_records_csv(os, records);
  write_timeseries_csv(os, m);
  os << serialize(m.snapshot);
  os << summary_json(m, {}, false).dump();
  return os.str();
}

}  // namespace flextopo::testing
