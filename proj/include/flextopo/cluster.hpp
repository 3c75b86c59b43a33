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
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flextopo/error.hpp"
#include "flextopo/graph.hpp"
#include "flextopo/placement.hpp"

namespace flextopo {

struct WorkloadSpec {
  std::string name;
  int priority = 1;
  bool preemptible = false;
  ResourceRequest request;
  TopologyQos qos;
  int initial_replicas = 0;

  bool operator==(const WorkloadSpec&) const = default;
};

/// A placed replica of a workload.
struct Instance {
  std::string id;
  std::uint64_t seq = 0;  // creation order; also the id ordering
  std::string workload;
  std::size_t server = 0;
  ResourceSet footprint;
  AlignmentClass alignment = AlignmentClass::kSingleNuma;
};

/// Servers, workloads and the placed instances that tie them together.
class ClusterState {
 public:
  ClusterState(std::vector<FlexTopoGraph> servers, std::vector<WorkloadSpec> workloads,
               NumaRule rule = NumaRule::kPerGpuLocality)
      : servers_(std::move(servers)),
        workloads_(std::move(workloads)),
        rule_(rule),
        by_server_(servers_.size()) {
    for (std::size_t i = 0; i < workloads_.size(); ++i) {
      const auto& w = workloads_[i];
      if (w.name.empty()) throw ClusterError("workload name must be non-empty");
      if (w.priority < 1) throw ClusterError("workload " + w.name + ": priority must be positive");
      if (w.request.gpus < 0 || w.request.cpu_cores < 0 ||
          (w.request.gpus == 0 && w.request.cpu_cores == 0)) {
        throw ClusterError("workload " + w.name + ": request must ask for cores or GPUs");
      }
      if (!workload_index_.emplace(w.name, i).second) {
        throw ClusterError("duplicate workload " + w.name);
      }
    }
    for (std::size_t i = 0; i < servers_.size(); ++i) {
      if (!server_index_.emplace(servers_[i].server_id(), i).second) {
        throw ClusterError("duplicate server " + servers_[i].server_id());
      }
    }
  }

  /// `count` identical servers named <prefix>000, <prefix>001, ...
  static ClusterState homogeneous(const TopologySpec& spec, int count,
                                  std::vector<WorkloadSpec> workloads,
                                  NumaRule rule = NumaRule::kPerGpuLocality,
                                  const std::string& prefix = "node-") {
    auto layout = make_layout(spec);
    std::vector<FlexTopoGraph> servers;
    servers.reserve(count);
    const int width = count > 1000 ? 4 : 3;
    for (int i = 0; i < count; ++i) {
      std::string num = std::to_string(i);
      if (static_cast<int>(num.size()) < width) num.insert(0, width - num.size(), '0');
      servers.emplace_back(layout, prefix + num);
    }
    return ClusterState(std::move(servers), std::move(workloads), rule);
  }

  NumaRule numa_rule() const { return rule_; }
  const std::vector<FlexTopoGraph>& servers() const { return servers_; }
  const FlexTopoGraph& server(std::size_t i) const { return servers_.at(i); }
  std::size_t server_index(const std::string& id) const {
    auto it = server_index_.find(id);
    if (it == server_index_.end()) throw ClusterError("unknown server " + id);
    return it->second;
  }

  const std::vector<WorkloadSpec>& workloads() const { return workloads_; }
  bool has_workload(const std::string& name) const { return workload_index_.count(name) > 0; }
  const WorkloadSpec& workload(const std::string& name) const {
    auto it = workload_index_.find(name);
    if (it == workload_index_.end()) throw ClusterError("unknown workload " + name);
    return workloads_[it->second];
  }

  const std::map<std::string, Instance>& instances() const { return instances_; }
  bool has_instance(const std::string& id) const { return instances_.count(id) > 0; }
  const Instance& instance(const std::string& id) const {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw ClusterError("unknown instance " + id);
    return it->second;
  }

  /// Instances on one server in creation order.
  std::vector<const Instance*> instances_on(std::size_t server) const {
    std::vector<const Instance*> out;
    for (const auto& [seq, id] : by_server_.at(server)) out.push_back(&instances_.at(id));
    return out;
  }

  int count_of(const std::string& workload) const {
    int n = 0;
    for (const auto& [id, inst] : instances_) n += inst.workload == workload ? 1 : 0;
    return n;
  }

  /// Places a new instance of `workload` on exactly `resources`.
  const Instance& place(const std::string& workload, std::size_t server,
                        const ResourceSet& resources) {
    const std::uint64_t seq = next_seq_;
    return place_as(workload + "-" + std::to_string(seq), seq, workload, server, resources);
  }

  /// Re-places a previously evicted instance under its old identity.
  const Instance& place_as(const std::string& id, std::uint64_t seq, const std::string& workload,
                           std::size_t server, const ResourceSet& resources) {
    const WorkloadSpec& w = this->workload(workload);
    if (server >= servers_.size()) throw ClusterError("unknown server index " + std::to_string(server));
    if (instances_.count(id)) throw ClusterError("instance " + id + " already placed");
    if (static_cast<int>(resources.gpus.size()) != w.request.gpus ||
        static_cast<int>(resources.cores.size()) != w.request.cpu_cores) {
      throw ClusterError("footprint of " + id + " does not match the request of " + workload);
    }
    servers_[server].apply_allocation(id, resources);
    Instance inst;
    inst.id = id;
    inst.seq = seq;
    inst.workload = workload;
    inst.server = server;
    inst.footprint = resources;
    inst.alignment = servers_[server].classify_span(resources);
    by_server_[server].emplace(seq, id);
    next_seq_ = std::max(next_seq_, seq + 1);
    return instances_.emplace(id, std::move(inst)).first->second;
  }

  /// Removes an instance and frees its footprint.
  Instance evict(const std::string& id) {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw ClusterError("unknown instance " + id);
    Instance inst = std::move(it->second);
    instances_.erase(it);
    by_server_[inst.server].erase(inst.seq);
    servers_[inst.server].release_allocation(inst.id);
    return inst;
  }

  /// Takes a GPU out of service. A running owner is evicted and returned.
  std::optional<Instance> fail_gpu(std::size_t server, int gpu) {
    if (server >= servers_.size()) throw ClusterError("unknown server index " + std::to_string(server));
    if (gpu < 0 || gpu >= servers_[server].layout().gpu_count()) {
      throw ClusterError("unknown gpu " + std::to_string(gpu) + " on " + servers_[server].server_id());
    }
    auto owner = servers_[server].fail_gpu(gpu);
    if (!owner) return std::nullopt;
    return evict(*owner);
  }

  /// Checks that the instance registry and the graphs agree. Throws on drift.
  void check_integrity() const {
    std::size_t listed = 0;
    for (std::size_t s = 0; s < servers_.size(); ++s) {
      const auto owners = servers_[s].owners();
      listed += owners.size();
      for (const auto& owner : owners) {
        auto it = instances_.find(owner);
        if (it == instances_.end() || it->second.server != s) {
          throw ClusterError("graph " + servers_[s].server_id() + " references unknown " + owner);
        }
        if (!(servers_[s].footprint_of(owner) == it->second.footprint)) {
          throw ClusterError("footprint drift for " + owner);
        }
        if (servers_[s].classify_span(it->second.footprint) != it->second.alignment) {
          throw ClusterError("alignment drift for " + owner);
        }
      }
    }
    if (listed != instances_.size()) throw ClusterError("instances without graph footprint");
  }

 private:
  std::vector<FlexTopoGraph> servers_;
  std::vector<WorkloadSpec> workloads_;
  NumaRule rule_;
  std::map<std::string, std::size_t> workload_index_;
  std::map<std::string, std::size_t> server_index_;
  std::map<std::string, Instance> instances_;
  std::vector<std::map<std::uint64_t, std::string>> by_server_;
  std::uint64_t next_seq_ = 0;
};

/// True when `footprint` honors every non-none QoS dimension of `workload`.
inline bool qos_satisfied(const Layout& layout, const ResourceSet& footprint,
                          const WorkloadSpec& workload, NumaRule rule) {
  return qos_holds(layout, shape_of(layout, footprint), workload.qos, rule);
}

/// Throws ClusterError unless every id in `evict` is a preemptible,
/// lower-priority instance running on `server`.
inline void check_victims(const ClusterState& state, std::size_t server,
                          const WorkloadSpec& preemptor, std::span<const std::string> evict) {
  for (std::size_t i = 0; i < evict.size(); ++i) {
    const Instance& v = state.instance(evict[i]);
    const WorkloadSpec& w = state.workload(v.workload);
    if (v.server != server) throw ClusterError("victim " + v.id + " is not on the target server");
    if (!w.preemptible) throw ClusterError("victim " + v.id + " is not preemptible");
    if (w.priority >= preemptor.priority) {
      throw ClusterError("victim " + v.id + " does not have lower priority than " + preemptor.name);
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (evict[j] == evict[i]) throw ClusterError("victim " + v.id + " listed twice");
    }
  }
}

/// Free capacity of `server` after hypothetically evicting `evict`.
inline FreeState free_after_eviction(const ClusterState& state, std::size_t server,
                                     std::span<const std::string> evict) {
  const FlexTopoGraph& graph = state.server(server);
  FreeState st = free_state(graph);
  for (const auto& id : evict) st += footprint_state(graph.layout(), state.instance(id).footprint);
  return st;
}

/// Scheduling indicator: can `preemptor` be placed on `server` once `evict`
/// is gone? Only guaranteed QoS dimensions constrain feasibility. Never
/// mutates `state`.
inline bool schedulable(const ClusterState& state, std::size_t server, const WorkloadSpec& preemptor,
                        std::span<const std::string> evict) {
  check_victims(state, server, preemptor, evict);
  const FreeState st = free_after_eviction(state, server, evict);
  return plan_placement(state.server(server).layout(), st, preemptor.request,
                        preemptor.qos.guaranteed_only(), state.numa_rule(),
                        SearchGoal::kAnyFeasible)
      .has_value();
}

enum class SaturationStrategy : std::uint8_t {
  kFirstFit,  // lowest server id with a placement
  kRandom,    // uniform over servers with a placement (seeded)
};

inline std::string_view to_string(SaturationStrategy s) {
  return s == SaturationStrategy::kFirstFit ? "first_fit" : "random";
}

inline std::optional<SaturationStrategy> saturation_from_string(std::string_view s) {
  if (s == "first_fit") return SaturationStrategy::kFirstFit;
  if (s == "random") return SaturationStrategy::kRandom;
  return std::nullopt;
}

/// Picks a server and placement for one instance of `w`, or nullopt.
inline std::optional<std::pair<std::size_t, ResourceSet>> choose_server(
    const ClusterState& state, const WorkloadSpec& w, SaturationStrategy strategy,
    std::mt19937_64& rng) {
  std::vector<std::size_t> feasible;
  for (std::size_t s = 0; s < state.servers().size(); ++s) {
    const FlexTopoGraph& graph = state.server(s);
    const bool ok = plan_placement(graph.layout(), free_state(graph), w.request,
                                   w.qos.guaranteed_only(), state.numa_rule(),
                                   SearchGoal::kAnyFeasible)
                        .has_value();
    if (!ok) continue;
    if (strategy == SaturationStrategy::kFirstFit) {
      feasible.push_back(s);
      break;
    }
    feasible.push_back(s);
  }
  if (feasible.empty()) return std::nullopt;
  const std::size_t pick =
      strategy == SaturationStrategy::kFirstFit ? feasible.front() : feasible[rng() % feasible.size()];
  auto rs = find_placement(state.server(pick), w.request, w.qos, state.numa_rule());
  return std::make_pair(pick, std::move(*rs));
}

struct SaturationReport {
  std::map<std::string, int> placed;
  std::map<std::string, int> shortfall;  // initial replicas that did not fit
};

/// Fills an empty cluster: initial replicas in descending priority order
/// (declaration order breaks ties), then, when `fill` is set, extra replicas
/// of preemptible workloads until none fits anywhere.
///
/// An initial replica of a workload with a guaranteed QoS dimension that
/// cannot be placed is a scenario error.
inline SaturationReport saturate(ClusterState& state, SaturationStrategy strategy,
                                 std::mt19937_64& rng, bool fill = true) {
  if (!state.instances().empty()) throw ClusterError("saturate expects an empty cluster");
  std::vector<const WorkloadSpec*> order;
  for (const auto& w : state.workloads()) order.push_back(&w);
  std::stable_sort(order.begin(), order.end(), [](const WorkloadSpec* a, const WorkloadSpec* b) {
    return a->priority > b->priority;
  });
  SaturationReport report;
  for (const WorkloadSpec* w : order) {
    report.placed[w->name] = 0;
    for (int r = 0; r < w->initial_replicas; ++r) {
      auto choice = choose_server(state, *w, strategy, rng);
      if (!choice) {
        if (w->qos.has_guaranteed()) {
          throw ClusterError("cannot place initial replica " + std::to_string(r + 1) + " of " +
                             w->name + " with its guaranteed topology QoS");
        }
        report.shortfall[w->name] = w->initial_replicas - r;
        break;
      }
      state.place(w->name, choice->first, choice->second);
      ++report.placed[w->name];
    }
  }
  bool progress = fill;
  while (progress) {
    progress = false;
    for (const WorkloadSpec* w : order) {
      if (!w->preemptible) continue;
      auto choice = choose_server(state, *w, strategy, rng);
      if (!choice) continue;
      state.place(w->name, choice->first, choice->second);
      ++report.placed[w->name];
      progress = true;
    }
  }
  return report;
}

struct CommitResult {
  std::string instance;
  ResourceSet footprint;
  AlignmentClass achieved = AlignmentClass::kCrossSocket;
  std::vector<Instance> evicted;
};

/// Evicts `victims` from `server` and places a new `preemptor` instance in
/// the freed space, atomically. `placement_qos` overrides the preemptor's
/// QoS for the placement (a topology-unaware scheduler passes {}).
///
/// Throws ClusterError with the state untouched if the victims are invalid
/// or the preemptor would not fit afterwards.
inline CommitResult execute_eviction_and_place(ClusterState& state, std::size_t server,
                                               std::span<const std::string> victims,
                                               const WorkloadSpec& preemptor,
                                               std::optional<TopologyQos> placement_qos = {}) {
  const TopologyQos qos = placement_qos.value_or(preemptor.qos);
  for (const auto& id : victims) {
    if (!state.has_instance(id)) throw ClusterError("victim " + id + " is no longer running");
  }
  check_victims(state, server, preemptor, victims);
  const FreeState after = free_after_eviction(state, server, victims);
  const Layout& layout = state.server(server).layout();
  if (!plan_placement(layout, after, preemptor.request, qos.guaranteed_only(), state.numa_rule(),
                      SearchGoal::kAnyFeasible)) {
    throw ClusterError(preemptor.name + " is not schedulable on " +
                       state.server(server).server_id() + " after evicting the given victims");
  }
  CommitResult result;
  for (const auto& id : victims) result.evicted.push_back(state.evict(id));
  auto rs = find_placement(state.server(server), preemptor.request, qos, state.numa_rule());
  const Instance& inst = state.place(preemptor.name, server, *rs);
  result.instance = inst.id;
  result.footprint = inst.footprint;
  result.achieved = inst.alignment;
  return result;
}

}  // namespace flextopo
