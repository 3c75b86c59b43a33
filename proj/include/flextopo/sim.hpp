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
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flextopo/cluster.hpp"
#include "flextopo/policy.hpp"
#include "flextopo/scenario.hpp"

namespace flextopo {

enum class Outcome : std::uint8_t {
  kPlaced,     // fit without preemption
  kPreempted,  // placed after evicting victims
  kFailed,     // no placement and no preemption candidate
};

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kPlaced: return "placed";
    case Outcome::kPreempted: return "preempted";
    case Outcome::kFailed: return "failed";
  }
  return "?";
}

/// One scale-up attempt.
struct PreemptionRecord {
  int cycle = 0;
  std::uint64_t index = 0;  // position in the run
  PreemptMode mode = PreemptMode::kFlextopoImp;
  std::string preemptor;  // workload
  int preemptor_gpus = 0;
  Outcome outcome = Outcome::kFailed;
  std::string instance;  // created instance id, empty on failure
  std::string server;    // empty on failure
  int victims = 0;
  std::optional<AlignmentClass> achieved;
  bool qos_satisfied = false;
  long long evaluations = 0;
  long long exhaustive_evaluations = -1;  // -1 when not measured
  double wall_time_us = 0.0;
};

/// Per-workload instance flow within one cycle.
struct CycleCounts {
  int placed = 0;    // scale-ups and refills
  int evicted = 0;   // preemption victims
  int released = 0;  // scale-downs
  int killed = 0;    // lost to a GPU failure
  int end = 0;       // running at the end of the cycle

  bool operator==(const CycleCounts&) const = default;
};

struct RunMetrics {
  std::string scenario;
  PreemptMode mode = PreemptMode::kFlextopoImp;
  CycleSemantics semantics = CycleSemantics::kIndependent;
  std::uint64_t seed = 0;
  SaturationReport saturation;
  std::map<std::string, int> initial_counts;
  std::vector<PreemptionRecord> records;
  std::vector<std::map<std::string, CycleCounts>> timeseries;  // one entry per cycle
  std::vector<FlexTopoGraph> snapshot;  // peak of the last cycle
};

struct SimOptions {
  PreemptMode mode = PreemptMode::kFlextopoImp;
  std::optional<CycleSemantics> semantics;  // overrides the scenario
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  // Also source with the exhaustive oracle on the same state for every
  // preemption and store its evaluation count in the record.
  bool shadow_exhaustive = false;
  // Called for every recorded placement with the state it was committed to.
  std::function<void(const PreemptionRecord&, const ClusterState&, const Instance&)> on_commit;
};

/// Replays a scenario: initial state, then per cycle the scheduled events,
/// the autoscale scale-ups and, with `valley`, the scale-down of this cycle's
/// scale-ups followed by a refill of instances evicted or killed earlier.
class Simulator {
 public:
  Simulator(Scenario scenario, SimOptions options)
      : scenario_(std::move(scenario)),
        options_(options),
        state_(scenario_.make_cluster()),
        rng_(options.seed.value_or(scenario_.seed)) {
    if (options_.alpha) scenario_.policy.params.alpha = *options_.alpha;
    scenario_.policy.params.validate();
    if (options_.semantics) scenario_.semantics = *options_.semantics;
    metrics_.scenario = scenario_.name;
    metrics_.mode = options_.mode;
    metrics_.semantics = scenario_.semantics;
    metrics_.seed = options.seed.value_or(scenario_.seed);
  }

  const ClusterState& state() const { return state_; }
  ClusterState& mutable_state() { return state_; }
  const RunMetrics& metrics() const { return metrics_; }
  const Scenario& scenario() const { return scenario_; }
  std::size_t pending() const { return pending_.size(); }

  /// Saturates the cluster, or applies the scenario's fixed placements.
  void initialize() {
    if (scenario_.placements.empty()) {
      metrics_.saturation = saturate(state_, scenario_.saturation, rng_, scenario_.fill);
    } else {
      for (const auto& p : scenario_.placements) {
        try {
          state_.place(p.workload, state_.server_index(p.server), p.resources);
        } catch (const Error& e) {
          throw ParseError(p.line, e.what());
        }
        ++metrics_.saturation.placed[p.workload];
      }
    }
    for (const auto& w : state_.workloads()) metrics_.initial_counts[w.name] = state_.count_of(w.name);
  }

  /// Applies one event in cycle `cycle`. Scale-ups produce records.
  void apply_event(const Event& e, int cycle) {
    begin_cycle_if_needed(cycle);
    switch (e.kind) {
      case EventKind::kScaleUp:
        for (int i = 0; i < e.delta; ++i) scale_up(state_.workload(e.workload), cycle);
        break;
      case EventKind::kScaleDown:
        scale_down(e.workload, e.delta);
        break;
      case EventKind::kGpuFailure: {
        auto killed = state_.fail_gpu(state_.server_index(e.server), e.gpu);
        if (killed) {
          ++counts()[killed->workload].killed;
          pending_.push_back(std::move(*killed));
        }
        break;
      }
    }
  }

  /// Runs one full cycle.
  void run_cycle(int cycle) {
    begin_cycle_if_needed(cycle);
    for (const auto& e : scenario_.events) {
      if (e.cycle == cycle) apply_event(e, cycle);
    }
    const auto& as = scenario_.autoscale;
    if (cycle < as.cycles) {
      std::vector<const WorkloadSpec*> batch;
      for (int i = 0; i < as.per_cycle; ++i) {
        batch.push_back(&state_.workload(as.workloads[i % as.workloads.size()]));
      }
      if (scenario_.semantics == CycleSemantics::kIndependent) {
        autoscale_independent(batch, cycle);
      } else {
        for (const WorkloadSpec* w : batch) scale_up(*w, cycle);
      }
    }
    if (cycle == scenario_.cycles() - 1) metrics_.snapshot = state_.servers();
    if (as.valley && cycle < as.cycles) valley();
    end_cycle();
  }

  RunMetrics run() {
    initialize();
    const int cycles = scenario_.cycles();
    for (int c = 0; c < cycles; ++c) run_cycle(c);
    if (cycles == 0) metrics_.snapshot = state_.servers();
    return metrics_;
  }

 private:
  std::map<std::string, CycleCounts>& counts() { return metrics_.timeseries.back(); }

  void begin_cycle_if_needed(int cycle) {
    while (static_cast<int>(metrics_.timeseries.size()) <= cycle) {
      std::map<std::string, CycleCounts> fresh;
      for (const auto& w : state_.workloads()) fresh[w.name] = {};
      metrics_.timeseries.push_back(std::move(fresh));
      scaled_this_cycle_.clear();
    }
  }

  void end_cycle() {
    for (auto& [name, c] : counts()) c.end = state_.count_of(name);
  }

  // Best server for a normal placement. Topology-aware modes rank servers by
  // QoS satisfaction, then alignment, then index; the baseline takes the
  // first server that fits.
  std::optional<std::pair<std::size_t, ResourceSet>> normal_placement(const ClusterState& st,
                                                                      const WorkloadSpec& w) const {
    const bool baseline = options_.mode == PreemptMode::kBaseline;
    const TopologyQos qos = baseline ? TopologyQos{} : w.qos;
    std::optional<std::pair<std::size_t, ResourceSet>> best;
    int best_rank = -1;
    for (std::size_t s = 0; s < st.servers().size(); ++s) {
      const FlexTopoGraph& g = st.server(s);
      auto plan = plan_placement(g.layout(), free_state(g), w.request, qos, st.numa_rule());
      if (!plan) continue;
      if (baseline) return std::make_pair(s, materialize(g, *plan));
      const bool ok = qos_holds(g.layout(), plan->shape, w.qos, st.numa_rule());
      const int rank = (ok ? 4 : 0) + static_cast<int>(plan->alignment);
      if (rank > best_rank) {
        best_rank = rank;
        best = std::make_pair(s, materialize(g, *plan));
      }
    }
    return best;
  }

  // One scale-up against the live state, recorded.
  void scale_up(const WorkloadSpec& w, int cycle) {
    metrics_.records.push_back(scale_up_on(state_, w, cycle, true));
  }

  // Commits on `st`. Only `live` commits touch the timeseries, the refill
  // queue and the valley bookkeeping.
  PreemptionRecord scale_up_on(ClusterState& st, const WorkloadSpec& w, int cycle, bool live) {
    PreemptionRecord rec;
    rec.cycle = cycle;
    rec.index = metrics_.records.size();
    rec.mode = options_.mode;
    rec.preemptor = w.name;
    rec.preemptor_gpus = w.request.gpus;
    if (auto spot = normal_placement(st, w)) {
      const Instance& inst = st.place(w.name, spot->first, spot->second);
      finish(rec, st, inst, Outcome::kPlaced, live);
      return rec;
    }
    if (options_.shadow_exhaustive && options_.mode != PreemptMode::kFlextopoExhaustive) {
      rec.exhaustive_evaluations =
          preempt(st, w, PreemptMode::kFlextopoExhaustive, scenario_.policy).evaluations;
    }
    const PreemptionDecision d = preempt(st, w, options_.mode, scenario_.policy, &rng_);
    rec.evaluations = d.evaluations;
    rec.wall_time_us = d.wall_time_us;
    if (options_.mode == PreemptMode::kFlextopoExhaustive) rec.exhaustive_evaluations = d.evaluations;
    if (!d.success) {
      rec.outcome = Outcome::kFailed;
      return rec;
    }
    const std::optional<TopologyQos> placement_qos =
        options_.mode == PreemptMode::kBaseline ? std::optional<TopologyQos>(TopologyQos{}) : std::nullopt;
    CommitResult commit =
        execute_eviction_and_place(st, d.chosen.server, d.chosen.victims, w, placement_qos);
    rec.victims = static_cast<int>(commit.evicted.size());
    if (live) {
      for (auto& v : commit.evicted) {
        ++counts()[v.workload].evicted;
        pending_.push_back(std::move(v));
      }
    }
    finish(rec, st, st.instance(commit.instance), Outcome::kPreempted, live);
    return rec;
  }

  void finish(PreemptionRecord& rec, const ClusterState& st, const Instance& inst, Outcome outcome,
              bool live) {
    rec.outcome = outcome;
    rec.instance = inst.id;
    rec.server = st.server(inst.server).server_id();
    rec.achieved = inst.alignment;
    rec.qos_satisfied = qos_satisfied(st.server(inst.server).layout(), inst.footprint,
                                      st.workload(inst.workload), st.numa_rule());
    if (live) {
      ++counts()[inst.workload].placed;
      scaled_this_cycle_.push_back(inst.id);
    }
    if (options_.on_commit && recorded_) options_.on_commit(rec, st, inst);
  }

  // Independent semantics: every scale-up is sourced and committed on its own
  // copy of the cycle-start state and recorded from there; the live state
  // then advances by committing the same scale-ups in order, unrecorded.
  void autoscale_independent(const std::vector<const WorkloadSpec*>& batch, int cycle) {
    const ClusterState frozen = state_;
    for (const WorkloadSpec* w : batch) {
      ClusterState scratch = frozen;
      metrics_.records.push_back(scale_up_on(scratch, *w, cycle, false));
    }
    const bool shadow = options_.shadow_exhaustive;
    options_.shadow_exhaustive = false;
    recorded_ = false;
    for (const WorkloadSpec* w : batch) scale_up_on(state_, *w, cycle, true);
    recorded_ = true;
    options_.shadow_exhaustive = shadow;
  }

  // Releases the newest `delta` instances of a workload.
  void scale_down(const std::string& workload, int delta) {
    state_.workload(workload);
    std::vector<const Instance*> live;
    for (const auto& [id, inst] : state_.instances()) {
      if (inst.workload == workload) live.push_back(&inst);
    }
    std::sort(live.begin(), live.end(), [](const Instance* a, const Instance* b) { return a->seq > b->seq; });
    std::vector<std::string> ids;
    for (int i = 0; i < delta && i < static_cast<int>(live.size()); ++i) ids.push_back(live[i]->id);
    for (const auto& id : ids) {
      state_.evict(id);
      ++counts()[workload].released;
    }
  }

  void valley() {
    for (const auto& id : scaled_this_cycle_) {
      if (state_.has_instance(id)) {
        const std::string workload = state_.instance(id).workload;
        state_.evict(id);
        ++counts()[workload].released;
      } else {
        std::erase_if(pending_, [&](const Instance& p) { return p.id == id; });
      }
    }
    scaled_this_cycle_.clear();
    std::stable_sort(pending_.begin(), pending_.end(), [&](const Instance& a, const Instance& b) {
      const int pa = state_.workload(a.workload).priority;
      const int pb = state_.workload(b.workload).priority;
      return pa != pb ? pa > pb : a.seq < b.seq;
    });
    std::vector<Instance> still;
    for (auto& p : pending_) {
      const WorkloadSpec& w = state_.workload(p.workload);
      auto spot = normal_placement(state_, w);
      if (!spot) {
        still.push_back(std::move(p));
        continue;
      }
      state_.place_as(p.id, p.seq, p.workload, spot->first, spot->second);
      ++counts()[p.workload].placed;
    }
    pending_ = std::move(still);
  }

  Scenario scenario_;
  SimOptions options_;
  ClusterState state_;
  std::mt19937_64 rng_;
  RunMetrics metrics_;
  std::vector<Instance> pending_;  // evicted or killed, awaiting refill
  std::vector<std::string> scaled_this_cycle_;
  bool recorded_ = true;  // false while replaying unrecorded scale-ups
};

inline RunMetrics run(const Scenario& scenario, const SimOptions& options) {
  Simulator sim(scenario, options);
  return sim.run();
}

}  // namespace flextopo
