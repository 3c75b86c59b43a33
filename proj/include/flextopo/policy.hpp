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
#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flextopo/cluster.hpp"
#include "flextopo/error.hpp"
#include "flextopo/placement.hpp"

namespace flextopo {

/// Weights of the candidate score. t_values is indexed by AlignmentClass.
struct ScoreParams {
  double alpha = 0.5;
  std::array<double, 3> t_values{0.0, 0.5, 1.0};

  double t(AlignmentClass c) const { return t_values[static_cast<std::size_t>(c)]; }

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw PolicyError("alpha must lie in [0, 1]");
    if (!(t_values[2] > t_values[1] && t_values[1] > t_values[0])) {
      throw PolicyError("t_values must strictly decrease from single_numa to cross_socket");
    }
  }
};

/// A server plus the victims whose eviction makes room for the preemptor.
struct Candidate {
  std::size_t server = 0;
  std::vector<std::string> victims;  // sorted
  AlignmentClass topo_class = AlignmentClass::kCrossSocket;
  long long priority_sum = 0;

  bool operator==(const Candidate&) const = default;
};

inline double score(const Candidate& c, const ScoreParams& p) {
  if (c.priority_sum <= 0) throw PolicyError("candidate priority_sum must be positive");
  return p.alpha / static_cast<double>(c.priority_sum) + (1.0 - p.alpha) * p.t(c.topo_class);
}

namespace detail {

// Strict preference of a over b given their scores.
inline bool preferred(const Candidate& a, double sa, const Candidate& b, double sb) {
  if (sa != sb) return sa > sb;
  if (a.victims.size() != b.victims.size()) return a.victims.size() < b.victims.size();
  if (a.priority_sum != b.priority_sum) return a.priority_sum < b.priority_sum;
  if (a.server != b.server) return a.server < b.server;
  return a.victims < b.victims;
}

}  // namespace detail

/// Highest-scoring candidate. Ties go to fewer victims, then the lower
/// priority sum, then the lower server index, then the smaller victim list.
inline const Candidate& select_optimal(std::span<const Candidate> candidates, const ScoreParams& p) {
  if (candidates.empty()) throw PolicyError("no preemption candidate on any server");
  std::size_t best = 0;
  double best_score = score(candidates[0], p);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = score(candidates[i], p);
    if (detail::preferred(candidates[i], s, candidates[best], best_score)) {
      best = i;
      best_score = s;
    }
  }
  return candidates[best];
}

/// Eligible victims of one server with precomputed capacity deltas, so a
/// hypothetical eviction is a handful of integer additions.
class NodeView {
 public:
  static constexpr std::size_t kMaxVictims = 64;

  /// `feasibility` is the QoS the preemptor must meet after eviction.
  NodeView(const ClusterState& state, std::size_t server, const WorkloadSpec& preemptor,
           const TopologyQos& feasibility)
      : server_(server),
        layout_(&state.server(server).layout()),
        request_(preemptor.request),
        qos_(feasibility),
        rule_(state.numa_rule()),
        base_(free_state(state.server(server))) {
    for (const Instance* inst : state.instances_on(server)) {
      const WorkloadSpec& w = state.workload(inst->workload);
      if (!w.preemptible || w.priority >= preemptor.priority) continue;
      victims_.push_back(inst);
      priorities_.push_back(w.priority);
      deltas_.push_back(footprint_state(*layout_, inst->footprint));
      numa_masks_.push_back(shape_of(*layout_, inst->footprint).numa_mask());
      gpus_.push_back(static_cast<int>(inst->footprint.gpus.size()));
      cores_.push_back(static_cast<int>(inst->footprint.cores.size()));
    }
    if (victims_.size() > kMaxVictims) {
      throw PolicyError("more than " + std::to_string(kMaxVictims) + " eligible victims on " +
                        state.server(server).server_id());
    }
  }

  std::size_t server() const { return server_; }
  std::size_t size() const { return victims_.size(); }
  std::uint64_t all() const {
    return victims_.size() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << victims_.size()) - 1;
  }
  const Instance& victim(std::size_t i) const { return *victims_[i]; }
  int priority(std::size_t i) const { return priorities_[i]; }
  int gpus(std::size_t i) const { return gpus_[i]; }
  int cores(std::size_t i) const { return cores_[i]; }

  /// Free GPUs and cores the preemptor still lacks with nothing evicted.
  int gpu_shortfall() const { return std::max(0, request_.gpus - std::popcount(base_.gpus)); }
  int core_shortfall() const {
    int free = 0;
    for (int n = 0; n < layout_->numa_count(); ++n) free += base_.cores[n];
    return std::max(0, request_.cpu_cores - free);
  }

  /// Schedulability of the preemptor once the victims in `mask` are gone.
  bool evaluate(std::uint64_t mask) const {
    FreeState st = base_;
    for (std::size_t i = 0; i < victims_.size(); ++i) {
      if (mask >> i & 1) st += deltas_[i];
    }
    return plan_placement(*layout_, st, request_, qos_, rule_, SearchGoal::kAnyFeasible).has_value();
  }

  Candidate candidate(std::uint64_t mask) const {
    Candidate c;
    c.server = server_;
    std::uint64_t numa_mask = 0;
    for (std::size_t i = 0; i < victims_.size(); ++i) {
      if (!(mask >> i & 1)) continue;
      c.victims.push_back(victims_[i]->id);
      c.priority_sum += priorities_[i];
      numa_mask |= numa_masks_[i];
    }
    std::sort(c.victims.begin(), c.victims.end());
    c.topo_class = FlexTopoGraph::classify_numa_mask(*layout_, numa_mask);
    return c;
  }

 private:
  std::size_t server_;
  const Layout* layout_;
  ResourceRequest request_;
  TopologyQos qos_;
  NumaRule rule_;
  FreeState base_;
  std::vector<const Instance*> victims_;
  std::vector<int> priorities_;
  std::vector<FreeState> deltas_;
  std::vector<std::uint64_t> numa_masks_;
  std::vector<int> gpus_;
  std::vector<int> cores_;
};

/// Drain-all check: can the preemptor fit once every eligible victim is gone?
/// One evaluation.
inline bool guaranteed_filter(const NodeView& view) { return view.evaluate(view.all()); }

inline bool guaranteed_filter(const ClusterState& state, std::size_t server,
                              const WorkloadSpec& preemptor) {
  return guaranteed_filter(NodeView(state, server, preemptor, preemptor.qos.guaranteed_only()));
}

struct SubsetSearch {
  std::vector<std::uint64_t> subsets;  // victim index masks, ascending
  int k = 0;                           // cardinality of the returned subsets
  long long evaluations = 0;
};

namespace detail {

// Visits every k-subset of {0..m-1} in lexicographic order of index lists.
template <typename Fn>
void for_each_combination(int m, int k, Fn&& fn) {
  std::array<int, NodeView::kMaxVictims> pick{};
  for (int i = 0; i < k; ++i) pick[i] = i;
  while (true) {
    std::uint64_t mask = 0;
    for (int i = 0; i < k; ++i) mask |= std::uint64_t{1} << pick[i];
    fn(mask);
    int i = k - 1;
    while (i >= 0 && pick[i] == m - k + i) --i;
    if (i < 0) return;
    ++pick[i];
    for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
}

// Sum of the k largest values.
inline long long top_k_sum(std::vector<int> values, int k) {
  std::sort(values.begin(), values.end(), std::greater<>());
  return std::accumulate(values.begin(), values.begin() + k, 0LL);
}

}  // namespace detail

/// Incremental minimal preemption. Drain-all first (skipped when the caller
/// already knows its outcome), then subset sizes k = 1, 2, ... until a size
/// with a schedulable subset; returns every schedulable subset of that size.
///
/// A size whose k largest victims cannot cover the GPU or core shortfall is
/// skipped without evaluations. The k = m layer is the drain-all set itself.
inline SubsetSearch imp(const NodeView& view, std::optional<bool> drain_all = std::nullopt) {
  SubsetSearch out;
  const int m = static_cast<int>(view.size());
  if (m == 0) return out;
  if (!drain_all) {
    ++out.evaluations;
    drain_all = view.evaluate(view.all());
  }
  if (!*drain_all) return out;
  std::vector<int> gpus(m);
  std::vector<int> cores(m);
  for (int i = 0; i < m; ++i) {
    gpus[i] = view.gpus(i);
    cores[i] = view.cores(i);
  }
  const int gpu_need = view.gpu_shortfall();
  const int core_need = view.core_shortfall();
  for (int k = 1; k < m; ++k) {
    if (detail::top_k_sum(gpus, k) < gpu_need || detail::top_k_sum(cores, k) < core_need) continue;
    detail::for_each_combination(m, k, [&](std::uint64_t mask) {
      ++out.evaluations;
      if (view.evaluate(mask)) out.subsets.push_back(mask);
    });
    if (!out.subsets.empty()) {
      out.k = k;
      std::sort(out.subsets.begin(), out.subsets.end());
      return out;
    }
  }
  out.k = m;
  out.subsets.push_back(view.all());
  return out;
}

inline SubsetSearch imp(const ClusterState& state, std::size_t server, const WorkloadSpec& preemptor) {
  return imp(NodeView(state, server, preemptor, preemptor.qos.guaranteed_only()));
}

inline constexpr int kDefaultExhaustiveCap = 16;

/// Every schedulable non-empty victim subset; 2^m - 1 evaluations. `k` is
/// the smallest feasible cardinality (0 when none).
inline SubsetSearch exhaustive_candidates(const NodeView& view, int cap = kDefaultExhaustiveCap) {
  const int m = static_cast<int>(view.size());
  if (m > cap) {
    throw PolicyError("exhaustive search over " + std::to_string(m) + " victims exceeds the cap of " +
                      std::to_string(cap));
  }
  SubsetSearch out;
  const std::uint64_t end = std::uint64_t{1} << m;
  for (std::uint64_t mask = 1; mask < end; ++mask) {
    ++out.evaluations;
    if (!view.evaluate(mask)) continue;
    out.subsets.push_back(mask);
    const int size = std::popcount(mask);
    if (out.k == 0 || size < out.k) out.k = size;
  }
  return out;
}

inline SubsetSearch exhaustive_candidates(const ClusterState& state, std::size_t server,
                                          const WorkloadSpec& preemptor,
                                          int cap = kDefaultExhaustiveCap) {
  return exhaustive_candidates(NodeView(state, server, preemptor, preemptor.qos.guaranteed_only()),
                               cap);
}

enum class PreemptMode : std::uint8_t { kBaseline, kFlextopoImp, kFlextopoExhaustive };

inline std::string_view to_string(PreemptMode m) {
  switch (m) {
    case PreemptMode::kBaseline: return "baseline";
    case PreemptMode::kFlextopoImp: return "flextopo_imp";
    case PreemptMode::kFlextopoExhaustive: return "flextopo_exhaustive";
  }
  return "?";
}

inline std::optional<PreemptMode> preempt_mode_from_string(std::string_view s) {
  if (s == "baseline") return PreemptMode::kBaseline;
  if (s == "flextopo_imp") return PreemptMode::kFlextopoImp;
  if (s == "flextopo_exhaustive") return PreemptMode::kFlextopoExhaustive;
  return std::nullopt;
}

struct PolicyOptions {
  ScoreParams params;
  int exhaustive_cap = kDefaultExhaustiveCap;
  // Baseline only: break ties among equal-priority victims in a seeded
  // random order instead of creation order.
  bool baseline_shuffle = false;
};

struct PreemptionDecision {
  bool success = false;
  Candidate chosen;
  double score = 0.0;
  long long evaluations = 0;
  double wall_time_us = 0.0;
  int servers_sourced = 0;  // servers that produced a candidate
};

namespace detail {

inline std::optional<Candidate> best_of(const NodeView& view, const SubsetSearch& found,
                                        const ScoreParams& p) {
  std::optional<Candidate> best;
  double best_score = 0.0;
  for (std::uint64_t mask : found.subsets) {
    Candidate c = view.candidate(mask);
    const double s = score(c, p);
    if (!best || preferred(c, s, *best, best_score)) {
      best = std::move(c);
      best_score = s;
    }
  }
  return best;
}

inline PreemptionDecision source_flextopo(const ClusterState& state, const WorkloadSpec& preemptor,
                                          PreemptMode mode, const PolicyOptions& opt) {
  PreemptionDecision d;
  ScoreParams params = opt.params;
  // Topology-agnostic preemptors are ranked by priority alone.
  if (!preemptor.qos.any()) params.t_values = {0.0, 0.0, 0.0};
  const bool guaranteed = preemptor.qos.has_guaranteed();
  const TopologyQos feasibility = preemptor.qos.guaranteed_only();
  std::vector<Candidate> per_node;
  for (std::size_t s = 0; s < state.servers().size(); ++s) {
    NodeView view(state, s, preemptor, feasibility);
    if (view.size() == 0) continue;
    std::optional<bool> drain;
    if (guaranteed) {
      ++d.evaluations;
      drain = guaranteed_filter(view);
      if (!*drain) continue;
    }
    const SubsetSearch found = mode == PreemptMode::kFlextopoImp
                                   ? imp(view, drain)
                                   : exhaustive_candidates(view, opt.exhaustive_cap);
    d.evaluations += found.evaluations;
    if (auto best = best_of(view, found, params)) per_node.push_back(std::move(*best));
  }
  d.servers_sourced = static_cast<int>(per_node.size());
  if (per_node.empty()) return d;
  d.chosen = select_optimal(per_node, params);
  d.score = score(d.chosen, params);
  d.success = true;
  return d;
}

inline PreemptionDecision source_baseline(const ClusterState& state, const WorkloadSpec& preemptor,
                                          const PolicyOptions& opt, std::mt19937_64* rng) {
  PreemptionDecision d;
  for (std::size_t s = 0; s < state.servers().size(); ++s) {
    NodeView view(state, s, preemptor, TopologyQos{});
    const std::size_t m = view.size();
    if (m == 0) continue;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    if (opt.baseline_shuffle && rng != nullptr) std::shuffle(order.begin(), order.end(), *rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return view.priority(a) < view.priority(b);
    });
    std::uint64_t mask = 0;
    for (std::size_t i : order) {
      mask |= std::uint64_t{1} << i;
      ++d.evaluations;
      if (view.evaluate(mask)) {
        d.chosen = view.candidate(mask);
        d.score = score(d.chosen, opt.params);
        d.success = true;
        d.servers_sourced = 1;
        return d;
      }
    }
  }
  return d;
}

}  // namespace detail

/// Chooses a server and victim set for `preemptor`, or reports failure.
///
/// Guaranteed preemptors only source servers passing the drain-all filter.
/// The baseline ignores topology: per server in index order it evicts victims
/// by ascending priority (creation order, or a seeded shuffle, within a
/// priority) until the preemptor fits, and takes the first server where that
/// works.
///
/// wall_time_us covers candidate sourcing and selection only.
inline PreemptionDecision preempt(const ClusterState& state, const WorkloadSpec& preemptor,
                                  PreemptMode mode, const PolicyOptions& opt = {},
                                  std::mt19937_64* rng = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  PreemptionDecision d = mode == PreemptMode::kBaseline
                             ? detail::source_baseline(state, preemptor, opt, rng)
                             : detail::source_flextopo(state, preemptor, mode, opt);
  const auto stop = std::chrono::steady_clock::now();
  d.wall_time_us = std::chrono::duration<double, std::micro>(stop - start).count();
  return d;
}

}  // namespace flextopo
