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

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "flextopo/graph.hpp"
#include "flextopo/topology.hpp"

namespace flextopo {

enum class QosLevel : std::uint8_t { kNone, kBestEffort, kGuaranteed };

inline std::string_view to_string(QosLevel q) {
  switch (q) {
    case QosLevel::kNone: return "none";
    case QosLevel::kBestEffort: return "best_effort";
    case QosLevel::kGuaranteed: return "guaranteed";
  }
  return "?";
}

inline std::optional<QosLevel> qos_from_string(std::string_view s) {
  if (s == "none" || s == "n/a") return QosLevel::kNone;
  if (s == "best_effort" || s == "best-effort") return QosLevel::kBestEffort;
  if (s == "guaranteed") return QosLevel::kGuaranteed;
  return std::nullopt;
}

struct TopologyQos {
  QosLevel numa = QosLevel::kNone;
  QosLevel socket = QosLevel::kNone;

  bool has_guaranteed() const {
    return numa == QosLevel::kGuaranteed || socket == QosLevel::kGuaranteed;
  }
  bool has_best_effort() const {
    return numa == QosLevel::kBestEffort || socket == QosLevel::kBestEffort;
  }
  bool any() const { return numa != QosLevel::kNone || socket != QosLevel::kNone; }

  // Only the guaranteed dimensions; used for feasibility checks.
  TopologyQos guaranteed_only() const {
    return {numa == QosLevel::kGuaranteed ? numa : QosLevel::kNone,
            socket == QosLevel::kGuaranteed ? socket : QosLevel::kNone};
  }

  bool operator==(const TopologyQos&) const = default;
};

struct ResourceRequest {
  int cpu_cores = 0;
  int gpus = 0;
  bool operator==(const ResourceRequest&) const = default;
};

/// How a NUMA guarantee is read for requests that cannot fit in one NUMA.
enum class NumaRule : std::uint8_t {
  // Cores split per GPU, each share on that GPU's NUMA.
  kPerGpuLocality,
  // Footprint touches the fewest NUMA nodes that can hold it.
  kMinimalSpan,
};

inline std::string_view to_string(NumaRule r) {
  return r == NumaRule::kPerGpuLocality ? "per_gpu_locality" : "minimal_span";
}

inline std::optional<NumaRule> numa_rule_from_string(std::string_view s) {
  if (s == "per_gpu_locality") return NumaRule::kPerGpuLocality;
  if (s == "minimal_span") return NumaRule::kMinimalSpan;
  return std::nullopt;
}

/// Counting view of free capacity on one server: free healthy GPUs as a
/// bitmask and free cores per NUMA. Adding a footprint models a hypothetical
/// eviction.
struct FreeState {
  std::uint64_t gpus = 0;
  std::array<int, kMaxNumasPerServer> cores{};

  FreeState& operator+=(const FreeState& other) {
    gpus |= other.gpus;
    for (int n = 0; n < kMaxNumasPerServer; ++n) cores[n] += other.cores[n];
    return *this;
  }
};

inline FreeState free_state(const FlexTopoGraph& graph) {
  const Layout& l = graph.layout();
  FreeState st;
  for (int c = 0; c < l.core_count(); ++c) {
    if (graph.core_free(c)) ++st.cores[l.numa_of_core(c)];
  }
  for (int g = 0; g < l.gpu_count(); ++g) {
    if (graph.gpu_free(g)) st.gpus |= std::uint64_t{1} << g;
  }
  return st;
}

inline FreeState footprint_state(const Layout& l, const ResourceSet& rs) {
  FreeState st;
  for (int c : rs.cores) ++st.cores[l.numa_of_core(c)];
  for (int g : rs.gpus) st.gpus |= std::uint64_t{1} << g;
  return st;
}

/// Per-NUMA shape of a footprint.
struct SpanShape {
  std::array<int, kMaxNumasPerServer> cores{};
  std::array<int, kMaxNumasPerServer> gpus{};
  int core_total = 0;
  int gpu_total = 0;

  std::uint64_t numa_mask() const {
    std::uint64_t mask = 0;
    for (int n = 0; n < kMaxNumasPerServer; ++n) {
      if (cores[n] > 0 || gpus[n] > 0) mask |= std::uint64_t{1} << n;
    }
    return mask;
  }
};

inline SpanShape shape_of(const Layout& l, const ResourceSet& rs) {
  SpanShape s;
  for (int c : rs.cores) ++s.cores[l.numa_of_core(c)];
  for (int g : rs.gpus) ++s.gpus[l.numa_of_gpu(g)];
  s.core_total = static_cast<int>(rs.cores.size());
  s.gpu_total = static_cast<int>(rs.gpus.size());
  return s;
}

inline int max_pairwise_distance(const Layout& l, std::uint64_t numa_mask) {
  int worst = 0;
  for (int a = 0; a < l.numa_count(); ++a) {
    if (!(numa_mask >> a & 1)) continue;
    for (int b = a; b < l.numa_count(); ++b) {
      if (numa_mask >> b & 1) worst = std::max(worst, l.distance(a, b));
    }
  }
  return worst;
}

namespace detail {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline int socket_count_of(const Layout& l, std::uint64_t numa_mask) {
  std::uint64_t sockets = 0;
  for (int n = 0; n < l.numa_count(); ++n) {
    if (numa_mask >> n & 1) sockets |= std::uint64_t{1} << l.socket_of_numa(n);
  }
  return std::popcount(sockets);
}

}  // namespace detail

/// NUMA guarantee check. A request that fits in one NUMA must sit in one NUMA;
/// otherwise the chosen NumaRule decides.
inline bool numa_rule_holds(const Layout& l, const SpanShape& s, NumaRule rule) {
  const auto& spec = l.spec();
  const std::uint64_t mask = s.numa_mask();
  const int spanned = std::popcount(mask);
  if (s.gpu_total <= spec.gpus_per_numa && s.core_total <= spec.cores_per_numa) {
    return spanned == 1;
  }
  const int minimal = std::max(detail::ceil_div(s.gpu_total, spec.gpus_per_numa),
                               detail::ceil_div(s.core_total, spec.cores_per_numa));
  if (s.gpu_total == 0) return spanned == minimal;
  if (rule == NumaRule::kMinimalSpan) {
    if (spanned != minimal) return false;
    for (int n = 0; n < l.numa_count(); ++n) {
      if (s.cores[n] > 0 && s.gpus[n] == 0) return false;
    }
    return true;
  }
  const int share = s.core_total / s.gpu_total;
  for (int n = 0; n < l.numa_count(); ++n) {
    if (s.cores[n] > 0 && s.gpus[n] == 0) return false;
    if (s.cores[n] < s.gpus[n] * share) return false;
  }
  return true;
}

/// Socket guarantee check: the footprint spans no more sockets than needed.
inline bool socket_rule_holds(const Layout& l, const SpanShape& s) {
  const auto& spec = l.spec();
  const int minimal = std::max({1, detail::ceil_div(s.gpu_total, spec.gpus_per_socket()),
                                detail::ceil_div(s.core_total, spec.cores_per_socket())});
  return detail::socket_count_of(l, s.numa_mask()) <= minimal;
}

/// True when every dimension of `qos` at or above `floor` holds.
inline bool qos_holds(const Layout& l, const SpanShape& s, const TopologyQos& qos,
                      NumaRule rule, QosLevel floor = QosLevel::kBestEffort) {
  if (qos.numa >= floor && qos.numa != QosLevel::kNone && !numa_rule_holds(l, s, rule)) {
    return false;
  }
  if (qos.socket >= floor && qos.socket != QosLevel::kNone && !socket_rule_holds(l, s)) {
    return false;
  }
  return true;
}

struct PlacementPlan {
  std::uint64_t gpus = 0;
  SpanShape shape;
  AlignmentClass alignment = AlignmentClass::kCrossSocket;
  int max_distance = 0;
};

enum class SearchGoal : std::uint8_t { kBest, kAnyFeasible };

// CPU-only requests search every NUMA subset up to this many NUMA nodes.
inline constexpr int kMaxExhaustiveNumas = 12;

namespace detail {

// Adds `remaining` cores to `shape`: anchor NUMAs first, then the nearest
// others. Returns false if the server cannot hold them.
inline bool spill_cores(const Layout& l, const FreeState& free, SpanShape& shape,
                        std::uint64_t anchor_mask, int remaining) {
  for (int n = 0; n < l.numa_count() && remaining > 0; ++n) {
    if (!(anchor_mask >> n & 1)) continue;
    const int take = std::min(remaining, free.cores[n] - shape.cores[n]);
    if (take > 0) {
      shape.cores[n] += take;
      remaining -= take;
    }
  }
  if (remaining == 0) return true;
  std::array<int, kMaxNumasPerServer> order{};
  std::array<int, kMaxNumasPerServer> dist{};
  int count = 0;
  for (int n = 0; n < l.numa_count(); ++n) {
    if (anchor_mask >> n & 1) continue;
    int best = 1 << 30;
    for (int a = 0; a < l.numa_count(); ++a) {
      if (anchor_mask >> a & 1) best = std::min(best, l.distance(a, n));
    }
    order[count] = n;
    dist[n] = anchor_mask == 0 ? 0 : best;
    ++count;
  }
  std::stable_sort(order.begin(), order.begin() + count,
                   [&](int a, int b) { return dist[a] < dist[b]; });
  for (int i = 0; i < count && remaining > 0; ++i) {
    const int n = order[i];
    const int take = std::min(remaining, free.cores[n] - shape.cores[n]);
    if (take > 0) {
      shape.cores[n] += take;
      remaining -= take;
    }
  }
  return remaining == 0;
}

}  // namespace detail

/// Searches the free capacity for a placement of `request`.
///
/// Guaranteed QoS dimensions are hard constraints. Among feasible placements
/// the search prefers a tighter AlignmentClass, then placements honoring the
/// NUMA rule, then a lower maximum pairwise NUMA distance, then the lowest GPU
/// ids. Within a chosen GPU set, cores go to the GPUs' own NUMA nodes first.
inline std::optional<PlacementPlan> plan_placement(const Layout& l, const FreeState& free,
                                                   const ResourceRequest& request,
                                                   const TopologyQos& qos, NumaRule rule,
                                                   SearchGoal goal = SearchGoal::kBest) {
  const int g = request.gpus;
  const int c = request.cpu_cores;
  if (g < 0 || c < 0 || (g == 0 && c == 0)) return std::nullopt;
  if (std::popcount(free.gpus) < g) return std::nullopt;
  int free_cores = 0;
  for (int n = 0; n < l.numa_count(); ++n) free_cores += free.cores[n];
  if (free_cores < c) return std::nullopt;

  const bool need_numa = qos.numa == QosLevel::kGuaranteed;
  const bool need_socket = qos.socket == QosLevel::kGuaranteed;
  const bool want_numa = qos.numa != QosLevel::kNone;

  std::optional<PlacementPlan> best;
  bool best_numa_ok = false;
  bool done = false;

  auto consider = [&](std::uint64_t gpu_mask, const SpanShape& shape) {
    const bool numa_ok = numa_rule_holds(l, shape, rule);
    if (need_numa && !numa_ok) return;
    if (need_socket && !socket_rule_holds(l, shape)) return;
    const std::uint64_t mask = shape.numa_mask();
    PlacementPlan plan;
    plan.gpus = gpu_mask;
    plan.shape = shape;
    plan.alignment = FlexTopoGraph::classify_numa_mask(l, mask);
    plan.max_distance = max_pairwise_distance(l, mask);
    const bool numa_pref = want_numa && numa_ok;
    bool better = !best.has_value();
    if (!better) {
      if (plan.alignment != best->alignment) {
        better = plan.alignment > best->alignment;
      } else if (numa_pref != best_numa_ok) {
        better = numa_pref;
      } else {
        better = plan.max_distance < best->max_distance;
      }
    }
    if (better) {
      best = plan;
      best_numa_ok = numa_pref;
    }
    if (goal == SearchGoal::kAnyFeasible ||
        (plan.alignment == AlignmentClass::kSingleNuma && (numa_pref || !want_numa) &&
         plan.max_distance == l.min_diagonal() && best->gpus == gpu_mask)) {
      done = true;
    }
  };

  if (g == 0) {
    // Every NUMA subset that can hold the cores, each member taking at least
    // one core and the rest filled in NUMA order.
    const int numas = l.numa_count();
    if (numas <= kMaxExhaustiveNumas) {
      for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << numas) && !done; ++mask) {
        if (std::popcount(mask) > c) continue;
        SpanShape shape;
        shape.core_total = c;
        int remaining = c;
        int room = 0;
        bool ok = true;
        for (int n = 0; n < numas && ok; ++n) {
          if (!(mask >> n & 1)) continue;
          ok = free.cores[n] > 0;
          shape.cores[n] = 1;
          --remaining;
          room += free.cores[n] - 1;
        }
        if (!ok || room < remaining) continue;
        for (int n = 0; n < numas && remaining > 0; ++n) {
          if (!(mask >> n & 1)) continue;
          const int take = std::min(remaining, free.cores[n] - 1);
          shape.cores[n] += take;
          remaining -= take;
        }
        consider(0, shape);
      }
      return best;
    }
    for (int n = 0; n < numas && !done; ++n) {
      if (free.cores[n] >= c) {
        SpanShape shape;
        shape.cores[n] = c;
        shape.core_total = c;
        consider(0, shape);
      }
    }
    for (int s = 0; s < l.socket_count() && !done; ++s) {
      SpanShape shape;
      shape.core_total = c;
      int remaining = c;
      for (int n = 0; n < numas && remaining > 0; ++n) {
        if (l.socket_of_numa(n) != s) continue;
        const int take = std::min(remaining, free.cores[n]);
        shape.cores[n] = take;
        remaining -= take;
      }
      if (remaining == 0) consider(0, shape);
    }
    if (!done) {
      SpanShape shape;
      shape.core_total = c;
      if (detail::spill_cores(l, free, shape, 0, c)) consider(0, shape);
    }
    return best;
  }

  std::array<int, kMaxGpusPerServer> candidates{};
  int n_free = 0;
  for (int i = 0; i < l.gpu_count(); ++i) {
    if (free.gpus >> i & 1) candidates[n_free++] = i;
  }
  std::array<int, kMaxGpusPerServer> pick{};
  for (int i = 0; i < g; ++i) pick[i] = i;
  const int base_share = c / g;
  const int extra = c % g;

  while (!done) {
    SpanShape shape;
    shape.gpu_total = g;
    shape.core_total = c;
    std::uint64_t gpu_mask = 0;
    std::uint64_t gpu_numas = 0;
    bool local = true;
    for (int i = 0; i < g; ++i) {
      const int gpu = candidates[pick[i]];
      const int numa = l.numa_of_gpu(gpu);
      gpu_mask |= std::uint64_t{1} << gpu;
      gpu_numas |= std::uint64_t{1} << numa;
      ++shape.gpus[numa];
      shape.cores[numa] += base_share + (i < extra ? 1 : 0);
      if (shape.cores[numa] > free.cores[numa]) local = false;
    }
    if (local) {
      consider(gpu_mask, shape);
    } else {
      // Keep what fits locally, spill the rest.
      int spill = 0;
      for (int n = 0; n < l.numa_count(); ++n) {
        if (shape.cores[n] > free.cores[n]) {
          spill += shape.cores[n] - free.cores[n];
          shape.cores[n] = free.cores[n];
        }
      }
      if (detail::spill_cores(l, free, shape, gpu_numas, spill)) consider(gpu_mask, shape);
    }
    // Next combination in lexicographic order.
    int i = g - 1;
    while (i >= 0 && pick[i] == n_free - g + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < g; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

/// Turns a plan into concrete ids. Within each NUMA whole free CoreGroups
/// are taken first, then loose cores from partially used groups.
inline ResourceSet materialize(const FlexTopoGraph& graph, const PlacementPlan& plan) {
  const Layout& l = graph.layout();
  const int group_size = l.spec().coregroup_size;
  const int groups_per_numa = l.spec().cores_per_numa / group_size;
  ResourceSet rs;
  for (int g = 0; g < l.gpu_count(); ++g) {
    if (plan.gpus >> g & 1) rs.gpus.push_back(g);
  }
  for (int n = 0; n < l.numa_count(); ++n) {
    int need = plan.shape.cores[n];
    if (need == 0) continue;
    std::vector<int> whole;
    std::vector<int> loose;
    for (int k = 0; k < groups_per_numa; ++k) {
      const int group = n * groups_per_numa + k;
      int free_in_group = 0;
      for (int c = group * group_size; c < (group + 1) * group_size; ++c) {
        if (graph.core_free(c)) ++free_in_group;
      }
      if (free_in_group == group_size) {
        whole.push_back(group);
      } else {
        for (int c = group * group_size; c < (group + 1) * group_size; ++c) {
          if (graph.core_free(c)) loose.push_back(c);
        }
      }
    }
    std::size_t used_whole = 0;
    while (need >= group_size && used_whole < whole.size()) {
      const int group = whole[used_whole++];
      for (int c = group * group_size; c < (group + 1) * group_size; ++c) rs.cores.push_back(c);
      need -= group_size;
    }
    for (; used_whole < whole.size(); ++used_whole) {
      const int group = whole[used_whole];
      for (int c = group * group_size; c < (group + 1) * group_size; ++c) loose.push_back(c);
    }
    for (int i = 0; i < need; ++i) rs.cores.push_back(loose.at(i));
  }
  rs.normalize();
  return rs;
}

/// Best placement of `request` on the free resources of `graph`, or nullopt
/// when no placement honors the guaranteed QoS dimensions.
inline std::optional<ResourceSet> find_placement(const FlexTopoGraph& graph,
                                                 const ResourceRequest& request,
                                                 const TopologyQos& qos,
                                                 NumaRule rule = NumaRule::kPerGpuLocality) {
  auto plan = plan_placement(graph.layout(), free_state(graph), request, qos, rule);
  if (!plan) return std::nullopt;
  return materialize(graph, *plan);
}

}  // namespace flextopo
