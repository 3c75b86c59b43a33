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
#include <bit>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flextopo/error.hpp"
#include "flextopo/topology.hpp"

namespace flextopo {

enum class Status : std::uint8_t { kFree, kAllocated };

inline std::string_view to_string(Status s) {
  return s == Status::kFree ? "free" : "allocated";
}

// Opaque key/value bag carried by Socket and NUMA nodes. Never interpreted.
using Attributes = std::map<std::string, std::string>;

/// Cores and GPUs of one server, kept sorted and unique.
struct ResourceSet {
  std::vector<int> cores;
  std::vector<int> gpus;

  ResourceSet() = default;
  ResourceSet(std::vector<int> c, std::vector<int> g)
      : cores(std::move(c)), gpus(std::move(g)) {
    normalize();
  }

  void normalize() {
    std::sort(cores.begin(), cores.end());
    cores.erase(std::unique(cores.begin(), cores.end()), cores.end());
    std::sort(gpus.begin(), gpus.end());
    gpus.erase(std::unique(gpus.begin(), gpus.end()), gpus.end());
  }

  bool empty() const { return cores.empty() && gpus.empty(); }

  // Union, result normalized.
  ResourceSet& operator+=(const ResourceSet& other) {
    cores.insert(cores.end(), other.cores.begin(), other.cores.end());
    gpus.insert(gpus.end(), other.gpus.begin(), other.gpus.end());
    normalize();
    return *this;
  }

  bool operator==(const ResourceSet&) const = default;
};

struct SocketNode {
  int id = 0;
  Attributes extra;
  bool operator==(const SocketNode&) const = default;
};

struct NumaNode {
  int id = 0;
  Attributes extra;
  bool operator==(const NumaNode&) const = default;
};

// Status/used_by are derived from the contained cores. When cores of one
// group belong to several instances, used_by names the owner of the lowest
// allocated core.
struct CoreGroupNode {
  int id = 0;
  Status status = Status::kFree;
  std::string used_by;
  bool operator==(const CoreGroupNode&) const = default;
};

struct CoreNode {
  int id = 0;
  Status status = Status::kFree;
  std::string used_by;
  bool operator==(const CoreNode&) const = default;
};

struct GpuNode {
  int index = 0;
  std::string uuid;
  std::string model;
  int memory_mb = 0;
  Status status = Status::kFree;
  std::string used_by;
  bool healthy = true;
  bool operator==(const GpuNode&) const = default;
};

enum class NodeKind : std::uint8_t { kSocket, kCoreGroup, kCore, kNuma, kGpu };
enum class EdgeKind : std::uint8_t { kHost, kContain, kLocalized, kNearby };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::kSocket: return "socket";
    case NodeKind::kCoreGroup: return "coregroup";
    case NodeKind::kCore: return "core";
    case NodeKind::kNuma: return "numa";
    case NodeKind::kGpu: return "gpu";
  }
  return "?";
}

inline std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::kHost: return "host";
    case EdgeKind::kContain: return "contain";
    case EdgeKind::kLocalized: return "localized";
    case EdgeKind::kNearby: return "nearby";
  }
  return "?";
}

struct NodeRef {
  NodeKind kind;
  int id;
  bool operator==(const NodeRef&) const = default;
};

struct Edge {
  EdgeKind kind;
  NodeRef from;
  NodeRef to;
  bool operator==(const Edge&) const = default;
};

struct NumaTally {
  int numa = 0;
  int socket = 0;
  int free_cores = 0;
  int free_gpus = 0;
};

struct SocketTally {
  int socket = 0;
  int free_cores = 0;
  int free_gpus = 0;
};

struct FreeView {
  std::vector<NumaTally> numas;
  std::vector<SocketTally> sockets;
  int free_cores = 0;
  int free_gpus = 0;
};

/// Hardware graph of one server plus its allocation overlay.
///
/// The structure (which core sits in which group, which GPU is nearby which
/// NUMA) comes from the shared Layout and never changes; only Status/UsedBy
/// and GPU health are mutable. Copies are cheap snapshots.
class FlexTopoGraph {
 public:
  FlexTopoGraph(LayoutPtr layout, std::string server_id)
      : layout_(std::move(layout)), server_id_(std::move(server_id)) {
    const Layout& l = *layout_;
    sockets_.resize(l.socket_count());
    for (int s = 0; s < l.socket_count(); ++s) sockets_[s].id = s;
    numas_.resize(l.numa_count());
    for (int n = 0; n < l.numa_count(); ++n) numas_[n].id = n;
    groups_.resize(l.coregroup_count());
    for (int g = 0; g < l.coregroup_count(); ++g) groups_[g].id = g;
    cores_.resize(l.core_count());
    for (int c = 0; c < l.core_count(); ++c) cores_[c].id = c;
    gpus_.resize(l.gpu_count());
    for (int g = 0; g < l.gpu_count(); ++g) {
      gpus_[g].index = g;
      gpus_[g].uuid = server_id_ + "/" + std::to_string(g);
      gpus_[g].model = l.spec().gpu_model;
      gpus_[g].memory_mb = l.spec().gpu_memory_mb;
    }
  }

  const Layout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  const TopologySpec& spec() const { return layout_->spec(); }
  const std::string& server_id() const { return server_id_; }

  const std::vector<SocketNode>& sockets() const { return sockets_; }
  const std::vector<NumaNode>& numas() const { return numas_; }
  const std::vector<CoreGroupNode>& core_groups() const { return groups_; }
  const std::vector<CoreNode>& cores() const { return cores_; }
  const std::vector<GpuNode>& gpus() const { return gpus_; }

  Attributes& socket_attributes(int socket) { return sockets_.at(socket).extra; }
  Attributes& numa_attributes(int numa) { return numas_.at(numa).extra; }

  int numa_distance(int numa_a, int numa_b) const {
    check_numa(numa_a);
    check_numa(numa_b);
    return layout_->distance(numa_a, numa_b);
  }

  bool core_free(int core) const { return cores_[core].status == Status::kFree; }
  bool gpu_free(int gpu) const {
    return gpus_[gpu].healthy && gpus_[gpu].status == Status::kFree;
  }

  FreeView free_view() const {
    const Layout& l = *layout_;
    FreeView view;
    view.numas.resize(l.numa_count());
    view.sockets.resize(l.socket_count());
    for (int n = 0; n < l.numa_count(); ++n) {
      view.numas[n].numa = n;
      view.numas[n].socket = l.socket_of_numa(n);
    }
    for (int s = 0; s < l.socket_count(); ++s) view.sockets[s].socket = s;
    for (const auto& core : cores_) {
      if (core.status == Status::kFree) ++view.numas[l.numa_of_core(core.id)].free_cores;
    }
    for (const auto& gpu : gpus_) {
      if (gpu_free(gpu.index)) ++view.numas[l.numa_of_gpu(gpu.index)].free_gpus;
    }
    for (const auto& t : view.numas) {
      view.sockets[t.socket].free_cores += t.free_cores;
      view.sockets[t.socket].free_gpus += t.free_gpus;
      view.free_cores += t.free_cores;
      view.free_gpus += t.free_gpus;
    }
    return view;
  }

  /// Marks every referenced resource allocated to `instance`. All-or-nothing:
  /// on any conflict the graph is left untouched and AllocationError thrown.
  void apply_allocation(const std::string& instance, const ResourceSet& resources) {
    if (instance.empty()) throw AllocationError("instance id must be non-empty");
    if (resources.empty()) throw AllocationError("empty resource set for " + instance);
    for (int c : resources.cores) {
      check_core(c);
      if (cores_[c].status != Status::kFree) {
        throw AllocationError("core " + std::to_string(c) + " on " + server_id_ +
                              " already allocated to " + cores_[c].used_by);
      }
    }
    for (int g : resources.gpus) {
      check_gpu(g);
      if (!gpus_[g].healthy) {
        throw AllocationError("gpu " + gpus_[g].uuid + " is failed");
      }
      if (gpus_[g].status != Status::kFree) {
        throw AllocationError("gpu " + gpus_[g].uuid + " already allocated to " +
                              gpus_[g].used_by);
      }
    }
    for (int c : resources.cores) {
      cores_[c].status = Status::kAllocated;
      cores_[c].used_by = instance;
      refresh_group(layout_->group_of_core(c));
    }
    for (int g : resources.gpus) {
      gpus_[g].status = Status::kAllocated;
      gpus_[g].used_by = instance;
    }
  }

  /// Frees everything owned by `instance` and returns what was freed.
  ResourceSet release_allocation(const std::string& instance) {
    ResourceSet freed = footprint_of(instance);
    if (freed.empty()) {
      throw AllocationError("instance " + instance + " owns nothing on " + server_id_);
    }
    for (int c : freed.cores) {
      cores_[c].status = Status::kFree;
      cores_[c].used_by.clear();
      refresh_group(layout_->group_of_core(c));
    }
    for (int g : freed.gpus) {
      gpus_[g].status = Status::kFree;
      gpus_[g].used_by.clear();
    }
    return freed;
  }

  ResourceSet footprint_of(const std::string& instance) const {
    ResourceSet rs;
    for (const auto& core : cores_) {
      if (core.used_by == instance) rs.cores.push_back(core.id);
    }
    for (const auto& gpu : gpus_) {
      if (gpu.used_by == instance) rs.gpus.push_back(gpu.index);
    }
    return rs;
  }

  // Distinct owners, sorted.
  std::vector<std::string> owners() const {
    std::set<std::string> out;
    for (const auto& core : cores_) {
      if (!core.used_by.empty()) out.insert(core.used_by);
    }
    for (const auto& gpu : gpus_) {
      if (!gpu.used_by.empty()) out.insert(gpu.used_by);
    }
    return {out.begin(), out.end()};
  }

  /// Takes a GPU out of service for good. Returns its owner if it was
  /// allocated; the caller is expected to evict that instance.
  std::optional<std::string> fail_gpu(int gpu) {
    check_gpu(gpu);
    gpus_[gpu].healthy = false;
    if (gpus_[gpu].status == Status::kAllocated) return gpus_[gpu].used_by;
    return std::nullopt;
  }

  AlignmentClass classify_span(const ResourceSet& resources) const {
    if (resources.empty()) throw TopologyError("cannot classify an empty resource set");
    const Layout& l = *layout_;
    std::uint64_t numa_mask = 0;
    for (int c : resources.cores) {
      check_core(c);
      numa_mask |= std::uint64_t{1} << l.numa_of_core(c);
    }
    for (int g : resources.gpus) {
      check_gpu(g);
      numa_mask |= std::uint64_t{1} << l.numa_of_gpu(g);
    }
    return classify_numa_mask(l, numa_mask);
  }

  // Edges are derived from the layout; they are listed in a fixed order:
  // host, contain, localized (per group), then nearby (per GPU).
  std::vector<Edge> edges() const {
    const Layout& l = *layout_;
    std::vector<Edge> out;
    out.reserve(l.coregroup_count() * (2 + l.spec().coregroup_size) + l.gpu_count());
    for (int g = 0; g < l.coregroup_count(); ++g) {
      const int numa = l.numa_of_group(g);
      out.push_back({EdgeKind::kHost, {NodeKind::kSocket, l.socket_of_numa(numa)},
                     {NodeKind::kCoreGroup, g}});
      for (int i = 0; i < l.spec().coregroup_size; ++i) {
        out.push_back({EdgeKind::kContain, {NodeKind::kCoreGroup, g},
                       {NodeKind::kCore, g * l.spec().coregroup_size + i}});
      }
      out.push_back({EdgeKind::kLocalized, {NodeKind::kCoreGroup, g}, {NodeKind::kNuma, numa}});
    }
    for (int gpu = 0; gpu < l.gpu_count(); ++gpu) {
      out.push_back({EdgeKind::kNearby, {NodeKind::kGpu, gpu}, {NodeKind::kNuma, l.numa_of_gpu(gpu)}});
    }
    return out;
  }

  static AlignmentClass classify_numa_mask(const Layout& l, std::uint64_t numa_mask) {
    if (std::popcount(numa_mask) <= 1) return AlignmentClass::kSingleNuma;
    int socket = -1;
    for (int n = 0; n < l.numa_count(); ++n) {
      if (!(numa_mask >> n & 1)) continue;
      if (socket < 0) {
        socket = l.socket_of_numa(n);
      } else if (socket != l.socket_of_numa(n)) {
        return AlignmentClass::kCrossSocket;
      }
    }
    return AlignmentClass::kSingleSocket;
  }

  friend bool operator==(const FlexTopoGraph& a, const FlexTopoGraph& b) {
    return a.layout_->spec() == b.layout_->spec() && a.server_id_ == b.server_id_ &&
           a.sockets_ == b.sockets_ && a.numas_ == b.numas_ && a.groups_ == b.groups_ &&
           a.cores_ == b.cores_ && a.gpus_ == b.gpus_;
  }

  // Used by the snapshot parser to restore state verbatim.
  void restore_core(int core, Status status, std::string used_by) {
    check_core(core);
    cores_[core].status = status;
    cores_[core].used_by = std::move(used_by);
    refresh_group(layout_->group_of_core(core));
  }

  void restore_gpu(const GpuNode& node) {
    check_gpu(node.index);
    gpus_[node.index] = node;
  }

 private:
  void check_core(int core) const {
    if (core < 0 || core >= static_cast<int>(cores_.size())) {
      throw TopologyError("unknown core " + std::to_string(core) + " on " + server_id_);
    }
  }
  void check_gpu(int gpu) const {
    if (gpu < 0 || gpu >= static_cast<int>(gpus_.size())) {
      throw TopologyError("unknown gpu " + std::to_string(gpu) + " on " + server_id_);
    }
  }
  void check_numa(int numa) const {
    if (numa < 0 || numa >= static_cast<int>(numas_.size())) {
      throw TopologyError("unknown numa " + std::to_string(numa) + " on " + server_id_);
    }
  }

  void refresh_group(int group) {
    const int size = layout_->spec().coregroup_size;
    auto& node = groups_[group];
    node.status = Status::kFree;
    node.used_by.clear();
    for (int c = group * size; c < (group + 1) * size; ++c) {
      if (cores_[c].status == Status::kAllocated) {
        node.status = Status::kAllocated;
        node.used_by = cores_[c].used_by;
        break;
      }
    }
  }

  LayoutPtr layout_;
  std::string server_id_;
  std::vector<SocketNode> sockets_;
  std::vector<NumaNode> numas_;
  std::vector<CoreGroupNode> groups_;
  std::vector<CoreNode> cores_;
  std::vector<GpuNode> gpus_;
};

/// Builds a fully free graph for one server.
inline FlexTopoGraph build_topology(const TopologySpec& spec, const std::string& server_id) {
  return FlexTopoGraph(make_layout(spec), server_id);
}

}  // namespace flextopo
