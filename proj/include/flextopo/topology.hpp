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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flextopo/error.hpp"

namespace flextopo {

// Hard limits of the bitmask-based placement search.
inline constexpr int kMaxGpusPerServer = 64;
inline constexpr int kMaxNumasPerServer = 32;

// How tightly a resource footprint is packed. Larger is tighter.
enum class AlignmentClass : std::uint8_t {
  kCrossSocket = 0,
  kSingleSocket = 1,
  kSingleNuma = 2,
};

inline std::string_view to_string(AlignmentClass c) {
  switch (c) {
    case AlignmentClass::kSingleNuma:
      return "single_numa";
    case AlignmentClass::kSingleSocket:
      return "single_socket";
    case AlignmentClass::kCrossSocket:
      return "cross_socket";
  }
  return "?";
}

inline std::optional<AlignmentClass> alignment_from_string(std::string_view s) {
  if (s == "single_numa") return AlignmentClass::kSingleNuma;
  if (s == "single_socket") return AlignmentClass::kSingleSocket;
  if (s == "cross_socket") return AlignmentClass::kCrossSocket;
  return std::nullopt;
}

/// Static shape of one GPU server.
///
/// Cores are numbered in NUMA order (NUMA n owns cores
/// [n * cores_per_numa, (n + 1) * cores_per_numa)). GPUs are numbered in NUMA
/// order too unless `gpu_numa` overrides the nearby NUMA of each GPU index.
struct TopologySpec {
  int socket_count = 1;
  int numas_per_socket = 1;
  int cores_per_numa = 1;
  int gpus_per_numa = 1;
  int coregroup_size = 1;
  // numa_count x numa_count; empty means "generate 10 / 12 / 20".
  std::vector<std::vector<int>> numa_distance;
  // Optional: nearby NUMA of each GPU index. Every NUMA must appear exactly
  // gpus_per_numa times.
  std::vector<int> gpu_numa;
  std::string gpu_model = "generic";
  int gpu_memory_mb = 0;

  int numa_count() const { return socket_count * numas_per_socket; }
  int core_count() const { return numa_count() * cores_per_numa; }
  int gpu_count() const { return numa_count() * gpus_per_numa; }
  int coregroup_count() const { return core_count() / coregroup_size; }
  int gpus_per_socket() const { return numas_per_socket * gpus_per_numa; }
  int cores_per_socket() const { return numas_per_socket * cores_per_numa; }

  bool operator==(const TopologySpec&) const = default;
};

// Fills in the default distance matrix when none was given.
inline std::vector<std::vector<int>> default_distance(const TopologySpec& spec) {
  const int n = spec.numa_count();
  std::vector<std::vector<int>> d(n, std::vector<int>(n, 0));
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) {
        d[a][b] = 10;
      } else if (a / spec.numas_per_socket == b / spec.numas_per_socket) {
        d[a][b] = 12;
      } else {
        d[a][b] = 20;
      }
    }
  }
  return d;
}

/// Throws TopologyError describing the first violated invariant.
inline void validate(const TopologySpec& spec) {
  auto fail = [](const std::string& msg) { throw TopologyError(msg); };
  if (spec.socket_count < 1 || spec.numas_per_socket < 1 ||
      spec.cores_per_numa < 1 || spec.gpus_per_numa < 1 ||
      spec.coregroup_size < 1) {
    fail("all topology counts must be >= 1");
  }
  if (spec.cores_per_numa % spec.coregroup_size != 0) {
    fail("coregroup_size " + std::to_string(spec.coregroup_size) +
         " does not divide cores_per_numa " +
         std::to_string(spec.cores_per_numa));
  }
  if (spec.numa_count() > kMaxNumasPerServer) {
    fail("at most " + std::to_string(kMaxNumasPerServer) +
         " NUMA nodes per server are supported");
  }
  if (spec.gpu_count() > kMaxGpusPerServer) {
    fail("at most " + std::to_string(kMaxGpusPerServer) +
         " GPUs per server are supported");
  }
  const int n = spec.numa_count();
  if (!spec.numa_distance.empty()) {
    const auto& d = spec.numa_distance;
    if (static_cast<int>(d.size()) != n) fail("numa_distance must be square over all NUMA nodes");
    int min_value = d[0].empty() ? 0 : d[0][0];
    for (const auto& row : d) {
      if (static_cast<int>(row.size()) != n) fail("numa_distance must be square over all NUMA nodes");
      for (int v : row) min_value = std::min(min_value, v);
    }
    for (int a = 0; a < n; ++a) {
      if (d[a][a] != min_value) fail("numa_distance diagonal must hold the minimal value");
      for (int b = 0; b < n; ++b) {
        if (d[a][b] != d[b][a]) fail("numa_distance must be symmetric");
      }
    }
  }
  if (!spec.gpu_numa.empty()) {
    if (static_cast<int>(spec.gpu_numa.size()) != spec.gpu_count()) {
      fail("gpu_numa must list one NUMA per GPU");
    }
    std::vector<int> per_numa(n, 0);
    for (int numa : spec.gpu_numa) {
      if (numa < 0 || numa >= n) fail("gpu_numa refers to unknown NUMA " + std::to_string(numa));
      ++per_numa[numa];
    }
    for (int c : per_numa) {
      if (c != spec.gpus_per_numa) fail("gpu_numa must place gpus_per_numa GPUs on every NUMA");
    }
  }
  if (spec.gpu_memory_mb < 0) fail("gpu_memory_mb must be >= 0");
}

/// 2 sockets, 8 NUMA nodes, 64 cores, 8 GPUs. Cores 24-31 sit on NUMA 3 next
/// to GPU 0; GPUs 0-3 belong to socket 0 and 4-7 to socket 1.
inline TopologySpec rtx4090_preset() {
  TopologySpec spec;
  spec.socket_count = 2;
  spec.numas_per_socket = 4;
  spec.cores_per_numa = 8;
  spec.gpus_per_numa = 1;
  spec.coregroup_size = 8;
  spec.numa_distance = default_distance(spec);
  for (auto& row : spec.numa_distance) {
    for (int& v : row) {
      if (v == 20) v = 32;
    }
  }
  spec.gpu_numa = {3, 2, 1, 0, 7, 6, 5, 4};
  spec.gpu_model = "NVIDIA RTX 4090";
  spec.gpu_memory_mb = 24564;
  return spec;
}

/// 2 sockets, 2 NUMA nodes, 128 cores, 8 GPUs.
inline TopologySpec a100_preset() {
  TopologySpec spec;
  spec.socket_count = 2;
  spec.numas_per_socket = 1;
  spec.cores_per_numa = 64;
  spec.gpus_per_numa = 4;
  spec.coregroup_size = 16;
  spec.numa_distance = default_distance(spec);
  spec.gpu_model = "NVIDIA A100-SXM4-80GB";
  spec.gpu_memory_mb = 81920;
  return spec;
}

inline std::optional<TopologySpec> preset_by_name(std::string_view name) {
  if (name == "rtx4090") return rtx4090_preset();
  if (name == "a100") return a100_preset();
  return std::nullopt;
}

/// Derived lookup tables for one TopologySpec, shared between graph copies.
class Layout {
 public:
  explicit Layout(TopologySpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    if (spec_.numa_distance.empty()) spec_.numa_distance = default_distance(spec_);
    const int n = spec_.numa_count();
    socket_of_numa_.resize(n);
    for (int numa = 0; numa < n; ++numa) socket_of_numa_[numa] = numa / spec_.numas_per_socket;
    numa_of_gpu_.resize(spec_.gpu_count());
    for (int g = 0; g < spec_.gpu_count(); ++g) {
      numa_of_gpu_[g] = spec_.gpu_numa.empty() ? g / spec_.gpus_per_numa : spec_.gpu_numa[g];
    }
    min_diagonal_ = spec_.numa_distance[0][0];
    for (int numa = 0; numa < n; ++numa) {
      min_diagonal_ = std::min(min_diagonal_, spec_.numa_distance[numa][numa]);
    }
  }

  const TopologySpec& spec() const { return spec_; }
  int numa_count() const { return spec_.numa_count(); }
  int socket_count() const { return spec_.socket_count; }
  int core_count() const { return spec_.core_count(); }
  int gpu_count() const { return spec_.gpu_count(); }
  int coregroup_count() const { return spec_.coregroup_count(); }

  int socket_of_numa(int numa) const { return socket_of_numa_[numa]; }
  int numa_of_gpu(int gpu) const { return numa_of_gpu_[gpu]; }
  int numa_of_core(int core) const { return core / spec_.cores_per_numa; }
  int group_of_core(int core) const { return core / spec_.coregroup_size; }
  int numa_of_group(int group) const { return group * spec_.coregroup_size / spec_.cores_per_numa; }
  int first_core_of_numa(int numa) const { return numa * spec_.cores_per_numa; }
  int distance(int a, int b) const { return spec_.numa_distance[a][b]; }
  int min_diagonal() const { return min_diagonal_; }

 private:
  TopologySpec spec_;
  std::vector<int> socket_of_numa_;
  std::vector<int> numa_of_gpu_;
  int min_diagonal_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

inline LayoutPtr make_layout(TopologySpec spec) {
  return std::make_shared<const Layout>(std::move(spec));
}

}  // namespace flextopo
