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

#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace flextopo {
namespace {

using testing::conserved;
using testing::range;

TEST(BuildTopology, Rtx4090Preset) {
  const FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  EXPECT_EQ(g.sockets().size(), 2u);
  EXPECT_EQ(g.numas().size(), 8u);
  EXPECT_EQ(g.core_groups().size(), 8u);
  EXPECT_EQ(g.cores().size(), 64u);
  EXPECT_EQ(g.gpus().size(), 8u);
  for (const auto& c : g.cores()) EXPECT_EQ(c.status, Status::kFree);
  for (const auto& gpu : g.gpus()) {
    EXPECT_EQ(gpu.status, Status::kFree);
    EXPECT_TRUE(gpu.used_by.empty());
  }
  EXPECT_EQ(g.gpus()[5].uuid, "n0/5");
}

TEST(BuildTopology, A100Preset) {
  const FlexTopoGraph g = build_topology(a100_preset(), "n0");
  EXPECT_EQ(g.sockets().size(), 2u);
  EXPECT_EQ(g.numas().size(), 2u);
  EXPECT_EQ(g.core_groups().size(), 8u);
  EXPECT_EQ(g.cores().size(), 128u);
  EXPECT_EQ(g.gpus().size(), 8u);
}

TEST(BuildTopology, TrivialSingleNuma) {
  TopologySpec s;
  s.cores_per_numa = 8;
  s.coregroup_size = 8;
  const FlexTopoGraph g = build_topology(s, "t");
  EXPECT_EQ(g.classify_span({range(0, 7), {0}}), AlignmentClass::kSingleNuma);
  EXPECT_EQ(g.classify_span({{3}, {}}), AlignmentClass::kSingleNuma);
  EXPECT_EQ(g.classify_span({{}, {0}}), AlignmentClass::kSingleNuma);
}

TEST(BuildTopology, RejectsBadSpecs) {
  TopologySpec s = rtx4090_preset();
  s.coregroup_size = 3;
  EXPECT_THROW(build_topology(s, "x"), TopologyError);
  s = rtx4090_preset();
  s.socket_count = 0;
  EXPECT_THROW(build_topology(s, "x"), TopologyError);
  s = rtx4090_preset();
  s.numa_distance[0][1] = 13;
  EXPECT_THROW(build_topology(s, "x"), TopologyError);
  s = rtx4090_preset();
  s.numa_distance[2][2] = 11;
  EXPECT_THROW(build_topology(s, "x"), TopologyError);
  s = rtx4090_preset();
  s.gpu_numa = {0, 0, 1, 2, 3, 4, 5, 6};
  EXPECT_THROW(build_topology(s, "x"), TopologyError);
}

TEST(BuildTopology, StructuralEdges) {
  const FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  int host = 0, contain = 0, localized = 0, nearby = 0;
  for (const auto& e : g.edges()) {
    switch (e.kind) {
      case EdgeKind::kHost: ++host; break;
      case EdgeKind::kContain: ++contain; break;
      case EdgeKind::kLocalized: ++localized; break;
      case EdgeKind::kNearby: ++nearby; break;
    }
  }
  EXPECT_EQ(host, 8);
  EXPECT_EQ(contain, 64);
  EXPECT_EQ(localized, 8);
  EXPECT_EQ(nearby, 8);
  // Host socket agrees with the socket of the localized NUMA.
  const auto edges = g.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].kind != EdgeKind::kHost) continue;
    const int group = edges[i].to.id;
    for (const auto& e : edges) {
      if (e.kind == EdgeKind::kLocalized && e.from.id == group) {
        EXPECT_EQ(g.layout().socket_of_numa(e.to.id), edges[i].from.id);
      }
    }
  }
}

TEST(NumaDistance, Presets) {
  const FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  EXPECT_EQ(g.numa_distance(0, 0), 10);
  EXPECT_EQ(g.numa_distance(0, 1), 12);
  EXPECT_EQ(g.numa_distance(0, 4), 32);
  EXPECT_EQ(g.numa_distance(4, 0), 32);
  EXPECT_THROW(g.numa_distance(0, 8), TopologyError);
  const FlexTopoGraph a = build_topology(a100_preset(), "a");
  EXPECT_EQ(a.numa_distance(0, 1), 20);
}

TEST(FreeView, FreshAndAfterAllocation) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  for (const auto& t : g.free_view().numas) {
    EXPECT_EQ(t.free_cores, 8);
    EXPECT_EQ(t.free_gpus, 1);
  }
  g.apply_allocation("i", {range(24, 31), {0}});
  const FreeView v = g.free_view();
  for (const auto& t : v.numas) {
    EXPECT_EQ(t.free_cores, t.numa == 3 ? 0 : 8);
    EXPECT_EQ(t.free_gpus, t.numa == 3 ? 0 : 1);
  }
  EXPECT_EQ(v.sockets[0].free_cores, 24);
  EXPECT_EQ(v.sockets[0].free_gpus, 3);
  EXPECT_EQ(v.sockets[1].free_cores, 32);
  EXPECT_EQ(v.free_gpus, 7);
}

TEST(FreeView, TwoInstanceHandCount) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  // 4 GPUs of socket 0 with their cores, and one GPU on NUMA 5 with 4 cores.
  g.apply_allocation("a", {range(0, 31), {0, 1, 2, 3}});
  g.apply_allocation("b", {range(40, 43), {6}});
  const FreeView v = g.free_view();
  const int cores[] = {0, 0, 0, 0, 8, 4, 8, 8};
  const int gpus[] = {0, 0, 0, 0, 1, 0, 1, 1};
  for (int n = 0; n < 8; ++n) {
    EXPECT_EQ(v.numas[n].free_cores, cores[n]) << n;
    EXPECT_EQ(v.numas[n].free_gpus, gpus[n]) << n;
  }
  EXPECT_EQ(v.free_cores, 28);
  EXPECT_EQ(v.free_gpus, 3);
}

TEST(ApplyAllocation, SingleNumaLocalityExample) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  const ResourceSet rs{range(24, 31), {0}};
  g.apply_allocation("i", rs);
  EXPECT_EQ(g.classify_span(rs), AlignmentClass::kSingleNuma);
  EXPECT_EQ(g.gpus()[0].used_by, "i");
  EXPECT_EQ(g.core_groups()[3].status, Status::kAllocated);
  EXPECT_EQ(g.core_groups()[3].used_by, "i");
  EXPECT_EQ(g.core_groups()[2].status, Status::kFree);
}

TEST(ApplyAllocation, ConflictLeavesGraphUnchanged) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  g.apply_allocation("a", {{0, 1}, {3}});
  const FlexTopoGraph before = g;
  EXPECT_THROW(g.apply_allocation("b", {{5, 6, 1}, {4}}), AllocationError);
  EXPECT_EQ(g, before);
  EXPECT_THROW(g.apply_allocation("b", {{7}, {3}}), AllocationError);
  EXPECT_EQ(g, before);
  EXPECT_THROW(g.apply_allocation("b", {{99}, {}}), TopologyError);
  EXPECT_EQ(g, before);
}

TEST(ApplyAllocation, RoundTripIsIdempotent) {
  FlexTopoGraph once = build_topology(rtx4090_preset(), "n0");
  FlexTopoGraph twice = once;
  const ResourceSet rs{range(8, 15), {2}};
  once.apply_allocation("i", rs);
  twice.apply_allocation("i", rs);
  twice.release_allocation("i");
  twice.apply_allocation("i", rs);
  EXPECT_EQ(once, twice);
}

TEST(ReleaseAllocation, InverseAndIsolation) {
  const FlexTopoGraph fresh = build_topology(rtx4090_preset(), "n0");
  FlexTopoGraph g = fresh;
  g.apply_allocation("a", {range(0, 15), {2, 3}});
  g.release_allocation("a");
  EXPECT_EQ(g, fresh);
  g.apply_allocation("a", {range(0, 15), {2, 3}});
  g.apply_allocation("b", {range(32, 39), {7}});
  const ResourceSet b_before = g.footprint_of("b");
  g.release_allocation("a");
  EXPECT_EQ(g.footprint_of("b"), b_before);
  EXPECT_THROW(g.release_allocation("a"), AllocationError);
  EXPECT_THROW(g.release_allocation("nobody"), AllocationError);
}

TEST(ReleaseAllocation, EvictTwoFromFullNode) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  for (int gpu = 0; gpu < 8; ++gpu) {
    const int numa = g.layout().numa_of_gpu(gpu);
    g.apply_allocation("v" + std::to_string(gpu), {range(numa * 8, numa * 8 + 7), {gpu}});
  }
  EXPECT_EQ(g.free_view().free_gpus, 0);
  g.release_allocation("v2");
  g.release_allocation("v6");
  EXPECT_EQ(g.free_view().free_gpus, 2);
  EXPECT_EQ(g.free_view().free_cores, 16);
}

TEST(ClassifySpan, Examples) {
  const FlexTopoGraph g = build_topology(rtx4090_preset(), "n0");
  EXPECT_EQ(g.classify_span({range(24, 31), {0}}), AlignmentClass::kSingleNuma);
  // GPUs 0-3 sit on NUMAs 3, 2, 1, 0.
  EXPECT_EQ(g.classify_span({range(0, 31), {0, 1, 2, 3}}), AlignmentClass::kSingleSocket);
  // GPU 0 is on NUMA 3 and GPU 7 on NUMA 4.
  EXPECT_EQ(g.classify_span({{}, {0, 7}}), AlignmentClass::kCrossSocket);
  EXPECT_EQ(g.classify_span({{24, 32}, {}}), AlignmentClass::kCrossSocket);
  EXPECT_THROW(g.classify_span({}), TopologyError);
}

TEST(ClassifySpan, OrderIsTotal) {
  EXPECT_GT(AlignmentClass::kSingleNuma, AlignmentClass::kSingleSocket);
  EXPECT_GT(AlignmentClass::kSingleSocket, AlignmentClass::kCrossSocket);
}

ResourceSet random_set(std::mt19937_64& rng, const Layout& l) {
  ResourceSet rs;
  std::uniform_int_distribution<int> core(0, l.core_count() - 1);
  std::uniform_int_distribution<int> gpu(0, l.gpu_count() - 1);
  std::uniform_int_distribution<int> count(0, 4);
  const int nc = count(rng);
  const int ng = count(rng);
  for (int i = 0; i < nc; ++i) rs.cores.push_back(core(rng));
  for (int i = 0; i < ng; ++i) rs.gpus.push_back(gpu(rng));
  if (nc + ng == 0) rs.gpus.push_back(gpu(rng));
  rs.normalize();
  return rs;
}

TEST(ClassifySpanProperty, MonotoneUnderUnion) {
  std::mt19937_64 rng(11);
  for (const auto& spec : {rtx4090_preset(), a100_preset()}) {
    const FlexTopoGraph g = build_topology(spec, "n");
    for (int t = 0; t < 2000; ++t) {
      const ResourceSet a = random_set(rng, g.layout());
      ResourceSet u = a;
      u += random_set(rng, g.layout());
      EXPECT_LE(g.classify_span(u), g.classify_span(a));
    }
  }
}

TEST(GraphProperty, ConservationUnderRandomMutations) {
  std::mt19937_64 rng(5);
  FlexTopoGraph g = build_topology(rtx4090_preset(), "n");
  const FlexTopoGraph fresh = g;
  const auto edges = g.edges();
  std::vector<std::string> live;
  int next = 0;
  for (int step = 0; step < 3000; ++step) {
    const bool release = !live.empty() && rng() % 3 == 0;
    if (release) {
      const std::size_t k = rng() % live.size();
      g.release_allocation(live[k]);
      live.erase(live.begin() + static_cast<long>(k));
    } else {
      const ResourceSet rs = random_set(rng, g.layout());
      const std::string id = "i" + std::to_string(next++);
      const FlexTopoGraph before = g;
      try {
        g.apply_allocation(id, rs);
        live.push_back(id);
      } catch (const AllocationError&) {
        ASSERT_EQ(g, before);
      }
    }
    ASSERT_TRUE(conserved(g));
    ASSERT_EQ(g.edges(), edges);
  }
  // Ownership is disjoint: every resource lists one owner, and each owner's
  // footprint reproduces exactly the resources naming it.
  int owned = 0;
  for (const auto& id : g.owners()) {
    const ResourceSet fp = g.footprint_of(id);
    owned += static_cast<int>(fp.cores.size() + fp.gpus.size());
  }
  int allocated = 0;
  for (const auto& c : g.cores()) allocated += c.status == Status::kAllocated;
  for (const auto& gpu : g.gpus()) allocated += gpu.status == Status::kAllocated;
  EXPECT_EQ(owned, allocated);
  for (const auto& id : live) g.release_allocation(id);
  EXPECT_EQ(g, fresh);
}

TEST(Snapshot, RoundTripsBitExactly) {
  FlexTopoGraph g = build_topology(rtx4090_preset(), "node \"7\"");
  g.apply_allocation("B-1", {range(0, 31), {0, 1, 2, 3}});
  g.apply_allocation("C-2", {{40, 41, 42}, {6}});
  g.fail_gpu(7);
  g.socket_attributes(1)["vendor"] = "x y";
  const std::string text = serialize(g);
  const auto parsed = parse_snapshots(text);
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed[0], g);
  EXPECT_EQ(serialize(parsed[0]), text);
}

TEST(Snapshot, MultipleServersAndA100) {
  std::vector<FlexTopoGraph> gs{build_topology(a100_preset(), "a"), build_topology(rtx4090_preset(), "b")};
  gs[0].apply_allocation("x", {range(0, 15), {0, 1}});
  const std::string text = serialize(gs);
  const auto parsed = parse_snapshots(text);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0], gs[0]);
  EXPECT_EQ(parsed[1], gs[1]);
  EXPECT_EQ(serialize(parsed), text);
}

TEST(Snapshot, MalformedInputCarriesLine) {
  const std::string text = serialize(build_topology(rtx4090_preset(), "n"));
  try {
    parse_snapshots(text.substr(0, text.size() / 2));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 0);
  }
  try {
    parse_snapshots("server \"n\"\nbogus line here\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

}  // namespace
}  // namespace flextopo
