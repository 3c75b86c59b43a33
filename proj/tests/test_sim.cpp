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

#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace flextopo {
namespace {

using testing::conserved;
using testing::fingerprint;
using testing::guarantees_hold;
using testing::random_event_scenario;
using testing::scenario;

constexpr const char* kSmall = R"(
name: small
topology: rtx4090
servers: 4
saturation: {strategy: first_fit, fill: false}
workloads:
  - {name: hi, priority: 1000, preemptible: false, cpu: 16, gpu: 2,
     numa: guaranteed, socket: best_effort, replicas: 2}
  - {name: mid, priority: 500, preemptible: true, cpu: 16, gpu: 2, replicas: 6}
  - {name: lo, priority: 100, preemptible: true, cpu: 8, gpu: 1, replicas: 6}
seed: 3
)";

int free_gpus(const ClusterState& st) {
  int n = 0;
  for (const auto& g : st.servers()) n += g.free_view().free_gpus;
  return n;
}

int allocated_gpus(const ClusterState& st) {
  int n = 0;
  for (const auto& [id, inst] : st.instances()) n += static_cast<int>(inst.footprint.gpus.size());
  return n;
}

Simulator small_sim() {
  Simulator sim(parse_scenario(kSmall), SimOptions{});
  sim.initialize();
  return sim;
}

TEST(ApplyEvent, FailureOfFreeGpuRetiresIt) {
  Simulator sim = small_sim();
  const int before = free_gpus(sim.state());
  ASSERT_EQ(before, 32 - 2 * 2 - 6 * 2 - 6);
  const FlexTopoGraph& last = sim.state().server(3);
  int gpu = -1;
  for (int i = 0; i < static_cast<int>(last.gpus().size()); ++i) {
    if (last.gpus()[i].status == Status::kFree) gpu = i;
  }
  ASSERT_GE(gpu, 0);
  const auto instances = sim.state().instances().size();
  sim.apply_event({0, EventKind::kGpuFailure, "", 1, last.server_id(), gpu}, 0);
  EXPECT_EQ(free_gpus(sim.state()), before - 1);
  EXPECT_EQ(sim.state().instances().size(), instances);
  EXPECT_TRUE(conserved(sim.state().server(3)));
}

TEST(ApplyEvent, FailureOfAllocatedGpuKillsOwner) {
  Simulator sim = small_sim();
  const FlexTopoGraph& first = sim.state().server(0);
  const auto& gpu = first.gpus()[0];
  ASSERT_EQ(gpu.status, Status::kAllocated);
  const std::string owner = gpu.used_by;
  const std::string workload = sim.state().instance(owner).workload;
  const int width = static_cast<int>(sim.state().instance(owner).footprint.gpus.size());
  const int free_before = free_gpus(sim.state());
  sim.apply_event({0, EventKind::kGpuFailure, "", 1, first.server_id(), 0}, 0);
  EXPECT_FALSE(sim.state().has_instance(owner));
  EXPECT_EQ(free_gpus(sim.state()), free_before + width - 1);
  EXPECT_EQ(sim.metrics().timeseries[0].at(workload).killed, 1);
  EXPECT_EQ(sim.pending(), 1u);
  EXPECT_TRUE(conserved(sim.state().server(0)));
  EXPECT_NO_THROW(sim.state().check_integrity());
}

TEST(ApplyEvent, ScaleDownReleasesNewest) {
  Simulator sim = small_sim();
  ASSERT_EQ(sim.state().count_of("mid"), 6);
  std::vector<std::uint64_t> seqs;
  for (const auto& [id, inst] : sim.state().instances()) {
    if (inst.workload == "mid") seqs.push_back(inst.seq);
  }
  std::sort(seqs.begin(), seqs.end());
  sim.apply_event({0, EventKind::kScaleDown, "mid", 2, "", -1}, 0);
  EXPECT_EQ(sim.state().count_of("mid"), 4);
  for (const auto& [id, inst] : sim.state().instances()) {
    if (inst.workload == "mid") {
      EXPECT_LT(inst.seq, seqs[4]);
    }
  }
  EXPECT_EQ(sim.metrics().timeseries[0].at("mid").released, 2);
}

TEST(ApplyEvent, ScaleDownBeyondCountStopsAtZero) {
  Simulator sim = small_sim();
  sim.apply_event({0, EventKind::kScaleDown, "hi", 5, "", -1}, 0);
  EXPECT_EQ(sim.state().count_of("hi"), 0);
  EXPECT_EQ(sim.metrics().timeseries[0].at("hi").released, 2);
}

TEST(ApplyEvent, ScaleUpRecordsOnePerReplica) {
  Simulator sim = small_sim();
  sim.apply_event({0, EventKind::kScaleUp, "hi", 3, "", -1}, 0);
  ASSERT_EQ(sim.metrics().records.size(), 3u);
  for (const auto& r : sim.metrics().records) {
    EXPECT_EQ(r.preemptor, "hi");
    EXPECT_EQ(r.outcome, Outcome::kPlaced);
    EXPECT_TRUE(r.qos_satisfied);
  }
  EXPECT_EQ(sim.state().count_of("hi"), 5);
}

TEST(ApplyEvent, UnknownTargetsThrow) {
  Simulator sim = small_sim();
  EXPECT_THROW(sim.apply_event({0, EventKind::kGpuFailure, "", 1, "node-000", 8}, 0), Error);
  EXPECT_THROW(sim.apply_event({0, EventKind::kGpuFailure, "", 1, "nowhere", 0}, 0), Error);
  EXPECT_THROW(sim.apply_event({0, EventKind::kScaleUp, "ghost", 1, "", -1}, 0), Error);
  EXPECT_THROW(sim.apply_event({0, EventKind::kScaleDown, "ghost", 1, "", -1}, 0), Error);
}

TEST(ApplyEvent, FailedGpuStaysRetired) {
  Simulator sim = small_sim();
  const std::string server = sim.state().server(0).server_id();
  sim.apply_event({0, EventKind::kGpuFailure, "", 1, server, 1}, 0);
  sim.apply_event({0, EventKind::kScaleUp, "lo", 30, "", -1}, 0);
  sim.apply_event({0, EventKind::kScaleDown, "lo", 40, "", -1}, 0);
  sim.apply_event({0, EventKind::kGpuFailure, "", 1, server, 1}, 0);
  const auto& gpu = sim.state().server(0).gpus()[1];
  EXPECT_FALSE(gpu.healthy);
  EXPECT_EQ(gpu.status, Status::kFree);
  for (const auto& [id, inst] : sim.state().instances()) {
    if (inst.server != 0) continue;
    for (int g : inst.footprint.gpus) EXPECT_NE(g, 1) << id;
  }
}

TEST(Run, EmptyScheduleLeavesSaturation) {
  Scenario sc = parse_scenario(kSmall);
  const RunMetrics m = run(sc, SimOptions{});
  EXPECT_TRUE(m.records.empty());
  EXPECT_TRUE(m.timeseries.empty());
  const ClusterState initial = testing::initial_state(sc);
  ASSERT_EQ(m.snapshot.size(), initial.servers().size());
  for (std::size_t s = 0; s < m.snapshot.size(); ++s) {
    EXPECT_EQ(serialize(m.snapshot[s]), serialize(initial.server(s)));
  }
}

TEST(Run, SameSeedSameOutputs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 5; ++t) {
    const Scenario sc = random_event_scenario(rng, 60);
    for (PreemptMode mode : {PreemptMode::kBaseline, PreemptMode::kFlextopoImp}) {
      SimOptions o;
      o.mode = mode;
      EXPECT_EQ(fingerprint(run(sc, o)), fingerprint(run(sc, o)));
    }
  }
}

TEST(Run, ThreeNodesDeterministic) {
  const Scenario sc = scenario("three_nodes");
  for (PreemptMode mode : sc.modes) {
    SimOptions o;
    o.mode = mode;
    EXPECT_EQ(fingerprint(run(sc, o)), fingerprint(run(sc, o)));
  }
}

// end[c] = end[c-1] + placed - evicted - released - killed, per workload.
TEST(Property, TimeseriesBalances) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    Scenario sc = random_event_scenario(rng, 80);
    sc.autoscale = {4, 6, {"hi", "mid", "lo"}, true};
    SimOptions o;
    o.mode = t % 2 ? PreemptMode::kBaseline : PreemptMode::kFlextopoImp;
    const RunMetrics m = run(sc, o);
    std::map<std::string, int> prev = m.initial_counts;
    for (std::size_t c = 0; c < m.timeseries.size(); ++c) {
      for (const auto& [name, k] : m.timeseries[c]) {
        EXPECT_EQ(k.end, prev[name] + k.placed - k.evicted - k.released - k.killed)
            << "trial " << t << " cycle " << c << " " << name;
        prev[name] = k.end;
      }
    }
  }
}

TEST(Property, RandomEventsConserve) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    const Scenario sc = random_event_scenario(rng, 100);
    SimOptions o;
    o.mode = t % 2 ? PreemptMode::kBaseline : PreemptMode::kFlextopoImp;
    Simulator sim(sc, o);
    sim.initialize();
    const int total_gpus = 4 * 8;
    int retired = 0;
    for (const auto& e : sc.events) {
      sim.apply_event(e, e.cycle);
      for (const auto& g : sim.state().servers()) ASSERT_TRUE(conserved(g)) << "trial " << t;
      ASSERT_NO_THROW(sim.state().check_integrity());
      retired = 0;
      for (const auto& g : sim.state().servers()) {
        for (const auto& gpu : g.gpus()) retired += gpu.healthy ? 0 : 1;
      }
      ASSERT_EQ(free_gpus(sim.state()) + allocated_gpus(sim.state()) + retired, total_gpus);
    }
  }
}

// Topology-aware modes never commit a placement that breaks a guarantee.
TEST(Property, GuaranteesHoldUnderFlextopo) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    Scenario sc = random_event_scenario(rng, 100);
    sc.autoscale = {5, 8, {"hi", "mid"}, t % 2 == 0};
    SimOptions o;
    o.mode = t % 3 == 0 ? PreemptMode::kFlextopoExhaustive : PreemptMode::kFlextopoImp;
    const RunMetrics m = run(sc, o);
    for (const auto& g : m.snapshot) {
      for (const auto& owner : g.owners()) {
        const std::string wname = owner.substr(0, owner.find('-'));
        const auto it = std::find_if(sc.workloads.begin(), sc.workloads.end(),
                                     [&](const WorkloadSpec& w) { return w.name == wname; });
        ASSERT_NE(it, sc.workloads.end());
        EXPECT_TRUE(guarantees_hold(g.layout(), g.footprint_of(owner), *it)) << owner;
      }
    }
  }
}

TEST(Shadow, ImpNeverCostsMoreThanExhaustive) {
  SimOptions o;
  o.mode = PreemptMode::kFlextopoImp;
  o.shadow_exhaustive = true;
  const RunMetrics m = run(scenario("overhead"), o);
  int sourced = 0;
  for (const auto& r : m.records) {
    if (r.outcome == Outcome::kPlaced) {
      EXPECT_EQ(r.exhaustive_evaluations, -1);
      continue;
    }
    ++sourced;
    ASSERT_GE(r.exhaustive_evaluations, 0);
    EXPECT_LE(r.evaluations, r.exhaustive_evaluations) << r.index;
  }
  EXPECT_GT(sourced, 0);
}

TEST(Shadow, ExhaustiveModeMatchesItself) {
  Scenario sc = scenario("three_nodes");
  SimOptions o;
  o.mode = PreemptMode::kFlextopoExhaustive;
  const RunMetrics m = run(sc, o);
  for (const auto& r : m.records) {
    if (r.outcome != Outcome::kPlaced) {
      EXPECT_EQ(r.evaluations, r.exhaustive_evaluations);
    }
  }
}

TEST(Metrics, NearestRankPercentile) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 1);
  EXPECT_EQ(percentile(v, 50.0), 50);
  EXPECT_EQ(percentile(v, 90.0), 90);
  EXPECT_EQ(percentile(v, 100.0), 100);
  EXPECT_EQ(percentile(v, 0.0), 1);
  EXPECT_EQ(percentile(std::vector<int>{7}, 50.0), 7);
  EXPECT_THROW(percentile(std::vector<int>{}, 50.0), Error);
}

std::vector<PreemptionRecord> records(const std::string& w, int satisfied, int total) {
  std::vector<PreemptionRecord> out(total);
  for (int i = 0; i < total; ++i) {
    out[i].preemptor = w;
    out[i].qos_satisfied = i < satisfied;
    out[i].outcome = i < satisfied ? Outcome::kPreempted : Outcome::kFailed;
  }
  return out;
}

TEST(Metrics, HitRate) {
  EXPECT_DOUBLE_EQ(hit_rate(records("B", 2225, 5000), {"B"}).rate(), 0.445);
  EXPECT_DOUBLE_EQ(hit_rate(records("B", 5000, 5000), {"B"}).rate(), 1.0);
  EXPECT_DOUBLE_EQ(hit_rate(records("B", 0, 40), {"B"}).rate(), 0.0);
  EXPECT_THROW(hit_rate(records("D", 3, 3), {"B"}), Error);
  EXPECT_THROW(hit_rate(std::vector<PreemptionRecord>{}, {"B"}), Error);
  auto mixed = records("B", 1, 2);
  const auto d = records("D", 0, 10);
  mixed.insert(mixed.end(), d.begin(), d.end());
  EXPECT_DOUBLE_EQ(hit_rate(mixed, {"B"}).rate(), 0.5);
}

TEST(Metrics, DefaultFilterDropsWholeServerAndLowest) {
  const Scenario sc = scenario("saturated");
  EXPECT_EQ(default_hit_rate_filter(sc.workloads, sc.topology), (std::set<std::string>{"B", "C"}));
}

TEST(Metrics, LatencySummarySkipsPlaced) {
  std::vector<PreemptionRecord> rs(4);
  for (auto& r : rs) r.preemptor = "B";
  rs[0].outcome = Outcome::kPlaced;
  rs[0].evaluations = 1000;
  rs[1].outcome = Outcome::kPreempted;
  rs[1].evaluations = 4;
  rs[2].outcome = Outcome::kFailed;
  rs[2].evaluations = 0;
  rs[3].outcome = Outcome::kPreempted;
  rs[3].evaluations = 10;
  const auto s = latency_summary(rs);
  const auto& stats = s.at({"B", "flextopo_imp"});
  EXPECT_EQ(stats.evaluations.count, 3u);
  EXPECT_DOUBLE_EQ(stats.evaluations.p50, 4.0);
  EXPECT_DOUBLE_EQ(stats.evaluations.p90, 10.0);
  EXPECT_EQ(stats.exhaustive_evaluations.count, 0u);
}

TEST(Metrics, RecordsCsvHeaderIsFrozen) {
  std::ostringstream os;
  write_records_csv(os, std::vector<PreemptionRecord>{});
  EXPECT_EQ(os.str(),
            "cycle,index,mode,preemptor,preemptor_gpus,outcome,instance,server,victims,achieved_class,"
            "qos_satisfied,evaluations,exhaustive_evaluations,wall_time_us\n");
}

TEST(Metrics, CsvRow) {
  PreemptionRecord r;
  r.cycle = 2;
  r.index = 9;
  r.preemptor = "B";
  r.preemptor_gpus = 2;
  r.outcome = Outcome::kPreempted;
  r.instance = "B-40";
  r.server = "node-001";
  r.victims = 2;
  r.achieved = AlignmentClass::kSingleSocket;
  r.qos_satisfied = true;
  r.evaluations = 12;
  r.wall_time_us = 3.14159;
  std::ostringstream os;
  write_records_csv(os, std::vector<PreemptionRecord>{r});
  const std::string body = os.str().substr(os.str().find('\n') + 1);
  EXPECT_EQ(body, "2,9,flextopo_imp,B,2,preempted,B-40,node-001,2,single_socket,1,12,-1,3.142\n");
}

TEST(Metrics, SummaryWithoutTimingIsStable) {
  const Scenario sc = scenario("three_nodes");
  const auto filter = default_hit_rate_filter(sc.workloads, sc.topology);
  const RunMetrics a = run(sc, SimOptions{});
  const RunMetrics b = run(sc, SimOptions{});
  EXPECT_EQ(summary_json(a, filter, false).dump(), summary_json(b, filter, false).dump());
  EXPECT_FALSE(summary_json(a, filter, false).dump().find("wall_time_us") != std::string::npos);
}

}  // namespace
}  // namespace flextopo
