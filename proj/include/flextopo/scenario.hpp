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

// Scenario documents (YAML). Top-level keys:
//
//   name: saturated
//   topology: rtx4090            # preset name, or a mapping with the
//                                # TopologySpec fields
//   servers: 100                 # or server_names: [m1, m2, m3]
//   server_prefix: node-
//   numa_rule: per_gpu_locality  # or minimal_span
//   saturation: {strategy: first_fit, fill: true}
//   workloads:
//     - {name: B, priority: 1000, preemptible: false, cpu: 32, gpu: 4,
//        numa: guaranteed, socket: best_effort, replicas: 40}
//   placements:                  # optional; replaces saturation
//     - {workload: B, server: m1, gpus: [4, 5], cores: ["32-47"]}
//   autoscale: {cycles: 100, per_cycle: 50, workloads: [B, C], valley: true}
//   events:
//     - {cycle: 0, kind: scale_up, workload: B, delta: 2}
//     - {cycle: 1, kind: scale_down, workload: C, delta: 1}
//     - {cycle: 2, kind: gpu_failure, server: node-003, gpu: 5}
//   policy: {alpha: 0.5, exhaustive_cap: 16, baseline_shuffle: false,
//            t_values: {single_numa: 1.0, single_socket: 0.5,
//                       cross_socket: 0.0}}
//   cycle_semantics: independent  # or sequential
//   seed: 42
//   modes: [baseline, flextopo_imp]
//
// Unknown keys are errors. Every error carries the 1-based source line.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "flextopo/cluster.hpp"
#include "flextopo/error.hpp"
#include "flextopo/policy.hpp"
#include "flextopo/topology.hpp"

namespace flextopo {

enum class EventKind : std::uint8_t { kScaleUp, kScaleDown, kGpuFailure };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kScaleUp: return "scale_up";
    case EventKind::kScaleDown: return "scale_down";
    case EventKind::kGpuFailure: return "gpu_failure";
  }
  return "?";
}

struct Event {
  int cycle = 0;
  EventKind kind = EventKind::kScaleUp;
  std::string workload;  // scale_up, scale_down
  int delta = 1;
  std::string server;  // gpu_failure
  int gpu = -1;
  int line = 0;
};

enum class CycleSemantics : std::uint8_t {
  // Autoscale scale-ups are sourced against the cycle-start state and
  // recorded from there; the live state takes their commits in order.
  kIndependent,
  // Each recorded scale-up sees the effects of the previous ones.
  kSequential,
};

inline std::string_view to_string(CycleSemantics s) {
  return s == CycleSemantics::kSequential ? "sequential" : "independent";
}

inline std::optional<CycleSemantics> cycle_semantics_from_string(std::string_view s) {
  if (s == "sequential") return CycleSemantics::kSequential;
  if (s == "independent") return CycleSemantics::kIndependent;
  return std::nullopt;
}

struct AutoscaleSpec {
  int cycles = 0;
  int per_cycle = 0;
  std::vector<std::string> workloads;  // round-robin order
  bool valley = true;  // end each cycle by undoing its scale-ups and refilling
};

struct FixedPlacement {
  std::string workload;
  std::string server;
  ResourceSet resources;
  int line = 0;
};

struct Scenario {
  std::string name = "scenario";
  std::string topology_name;  // preset name, empty when inline
  TopologySpec topology = rtx4090_preset();
  int servers = 1;
  std::vector<std::string> server_names;  // explicit names; empty means generated
  std::string server_prefix = "node-";
  NumaRule numa_rule = NumaRule::kPerGpuLocality;
  SaturationStrategy saturation = SaturationStrategy::kFirstFit;
  bool fill = true;
  std::vector<WorkloadSpec> workloads;
  std::vector<int> workload_lines;
  std::vector<FixedPlacement> placements;
  AutoscaleSpec autoscale;
  std::vector<Event> events;
  PolicyOptions policy;
  CycleSemantics semantics = CycleSemantics::kIndependent;
  std::uint64_t seed = 1;
  std::vector<PreemptMode> modes{PreemptMode::kBaseline, PreemptMode::kFlextopoImp};

  int cycles() const {
    int last = autoscale.cycles;
    for (const auto& e : events) last = std::max(last, e.cycle + 1);
    return last;
  }

  /// Empty servers as described by the scenario.
  ClusterState make_cluster() const {
    if (server_names.empty()) {
      return ClusterState::homogeneous(topology, servers, workloads, numa_rule, server_prefix);
    }
    auto layout = make_layout(topology);
    std::vector<FlexTopoGraph> graphs;
    for (const auto& name : server_names) graphs.emplace_back(layout, name);
    return ClusterState(std::move(graphs), workloads, numa_rule);
  }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line + 1; }

[[noreturn]] inline void fail_at(const YAML::Node& n, const std::string& msg) {
  throw ParseError(line_of(n), msg);
}

inline void require_map(const YAML::Node& n, const std::string& what) {
  if (!n.IsMap()) fail_at(n, what + " must be a mapping");
}

inline void check_keys(const YAML::Node& n, const std::set<std::string>& allowed,
                       const std::string& what) {
  require_map(n, what);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail_at(kv.first, "unknown key '" + key + "' in " + what);
  }
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail_at(n, what + " must be a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail_at(n, "cannot read " + what + " from '" + n.Scalar() + "'");
  }
}

inline YAML::Node required(const YAML::Node& parent, const std::string& key, const std::string& what) {
  YAML::Node n = parent[key];
  if (!n) fail_at(parent, what + " is missing '" + key + "'");
  return n;
}

inline QosLevel parse_qos(const YAML::Node& n) {
  auto q = qos_from_string(scalar<std::string>(n, "qos level"));
  if (!q) fail_at(n, "qos level must be guaranteed, best_effort or none");
  return *q;
}

// Integer list; strings "a-b" expand to inclusive ranges.
inline std::vector<int> parse_ids(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence()) fail_at(n, what + " must be a list");
  std::vector<int> out;
  for (const auto& item : n) {
    const auto text = scalar<std::string>(item, what);
    const auto dash = text.find('-', 1);
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(text));
      } else {
        const int lo = std::stoi(text.substr(0, dash));
        const int hi = std::stoi(text.substr(dash + 1));
        if (hi < lo) fail_at(item, "empty range '" + text + "' in " + what);
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      fail_at(item, "bad id '" + text + "' in " + what);
    }
  }
  return out;
}

inline TopologySpec parse_topology(const YAML::Node& n, std::string& preset_name) {
  if (n.IsScalar()) {
    preset_name = n.as<std::string>();
    auto spec = preset_by_name(preset_name);
    if (!spec) fail_at(n, "unknown topology preset '" + preset_name + "' (rtx4090, a100)");
    return *spec;
  }
  check_keys(n,
             {"socket_count", "numas_per_socket", "cores_per_numa", "gpus_per_numa", "coregroup_size",
              "numa_distance", "gpu_numa", "gpu_model", "gpu_memory_mb"},
             "topology");
  preset_name.clear();
  TopologySpec spec;
  spec.socket_count = scalar<int>(required(n, "socket_count", "topology"), "socket_count");
  spec.numas_per_socket = scalar<int>(required(n, "numas_per_socket", "topology"), "numas_per_socket");
  spec.cores_per_numa = scalar<int>(required(n, "cores_per_numa", "topology"), "cores_per_numa");
  spec.gpus_per_numa = scalar<int>(required(n, "gpus_per_numa", "topology"), "gpus_per_numa");
  if (n["coregroup_size"]) {
    spec.coregroup_size = scalar<int>(n["coregroup_size"], "coregroup_size");
  } else if (spec.gpus_per_numa > 0) {
    spec.coregroup_size = std::max(1, spec.cores_per_numa / spec.gpus_per_numa);
  }
  if (auto d = n["numa_distance"]) {
    if (!d.IsSequence()) fail_at(d, "numa_distance must be a list of rows");
    for (const auto& row : d) spec.numa_distance.push_back(parse_ids(row, "numa_distance row"));
  }
  if (auto g = n["gpu_numa"]) spec.gpu_numa = parse_ids(g, "gpu_numa");
  if (auto m = n["gpu_model"]) spec.gpu_model = scalar<std::string>(m, "gpu_model");
  if (auto m = n["gpu_memory_mb"]) spec.gpu_memory_mb = scalar<int>(m, "gpu_memory_mb");
  try {
    validate(spec);
  } catch (const TopologyError& e) {
    fail_at(n, e.what());
  }
  return spec;
}

inline WorkloadSpec parse_workload(const YAML::Node& n) {
  check_keys(n, {"name", "priority", "preemptible", "cpu", "gpu", "numa", "socket", "replicas"},
             "workload");
  WorkloadSpec w;
  w.name = scalar<std::string>(required(n, "name", "workload"), "workload name");
  w.priority = scalar<int>(required(n, "priority", "workload"), "priority");
  if (w.priority < 1) fail_at(n["priority"], "priority must be a positive integer");
  if (n["preemptible"]) w.preemptible = scalar<bool>(n["preemptible"], "preemptible");
  if (n["cpu"]) w.request.cpu_cores = scalar<int>(n["cpu"], "cpu");
  if (n["gpu"]) w.request.gpus = scalar<int>(n["gpu"], "gpu");
  if (w.request.cpu_cores < 0 || w.request.gpus < 0 ||
      (w.request.cpu_cores == 0 && w.request.gpus == 0)) {
    fail_at(n, "workload " + w.name + " must request at least one core or GPU");
  }
  if (n["numa"]) w.qos.numa = parse_qos(n["numa"]);
  if (n["socket"]) w.qos.socket = parse_qos(n["socket"]);
  if (n["replicas"]) w.initial_replicas = scalar<int>(n["replicas"], "replicas");
  if (w.initial_replicas < 0) fail_at(n["replicas"], "replicas must be >= 0");
  return w;
}

inline Event parse_event(const YAML::Node& n) {
  check_keys(n, {"cycle", "kind", "workload", "delta", "server", "gpu", "gpu_uuid"}, "event");
  Event e;
  e.line = line_of(n);
  e.cycle = scalar<int>(required(n, "cycle", "event"), "cycle");
  if (e.cycle < 0) fail_at(n["cycle"], "cycle must be >= 0");
  const auto kind = scalar<std::string>(required(n, "kind", "event"), "kind");
  if (kind == "scale_up" || kind == "scale_down") {
    e.kind = kind == "scale_up" ? EventKind::kScaleUp : EventKind::kScaleDown;
    e.workload = scalar<std::string>(required(n, "workload", "event"), "workload");
    if (n["delta"]) e.delta = scalar<int>(n["delta"], "delta");
    if (e.delta < 1) fail_at(n["delta"], "delta must be >= 1");
  } else if (kind == "gpu_failure") {
    e.kind = EventKind::kGpuFailure;
    if (auto uuid = n["gpu_uuid"]) {
      const auto text = scalar<std::string>(uuid, "gpu_uuid");
      const auto slash = text.rfind('/');
      if (slash == std::string::npos) fail_at(uuid, "gpu_uuid must look like <server>/<index>");
      e.server = text.substr(0, slash);
      try {
        e.gpu = std::stoi(text.substr(slash + 1));
      } catch (const std::logic_error&) {
        fail_at(uuid, "gpu_uuid must look like <server>/<index>");
      }
    } else {
      e.server = scalar<std::string>(required(n, "server", "event"), "server");
      e.gpu = scalar<int>(required(n, "gpu", "event"), "gpu");
    }
  } else {
    fail_at(n["kind"], "event kind must be scale_up, scale_down or gpu_failure");
  }
  return e;
}

inline void parse_policy(const YAML::Node& n, PolicyOptions& p) {
  check_keys(n, {"alpha", "t_values", "exhaustive_cap", "baseline_shuffle"}, "policy");
  if (n["alpha"]) p.params.alpha = scalar<double>(n["alpha"], "alpha");
  if (auto t = n["t_values"]) {
    check_keys(t, {"single_numa", "single_socket", "cross_socket"}, "t_values");
    for (const auto& kv : t) {
      const auto cls = alignment_from_string(kv.first.as<std::string>());
      p.params.t_values[static_cast<std::size_t>(*cls)] = scalar<double>(kv.second, "t value");
    }
  }
  if (n["exhaustive_cap"]) p.exhaustive_cap = scalar<int>(n["exhaustive_cap"], "exhaustive_cap");
  if (p.exhaustive_cap < 1 || p.exhaustive_cap > 30) {
    fail_at(n["exhaustive_cap"], "exhaustive_cap must lie in [1, 30]");
  }
  if (n["baseline_shuffle"]) p.baseline_shuffle = scalar<bool>(n["baseline_shuffle"], "baseline_shuffle");
  try {
    p.params.validate();
  } catch (const PolicyError& e) {
    fail_at(n, e.what());
  }
}

}  // namespace detail

/// Parses a scenario document. Throws ParseError on schema violations.
inline Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.mark.line + 1, e.msg);
  }
  using detail::fail_at;
  using detail::scalar;
  if (!root || root.IsNull()) throw ParseError(1, "empty scenario document");
  detail::check_keys(root,
                     {"name", "topology", "servers", "server_names", "server_prefix", "numa_rule",
                      "saturation", "workloads", "placements", "autoscale", "events", "policy",
                      "cycle_semantics", "seed", "modes"},
                     "scenario");
  Scenario sc;
  if (root["name"]) sc.name = scalar<std::string>(root["name"], "name");
  sc.topology = detail::parse_topology(detail::required(root, "topology", "scenario"), sc.topology_name);
  if (auto names = root["server_names"]) {
    if (!names.IsSequence() || names.size() == 0) fail_at(names, "server_names must be a non-empty list");
    std::set<std::string> seen;
    for (const auto& n : names) {
      auto name = scalar<std::string>(n, "server name");
      if (!seen.insert(name).second) fail_at(n, "duplicate server name '" + name + "'");
      sc.server_names.push_back(std::move(name));
    }
    sc.servers = static_cast<int>(sc.server_names.size());
    if (root["servers"] && scalar<int>(root["servers"], "servers") != sc.servers) {
      fail_at(root["servers"], "servers disagrees with the length of server_names");
    }
  } else {
    sc.servers = scalar<int>(detail::required(root, "servers", "scenario"), "servers");
    if (sc.servers < 1) fail_at(root["servers"], "servers must be >= 1");
  }
  if (root["server_prefix"]) sc.server_prefix = scalar<std::string>(root["server_prefix"], "server_prefix");
  if (auto r = root["numa_rule"]) {
    auto rule = numa_rule_from_string(scalar<std::string>(r, "numa_rule"));
    if (!rule) fail_at(r, "numa_rule must be per_gpu_locality or minimal_span");
    sc.numa_rule = *rule;
  }
  if (auto s = root["saturation"]) {
    detail::check_keys(s, {"strategy", "fill"}, "saturation");
    if (auto st = s["strategy"]) {
      auto strategy = saturation_from_string(scalar<std::string>(st, "strategy"));
      if (!strategy) fail_at(st, "saturation strategy must be first_fit or random");
      sc.saturation = *strategy;
    }
    if (s["fill"]) sc.fill = scalar<bool>(s["fill"], "fill");
  }
  const YAML::Node workloads = detail::required(root, "workloads", "scenario");
  if (!workloads.IsSequence() || workloads.size() == 0) {
    fail_at(workloads, "workloads must be a non-empty list");
  }
  std::set<std::string> names;
  for (const auto& n : workloads) {
    WorkloadSpec w = detail::parse_workload(n);
    if (!names.insert(w.name).second) fail_at(n, "duplicate workload '" + w.name + "'");
    sc.workloads.push_back(std::move(w));
    sc.workload_lines.push_back(detail::line_of(n));
  }
  if (auto ps = root["placements"]) {
    if (!ps.IsSequence()) fail_at(ps, "placements must be a list");
    for (const auto& n : ps) {
      detail::check_keys(n, {"workload", "server", "gpus", "cores"}, "placement");
      FixedPlacement p;
      p.line = detail::line_of(n);
      p.workload = scalar<std::string>(detail::required(n, "workload", "placement"), "workload");
      p.server = scalar<std::string>(detail::required(n, "server", "placement"), "server");
      if (n["gpus"]) p.resources.gpus = detail::parse_ids(n["gpus"], "gpus");
      if (n["cores"]) p.resources.cores = detail::parse_ids(n["cores"], "cores");
      p.resources.normalize();
      sc.placements.push_back(std::move(p));
    }
  }
  if (auto a = root["autoscale"]) {
    detail::check_keys(a, {"cycles", "per_cycle", "workloads", "valley"}, "autoscale");
    sc.autoscale.cycles = scalar<int>(detail::required(a, "cycles", "autoscale"), "cycles");
    sc.autoscale.per_cycle = scalar<int>(detail::required(a, "per_cycle", "autoscale"), "per_cycle");
    if (sc.autoscale.cycles < 0 || sc.autoscale.per_cycle < 0) {
      fail_at(a, "autoscale cycles and per_cycle must be >= 0");
    }
    const YAML::Node ws = detail::required(a, "workloads", "autoscale");
    if (!ws.IsSequence() || ws.size() == 0) fail_at(ws, "autoscale workloads must be a non-empty list");
    for (const auto& n : ws) sc.autoscale.workloads.push_back(scalar<std::string>(n, "workload"));
    if (a["valley"]) sc.autoscale.valley = scalar<bool>(a["valley"], "valley");
  }
  if (auto es = root["events"]) {
    if (!es.IsSequence()) fail_at(es, "events must be a list");
    for (const auto& n : es) sc.events.push_back(detail::parse_event(n));
    std::stable_sort(sc.events.begin(), sc.events.end(),
                     [](const Event& a, const Event& b) { return a.cycle < b.cycle; });
  }
  if (auto p = root["policy"]) detail::parse_policy(p, sc.policy);
  if (auto c = root["cycle_semantics"]) {
    auto sem = cycle_semantics_from_string(scalar<std::string>(c, "cycle_semantics"));
    if (!sem) fail_at(c, "cycle_semantics must be sequential or independent");
    sc.semantics = *sem;
  }
  if (root["seed"]) sc.seed = scalar<std::uint64_t>(root["seed"], "seed");
  if (auto ms = root["modes"]) {
    if (!ms.IsSequence() || ms.size() == 0) fail_at(ms, "modes must be a non-empty list");
    sc.modes.clear();
    for (const auto& n : ms) {
      auto mode = preempt_mode_from_string(scalar<std::string>(n, "mode"));
      if (!mode) fail_at(n, "mode must be baseline, flextopo_imp or flextopo_exhaustive");
      sc.modes.push_back(*mode);
    }
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

struct Finding {
  int line = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<std::string> notes;
  long long gpus_requested = 0;
  long long gpus_available = 0;
  long long cores_requested = 0;
  long long cores_available = 0;

  bool ok() const { return errors.empty(); }
};

/// Semantic checks on a parsed scenario: requests fit one server, guaranteed
/// QoS is satisfiable on an empty server, initial replicas fit the cluster,
/// and autoscale/events/placements reference known entities.
inline ValidationReport validate_scenario(const Scenario& sc) {
  ValidationReport r;
  const auto& spec = sc.topology;
  auto err = [&](int line, std::string msg) { r.errors.push_back({line, std::move(msg)}); };
  std::unique_ptr<Layout> layout;
  try {
    layout = std::make_unique<Layout>(spec);
  } catch (const TopologyError& e) {
    err(0, std::string("topology: ") + e.what());
    return r;
  }
  const FreeState empty = [&] {
    FreeState st;
    for (int n = 0; n < layout->numa_count(); ++n) st.cores[n] = spec.cores_per_numa;
    st.gpus = layout->gpu_count() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << layout->gpu_count()) - 1;
    return st;
  }();
  std::set<std::string> names;
  for (std::size_t i = 0; i < sc.workloads.size(); ++i) {
    const auto& w = sc.workloads[i];
    const int line = i < sc.workload_lines.size() ? sc.workload_lines[i] : 0;
    names.insert(w.name);
    if (w.request.gpus > spec.gpu_count() || w.request.cpu_cores > spec.core_count()) {
      err(line, "workload " + w.name + " requests " + std::to_string(w.request.cpu_cores) + " cores / " +
                    std::to_string(w.request.gpus) + " GPUs but a server has " +
                    std::to_string(spec.core_count()) + " / " + std::to_string(spec.gpu_count()));
      continue;
    }
    if (!plan_placement(*layout, empty, w.request, w.qos.guaranteed_only(), sc.numa_rule,
                        SearchGoal::kAnyFeasible)) {
      err(line, "workload " + w.name + ": guaranteed topology QoS cannot be met even on an empty server");
    }
    r.gpus_requested += static_cast<long long>(w.initial_replicas) * w.request.gpus;
    r.cores_requested += static_cast<long long>(w.initial_replicas) * w.request.cpu_cores;
  }
  r.gpus_available = static_cast<long long>(sc.servers) * spec.gpu_count();
  r.cores_available = static_cast<long long>(sc.servers) * spec.core_count();
  if (r.gpus_requested > r.gpus_available) {
    err(0, "initial replicas request " + std::to_string(r.gpus_requested) + " GPUs but the cluster has " +
               std::to_string(r.gpus_available));
  }
  if (r.cores_requested > r.cores_available) {
    err(0, "initial replicas request " + std::to_string(r.cores_requested) +
               " cores but the cluster has " + std::to_string(r.cores_available));
  }
  r.notes.push_back("capacity: " + std::to_string(r.gpus_requested) + " GPUs requested vs " +
                    std::to_string(r.gpus_available) + " available");
  for (const auto& w : sc.autoscale.workloads) {
    if (!names.count(w)) err(0, "autoscale references unknown workload " + w);
  }
  std::set<std::string> servers;
  if (sc.server_names.empty()) {
    ClusterState probe = ClusterState::homogeneous(spec, sc.servers, {}, sc.numa_rule, sc.server_prefix);
    for (const auto& g : probe.servers()) servers.insert(g.server_id());
  } else {
    servers.insert(sc.server_names.begin(), sc.server_names.end());
  }
  for (const auto& e : sc.events) {
    if (e.kind == EventKind::kGpuFailure) {
      if (!servers.count(e.server)) err(e.line, "gpu_failure on unknown server " + e.server);
      if (e.gpu < 0 || e.gpu >= spec.gpu_count()) {
        err(e.line, "gpu_failure on unknown gpu " + std::to_string(e.gpu));
      }
    } else if (!names.count(e.workload)) {
      err(e.line, std::string(to_string(e.kind)) + " references unknown workload " + e.workload);
    }
  }
  for (const auto& p : sc.placements) {
    if (!names.count(p.workload)) err(p.line, "placement references unknown workload " + p.workload);
    if (!servers.count(p.server)) err(p.line, "placement references unknown server " + p.server);
    for (int c : p.resources.cores) {
      if (c < 0 || c >= spec.core_count()) err(p.line, "placement core " + std::to_string(c) + " out of range");
    }
    for (int g : p.resources.gpus) {
      if (g < 0 || g >= spec.gpu_count()) err(p.line, "placement gpu " + std::to_string(g) + " out of range");
    }
  }
  return r;
}

}  // namespace flextopo
