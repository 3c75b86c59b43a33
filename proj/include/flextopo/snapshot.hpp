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

// Text snapshot of FlexTopo graphs.
//
// One document per server:
//
//   server "node-000"
//   topology sockets=2 numas_per_socket=4 cores_per_numa=8 gpus_per_numa=1 ...
//   distance 10 12 12 12 32 32 32 32
//   ...
//   node socket 0
//   node numa 0 socket=0
//   node coregroup 0 status=allocated used_by="C-7"
//   node core 0 status=allocated used_by="C-7"
//   node gpu 0 uuid="node-000/0" model="..." memory_mb=24564 status=free health=ok
//   edge host socket:0 coregroup:0
//   edge contain coregroup:0 core:0
//   edge localized coregroup:0 numa:0
//   edge nearby gpu:0 numa:3
//   end
//
// Socket and NUMA nodes carry their extensible attributes as x.<key>="...".
// A cluster snapshot is the concatenation of server documents. Lines starting
// with '#' are comments. serialize(parse(text)) == text for canonical input.

#pragma once

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flextopo/error.hpp"
#include "flextopo/graph.hpp"

namespace flextopo {

namespace snapshot_detail {

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') {
      out += '\\';
      out += ch;
    } else if (ch == '\n') {
      out += "\\n";
    } else {
      out += ch;
    }
  }
  out += '"';
  return out;
}

struct Token {
  std::string key;    // empty for bare words
  std::string value;
};

inline std::vector<Token> tokenize(std::string_view line, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ' || line[i] == '\t' || line[i] == '\r') {
      ++i;
      continue;
    }
    Token tok;
    std::string word;
    bool has_key = false;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
      if (line[i] == '=' && !has_key) {
        tok.key = word;
        word.clear();
        has_key = true;
        ++i;
        continue;
      }
      if (line[i] == '"') {
        ++i;
        bool closed = false;
        while (i < line.size()) {
          const char ch = line[i++];
          if (ch == '"') {
            closed = true;
            break;
          }
          if (ch == '\\') {
            if (i >= line.size()) break;
            const char esc = line[i++];
            word += esc == 'n' ? '\n' : esc;
          } else {
            word += ch;
          }
        }
        if (!closed) throw ParseError(line_no, "unterminated string");
        continue;
      }
      word += line[i++];
    }
    tok.value = word;
    out.push_back(std::move(tok));
  }
  return out;
}

inline int to_int(std::string_view s, int line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line_no, "expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline NodeRef parse_ref(std::string_view s, int line_no) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw ParseError(line_no, "bad node reference '" + std::string(s) + "'");
  const auto kind = s.substr(0, colon);
  const int id = to_int(s.substr(colon + 1), line_no);
  for (auto k : {NodeKind::kSocket, NodeKind::kCoreGroup, NodeKind::kCore, NodeKind::kNuma,
                 NodeKind::kGpu}) {
    if (to_string(k) == kind) return {k, id};
  }
  throw ParseError(line_no, "unknown node kind '" + std::string(kind) + "'");
}

inline std::string ref_string(const NodeRef& r) {
  return std::string(to_string(r.kind)) + ":" + std::to_string(r.id);
}

inline void write_attrs(std::ostringstream& os, const Attributes& attrs) {
  for (const auto& [k, v] : attrs) os << " x." << k << "=" << quote(v);
}

}  // namespace snapshot_detail

inline std::string serialize(const FlexTopoGraph& graph) {
  using snapshot_detail::quote;
  const TopologySpec& spec = graph.spec();
  std::ostringstream os;
  os << "server " << quote(graph.server_id()) << "\n";
  os << "topology sockets=" << spec.socket_count << " numas_per_socket=" << spec.numas_per_socket
     << " cores_per_numa=" << spec.cores_per_numa << " gpus_per_numa=" << spec.gpus_per_numa
     << " coregroup_size=" << spec.coregroup_size << " gpu_model=" << quote(spec.gpu_model)
     << " gpu_memory_mb=" << spec.gpu_memory_mb << "\n";
  for (const auto& row : spec.numa_distance) {
    os << "distance";
    for (int v : row) os << " " << v;
    os << "\n";
  }
  for (const auto& s : graph.sockets()) {
    os << "node socket " << s.id;
    snapshot_detail::write_attrs(os, s.extra);
    os << "\n";
  }
  for (const auto& n : graph.numas()) {
    os << "node numa " << n.id << " socket=" << graph.layout().socket_of_numa(n.id);
    snapshot_detail::write_attrs(os, n.extra);
    os << "\n";
  }
  for (const auto& g : graph.core_groups()) {
    os << "node coregroup " << g.id << " status=" << to_string(g.status);
    if (!g.used_by.empty()) os << " used_by=" << quote(g.used_by);
    os << "\n";
  }
  for (const auto& c : graph.cores()) {
    os << "node core " << c.id << " status=" << to_string(c.status);
    if (!c.used_by.empty()) os << " used_by=" << quote(c.used_by);
    os << "\n";
  }
  for (const auto& g : graph.gpus()) {
    os << "node gpu " << g.index << " uuid=" << quote(g.uuid) << " model=" << quote(g.model)
       << " memory_mb=" << g.memory_mb << " status=" << to_string(g.status);
    if (!g.used_by.empty()) os << " used_by=" << quote(g.used_by);
    os << " health=" << (g.healthy ? "ok" : "failed") << "\n";
  }
  for (const auto& e : graph.edges()) {
    os << "edge " << to_string(e.kind) << " " << snapshot_detail::ref_string(e.from) << " "
       << snapshot_detail::ref_string(e.to) << "\n";
  }
  os << "end\n";
  return os.str();
}

inline std::string serialize(const std::vector<FlexTopoGraph>& graphs) {
  std::string out;
  for (const auto& g : graphs) out += serialize(g);
  return out;
}

/// Parses zero or more server documents. Structure is rebuilt from the
/// topology line and nearby edges, then every listed edge is checked against
/// it; node lines restore the allocation state.
inline std::vector<FlexTopoGraph> parse_snapshots(std::string_view text) {
  using namespace snapshot_detail;
  std::vector<FlexTopoGraph> out;

  struct Pending {
    int start_line = 0;
    std::string server;
    TopologySpec spec;
    bool have_topology = false;
    std::vector<std::pair<int, std::vector<Token>>> nodes;
    std::vector<std::pair<int, Edge>> edges;
  };
  std::optional<Pending> cur;

  auto status_of = [](const std::string& s, int line_no) {
    if (s == "free") return Status::kFree;
    if (s == "allocated") return Status::kAllocated;
    throw ParseError(line_no, "bad status '" + s + "'");
  };

  auto finish = [&](int line_no) {
    Pending& p = *cur;
    if (!p.have_topology) throw ParseError(p.start_line, "server without topology line");
    std::vector<int> gpu_numa(p.spec.gpu_count(), -1);
    for (const auto& [ln, e] : p.edges) {
      if (e.kind != EdgeKind::kNearby) continue;
      if (e.from.kind != NodeKind::kGpu || e.to.kind != NodeKind::kNuma || e.from.id < 0 ||
          e.from.id >= p.spec.gpu_count()) {
        throw ParseError(ln, "malformed nearby edge");
      }
      gpu_numa[e.from.id] = e.to.id;
    }
    bool identity = true;
    for (int g = 0; g < p.spec.gpu_count(); ++g) {
      if (gpu_numa[g] < 0) throw ParseError(line_no, "gpu " + std::to_string(g) + " has no nearby edge");
      if (gpu_numa[g] != g / p.spec.gpus_per_numa) identity = false;
    }
    if (!identity) p.spec.gpu_numa = gpu_numa;
    LayoutPtr layout;
    try {
      layout = make_layout(p.spec);
    } catch (const TopologyError& e) {
      throw ParseError(p.start_line, e.what());
    }
    FlexTopoGraph graph(layout, p.server);
    const auto expected = graph.edges();
    if (expected.size() != p.edges.size()) throw ParseError(line_no, "edge list does not match topology");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (!(expected[i] == p.edges[i].second)) {
        throw ParseError(p.edges[i].first, "edge does not match topology");
      }
    }
    std::vector<std::pair<int, CoreGroupNode>> groups;
    for (auto& [ln, toks] : p.nodes) {
      const std::string& kind = toks[1].value;
      const int id = to_int(toks[2].value, ln);
      std::map<std::string, std::string> kv;
      for (std::size_t i = 3; i < toks.size(); ++i) {
        if (toks[i].key.empty()) throw ParseError(ln, "expected key=value");
        kv[toks[i].key] = toks[i].value;
      }
      auto extras = [&](Attributes& attrs) {
        for (const auto& [k, v] : kv) {
          if (k.rfind("x.", 0) == 0) attrs[k.substr(2)] = v;
        }
      };
      try {
        if (kind == "socket") {
          extras(graph.socket_attributes(id));
        } else if (kind == "numa") {
          extras(graph.numa_attributes(id));
        } else if (kind == "coregroup") {
          CoreGroupNode g;
          g.id = id;
          g.status = status_of(kv["status"], ln);
          g.used_by = kv["used_by"];
          groups.emplace_back(ln, g);
        } else if (kind == "core") {
          graph.restore_core(id, status_of(kv["status"], ln), kv["used_by"]);
        } else if (kind == "gpu") {
          GpuNode g;
          g.index = id;
          g.uuid = kv["uuid"];
          g.model = kv["model"];
          g.memory_mb = to_int(kv["memory_mb"], ln);
          g.status = status_of(kv["status"], ln);
          g.used_by = kv["used_by"];
          if (kv["health"] != "ok" && kv["health"] != "failed") throw ParseError(ln, "bad health");
          g.healthy = kv["health"] == "ok";
          graph.restore_gpu(g);
        } else {
          throw ParseError(ln, "unknown node kind '" + kind + "'");
        }
      } catch (const TopologyError& e) {
        throw ParseError(ln, e.what());
      } catch (const std::out_of_range&) {
        throw ParseError(ln, "node id out of range");
      }
    }
    for (const auto& [ln, g] : groups) {
      if (g.id < 0 || g.id >= static_cast<int>(graph.core_groups().size()) ||
          !(graph.core_groups()[g.id] == g)) {
        throw ParseError(ln, "coregroup state inconsistent with its cores");
      }
    }
    for (const auto& c : graph.cores()) {
      if ((c.status == Status::kAllocated) == c.used_by.empty()) {
        throw ParseError(line_no, "core " + std::to_string(c.id) + " status/used_by mismatch");
      }
    }
    for (const auto& g : graph.gpus()) {
      if ((g.status == Status::kAllocated) == g.used_by.empty()) {
        throw ParseError(line_no, "gpu " + std::to_string(g.index) + " status/used_by mismatch");
      }
    }
    out.push_back(std::move(graph));
    cur.reset();
  };

  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto toks = tokenize(line, line_no);
    if (toks.empty()) continue;
    const std::string& head = toks[0].value;
    if (head == "server") {
      if (cur) throw ParseError(line_no, "nested server document (missing 'end')");
      if (toks.size() != 2) throw ParseError(line_no, "expected: server \"<id>\"");
      cur.emplace();
      cur->start_line = line_no;
      cur->server = toks[1].value;
      continue;
    }
    if (!cur) throw ParseError(line_no, "'" + head + "' outside a server document");
    if (head == "topology") {
      std::map<std::string, std::string> kv;
      for (std::size_t i = 1; i < toks.size(); ++i) kv[toks[i].key] = toks[i].value;
      auto num = [&](const char* key) {
        if (!kv.count(key)) throw ParseError(line_no, std::string("topology missing ") + key);
        return to_int(kv[key], line_no);
      };
      cur->spec.socket_count = num("sockets");
      cur->spec.numas_per_socket = num("numas_per_socket");
      cur->spec.cores_per_numa = num("cores_per_numa");
      cur->spec.gpus_per_numa = num("gpus_per_numa");
      cur->spec.coregroup_size = num("coregroup_size");
      cur->spec.gpu_memory_mb = num("gpu_memory_mb");
      cur->spec.gpu_model = kv["gpu_model"];
      cur->have_topology = true;
    } else if (head == "distance") {
      std::vector<int> row;
      for (std::size_t i = 1; i < toks.size(); ++i) row.push_back(to_int(toks[i].value, line_no));
      cur->spec.numa_distance.push_back(std::move(row));
    } else if (head == "node") {
      if (toks.size() < 3) throw ParseError(line_no, "expected: node <kind> <id> ...");
      cur->nodes.emplace_back(line_no, std::move(toks));
    } else if (head == "edge") {
      if (toks.size() != 4) throw ParseError(line_no, "expected: edge <kind> <from> <to>");
      Edge e{};
      bool known = false;
      for (auto k : {EdgeKind::kHost, EdgeKind::kContain, EdgeKind::kLocalized, EdgeKind::kNearby}) {
        if (to_string(k) == toks[1].value) {
          e.kind = k;
          known = true;
        }
      }
      if (!known) throw ParseError(line_no, "unknown edge kind '" + toks[1].value + "'");
      e.from = parse_ref(toks[2].value, line_no);
      e.to = parse_ref(toks[3].value, line_no);
      cur->edges.emplace_back(line_no, e);
    } else if (head == "end") {
      finish(line_no);
    } else {
      throw ParseError(line_no, "unknown directive '" + head + "'");
    }
  }
  if (cur) throw ParseError(line_no, "unterminated server document");
  return out;
}

}  // namespace flextopo
