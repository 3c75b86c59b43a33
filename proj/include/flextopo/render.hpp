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
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flextopo/graph.hpp"
#include "flextopo/placement.hpp"

namespace flextopo {

/// Workload of an instance id of the form <workload>-<seq>.
inline std::string workload_of(const std::string& instance) {
  const auto dash = instance.rfind('-');
  return dash == std::string::npos || dash == 0 ? instance : instance.substr(0, dash);
}

struct GridInstance {
  std::string id;
  std::string workload;
  std::size_t server = 0;
  std::vector<int> gpus;
  AlignmentClass alignment = AlignmentClass::kSingleNuma;
  bool contiguous = true;    // GPU indices form one run
  bool cross_socket = false;  // spans sockets although one socket could hold it
};

struct GridCell {
  std::string owner;  // empty when free
  bool failed = false;
};

/// Servers x GPU indices, the model behind both renderings.
struct AllocationGrid {
  std::vector<std::string> servers;
  int rows = 0;
  std::vector<std::vector<GridCell>> cells;  // [server][gpu]
  std::vector<std::vector<int>> gpu_socket;  // [server][gpu]
  std::vector<GridInstance> instances;       // multi-GPU and single-GPU, by server then id
  std::map<std::string, char> glyphs;        // workload -> letter

  int cross_socket_count() const {
    return static_cast<int>(std::count_if(instances.begin(), instances.end(),
                                          [](const GridInstance& i) { return i.cross_socket; }));
  }
};

inline AllocationGrid build_grid(std::span<const FlexTopoGraph> graphs) {
  AllocationGrid grid;
  std::set<std::string> workloads;
  for (std::size_t s = 0; s < graphs.size(); ++s) {
    const FlexTopoGraph& g = graphs[s];
    const Layout& l = g.layout();
    const auto& spec = l.spec();
    grid.servers.push_back(g.server_id());
    grid.rows = std::max(grid.rows, l.gpu_count());
    std::vector<GridCell> column(l.gpu_count());
    std::vector<int> sockets(l.gpu_count());
    for (int i = 0; i < l.gpu_count(); ++i) {
      column[i].owner = g.gpus()[i].used_by;
      column[i].failed = !g.gpus()[i].healthy;
      sockets[i] = l.socket_of_numa(l.numa_of_gpu(i));
    }
    grid.cells.push_back(std::move(column));
    grid.gpu_socket.push_back(std::move(sockets));
    for (const auto& owner : g.owners()) {
      const ResourceSet rs = g.footprint_of(owner);
      if (rs.gpus.empty()) continue;
      GridInstance inst;
      inst.id = owner;
      inst.workload = workload_of(owner);
      inst.server = s;
      inst.gpus = rs.gpus;
      inst.alignment = g.classify_span(rs);
      for (std::size_t k = 1; k < rs.gpus.size(); ++k) {
        if (rs.gpus[k] != rs.gpus[k - 1] + 1) inst.contiguous = false;
      }
      const int n_gpus = static_cast<int>(rs.gpus.size());
      const int n_cores = static_cast<int>(rs.cores.size());
      inst.cross_socket = n_gpus >= 2 && inst.alignment == AlignmentClass::kCrossSocket &&
                          n_gpus <= spec.gpus_per_socket() && n_cores <= spec.cores_per_socket();
      workloads.insert(inst.workload);
      grid.instances.push_back(std::move(inst));
    }
  }
  std::set<char> firsts;
  bool unique = true;
  for (const auto& w : workloads) {
    const char c = w.empty() ? '.' : w[0];
    unique = unique && c != '.' && c != 'x' && c != ' ' && firsts.insert(c).second;
  }
  char next = 'a';
  for (const auto& w : workloads) grid.glyphs[w] = unique ? w[0] : next++;
  return grid;
}

/// Text grid: one column per server, one row per GPU index, one glyph per
/// owning workload. '.' is free, 'x' a failed GPU. A trailing '~' marks a
/// multi-GPU instance with non-contiguous indices, '!' one flagged as
/// cross-socket.
inline std::string render_text(const AllocationGrid& grid) {
  std::ostringstream out;
  out << "allocation grid: " << grid.servers.size() << " servers x " << grid.rows << " GPUs\n";
  out << "legend:";
  for (const auto& [w, c] : grid.glyphs) out << ' ' << c << '=' << w;
  out << " .=free x=failed ~=non-contiguous !=cross-socket\n";
  std::map<std::string, const GridInstance*> by_id;
  for (const auto& inst : grid.instances) by_id[grid.servers[inst.server] + "\n" + inst.id] = &inst;
  if (!grid.servers.empty()) {
    out << "gpu ";
    for (std::size_t s = 0; s < grid.servers.size(); ++s) {
      std::string label = std::to_string(s);
      label.resize(4, ' ');
      out << label;
    }
    out << '\n';
    for (int r = 0; r < grid.rows; ++r) {
      std::string label = std::to_string(r);
      label.resize(4, ' ');
      out << label;
      for (std::size_t s = 0; s < grid.servers.size(); ++s) {
        std::string cell = "    ";
        if (r < static_cast<int>(grid.cells[s].size())) {
          const GridCell& c = grid.cells[s][r];
          if (c.failed && c.owner.empty()) {
            cell[0] = 'x';
          } else if (c.owner.empty()) {
            cell[0] = '.';
          } else {
            const GridInstance* inst = by_id.at(grid.servers[s] + "\n" + c.owner);
            cell[0] = grid.glyphs.at(inst->workload);
            if (c.failed) cell[1] = 'x';
            else if (inst->cross_socket) cell[1] = '!';
            else if (!inst->contiguous) cell[1] = '~';
          }
        }
        out << cell;
      }
      out << '\n';
    }
    out << "servers:";
    for (std::size_t s = 0; s < grid.servers.size(); ++s) out << ' ' << s << '=' << grid.servers[s];
    out << '\n';
  }
  out << "links:\n";
  for (const auto& inst : grid.instances) {
    if (inst.gpus.size() < 2) continue;
    out << "  " << grid.servers[inst.server] << ' ' << inst.id << " gpus";
    for (std::size_t k = 0; k < inst.gpus.size(); ++k) out << (k ? "," : " ") << inst.gpus[k];
    out << ' ' << to_string(inst.alignment);
    if (inst.cross_socket) out << " CROSS-SOCKET";
    out << '\n';
  }
  out << "cross-socket multi-GPU instances: " << grid.cross_socket_count() << '\n';
  return out.str();
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr std::array<const char*, 10> kPalette = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                                         "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
                                                         "#9c755f", "#bab0ac"};

}  // namespace detail

/// SVG rendering of the same grid. Instances are linked by a line through
/// their GPUs, dashed when the indices are non-contiguous; flagged instances
/// get a red outline.
inline std::string render_svg(const AllocationGrid& grid) {
  constexpr int kCell = 18;
  constexpr int kLeft = 40;
  constexpr int kTop = 30;
  const int width = kLeft + static_cast<int>(grid.servers.size()) * kCell + 20;
  const int height = kTop + grid.rows * kCell + 60;
  std::map<std::string, std::string> colors;
  std::size_t k = 0;
  for (const auto& [w, c] : grid.glyphs) colors[w] = detail::kPalette[k++ % detail::kPalette.size()];
  std::map<std::string, const GridInstance*> by_id;
  for (const auto& inst : grid.instances) by_id[grid.servers[inst.server] + "\n" + inst.id] = &inst;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int r = 0; r < grid.rows; ++r) {
    out << "<text x=\"4\" y=\"" << kTop + r * kCell + 13 << "\">g" << r << "</text>\n";
  }
  for (std::size_t s = 0; s < grid.servers.size(); ++s) {
    const int x = kLeft + static_cast<int>(s) * kCell;
    out << "<text x=\"" << x + 2 << "\" y=\"" << kTop - 6 << "\" font-size=\"7\"><title>"
        << detail::xml_escape(grid.servers[s]) << "</title>" << s << "</text>\n";
    for (int r = 0; r < static_cast<int>(grid.cells[s].size()); ++r) {
      const GridCell& c = grid.cells[s][r];
      const int y = kTop + r * kCell;
      std::string fill = "#f4f4f4";
      std::string stroke = "#cccccc";
      std::string title = "free";
      if (!c.owner.empty()) {
        const GridInstance* inst = by_id.at(grid.servers[s] + "\n" + c.owner);
        fill = colors.at(inst->workload);
        title = c.owner;
        if (inst->cross_socket) stroke = "#d62728";
      }
      if (c.failed) {
        fill = "#333333";
        title += " (failed)";
      }
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell - 2 << "\" height=\""
          << kCell - 2 << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"><title>"
          << detail::xml_escape(title) << "</title></rect>\n";
    }
  }
  for (const auto& inst : grid.instances) {
    if (inst.gpus.size() < 2) continue;
    const int x = kLeft + static_cast<int>(inst.server) * kCell + kCell / 2 - 1;
    const int y0 = kTop + inst.gpus.front() * kCell + kCell / 2 - 1;
    const int y1 = kTop + inst.gpus.back() * kCell + kCell / 2 - 1;
    out << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y1
        << "\" stroke=\"" << (inst.cross_socket ? "#d62728" : "#000000") << "\" stroke-width=\"1\""
        << (inst.contiguous ? "" : " stroke-dasharray=\"2,2\"") << "/>\n";
  }
  int ly = kTop + grid.rows * kCell + 14;
  int lx = 4;
  for (const auto& [w, color] : colors) {
    out << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color
        << "\"/><text x=\"" << lx + 13 << "\" y=\"" << ly << "\">" << detail::xml_escape(w) << "</text>\n";
    lx += 60;
  }
  out << "<text x=\"4\" y=\"" << ly + 20 << "\">cross-socket multi-GPU instances: "
      << grid.cross_socket_count() << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace flextopo
