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

// flextopo: run scenarios, render allocation snapshots, validate scenario
// files and dump topology presets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flextopo/flextopo.hpp"

namespace fs = std::filesystem;
using namespace flextopo;

namespace {

constexpr int kExitInvalid = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Parses and validates; prints diagnostics anchored to `path`.
std::optional<Scenario> load_checked(const std::string& path, ValidationReport* report_out) {
  if (!fs::exists(path)) {
    std::cerr << path << ": error: no such file\n";
    return std::nullopt;
  }
  Scenario sc;
  try {
    sc = parse_scenario(read_file(path));
  } catch (const ParseError& e) {
    std::cerr << path << ':' << e.line() << ": error: " << e.what() << '\n';
    return std::nullopt;
  } catch (const Error& e) {
    std::cerr << path << ": error: " << e.what() << '\n';
    return std::nullopt;
  }
  ValidationReport report = validate_scenario(sc);
  for (const auto& f : report.errors) {
    std::cerr << path << ':' << f.line << ": error: " << f.message << '\n';
  }
  if (report_out) *report_out = report;
  if (!report.ok()) return std::nullopt;
  return sc;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
  return buf;
}

struct RunArgs {
  std::string scenario;
  std::vector<std::string> modes;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::string out = "flextopo-out";
  bool render = false;
  std::string semantics;
  bool shadow_exhaustive = false;
};

int cmd_run(const RunArgs& args) {
  auto sc = load_checked(args.scenario, nullptr);
  if (!sc) return kExitInvalid;
  std::vector<PreemptMode> modes = sc->modes;
  if (!args.modes.empty()) {
    modes.clear();
    for (const auto& m : args.modes) modes.push_back(*preempt_mode_from_string(m));
  }
  SimOptions base;
  base.alpha = args.alpha;
  base.seed = args.seed;
  base.shadow_exhaustive = args.shadow_exhaustive;
  if (!args.semantics.empty()) base.semantics = cycle_semantics_from_string(args.semantics);
  if (args.alpha && !(*args.alpha >= 0.0 && *args.alpha <= 1.0)) {
    std::cerr << "error: --alpha must lie in [0, 1]\n";
    return kExitInvalid;
  }

  const auto filter = default_hit_rate_filter(sc->workloads, sc->topology);
  std::vector<RunMetrics> results;
  for (PreemptMode mode : modes) {
    SimOptions opt = base;
    opt.mode = mode;
    try {
      results.push_back(run(*sc, opt));
    } catch (const Error& e) {
      std::cerr << args.scenario << ": error: " << e.what() << '\n';
      return kExitInvalid;
    }
  }

  fs::create_directories(args.out);
  nlohmann::ordered_json combined;
  combined["scenario"] = sc->name;
  combined["runs"] = nlohmann::ordered_json::array();
  for (const auto& m : results) {
    const fs::path dir = fs::path(args.out) / std::string(to_string(m.mode));
    fs::create_directories(dir);
    std::ostringstream records;
    write_records_csv(records, m.records);
    write_file(dir / "records.csv", records.str());
    std::ostringstream series;
    write_timeseries_csv(series, m);
    write_file(dir / "timeseries.csv", series.str());
    write_file(dir / "snapshot.txt", serialize(m.snapshot));
    const auto summary = summary_json(m, filter);
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    combined["runs"].push_back(summary);
    if (args.render) {
      const AllocationGrid grid = build_grid(m.snapshot);
      write_file(dir / "grid.txt", render_text(grid));
      write_file(dir / "grid.svg", render_svg(grid));
    }
  }
  write_file(fs::path(args.out) / "summary.json", combined.dump(2) + "\n");

  std::cout << "topology affinity hit rate (" << sc->name << ")\n";
  std::cout << "mode                  satisfied / attempted   rate     cross-socket\n";
  for (const auto& m : results) {
    std::string mode(to_string(m.mode));
    mode.resize(22, ' ');
    const int cross = build_grid(m.snapshot).cross_socket_count();
    bool any = false;
    for (const auto& r : m.records) any = any || filter.count(r.preemptor) > 0;
    if (!any) {
      std::cout << mode << "no records for the hit-rate workloads\n";
      continue;
    }
    const HitRate h = hit_rate(m.records, filter);
    std::string counts = std::to_string(h.satisfied) + " / " + std::to_string(h.attempted);
    counts.resize(24, ' ');
    std::string rate = percent(h.rate());
    rate.resize(9, ' ');
    std::cout << mode << counts << rate << cross << '\n';
  }
  std::cout << "outputs written to " << args.out << '\n';
  return 0;
}

int cmd_render(const std::vector<std::string>& files, const std::string& out) {
  std::vector<FlexTopoGraph> graphs;
  for (const auto& path : files) {
    try {
      auto parsed = parse_snapshots(read_file(path));
      for (auto& g : parsed) graphs.push_back(std::move(g));
    } catch (const ParseError& e) {
      std::cerr << path << ':' << e.line() << ": error: " << e.what() << '\n';
      return kExitInvalid;
    } catch (const Error& e) {
      std::cerr << path << ": error: " << e.what() << '\n';
      return kExitInvalid;
    }
  }
  const AllocationGrid grid = build_grid(graphs);
  const std::string text = render_text(grid);
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  write_file(out + ".txt", text);
  write_file(out + ".svg", render_svg(grid));
  std::cout << "cross-socket multi-GPU instances: " << grid.cross_socket_count() << '\n';
  return 0;
}

int cmd_validate(const std::string& path) {
  ValidationReport report;
  auto sc = load_checked(path, &report);
  if (!sc) return kExitInvalid;
  for (const auto& note : report.notes) std::cout << path << ": " << note << '\n';
  std::cout << path << ": valid (" << sc->workloads.size() << " workloads, " << sc->servers
            << " servers, " << sc->cycles() << " cycles)\n";
  return 0;
}

int cmd_dump(const std::string& preset, const std::string& server_id) {
  auto spec = preset_by_name(preset);
  if (!spec) {
    std::cerr << "error: unknown preset " << preset << " (rtx4090, a100)\n";
    return kExitInvalid;
  }
  std::cout << serialize(build_topology(*spec, server_id));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flextopo: topology-aware preemptive scheduling simulator"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario under one or more preemption modes");
  run_cmd->add_option("scenario", run_args.scenario, "Scenario file")->required();
  run_cmd->add_option("-m,--mode", run_args.modes, "baseline, flextopo_imp, flextopo_exhaustive")
      ->check(CLI::IsMember({"baseline", "flextopo_imp", "flextopo_exhaustive"}));
  run_cmd->add_option("--alpha", run_args.alpha, "Override the score weight alpha");
  run_cmd->add_option("--seed", run_args.seed, "Override the scenario seed");
  run_cmd->add_option("-o,--out", run_args.out, "Output directory")->capture_default_str();
  run_cmd->add_flag("--render", run_args.render, "Also write grid.txt and grid.svg per mode");
  run_cmd->add_option("--cycle-semantics", run_args.semantics, "sequential or independent")
      ->check(CLI::IsMember({"sequential", "independent"}));
  run_cmd->add_flag("--shadow-exhaustive", run_args.shadow_exhaustive,
                    "Also count exhaustive-search evaluations for every preemption");

  std::vector<std::string> render_files;
  std::string render_out;
  auto* render_cmd = app.add_subcommand("render", "Render snapshot files as an allocation grid");
  render_cmd->add_option("snapshots", render_files, "Snapshot files")->required();
  render_cmd->add_option("-o,--out", render_out, "Output prefix for .txt and .svg (default: stdout)");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file");
  validate_cmd->add_option("scenario", validate_path, "Scenario file")->required();

  std::string preset = "rtx4090";
  std::string server_id = "node-000";
  auto* dump_cmd = app.add_subcommand("dump", "Print the snapshot of an empty preset server");
  dump_cmd->add_option("-t,--topology", preset, "Preset name")->capture_default_str();
  dump_cmd->add_option("--server-id", server_id, "Server id")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*render_cmd) return cmd_render(render_files, render_out);
    if (*validate_cmd) return cmd_validate(validate_path);
    if (*dump_cmd) return cmd_dump(preset, server_id);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
