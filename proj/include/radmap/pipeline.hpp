#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "radmap/localization.hpp"
#include "radmap/simulator.hpp"

namespace radmap {

struct StageSet {
  bool simulate = true;
  bool reconstruct = true;
  bool localize = true;
  bool report = true;
};

// Comma-separated subset of {simulate, reconstruct, localize, report},
// or the keyword "all". Throws ParseError on unknown names.
StageSet parse_stages(const std::string& csv);

struct RunManifest {
  std::string scenario_path;
  std::string out_dir = "out";
  StageSet stages;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<double> resolution_m;
  std::optional<double> window_width_kev;
  double perturb_sigma_t_m = 0.0;    // pose noise applied at reconstruction
  double perturb_sigma_rot_rad = 0.0;
};

struct WindowArtifact {
  std::string label;
  std::size_t imageable_count = 0;
  std::size_t cones_used = 0;
  bool has_grid = false;
  Grid grid;
};

struct RunOutput {
  Scenario scenario;                  // effective, after overrides
  std::vector<WindowArtifact> windows;
  LocalizationReport report;
  bool has_report = false;
};

// Executes the requested stages in pipeline order, reading and writing
// artifacts under manifest.out_dir. A stage whose predecessor did not run
// in-process reuses the artifacts on disk, but only when the stamp proves
// they were produced by the same scenario content, seed and settings;
// otherwise it throws StaleArtifacts.
RunOutput run(const RunManifest& manifest);

void print_report(std::ostream& out, const LocalizationReport& report);

// Runs the nine bundled scenarios end to end, printing every report row and
// an aggregate summary. A failed scenario prints a machine-readable error
// line and is skipped. Returns 0 when all nine ran, 1 on partial success.
int table1(const std::string& scenario_dir, const std::string& out_root,
           std::optional<std::uint64_t> seed, std::ostream& out);

}  // namespace radmap
