#include "radmap/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <utility>

#include "radmap/errors.hpp"

namespace radmap {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
constexpr double kSpectrumBinKeV = 2.0;
constexpr std::uint64_t kPoseStreamTag = 0x706f7365ULL;  // pose-noise stream id

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t hash_bytes(const std::string& s, std::uint64_t h) {
  return fnv1a(s.data(), s.size(), h);
}

std::uint64_t hash_value(double v, std::uint64_t h) {
  return fnv1a(&v, sizeof(v), h);
}

std::uint64_t hash_value(std::uint64_t v, std::uint64_t h) {
  return fnv1a(&v, sizeof(v), h);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

struct Stamp {
  std::optional<std::uint64_t> config;
  std::optional<std::uint64_t> events;
  std::optional<std::uint64_t> recon;
};

Stamp read_stamp(const fs::path& path) {
  Stamp s;
  std::ifstream in(path);
  if (!in) return s;
  std::string key, val;
  while (in >> key >> val) {
    std::uint64_t v = 0;
    try {
      v = std::stoull(val, nullptr, 16);
    } catch (const std::exception&) {
      continue;
    }
    if (key == "config") s.config = v;
    if (key == "events") s.events = v;
    if (key == "recon") s.recon = v;
  }
  return s;
}

void write_stamp(const fs::path& path, const Stamp& s) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "# binds derived artifacts to the inputs that produced them\n";
  if (s.config) out << "config " << hex(*s.config) << "\n";
  if (s.events) out << "events " << hex(*s.events) << "\n";
  if (s.recon) out << "recon " << hex(*s.recon) << "\n";
}

std::uint64_t config_hash(const RunManifest& m, const Scenario& scn) {
  std::uint64_t h = kFnvOffset;
  h = hash_bytes(read_file(m.scenario_path), h);
  h = hash_bytes(read_file(scn.trajectory_path), h);
  h = hash_value(scn.seed, h);
  return h;
}

std::uint64_t events_file_hash(const fs::path& events, const fs::path& ids) {
  std::uint64_t h = kFnvOffset;
  h = hash_bytes(read_file(events.string()), h);
  h = hash_bytes(read_file(ids.string()), h);
  return h;
}

std::uint64_t recon_config_hash(const Scenario& scn, const RunManifest& m,
                                std::uint64_t cfg, std::uint64_t events) {
  std::uint64_t h = kFnvOffset;
  h = hash_value(cfg, h);
  h = hash_value(events, h);
  h = hash_value(scn.resolution_m, h);
  h = hash_value(static_cast<std::uint64_t>(scn.recon.iterations), h);
  for (const auto& w : scn.windows) {
    h = hash_bytes(w.label, h);
    h = hash_value(w.center_kev, h);
    h = hash_value(w.width_kev, h);
  }
  h = hash_value(m.perturb_sigma_t_m, h);
  h = hash_value(m.perturb_sigma_rot_rad, h);
  return h;
}

Scenario effective_scenario(const RunManifest& m) {
  Scenario scn = load_scenario(m.scenario_path);
  if (m.seed) scn.seed = *m.seed;
  if (m.iterations) {
    if (*m.iterations < 1) throw ParseError("iterations must be at least 1");
    scn.recon.iterations = *m.iterations;
  }
  if (m.resolution_m) {
    if (!(*m.resolution_m > 0.0)) {
      throw ParseError("resolution must be positive");
    }
    scn.resolution_m = *m.resolution_m;
  }
  if (m.window_width_kev) {
    if (!(*m.window_width_kev > 0.0)) {
      throw ParseError("window width must be positive");
    }
    for (auto& w : scn.windows) w.width_kev = *m.window_width_kev;
    validate_windows(scn.windows);
  }
  if (m.perturb_sigma_t_m < 0.0 || m.perturb_sigma_rot_rad < 0.0) {
    throw ParseError("perturbation sigmas must be non-negative");
  }
  return scn;
}

std::vector<std::string> window_labels(const Scenario& scn) {
  std::vector<std::string> labels;
  for (const auto& w : scn.windows) {
    if (std::find(labels.begin(), labels.end(), w.label) == labels.end()) {
      labels.push_back(w.label);
    }
  }
  return labels;
}

std::map<std::string, std::vector<std::size_t>> classify_all(
    const std::vector<ListModeEvent>& events,
    const std::vector<EnergyWindow>& windows) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (const auto label = classify_event(events[i], windows)) {
      by_label[*label].push_back(i);
    }
  }
  return by_label;
}

std::vector<ConeOfResponse> build_cones(
    const std::vector<std::size_t>& indices,
    const std::vector<ListModeEvent>& events, const Scenario& scn,
    const MotionSampler& sampler, const std::string& label) {
  std::vector<ConeOfResponse> cones;
  cones.reserve(indices.size());
  for (const std::size_t i : indices) {
    const ListModeEvent& ev = events[i];
    const EnergyWindow* win = nullptr;
    for (const auto& w : scn.windows) {
      if (w.label == label && w.contains(ev.total_energy())) {
        win = &w;
        break;
      }
    }
    if (!win) continue;
    try {
      cones.push_back(cone_from_event(ev, *win, sampler.pose(ev.t),
                                      scn.detector));
    } catch (const DegenerateLeverArm&) {
    } catch (const KinematicallyForbidden&) {
    }
  }
  return cones;
}

fs::path grid_path(const fs::path& dir, const std::string& label) {
  return dir / ("grid_" + label + ".gvx");
}

fs::path grid_text_path(const fs::path& dir, const std::string& label) {
  return dir / ("grid_" + label + ".txt");
}

}  // namespace

StageSet parse_stages(const std::string& csv) {
  if (csv == "all") return StageSet{};
  StageSet stages{false, false, false, false};
  std::string token;
  std::istringstream ss(csv);
  bool any = false;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "simulate") {
      stages.simulate = true;
    } else if (token == "reconstruct") {
      stages.reconstruct = true;
    } else if (token == "localize") {
      stages.localize = true;
    } else if (token == "report") {
      stages.report = true;
    } else {
      throw ParseError("unknown stage '" + token + "'");
    }
    any = true;
  }
  if (!any) throw ParseError("empty stage list");
  return stages;
}

RunOutput run(const RunManifest& manifest) {
  if (manifest.scenario_path.empty()) {
    throw ParseError("no scenario file given");
  }
  Scenario scn = effective_scenario(manifest);
  RunOutput out;

  const fs::path dir(manifest.out_dir);
  fs::create_directories(dir);
  const fs::path events_path = dir / "events.txt";
  const fs::path ids_path = dir / "source_ids.txt";
  const fs::path spectrum_path = dir / "spectrum.txt";
  const fs::path stamp_path = dir / "run_stamp.txt";
  const fs::path report_path = dir / "report.txt";

  const std::uint64_t cfg = config_hash(manifest, scn);
  Stamp stamp = read_stamp(stamp_path);

  SimulationResult sim;
  bool have_events = false;

  if (manifest.stages.simulate) {
    sim = simulate(scn);
    have_events = true;
    save_events(events_path.string(), sim.events);
    save_source_ids(ids_path.string(), sim.source_ids);
    save_spectrum(spectrum_path.string(), spectrum(sim.events, kSpectrumBinKeV));
    stamp = Stamp{};
    stamp.config = cfg;
    stamp.events = events_file_hash(events_path, ids_path);
    write_stamp(stamp_path, stamp);
    // Downstream stages always consume the stored events, so a fused run and
    // a stage-at-a-time run produce bit-identical grids and reports.
    sim.events = load_events(events_path.string());
    sim.source_ids = load_source_ids(ids_path.string());
  }

  if ((manifest.stages.reconstruct || manifest.stages.localize) &&
      !have_events) {
    if (!stamp.config || *stamp.config != cfg) {
      throw StaleArtifacts(
          "stale-artifacts: events in " + manifest.out_dir +
          " were produced from a different scenario or seed; rerun the "
          "simulate stage");
    }
    if (!fs::exists(events_path) || !fs::exists(ids_path) || !stamp.events ||
        *stamp.events != events_file_hash(events_path, ids_path)) {
      throw StaleArtifacts("stale-artifacts: event files in " +
                           manifest.out_dir +
                           " are missing or were modified; rerun the "
                           "simulate stage");
    }
    sim.events = load_events(events_path.string());
    sim.source_ids = load_source_ids(ids_path.string());
    have_events = true;
  }

  const auto labels = window_labels(scn);
  std::map<std::string, std::vector<std::size_t>> by_label;
  if (have_events) by_label = classify_all(sim.events, scn.windows);
  const std::uint64_t rhash =
      stamp.events ? recon_config_hash(scn, manifest, cfg, *stamp.events) : 0;

  if (manifest.stages.reconstruct) {
    Trajectory traj = scn.trajectory;
    if (manifest.perturb_sigma_t_m > 0.0 ||
        manifest.perturb_sigma_rot_rad > 0.0) {
      traj = perturb_trajectory(traj, manifest.perturb_sigma_t_m,
                                manifest.perturb_sigma_rot_rad,
                                derive_seed(scn.seed, kPoseStreamTag, 0));
    }
    const MotionSampler sampler(traj, scn.motion);
    Grid grid0 = Grid::from_box(scn.room_min, scn.room_max, scn.resolution_m);
    for (const auto& label : labels) {
      WindowArtifact art;
      art.label = label;
      const auto it = by_label.find(label);
      art.imageable_count = it == by_label.end() ? 0 : it->second.size();
      std::vector<ConeOfResponse> cones;
      if (it != by_label.end()) {
        cones = build_cones(it->second, sim.events, scn, sampler, label);
      }
      if (!cones.empty()) {
        grid0.fill(1.0);
        try {
          MlemResult res = mlem(cones, grid0, scn.recon);
          art.cones_used = cones.size() - res.dropped_events;
          art.grid = std::move(res.grid);
          art.has_grid = true;
        } catch (const AllRowsEmpty&) {
        }
      }
      if (art.has_grid) {
        save_grid(grid_path(dir, label).string(), art.grid);
        export_grid_text(grid_text_path(dir, label).string(), art.grid);
      } else {
        fs::remove(grid_path(dir, label));
        fs::remove(grid_text_path(dir, label));
      }
      out.windows.push_back(std::move(art));
    }
    stamp.recon = rhash;
    write_stamp(stamp_path, stamp);
  }

  if (manifest.stages.localize) {
    if (out.windows.empty()) {
      if (!stamp.recon || *stamp.recon != rhash) {
        throw StaleArtifacts(
            "stale-artifacts: grids in " + manifest.out_dir +
            " do not match this configuration; rerun the reconstruct stage");
      }
      for (const auto& label : labels) {
        WindowArtifact art;
        art.label = label;
        const auto it = by_label.find(label);
        art.imageable_count = it == by_label.end() ? 0 : it->second.size();
        const fs::path gp = grid_path(dir, label);
        if (fs::exists(gp)) {
          art.grid = load_grid(gp.string()).cast<double>();
          art.has_grid = true;
        }
        out.windows.push_back(std::move(art));
      }
    }
    std::vector<WindowResult> results;
    for (const auto& art : out.windows) {
      WindowResult wr;
      wr.label = art.label;
      wr.imageable_count = art.imageable_count;
      if (art.has_grid) {
        // Localize on the stored precision so a rerun from the grid files
        // reproduces the in-process result bit for bit.
        const Grid g = art.grid.cast<float>().cast<double>();
        try {
          wr.peaks = localize_window(g, art.label, scn.localize);
        } catch (const EmptyGrid&) {
        }
      }
      results.push_back(std::move(wr));
    }
    std::vector<TruthEntry> truths;
    for (const auto& src : scn.sources) {
      for (const auto& label : labels) {
        bool match = false;
        for (const auto& w : scn.windows) {
          if (w.label != label) continue;
          for (const auto& line : src.lines) {
            if (w.contains(line.energy_kev)) match = true;
          }
        }
        if (match) truths.push_back({label, src.position});
      }
    }
    out.report = score(scn.name, results, truths, scn.localize);
    out.has_report = true;
    save_report(report_path.string(), out.report);
  }

  if (manifest.stages.report && !out.has_report) {
    if (!fs::exists(report_path)) {
      throw StaleArtifacts("stale-artifacts: no report in " +
                           manifest.out_dir +
                           "; run the localize stage first");
    }
    out.report = load_report(report_path.string());
    out.has_report = true;
  }

  out.scenario = std::move(scn);
  return out;
}

void print_report(std::ostream& out, const LocalizationReport& report) {
  for (const auto& row : report.rows) out << format_report_row(row) << "\n";
  out << format_report_summary(report) << "\n";
}

int table1(const std::string& scenario_dir, const std::string& out_root,
           std::optional<std::uint64_t> seed, std::ostream& out) {
  int failures = 0;
  LocalizationReport aggregate;
  out << "# scenario window truth_x truth_y truth_z est_x est_y est_z error "
         "status counts\n";
  for (int i = 1; i <= 9; ++i) {
    const std::string name = "test" + std::to_string(i);
    RunManifest m;
    m.scenario_path = (fs::path(scenario_dir) / (name + ".cfg")).string();
    m.out_dir = (fs::path(out_root) / name).string();
    m.seed = seed;
    try {
      const RunOutput r = run(m);
      for (const auto& row : r.report.rows) {
        out << format_report_row(row) << "\n";
        aggregate.rows.push_back(row);
      }
    } catch (const std::exception& e) {
      out << "error: scenario-failed: " << name << ": " << e.what() << "\n";
      ++failures;
    }
  }
  out << format_report_summary(aggregate) << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace radmap
