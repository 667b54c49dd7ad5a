#include "radmap/physics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "radmap/errors.hpp"

namespace radmap {

namespace {

// cos(theta) for a first-vertex deposit; no domain clamping.
double scatter_cosine(double e0, double e1) {
  return 1.0 - kElectronRestEnergyKeV * (1.0 / (e0 - e1) - 1.0 / e0);
}

void check_deposit_domain(double e0, double e1, const char* who) {
  if (!(e0 > 0.0)) {
    throw KinematicallyForbidden(std::string(who) + ": incident energy must be positive");
  }
  if (!(e1 > 0.0) || e1 >= e0) {
    throw KinematicallyForbidden(std::string(who) + ": deposit outside (0, e0)");
  }
}

}  // namespace

double compton_half_angle(double e0_kev, double e_dep1_kev) {
  check_deposit_domain(e0_kev, e_dep1_kev, "compton_half_angle");
  const double c = scatter_cosine(e0_kev, e_dep1_kev);
  if (c < -1.0) {
    if (c >= -1.0 - kEdgeSlack) return std::acos(-1.0);
    throw KinematicallyForbidden("compton_half_angle: deposit beyond Compton edge");
  }
  return std::acos(std::min(c, 1.0));
}

double compton_edge(double e0_kev) {
  if (!(e0_kev > 0.0)) {
    throw KinematicallyForbidden("compton_edge: incident energy must be positive");
  }
  return 2.0 * e0_kev * e0_kev / (kElectronRestEnergyKeV + 2.0 * e0_kev);
}

double deposit_for_angle(double e0_kev, double theta) {
  if (!(e0_kev > 0.0)) {
    throw KinematicallyForbidden("deposit_for_angle: incident energy must be positive");
  }
  if (theta < 0.0 || theta > std::acos(-1.0)) {
    throw OutOfRange("deposit_for_angle: theta outside [0, pi]");
  }
  const double u = 1.0 - std::cos(theta);
  return e0_kev * e0_kev * u / (kElectronRestEnergyKeV + e0_kev * u);
}

double half_angle_derivative(double e0_kev, double e_dep1_kev) {
  check_deposit_domain(e0_kev, e_dep1_kev, "half_angle_derivative");
  const double c = scatter_cosine(e0_kev, e_dep1_kev);
  const double s2 = 1.0 - c * c;
  if (c < -1.0 || s2 <= 0.0) {
    throw KinematicallyForbidden("half_angle_derivative: at or beyond the Compton edge");
  }
  const double r = e0_kev - e_dep1_kev;
  return kElectronRestEnergyKeV / (r * r * std::sqrt(s2));
}

std::optional<std::string> classify_event(const ListModeEvent& event,
                                          const std::vector<EnergyWindow>& windows) {
  if (event.interactions.size() < 2) return std::nullopt;  // not imageable
  const double e = event.total_energy();
  const EnergyWindow* hit = nullptr;
  for (const auto& w : windows) {
    if (!w.contains(e)) continue;
    if (hit && hit->label != w.label) {
      throw OverlappingWindows("classify_event: " + std::to_string(e) +
                               " keV falls in '" + hit->label + "' and '" +
                               w.label + "'");
    }
    hit = &w;
  }
  if (!hit) return std::nullopt;
  return hit->label;
}

std::vector<EnergyWindow> default_windows(double width_kev) {
  return {{"Ba-133", 356.0, width_kev},
          {"Na-22", 511.0, width_kev},
          {"Cs-137", 662.0, width_kev},
          {"Co-60", 1173.0, width_kev},
          {"Co-60", 1332.0, width_kev}};
}

void validate_windows(const std::vector<EnergyWindow>& windows) {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t j = i + 1; j < windows.size(); ++j) {
      const auto& a = windows[i];
      const auto& b = windows[j];
      if (a.label != b.label &&
          std::abs(a.center_kev - b.center_kev) <=
              0.5 * (a.width_kev + b.width_kev)) {
        throw OverlappingWindows("windows " + a.label + " and " + b.label +
                                 " overlap");
      }
    }
  }
}

double angular_uncertainty(const ListModeEvent& event, double e0_kev,
                           const DetectorModel& det) {
  if (event.interactions.size() < 2) {
    throw DegenerateLeverArm("angular_uncertainty: fewer than two interactions");
  }
  const double lever_mm =
      (event.interactions[0].position_mm - event.interactions[1].position_mm).norm();
  const double sigma_geom = det.position_sigma_mm / lever_mm;

  const double e1 = event.interactions[0].energy_kev;
  double sigma_energy;
  const double c = scatter_cosine(e0_kev, e1);
  const double s2 = 1.0 - c * c;
  if (!(e1 > 0.0) || e1 >= e0_kev || s2 <= 0.0) {
    sigma_energy = std::numeric_limits<double>::infinity();
  } else {
    const double r = e0_kev - e1;
    const double dtheta_de = kElectronRestEnergyKeV / (r * r * std::sqrt(s2));
    sigma_energy = dtheta_de * det.energy_sigma_kev(e1);
  }

  const double sigma = std::hypot(sigma_geom, sigma_energy);
  const double pi_4 = std::acos(-1.0) / 4.0;
  return std::clamp(sigma, det.sigma_floor_rad, pi_4);
}

ConeOfResponse cone_from_event(const ListModeEvent& event,
                               const EnergyWindow& window, const Pose& pose,
                               const DetectorModel& det) {
  if (event.interactions.size() < 2) {
    throw DegenerateLeverArm("cone_from_event: fewer than two interactions");
  }
  const Vec3& p1 = event.interactions[0].position_mm;
  const Vec3& p2 = event.interactions[1].position_mm;
  const Vec3 lever = p1 - p2;
  const double lever_mm = lever.norm();
  if (lever_mm < det.min_lever_arm_mm) {
    throw DegenerateLeverArm("cone_from_event: lever arm " +
                             std::to_string(lever_mm) + " mm below minimum");
  }

  ConeOfResponse cone;
  cone.half_angle = compton_half_angle(window.center_kev,
                                       event.interactions[0].energy_kev);
  cone.apex = transform_point(pose, p1 * 1e-3);
  cone.axis = transform_direction(pose, lever / lever_mm);
  cone.sigma_angle = angular_uncertainty(event, window.center_kev, det);
  cone.window_label = window.label;
  return cone;
}

std::vector<std::pair<double, std::size_t>> spectrum(
    const std::vector<ListModeEvent>& events, double bin_width_kev) {
  if (!(bin_width_kev > 0.0)) {
    throw OutOfRange("spectrum: bin width must be positive");
  }
  std::map<long long, std::size_t> hist;
  for (const auto& ev : events) {
    hist[static_cast<long long>(std::floor(ev.total_energy() / bin_width_kev))]++;
  }
  std::vector<std::pair<double, std::size_t>> out;
  out.reserve(hist.size());
  for (const auto& [bin, n] : hist) {
    out.emplace_back(static_cast<double>(bin) * bin_width_kev, n);
  }
  return out;
}

void save_spectrum(const std::string& path,
                   const std::vector<std::pair<double, std::size_t>>& bins) {
  std::ofstream out(path);
  if (!out) throw ParseError("save_spectrum: cannot open " + path);
  char line[128];
  for (const auto& [edge, n] : bins) {
    std::snprintf(line, sizeof(line), "%.12g %zu\n", edge, n);
    out << line;
  }
}

void save_events(const std::string& path,
                 const std::vector<ListModeEvent>& events) {
  std::ofstream out(path);
  if (!out) throw ParseError("save_events: cannot open " + path);
  out << "# event_id t x_mm y_mm z_mm e_kev\n";
  char line[256];
  for (std::size_t id = 0; id < events.size(); ++id) {
    for (const auto& i : events[id].interactions) {
      std::snprintf(line, sizeof(line), "%zu %.12g %.12g %.12g %.12g %.12g\n",
                    id, events[id].t, i.position_mm.x(), i.position_mm.y(),
                    i.position_mm.z(), i.energy_kev);
      out << line;
    }
  }
}

std::vector<ListModeEvent> load_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_events: cannot open " + path);
  std::vector<ListModeEvent> events;
  long long current_id = -1;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    long long id;
    double t, x, y, z, e;
    if (!(ss >> id)) continue;  // blank line
    if (!(ss >> t >> x >> y >> z >> e)) {
      throw ParseError("load_events: malformed line " + std::to_string(line_no) +
                       " in " + path);
    }
    if (id != current_id) {
      if (id != static_cast<long long>(events.size())) {
        throw ParseError("load_events: event ids not sequential at line " +
                         std::to_string(line_no) + " in " + path);
      }
      events.push_back(ListModeEvent{t, {}});
      current_id = id;
    }
    events.back().interactions.push_back(Interaction{Vec3(x, y, z), e});
  }
  return events;
}

void save_source_ids(const std::string& path,
                     const std::vector<int>& source_ids) {
  std::ofstream out(path);
  if (!out) throw ParseError("save_source_ids: cannot open " + path);
  out << "# event_id source_id\n";
  for (std::size_t id = 0; id < source_ids.size(); ++id) {
    out << id << ' ' << source_ids[id] << '\n';
  }
}

std::vector<int> load_source_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_source_ids: cannot open " + path);
  std::vector<int> ids;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    long long id;
    int sid;
    if (!(ss >> id)) continue;
    if (!(ss >> sid) || id != static_cast<long long>(ids.size())) {
      throw ParseError("load_source_ids: malformed line " +
                       std::to_string(line_no) + " in " + path);
    }
    ids.push_back(sid);
  }
  return ids;
}

}  // namespace radmap
