#include "radmap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>

#include "radmap/config.hpp"
#include "radmap/errors.hpp"

namespace radmap {

namespace {

constexpr double kContinuousStepS = 0.05;
constexpr double kMinSourceRangeM = 0.01;

// Klein-Nishina angular shape (unnormalised), k = e0 / electron rest energy.
double kn_shape(double k, double cos_theta) {
  const double r = 1.0 / (1.0 + k * (1.0 - cos_theta));
  return r * r * (r + 1.0 / r - (1.0 - cos_theta * cos_theta));
}

std::vector<DwellSegment> parse_dwells(const std::string& text,
                                       const std::string& origin) {
  std::vector<DwellSegment> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
      throw ParseError(origin + ": dwell token '" + tok +
                       "' is not pose_index:seconds");
    }
    try {
      out.push_back({std::stoi(tok.substr(0, colon)),
                     std::stod(tok.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ParseError(origin + ": bad dwell token '" + tok + "'");
    }
  }
  if (out.empty()) throw ParseError(origin + ": empty dwell list");
  return out;
}

std::vector<EmissionLine> parse_lines(const std::string& text,
                                      const std::string& origin) {
  std::vector<EmissionLine> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
      throw ParseError(origin + ": line token '" + tok +
                       "' is not energy_kev:branching");
    }
    EmissionLine line;
    try {
      line.energy_kev = std::stod(tok.substr(0, colon));
      line.branching = std::stod(tok.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParseError(origin + ": bad line token '" + tok + "'");
    }
    if (!(line.energy_kev > 0.0) || !(line.branching > 0.0)) {
      throw ParseError(origin + ": line token '" + tok +
                       "' needs positive energy and branching");
    }
    out.push_back(line);
  }
  if (out.empty()) throw ParseError(origin + ": empty line list");
  return out;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) + a) + b);
}

std::vector<EmissionLine> isotope_lines(const std::string& isotope) {
  if (isotope == "Na-22") return {{511.0, 1.798}, {1274.537, 0.994}};
  if (isotope == "Cs-137") return {{661.657, 0.851}};
  if (isotope == "Co-60") return {{1173.228, 0.9985}, {1332.492, 0.9998}};
  if (isotope == "Ba-133") {
    return {{356.013, 0.6205}, {80.998, 0.329}, {302.851, 0.1833},
            {383.848, 0.0894}};
  }
  throw ParseError("unknown isotope '" + isotope +
                   "', give its lines explicitly");
}

MotionSampler::MotionSampler(const Trajectory& trajectory,
                             const Motion& motion)
    : mode_(motion.mode) {
  validate_trajectory(trajectory);
  if (mode_ == Motion::Mode::Discrete) {
    if (motion.dwells.empty()) {
      throw ParseError("discrete motion needs at least one dwell");
    }
    boundaries_.push_back(0.0);
    for (const auto& d : motion.dwells) {
      if (d.pose_index < 0 ||
          static_cast<std::size_t>(d.pose_index) >= trajectory.poses.size()) {
        throw OutOfRange("dwell pose index " + std::to_string(d.pose_index) +
                         " outside the trajectory");
      }
      if (!(d.seconds > 0.0)) {
        throw OutOfRange("dwell duration must be positive");
      }
      dwell_poses_.push_back(trajectory.poses[d.pose_index]);
      boundaries_.push_back(boundaries_.back() + d.seconds);
    }
    duration_ = boundaries_.back();
  } else {
    if (trajectory.poses.size() < 2) {
      throw ParseError("continuous motion needs at least two knots");
    }
    if (!(motion.speed_mps > 0.0)) {
      throw OutOfRange("speed must be positive");
    }
    double s = 0.0;
    retimed_.poses.push_back(trajectory.poses.front());
    retimed_.poses.front().t = 0.0;
    for (std::size_t i = 1; i < trajectory.poses.size(); ++i) {
      const double step = (trajectory.poses[i].translation -
                           trajectory.poses[i - 1].translation)
                              .norm();
      if (!(step > 0.0)) {
        throw ParseError("zero-length segment in a continuous trajectory");
      }
      s += step;
      Pose p = trajectory.poses[i];
      p.t = s / motion.speed_mps;
      retimed_.poses.push_back(p);
    }
    duration_ = retimed_.poses.back().t;
  }
}

Pose MotionSampler::pose(double t) const {
  const double tc = std::clamp(t, 0.0, duration_);
  if (mode_ == Motion::Mode::Discrete) {
    const auto it =
        std::upper_bound(boundaries_.begin(), boundaries_.end(), tc);
    std::size_t k = static_cast<std::size_t>(it - boundaries_.begin());
    k = (k == 0) ? 0 : k - 1;
    if (k >= dwell_poses_.size()) k = dwell_poses_.size() - 1;
    Pose p = dwell_poses_[k];
    p.t = tc;
    return p;
  }
  Pose p = pose_at(retimed_, tc);
  p.t = tc;
  return p;
}

ExposureProfile::ExposureProfile(const Vec3& source_position,
                                 const MotionSampler& sampler,
                                 double min_distance_m) {
  const auto add = [&](double t0, double dt) {
    const Pose mid = sampler.pose(t0 + 0.5 * dt);
    const double r = (source_position - mid.translation).norm();
    if (r < min_distance_m) {
      throw SourceInsideDetector("source within " +
                                 std::to_string(min_distance_m) +
                                 " m of the detector");
    }
    segments_.push_back({t0, dt, dt / (r * r)});
  };

  if (sampler.duration() <= 0.0) {
    throw OutOfRange("mission duration must be positive");
  }
  const auto& boundaries = sampler.dwell_boundaries();
  if (!boundaries.empty()) {
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
      add(boundaries[i], boundaries[i + 1] - boundaries[i]);
    }
  } else {
    const double total = sampler.duration();
    double t0 = 0.0;
    while (t0 < total) {
      const double dt = std::min(kContinuousStepS, total - t0);
      if (dt <= 1e-9) break;
      add(t0, dt);
      t0 += dt;
    }
  }

  double acc = 0.0;
  cumulative_.reserve(segments_.size());
  for (const auto& s : segments_) {
    acc += s.weight;
    cumulative_.push_back(acc);
  }
  integral_ = acc / (4.0 * std::numbers::pi);
}

double ExposureProfile::sample_time(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double target = u01(rng) * cumulative_.back();
  const auto it =
      std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  const std::size_t k =
      std::min(static_cast<std::size_t>(it - cumulative_.begin()),
               segments_.size() - 1);
  return segments_[k].t0 + u01(rng) * segments_[k].dt;
}

Scenario load_scenario(const std::string& path) {
  const IniFile ini = load_ini(path);
  Scenario scn;

  const IniSection& sc = ini.require("scenario");
  scn.name = sc.require("name");
  scn.room_min = sc.require_vec3("room_min");
  scn.room_max = sc.require_vec3("room_max");
  scn.resolution_m = sc.get_double("resolution", scn.resolution_m);
  scn.seed = static_cast<std::uint64_t>(sc.require_int("seed"));
  for (int a = 0; a < 3; ++a) {
    if (!(scn.room_max[a] > scn.room_min[a])) {
      throw ParseError(path + ": room box is empty along axis " +
                       std::to_string(a));
    }
  }
  if (!(scn.resolution_m > 0.0)) {
    throw ParseError(path + ": resolution must be positive");
  }

  namespace fs = std::filesystem;
  fs::path tp(sc.require("trajectory"));
  if (tp.is_relative()) tp = fs::path(path).parent_path() / tp;
  scn.trajectory_path = tp.string();
  scn.trajectory = load_trajectory(scn.trajectory_path);

  const IniSection& mo = ini.require("motion");
  const std::string mode = mo.require("mode");
  if (mode == "discrete") {
    scn.motion.mode = Motion::Mode::Discrete;
    scn.motion.dwells = parse_dwells(mo.require("dwells"), path);
  } else if (mode == "continuous") {
    scn.motion.mode = Motion::Mode::Continuous;
    scn.motion.speed_mps = mo.get_double("speed", scn.motion.speed_mps);
  } else {
    throw ParseError(path + ": unknown motion mode '" + mode + "'");
  }

  if (const IniSection* de = ini.find("detector")) {
    DetectorModel& d = scn.detector;
    d.crystal_size_cm = de->get_vec3("crystal_size_cm", d.crystal_size_cm);
    d.position_sigma_mm = de->get_double("position_sigma_mm", d.position_sigma_mm);
    d.energy_sigma_coeff = de->get_double("energy_sigma_coeff", d.energy_sigma_coeff);
    d.efficiency_constant = de->get_double("efficiency_constant", d.efficiency_constant);
    d.min_lever_arm_mm = de->get_double("min_lever_arm_mm", d.min_lever_arm_mm);
    d.sigma_floor_rad = de->get_double("sigma_floor_rad", d.sigma_floor_rad);
    d.mean_free_path_cm = de->get_double("mean_free_path_cm", d.mean_free_path_cm);
    d.scatter_theta_min_deg = de->get_double("scatter_theta_min_deg", d.scatter_theta_min_deg);
    d.scatter_theta_max_deg = de->get_double("scatter_theta_max_deg", d.scatter_theta_max_deg);
    const std::string fallback =
        d.scatter_sampling == ScatterSampling::KleinNishina ? "klein-nishina"
                                                            : "uniform";
    const std::string ss = de->get("scatter_sampling", fallback);
    if (ss == "uniform") {
      d.scatter_sampling = ScatterSampling::UniformCosine;
    } else if (ss == "klein-nishina") {
      d.scatter_sampling = ScatterSampling::KleinNishina;
    } else {
      throw ParseError(path + ": unknown scatter_sampling '" + ss + "'");
    }
    if (!(d.crystal_size_cm.minCoeff() > 0.0) || !(d.mean_free_path_cm > 0.0) ||
        !(d.efficiency_constant > 0.0) || d.position_sigma_mm < 0.0 ||
        d.energy_sigma_coeff < 0.0 || d.min_lever_arm_mm < 0.0 ||
        d.sigma_floor_rad < 0.0) {
      throw ParseError(path + ": detector parameters out of range");
    }
    if (!(d.scatter_theta_min_deg >= 0.0) ||
        !(d.scatter_theta_max_deg > d.scatter_theta_min_deg) ||
        !(d.scatter_theta_max_deg <= 180.0)) {
      throw ParseError(path + ": scatter angle range out of order");
    }
  }

  const auto wsecs = ini.with_prefix("window.");
  if (wsecs.empty()) {
    scn.windows = default_windows();
  } else {
    for (const IniSection* w : wsecs) {
      EnergyWindow win;
      win.label = w->require("label");
      win.center_kev = w->require_double("center");
      win.width_kev = w->get_double("width", win.width_kev);
      if (!(win.center_kev > 0.0) || !(win.width_kev > 0.0)) {
        throw ParseError(path + ": window " + win.label +
                         " needs positive center and width");
      }
      scn.windows.push_back(std::move(win));
    }
  }
  validate_windows(scn.windows);

  const auto ssecs = ini.with_prefix("source.");
  if (ssecs.empty()) throw ParseError(path + ": no [source.N] sections");
  for (const IniSection* s : ssecs) {
    SourceTruth src;
    src.isotope = s->require("isotope");
    src.position = s->require_vec3("position");
    src.activity_uci = s->require_double("activity_uci");
    src.attenuation = s->get_double("attenuation", src.attenuation);
    if (!(src.activity_uci > 0.0)) {
      throw ParseError(path + ": source activity must be positive");
    }
    if (src.attenuation < 0.0 || src.attenuation > 1.0) {
      throw ParseError(path + ": attenuation must lie in [0, 1]");
    }
    src.lines = s->has("lines") ? parse_lines(s->require("lines"), path)
                                : isotope_lines(src.isotope);
    scn.sources.push_back(std::move(src));
  }

  const auto inside_room = [&](const Vec3& p) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < scn.room_min[a] - 1e-9 || p[a] > scn.room_max[a] + 1e-9) {
        return false;
      }
    }
    return true;
  };
  for (const auto& p : scn.trajectory.poses) {
    if (!inside_room(p.translation)) {
      throw ParseError(path + ": trajectory leaves the room box");
    }
  }
  for (const auto& src : scn.sources) {
    if (!inside_room(src.position)) {
      throw ParseError(path + ": source outside the room box");
    }
  }

  if (const IniSection* r = ini.find("recon")) {
    scn.recon.iterations = static_cast<int>(r->get_int("iterations", scn.recon.iterations));
    scn.recon.sigma_cutoff = r->get_double("sigma_cutoff", scn.recon.sigma_cutoff);
    scn.recon.distance_power = r->get_double("distance_power", scn.recon.distance_power);
    scn.recon.epsilon = r->get_double("epsilon", scn.recon.epsilon);
    scn.recon.max_apex_distance = r->get_double("max_apex_distance", scn.recon.max_apex_distance);
    scn.recon.row_cache_budget = static_cast<std::size_t>(r->get_int(
        "row_cache_budget", static_cast<long>(scn.recon.row_cache_budget)));
  }
  if (const IniSection* l = ini.find("localize")) {
    scn.localize.max_peaks = static_cast<int>(l->get_int("max_peaks", scn.localize.max_peaks));
    scn.localize.suppression_radius_m = l->get_double("suppression_radius", scn.localize.suppression_radius_m);
    scn.localize.peak_fraction = l->get_double("peak_fraction", scn.localize.peak_fraction);
    scn.localize.min_counts = l->get_int("min_counts", scn.localize.min_counts);
  }

  // Surfaces motion configuration errors at load time.
  const MotionSampler check(scn.trajectory, scn.motion);
  (void)check;
  return scn;
}

SimulationResult simulate(const Scenario& scenario) {
  const MotionSampler sampler(scenario.trajectory, scenario.motion);
  const DetectorModel& det = scenario.detector;
  const Vec3 half = det.crystal_half_mm();
  const double deg = std::numbers::pi / 180.0;
  const double cos_hi = std::cos(det.scatter_theta_min_deg * deg);
  const double cos_lo = std::cos(det.scatter_theta_max_deg * deg);

  struct Tagged {
    ListModeEvent ev;
    int source;
  };
  std::vector<Tagged> all;

  for (std::size_t si = 0; si < scenario.sources.size(); ++si) {
    const SourceTruth& src = scenario.sources[si];
    const ExposureProfile profile(src.position, sampler, kMinSourceRangeM);
    for (std::size_t li = 0; li < src.lines.size(); ++li) {
      const EmissionLine& line = src.lines[li];
      const double e0 = line.energy_kev;
      const double mu = det.efficiency_constant * src.activity_uci *
                        src.attenuation * line.branching * profile.integral();
      if (!(mu > 0.0)) continue;

      std::mt19937_64 rng(derive_seed(scenario.seed, si, li));
      const long n = std::poisson_distribution<long>(mu)(rng);

      const double k = e0 / kElectronRestEnergyKeV;
      double kn_max = 0.0;
      if (det.scatter_sampling == ScatterSampling::KleinNishina) {
        for (int i = 0; i < 200; ++i) {
          const double c =
              cos_lo + (cos_hi - cos_lo) * (static_cast<double>(i) / 199.0);
          kn_max = std::max(kn_max, kn_shape(k, c));
        }
        kn_max *= 1.0001;
      }

      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::uniform_real_distribution<double> ux(-half.x(), half.x());
      std::uniform_real_distribution<double> uy(-half.y(), half.y());
      std::uniform_real_distribution<double> uz(-half.z(), half.z());
      std::uniform_real_distribution<double> uphi(0.0, 2.0 * std::numbers::pi);
      std::exponential_distribution<double> upath(
          1.0 / (det.mean_free_path_cm * 10.0));
      std::normal_distribution<double> gauss(0.0, 1.0);

      for (long i = 0; i < n; ++i) {
        const double tau = profile.sample_time(rng);
        const Vec3 p1_mm(ux(rng), uy(rng), uz(rng));
        const Pose pose = sampler.pose(tau);
        const Vec3 p1_w = transform_point(pose, p1_mm * 1e-3);
        Vec3 d_in_w = p1_w - src.position;
        const double range = d_in_w.norm();
        if (range < kMinSourceRangeM) {
          throw SourceInsideDetector("source overlaps the crystal");
        }
        d_in_w /= range;
        const Vec3 d_in = pose.rotation.conjugate() * d_in_w;

        double c = 0.0;
        if (det.scatter_sampling == ScatterSampling::KleinNishina) {
          do {
            c = cos_lo + (cos_hi - cos_lo) * u01(rng);
          } while (u01(rng) * kn_max > kn_shape(k, c));
        } else {
          c = cos_lo + (cos_hi - cos_lo) * u01(rng);
        }
        const double theta = std::acos(std::clamp(c, -1.0, 1.0));
        const double e1 = deposit_for_angle(e0, theta);
        const double phi = uphi(rng);

        const Vec3 u_axis = d_in.unitOrthogonal();
        const Vec3 v_axis = d_in.cross(u_axis);
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const Vec3 d_out =
            c * d_in + s * (std::cos(phi) * u_axis + std::sin(phi) * v_axis);
        const double len_mm = upath(rng);
        const Vec3 p2_mm = p1_mm + d_out * len_mm;

        Tagged tagged;
        tagged.source = static_cast<int>(si);
        tagged.ev.t = tau;
        if (det.inside_crystal_mm(p2_mm)) {
          tagged.ev.interactions = {{p1_mm, e1}, {p2_mm, e0 - e1}};
        } else {
          tagged.ev.interactions = {{p1_mm, e1}};
        }
        for (auto& it : tagged.ev.interactions) {
          if (det.position_sigma_mm > 0.0) {
            it.position_mm += det.position_sigma_mm *
                              Vec3(gauss(rng), gauss(rng), gauss(rng));
          }
          if (det.energy_sigma_coeff > 0.0) {
            it.energy_kev += det.energy_sigma_kev(it.energy_kev) * gauss(rng);
          }
          it.energy_kev = std::max(it.energy_kev, 0.001);
        }
        all.push_back(std::move(tagged));
      }
    }
  }

  // Stable sort keeps the (source, line, photon) generation order on ties.
  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged& a, const Tagged& b) { return a.ev.t < b.ev.t; });

  SimulationResult out;
  out.events.reserve(all.size());
  out.source_ids.reserve(all.size());
  for (auto& t : all) {
    out.events.push_back(std::move(t.ev));
    out.source_ids.push_back(t.source);
  }
  return out;
}

double expected_interaction_count(const Scenario& scenario) {
  const MotionSampler sampler(scenario.trajectory, scenario.motion);
  double total = 0.0;
  for (const auto& src : scenario.sources) {
    const ExposureProfile profile(src.position, sampler, kMinSourceRangeM);
    for (const auto& line : src.lines) {
      total += scenario.detector.efficiency_constant * src.activity_uci *
               src.attenuation * line.branching * profile.integral();
    }
  }
  return total;
}

double expected_window_count(const Scenario& scenario,
                             const EnergyWindow& window) {
  const MotionSampler sampler(scenario.trajectory, scenario.motion);
  double total = 0.0;
  for (const auto& src : scenario.sources) {
    const ExposureProfile profile(src.position, sampler, kMinSourceRangeM);
    for (const auto& line : src.lines) {
      if (!window.contains(line.energy_kev)) continue;
      total += scenario.detector.efficiency_constant * src.activity_uci *
               src.attenuation * line.branching * profile.integral();
    }
  }
  return total;
}

Trajectory perturb_trajectory(const Trajectory& trajectory,
                              double sigma_translation_m,
                              double sigma_rotation_rad, std::uint64_t seed) {
  if (sigma_translation_m < 0.0 || sigma_rotation_rad < 0.0) {
    throw OutOfRange("perturbation sigmas must be non-negative");
  }
  Trajectory out = trajectory;
  if (sigma_translation_m == 0.0 && sigma_rotation_rad == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& p : out.poses) {
    const Vec3 dt(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 dw(gauss(rng), gauss(rng), gauss(rng));
    p.translation += sigma_translation_m * dt;
    if (sigma_rotation_rad > 0.0) {
      const Vec3 w = sigma_rotation_rad * dw;
      const double angle = w.norm();
      if (angle > 0.0) {
        const Quat err(Eigen::AngleAxisd(angle, w / angle));
        p.rotation = (err * p.rotation).normalized();
      }
    }
  }
  return out;
}

}  // namespace radmap
