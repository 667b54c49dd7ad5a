#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "radmap/detector.hpp"
#include "radmap/geometry.hpp"
#include "radmap/localization.hpp"
#include "radmap/physics.hpp"
#include "radmap/reconstruction.hpp"

namespace radmap {

std::uint64_t splitmix64(std::uint64_t x);

// Independent per-stream seeds: folding (a, b) into base with splitmix64
// rounds keeps streams stable when other sources or lines are added.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

struct EmissionLine {
  double energy_kev = 0.0;
  double branching = 0.0;  // photons per decay
};

// Principal gamma lines of the isotopes the bundled scenarios use.
// Throws ParseError for an unknown isotope.
std::vector<EmissionLine> isotope_lines(const std::string& isotope);

struct SourceTruth {
  std::string isotope;
  Vec3 position = Vec3::Zero();  // world frame, metres
  double activity_uci = 0.0;
  double attenuation = 1.0;  // net transmission of intervening material
  std::vector<EmissionLine> lines;
};

struct DwellSegment {
  int pose_index = 0;
  double seconds = 0.0;
};

struct Motion {
  enum class Mode { Discrete, Continuous };
  Mode mode = Mode::Discrete;
  std::vector<DwellSegment> dwells;  // Discrete: ordered visits of knots
  double speed_mps = 0.1;            // Continuous: speed along the path
};

// Maps mission time to detector pose. Discrete motion parks at trajectory
// knots for the dwell durations; continuous motion retimes the path by arc
// length so speed_mps is the speed the detector actually flies.
class MotionSampler {
 public:
  MotionSampler(const Trajectory& trajectory, const Motion& motion);

  double duration() const { return duration_; }
  Pose pose(double t) const;  // t clamped to [0, duration]

  // Dwell start times plus the total; empty for continuous motion.
  const std::vector<double>& dwell_boundaries() const { return boundaries_; }

 private:
  Motion::Mode mode_;
  std::vector<Pose> dwell_poses_;
  std::vector<double> boundaries_;  // Discrete: dwell starts plus total
  Trajectory retimed_;              // Continuous
  double duration_ = 0.0;
};

struct ExposureSegment {
  double t0 = 0.0;
  double dt = 0.0;
  double weight = 0.0;  // dt / r^2 at the segment midpoint, r in metres
};

// Piecewise-constant inverse-square exposure of one source over the mission.
// Throws SourceInsideDetector when any sampled range drops below
// min_distance_m.
class ExposureProfile {
 public:
  ExposureProfile(const Vec3& source_position, const MotionSampler& sampler,
                  double min_distance_m = 0.01);

  const std::vector<ExposureSegment>& segments() const { return segments_; }
  double integral() const { return integral_; }  // sum of weights / 4pi
  double sample_time(std::mt19937_64& rng) const;

 private:
  std::vector<ExposureSegment> segments_;
  std::vector<double> cumulative_;
  double integral_ = 0.0;
};

struct Scenario {
  std::string name;
  Vec3 room_min = Vec3::Zero();
  Vec3 room_max = Vec3::Zero();
  double resolution_m = 0.1;
  std::uint64_t seed = 0;
  std::string trajectory_path;  // resolved relative to the scenario file
  Trajectory trajectory;
  Motion motion;
  DetectorModel detector;
  std::vector<EnergyWindow> windows;
  std::vector<SourceTruth> sources;
  ReconSettings recon;
  LocalizeSettings localize;
};

Scenario load_scenario(const std::string& path);

struct SimulationResult {
  std::vector<ListModeEvent> events;  // time ordered, detector-frame mm
  std::vector<int> source_ids;        // per event, index into sources
};

// Generates the list-mode stream for a scenario. Every photon Compton
// scatters once at a uniform point in the crystal; the scattered photon is
// absorbed after an exponential path or escapes, leaving a two-site or a
// single-site event. Each (source, line) pair owns an RNG stream seeded
// through derive_seed, so streams never interleave.
SimulationResult simulate(const Scenario& scenario);

// First-order expected yields, before crystal escape and energy noise.
double expected_interaction_count(const Scenario& scenario);
double expected_window_count(const Scenario& scenario,
                             const EnergyWindow& window);

// Zero-mean Gaussian noise on every knot, exact copy when both sigmas are
// zero. Rotation noise composes a small random rotation on the world side.
Trajectory perturb_trajectory(const Trajectory& trajectory,
                              double sigma_translation_m,
                              double sigma_rotation_rad, std::uint64_t seed);

}  // namespace radmap
