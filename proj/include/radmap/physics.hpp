#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "radmap/detector.hpp"
#include "radmap/geometry.hpp"

namespace radmap {

inline constexpr double kElectronRestEnergyKeV = 511.0;

// Cosine tolerance past the kinematic limit before a deposit is rejected.
// Deposits computed in double at exactly the Compton edge land within this of
// cos(theta) = -1; anything further out is treated as unphysical.
inline constexpr double kEdgeSlack = 1e-12;

// One interaction inside the crystal, detector frame, millimetres / keV.
struct Interaction {
  Vec3 position_mm{0.0, 0.0, 0.0};
  double energy_kev = 0.0;
};

// Interactions are stored in scatter order: the first entry is the Compton
// scatter vertex, the second the absorption (or second scatter) site.
struct ListModeEvent {
  double t = 0.0;
  std::vector<Interaction> interactions;

  double total_energy() const {
    double sum = 0.0;
    for (const auto& i : interactions) sum += i.energy_kev;
    return sum;
  }
};

struct EnergyWindow {
  std::string label;
  double center_kev = 0.0;
  double width_kev = 20.0;

  bool contains(double e_kev) const {
    return std::abs(e_kev - center_kev) <= 0.5 * width_kev;
  }
};

// Backprojection cone in world coordinates (metres). The axis points from the
// second interaction through the apex and beyond; the source direction makes
// an angle of half_angle with it.
struct ConeOfResponse {
  Vec3 apex{0.0, 0.0, 0.0};
  Vec3 axis{0.0, 0.0, 1.0};
  double half_angle = 0.0;
  double sigma_angle = 0.0;
  std::string window_label;
};

// Scattering angle for a photon of energy e0 depositing e_dep1 at the first
// vertex. Throws KinematicallyForbidden when the deposit exceeds the Compton
// edge by more than the numerical slack.
double compton_half_angle(double e0_kev, double e_dep1_kev);

// Maximum first-vertex deposit (backscatter, theta = pi).
double compton_edge(double e0_kev);

// Inverse of compton_half_angle in its second argument: the deposit that
// produces scattering angle theta. theta in [0, pi].
double deposit_for_angle(double e0_kev, double theta);

// d(theta)/d(e_dep1), positive, diverging at the edge.
double half_angle_derivative(double e0_kev, double e_dep1_kev);

// Label of the unique window containing the summed deposit, or nullopt when
// the event is not imageable (fewer than two interactions, or no window).
// Throws OverlappingWindows if two differently labeled windows claim it.
std::optional<std::string> classify_event(const ListModeEvent& event,
                                          const std::vector<EnergyWindow>& windows);

// Photopeak windows for the four isotopes the toolkit ships with; Co-60
// contributes two windows under one label.
std::vector<EnergyWindow> default_windows(double width_kev = 20.0);

// Throws OverlappingWindows when two differently labeled windows intersect;
// same-label windows may touch (they merge into one imaging channel).
void validate_windows(const std::vector<EnergyWindow>& windows);

// 1-sigma angular uncertainty of the cone half-angle: geometric (position
// blur over the lever arm) and energetic (deposit blur through the kinematics)
// contributions in quadrature, clamped to [sigma_floor_rad, pi/4].
double angular_uncertainty(const ListModeEvent& event, double e0_kev,
                           const DetectorModel& det);

// Builds the world-frame cone for an event assigned to a window, taking the
// window centre as the incident energy. Throws DegenerateLeverArm when the
// two vertices are closer than det.min_lever_arm_mm, KinematicallyForbidden
// when the measured first deposit is past the edge for the window energy.
ConeOfResponse cone_from_event(const ListModeEvent& event,
                               const EnergyWindow& window, const Pose& pose,
                               const DetectorModel& det);

// Histogram of summed event energies. Returns (bin lower edge, count) pairs
// for non-empty bins, ascending.
std::vector<std::pair<double, std::size_t>> spectrum(
    const std::vector<ListModeEvent>& events, double bin_width_kev);

void save_spectrum(const std::string& path,
                   const std::vector<std::pair<double, std::size_t>>& bins);

// Text list-mode format: one line per interaction,
//   event_id t x_mm y_mm z_mm e_kev
// with the interactions of an event contiguous and in scatter order.
void save_events(const std::string& path,
                 const std::vector<ListModeEvent>& events);
std::vector<ListModeEvent> load_events(const std::string& path);

// Sidecar truth map: one `event_id source_id` line per event.
void save_source_ids(const std::string& path,
                     const std::vector<int>& source_ids);
std::vector<int> load_source_ids(const std::string& path);

}  // namespace radmap
