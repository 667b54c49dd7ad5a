#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace radmap {

enum class ScatterSampling { UniformCosine, KleinNishina };

// Single-crystal Compton camera. Lengths in the crystal frame are millimetres;
// crystal_size is given in centimetres to match the usual datasheet convention.
struct DetectorModel {
  Eigen::Vector3d crystal_size_cm{2.0, 2.0, 1.5};

  double position_sigma_mm = 1.0;
  double energy_sigma_coeff = 0.2;  // sigma_E = coeff * sqrt(E) [keV]

  // Counts * m^2 per (uCi * s): folds intrinsic efficiency, double-interaction
  // capture probability and the in-window acceptance into one constant.
  double efficiency_constant = 6.6;

  double min_lever_arm_mm = 2.0;
  double sigma_floor_rad = 0.02;
  double mean_free_path_cm = 2.0;

  double scatter_theta_min_deg = 10.0;
  double scatter_theta_max_deg = 120.0;
  ScatterSampling scatter_sampling = ScatterSampling::UniformCosine;

  double energy_sigma_kev(double e_kev) const {
    return energy_sigma_coeff * std::sqrt(e_kev);
  }

  // Crystal is an axis-aligned box centred on the detector-frame origin.
  Eigen::Vector3d crystal_half_mm() const { return crystal_size_cm * 5.0; }

  bool inside_crystal_mm(const Eigen::Vector3d& p_mm) const {
    const Eigen::Vector3d h = crystal_half_mm();
    return std::abs(p_mm.x()) <= h.x() && std::abs(p_mm.y()) <= h.y() &&
           std::abs(p_mm.z()) <= h.z();
  }
};

}  // namespace radmap
