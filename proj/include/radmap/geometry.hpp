#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "radmap/errors.hpp"

namespace radmap {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// A timestamped rigid transform placing the detector in the world frame.
/// The rotation maps detector-frame vectors to world-frame vectors.
struct Pose {
  double t = 0.0;                       // seconds
  Vec3 translation = Vec3::Zero();      // meters, world frame
  Quat rotation = Quat::Identity();     // detector -> world

  Pose() = default;
  Pose(double time, const Vec3& trans, const Quat& rot);

  static Pose identity() { return {}; }
};

Vec3 transform_point(const Pose& pose, const Vec3& p_det);

// Rotation only. Throws NonUnitDirection if |d_det| deviates from 1 by
// more than 1e-6.
Vec3 transform_direction(const Pose& pose, const Vec3& d_det);

Pose inverse(const Pose& pose);
Pose compose(const Pose& a, const Pose& b);  // applies b first, then a

/// Ordered poses with strictly increasing timestamps.
struct Trajectory {
  std::vector<Pose> poses;

  bool empty() const { return poses.empty(); }
  double t_first() const { return poses.front().t; }
  double t_last() const { return poses.back().t; }
};

// Linear interpolation of translation, slerp of rotation, exact at knots.
// Throws OutOfRange outside [t_first, t_last].
Pose pose_at(const Trajectory& traj, double t);

// Throws ParseError on malformed trajectories (empty, non-increasing t).
void validate_trajectory(const Trajectory& traj);

// Plain text, one pose per line: t x y z qw qx qy qz. Lines starting
// with '#' are ignored.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const Trajectory& traj, const std::string& path);

}  // namespace radmap
