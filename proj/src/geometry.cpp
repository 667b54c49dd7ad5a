#include "radmap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace radmap {

Pose::Pose(double time, const Vec3& trans, const Quat& rot)
    : t(time), translation(trans), rotation(rot) {
  const double n = rotation.norm();
  if (!(n > 1e-12)) {
    throw ParseError("pose rotation quaternion has near-zero norm");
  }
  rotation.normalize();
}

Vec3 transform_point(const Pose& pose, const Vec3& p_det) {
  return pose.rotation * p_det + pose.translation;
}

Vec3 transform_direction(const Pose& pose, const Vec3& d_det) {
  if (std::abs(d_det.norm() - 1.0) > 1e-6) {
    throw NonUnitDirection("transform_direction: |d| = " +
                           std::to_string(d_det.norm()));
  }
  return (pose.rotation * d_det).normalized();
}

Pose inverse(const Pose& pose) {
  Pose inv;
  inv.t = pose.t;
  inv.rotation = pose.rotation.conjugate();
  inv.translation = -(inv.rotation * pose.translation);
  return inv;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.t = b.t;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

void validate_trajectory(const Trajectory& traj) {
  if (traj.poses.empty()) {
    throw ParseError("trajectory is empty");
  }
  for (size_t i = 0; i + 1 < traj.poses.size(); ++i) {
    if (!(traj.poses[i].t < traj.poses[i + 1].t)) {
      throw ParseError("trajectory timestamps not strictly increasing at row " +
                       std::to_string(i + 1));
    }
  }
}

Pose pose_at(const Trajectory& traj, double t) {
  if (traj.empty()) {
    throw OutOfRange("pose_at: empty trajectory");
  }
  if (t < traj.t_first() || t > traj.t_last()) {
    throw OutOfRange("pose_at: t=" + std::to_string(t) + " outside [" +
                     std::to_string(traj.t_first()) + ", " +
                     std::to_string(traj.t_last()) + "]");
  }
  const auto& poses = traj.poses;
  auto it = std::lower_bound(
      poses.begin(), poses.end(), t,
      [](const Pose& p, double time) { return p.t < time; });
  if (it != poses.end() && it->t == t) {
    return *it;  // exact at knots
  }
  const Pose& hi = *it;
  const Pose& lo = *(it - 1);
  const double u = (t - lo.t) / (hi.t - lo.t);
  Pose out;
  out.t = t;
  out.translation = lo.translation + u * (hi.translation - lo.translation);
  out.rotation = lo.rotation.slerp(u, hi.rotation);  // shortest path
  return out;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open trajectory file: " + path);
  }
  Trajectory traj;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double t, x, y, z, qw, qx, qy, qz;
    if (!(ss >> t >> x >> y >> z >> qw >> qx >> qy >> qz)) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected `t x y z qw qx qy qz`");
    }
    traj.poses.emplace_back(t, Vec3(x, y, z), Quat(qw, qx, qy, qz));
  }
  validate_trajectory(traj);
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ParseError("cannot write trajectory file: " + path);
  }
  out << "# t x y z qw qx qy qz\n";
  char buf[256];
  for (const Pose& p : traj.poses) {
    std::snprintf(buf, sizeof(buf),
                  "%.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g\n", p.t,
                  p.translation.x(), p.translation.y(), p.translation.z(),
                  p.rotation.w(), p.rotation.x(), p.rotation.y(),
                  p.rotation.z());
    out << buf;
  }
}

}  // namespace radmap
