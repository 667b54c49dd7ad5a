#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "radmap/errors.hpp"
#include "radmap/geometry.hpp"
#include "radmap/physics.hpp"

namespace radmap {

// Axis-aligned scalar field over the imaging volume. Storage is x-fastest:
// values[ix + nx*(iy + ny*iz)]. Cubic voxels of side `resolution` metres,
// `origin` at the minimum corner.
template <typename Scalar>
struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.1;
  int nx = 0, ny = 0, nz = 0;
  std::vector<Scalar> values;

  static VoxelGrid from_box(const Vec3& lo, const Vec3& hi, double res) {
    if (!(res > 0.0)) throw OutOfRange("voxel grid: resolution must be positive");
    VoxelGrid g;
    g.origin = lo;
    g.resolution = res;
    int dims[3];
    for (int a = 0; a < 3; ++a) {
      const double span = hi[a] - lo[a];
      if (!(span > 0.0)) throw OutOfRange("voxel grid: box has no extent");
      dims[a] = std::max(1, static_cast<int>(std::ceil(span / res - 1e-9)));
    }
    g.nx = dims[0];
    g.ny = dims[1];
    g.nz = dims[2];
    g.values.assign(static_cast<std::size_t>(g.nx) * g.ny * g.nz, Scalar(0));
    return g;
  }

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  std::size_t index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(iy) +
                static_cast<std::size_t>(ny) * static_cast<std::size_t>(iz));
  }

  Eigen::Vector3i coords(std::size_t idx) const {
    const int ix = static_cast<int>(idx % nx);
    const int iy = static_cast<int>((idx / nx) % ny);
    const int iz = static_cast<int>(idx / (static_cast<std::size_t>(nx) * ny));
    return {ix, iy, iz};
  }

  Vec3 center(int ix, int iy, int iz) const {
    return origin + resolution * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
  }
  Vec3 center(std::size_t idx) const {
    const auto c = coords(idx);
    return center(c.x(), c.y(), c.z());
  }

  Scalar& operator()(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }
  Scalar operator()(int ix, int iy, int iz) const {
    return values[index(ix, iy, iz)];
  }

  void fill(Scalar v) { std::fill(values.begin(), values.end(), v); }

  double total() const {
    double s = 0.0;
    for (const Scalar v : values) s += static_cast<double>(v);
    return s;
  }

  double diagonal() const {
    return resolution * Vec3(nx, ny, nz).norm();
  }

  template <typename T>
  VoxelGrid<T> cast() const {
    VoxelGrid<T> g;
    g.origin = origin;
    g.resolution = resolution;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.values.reserve(values.size());
    for (const Scalar v : values) g.values.push_back(static_cast<T>(v));
    return g;
  }
};

using Grid = VoxelGrid<double>;

// One event's sparse slice of the system matrix: t_ij over voxels j.
struct SystemMatrixRow {
  long event_id = -1;
  std::vector<std::uint32_t> indices;
  std::vector<double> weights;

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }
};

struct ReconSettings {
  int iterations = 10;
  double sigma_cutoff = 3.0;       // keep voxels with |angle residual| <= cutoff*sigma
  double distance_power = 0.0;     // weight *= |v-apex|^-p
  double epsilon = 1e-4;           // relative log-likelihood early stop, <=0 disables
  double max_apex_distance = 0.0;  // metres, <=0 means the grid diagonal
  std::size_t row_cache_budget = 120000000;  // cached nonzeros before streaming
};

// Gaussian-in-angle cone kernel sampled at voxel centers. The cone is a full
// surface of revolution (no half-space cut); voxels nearer the apex than one
// resolution unit or farther than max_apex_distance are excluded. An empty
// row is a flag for the caller, not an error.
SystemMatrixRow system_row(const ConeOfResponse& cone, const Grid& grid,
                           const ReconSettings& settings);

// Sum of system rows. Throws AllRowsEmpty when no cone touches the grid.
Grid sbp(const std::vector<ConeOfResponse>& cones, const Grid& grid,
         const ReconSettings& settings);

struct MlemResult {
  Grid grid;
  std::vector<double> log_likelihood;  // one entry per executed iteration
  std::size_t dropped_events = 0;      // empty rows removed before iterating
};

// List-mode MLEM with uniform sensitivity: lambda_j <- lambda_j * sum_i
// t_ij / (sum_k t_ik lambda_k). grid0 must be strictly positive. Events whose
// rows are empty are dropped (counted in the result) before iterating.
// The log-likelihood sum_i log q_i is non-decreasing across iterations.
MlemResult mlem(const std::vector<ConeOfResponse>& cones, const Grid& grid0,
                const ReconSettings& settings);

struct GridPeak {
  std::size_t index = 0;
  Vec3 center{0.0, 0.0, 0.0};
  double value = 0.0;
};

// Lowest linear index wins ties. Throws EmptyGrid on an empty grid.
GridPeak grid_argmax(const Grid& grid);

// Binary grid file: magic "GVX1", nx ny nz as uint32 LE, origin and
// resolution as float64 (ox oy oz res), then values as float32 x-fastest.
void save_grid(const std::string& path, const VoxelGrid<float>& grid);
inline void save_grid(const std::string& path, const Grid& grid) {
  save_grid(path, grid.template cast<float>());
}
VoxelGrid<float> load_grid(const std::string& path);

// Plot-friendly text export, one `ix iy iz value` line per nonzero voxel.
void export_grid_text(const std::string& path, const Grid& grid);

}  // namespace radmap
