#include "radmap/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

namespace radmap {

SystemMatrixRow system_row(const ConeOfResponse& cone, const Grid& grid,
                           const ReconSettings& settings) {
  if (grid.empty()) throw EmptyGrid("system_row: empty grid");
  if (!(cone.sigma_angle > 0.0)) {
    throw OutOfRange("system_row: cone sigma_angle must be positive");
  }
  const double sigma = cone.sigma_angle;
  const double band = settings.sigma_cutoff * sigma;
  const double max_d =
      settings.max_apex_distance > 0.0 ? settings.max_apex_distance : grid.diagonal();
  const double min_d = grid.resolution;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const double p = settings.distance_power;

  // Cosine-space image of the angular band, padded so no in-band voxel can be
  // lost to rounding; survivors still pass the exact |delta| <= band test, so
  // the accepted set and weights match the direct per-voxel evaluation.
  const double c_hi = std::cos(std::max(cone.half_angle - band, 0.0)) + 1e-12;
  const double c_lo =
      std::cos(std::min(cone.half_angle + band, std::numbers::pi)) - 1e-12;

  std::vector<double> dxs(static_cast<std::size_t>(grid.nx));
  std::vector<double> dys(static_cast<std::size_t>(grid.ny));
  std::vector<double> dzs(static_cast<std::size_t>(grid.nz));
  for (int ix = 0; ix < grid.nx; ++ix) {
    dxs[ix] = grid.center(ix, 0, 0).x() - cone.apex.x();
  }
  for (int iy = 0; iy < grid.ny; ++iy) {
    dys[iy] = grid.center(0, iy, 0).y() - cone.apex.y();
  }
  for (int iz = 0; iz < grid.nz; ++iz) {
    dzs[iz] = grid.center(0, 0, iz).z() - cone.apex.z();
  }

  SystemMatrixRow row;
  std::size_t idx = 0;
  for (int iz = 0; iz < grid.nz; ++iz) {
    const double dz = dzs[iz];
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double dy = dys[iy];
      for (int ix = 0; ix < grid.nx; ++ix, ++idx) {
        const Vec3 d(dxs[ix], dy, dz);
        const double r = d.norm();
        if (r < min_d || r > max_d) continue;
        const double a = d.dot(cone.axis);
        if (a < c_lo * r || a > c_hi * r) continue;
        const double c = std::clamp(a / r, -1.0, 1.0);
        const double delta = std::acos(c) - cone.half_angle;
        if (std::abs(delta) > band) continue;
        double w = std::exp(-delta * delta * inv_two_sigma2);
        if (p != 0.0) w *= std::pow(r, -p);
        row.indices.push_back(static_cast<std::uint32_t>(idx));
        row.weights.push_back(w);
      }
    }
  }
  return row;
}

Grid sbp(const std::vector<ConeOfResponse>& cones, const Grid& grid,
         const ReconSettings& settings) {
  Grid out = grid;
  out.fill(0.0);
  bool any = false;
  for (const auto& cone : cones) {
    const SystemMatrixRow row = system_row(cone, out, settings);
    if (row.empty()) continue;
    any = true;
    for (std::size_t k = 0; k < row.size(); ++k) {
      out.values[row.indices[k]] += row.weights[k];
    }
  }
  if (!any) throw AllRowsEmpty("sbp: no cone intersects the grid");
  return out;
}

MlemResult mlem(const std::vector<ConeOfResponse>& cones, const Grid& grid0,
                const ReconSettings& settings) {
  if (settings.iterations < 1) {
    throw OutOfRange("mlem: iterations must be >= 1");
  }
  if (grid0.empty()) throw EmptyGrid("mlem: empty grid");
  for (const double v : grid0.values) {
    if (!(v > 0.0)) {
      throw OutOfRange("mlem: initial grid must be strictly positive");
    }
  }

  MlemResult result;
  result.grid = grid0;

  // One pass over all cones decides which rows are usable and whether they
  // fit the cache budget; a blown budget switches to per-iteration recompute.
  std::vector<SystemMatrixRow> cache;
  std::vector<std::size_t> kept;
  bool cached = true;
  std::size_t cached_nnz = 0;
  for (std::size_t i = 0; i < cones.size(); ++i) {
    SystemMatrixRow row = system_row(cones[i], grid0, settings);
    if (row.empty()) {
      ++result.dropped_events;
      continue;
    }
    row.event_id = static_cast<long>(i);
    kept.push_back(i);
    if (cached) {
      cached_nnz += row.size();
      if (cached_nnz > settings.row_cache_budget) {
        cached = false;
        cache.clear();
        cache.shrink_to_fit();
      } else {
        cache.push_back(std::move(row));
      }
    }
  }
  if (kept.empty()) throw AllRowsEmpty("mlem: no cone intersects the grid");

  // Rescaling the start grid so its mass equals the event count leaves the
  // iterate sequence's shape unchanged (the first update is scale invariant)
  // and makes the mass-preserving update monotone in likelihood from the
  // first iteration.
  const double scale = static_cast<double>(kept.size()) / result.grid.total();
  for (double& v : result.grid.values) v *= scale;

  std::vector<double> ratio(result.grid.size());
  for (int it = 0; it < settings.iterations; ++it) {
    std::fill(ratio.begin(), ratio.end(), 0.0);
    double ll = 0.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      SystemMatrixRow streamed;
      const SystemMatrixRow& row =
          cached ? cache[k]
                 : (streamed = system_row(cones[kept[k]], result.grid, settings),
                    streamed);
      double q = 0.0;
      for (std::size_t e = 0; e < row.size(); ++e) {
        q += row.weights[e] * result.grid.values[row.indices[e]];
      }
      if (!(q > 0.0)) {
        throw ZeroDenominator("mlem: event " + std::to_string(kept[k]) +
                              " has zero forward projection");
      }
      ll += std::log(q);
      const double inv_q = 1.0 / q;
      for (std::size_t e = 0; e < row.size(); ++e) {
        ratio[row.indices[e]] += row.weights[e] * inv_q;
      }
    }
    result.log_likelihood.push_back(ll);
    for (std::size_t j = 0; j < ratio.size(); ++j) {
      result.grid.values[j] *= ratio[j];
    }
    if (settings.epsilon > 0.0 && result.log_likelihood.size() >= 2) {
      const double prev = result.log_likelihood[result.log_likelihood.size() - 2];
      if (std::abs(ll - prev) <= settings.epsilon * std::abs(prev)) break;
    }
  }
  return result;
}

GridPeak grid_argmax(const Grid& grid) {
  if (grid.empty()) throw EmptyGrid("grid_argmax: empty grid");
  std::size_t best = 0;
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (grid.values[j] > grid.values[best]) best = j;
  }
  return GridPeak{best, grid.center(best), grid.values[best]};
}

void save_grid(const std::string& path, const VoxelGrid<float>& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("save_grid: cannot open " + path);
  out.write("GVX1", 4);
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(grid.nx),
                                 static_cast<std::uint32_t>(grid.ny),
                                 static_cast<std::uint32_t>(grid.nz)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const double geom[4] = {grid.origin.x(), grid.origin.y(), grid.origin.z(),
                          grid.resolution};
  out.write(reinterpret_cast<const char*>(geom), sizeof(geom));
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!out) throw ParseError("save_grid: write failed for " + path);
}

VoxelGrid<float> load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_grid: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GVX1", 4) != 0) {
    throw ParseError("load_grid: bad magic in " + path);
  }
  std::uint32_t dims[3];
  double geom[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  in.read(reinterpret_cast<char*>(geom), sizeof(geom));
  if (!in) throw ParseError("load_grid: truncated header in " + path);
  const std::uint64_t n =
      static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2];
  if (n == 0 || n > (1ull << 31)) {
    throw ParseError("load_grid: implausible dimensions in " + path);
  }
  VoxelGrid<float> g;
  g.nx = static_cast<int>(dims[0]);
  g.ny = static_cast<int>(dims[1]);
  g.nz = static_cast<int>(dims[2]);
  g.origin = Vec3(geom[0], geom[1], geom[2]);
  g.resolution = geom[3];
  g.values.resize(n);
  in.read(reinterpret_cast<char*>(g.values.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw ParseError("load_grid: truncated values in " + path);
  return g;
}

void export_grid_text(const std::string& path, const Grid& grid) {
  std::ofstream out(path);
  if (!out) throw ParseError("export_grid_text: cannot open " + path);
  out << "# ix iy iz value\n";
  char line[128];
  std::size_t idx = 0;
  for (int iz = 0; iz < grid.nz; ++iz) {
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix, ++idx) {
        const double v = grid.values[idx];
        if (v == 0.0) continue;
        std::snprintf(line, sizeof(line), "%d %d %d %.12g\n", ix, iy, iz, v);
        out << line;
      }
    }
  }
}

}  // namespace radmap
