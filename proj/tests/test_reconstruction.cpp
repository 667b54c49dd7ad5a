#include "radmap/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <doctest.h>

#include "radmap/errors.hpp"

using namespace radmap;

namespace {

// Straight-line dense evaluation of the kernel definition over every voxel,
// kept deliberately independent of the sparse implementation's loop order.
std::vector<double> dense_kernel(const ConeOfResponse& cone, const Grid& grid,
                                 const ReconSettings& s) {
  std::vector<double> w(grid.size(), 0.0);
  const double maxd = s.max_apex_distance > 0.0
                          ? s.max_apex_distance
                          : grid.resolution * std::sqrt(double(grid.nx) * grid.nx +
                                                        double(grid.ny) * grid.ny +
                                                        double(grid.nz) * grid.nz);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Vec3 d = grid.center(j) - cone.apex;
    const double r = d.norm();
    if (r < grid.resolution || r > maxd) continue;
    const double ang = std::acos(std::clamp(d.dot(cone.axis) / r, -1.0, 1.0));
    const double delta = ang - cone.half_angle;
    if (std::abs(delta) > s.sigma_cutoff * cone.sigma_angle) continue;
    double val = std::exp(-delta * delta / (2.0 * cone.sigma_angle * cone.sigma_angle));
    if (s.distance_power != 0.0) val *= std::pow(r, -s.distance_power);
    w[j] = val;
  }
  return w;
}

ConeOfResponse random_cone(std::mt19937_64& rng, const Grid& grid) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 span(grid.nx * grid.resolution, grid.ny * grid.resolution,
                  grid.nz * grid.resolution);
  ConeOfResponse cone;
  for (int a = 0; a < 3; ++a) {
    cone.apex[a] = grid.origin[a] + (3.0 * u(rng) - 1.0) * span[a];
  }
  Vec3 axis;
  do {
    axis = Vec3(2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1);
  } while (axis.norm() < 0.1);
  cone.axis = axis.normalized();
  cone.half_angle = 0.1 + 2.7 * u(rng);
  cone.sigma_angle = 0.02 + 0.58 * u(rng);
  return cone;
}

// Cone whose surface passes exactly through `target`.
ConeOfResponse cone_through(const Vec3& apex, const Vec3& target,
                            double half_angle, double sigma,
                            const Vec3& tilt_hint) {
  const Vec3 d = (target - apex).normalized();
  Vec3 u = tilt_hint - tilt_hint.dot(d) * d;
  u.normalize();
  ConeOfResponse cone;
  cone.apex = apex;
  cone.axis = std::cos(half_angle) * d + std::sin(half_angle) * u;
  cone.half_angle = half_angle;
  cone.sigma_angle = sigma;
  return cone;
}

}  // namespace

TEST_CASE("voxel grid geometry") {
  const Grid g = Grid::from_box(Vec3(0, 0, 0), Vec3(5, 4, 2.5), 0.1);
  CHECK(g.nx == 50);
  CHECK(g.ny == 40);
  CHECK(g.nz == 25);
  CHECK(g.size() == 50000);
  CHECK((g.center(0, 0, 0) - Vec3(0.05, 0.05, 0.05)).norm() < 1e-15);
  CHECK((g.center(49, 39, 24) - Vec3(4.95, 3.95, 2.45)).norm() < 1e-12);

  const std::size_t idx = g.index(7, 11, 3);
  const auto c = g.coords(idx);
  CHECK(c.x() == 7);
  CHECK(c.y() == 11);
  CHECK(c.z() == 3);
  CHECK((g.center(idx) - g.center(7, 11, 3)).norm() == 0.0);
  CHECK(g.diagonal() == doctest::Approx(0.1 * std::sqrt(50. * 50 + 40. * 40 + 25. * 25)));

  // A span that is an exact multiple of the resolution must not gain a voxel.
  const Grid h = Grid::from_box(Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.1);
  CHECK(h.nx == 20);

  CHECK_THROWS_AS(Grid::from_box(Vec3(0, 0, 0), Vec3(1, 0, 1), 0.1), OutOfRange);
  CHECK_THROWS_AS(Grid::from_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.0), OutOfRange);
}

TEST_CASE("system_row equals dense kernel evaluation") {
  std::mt19937_64 rng(321);
  const Grid grids[3] = {Grid::from_box(Vec3(0, 0, 0), Vec3(3.2, 2.0, 1.6), 0.1),
                         Grid::from_box(Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.125),
                         Grid::from_box(Vec3(0, 0, 0), Vec3(3.1, 0.5, 0.9), 0.1)};
  ReconSettings s;
  for (int k = 0; k < 30; ++k) {
    const Grid& grid = grids[k % 3];
    ConeOfResponse cone = random_cone(rng, grid);
    s.distance_power = (k % 2 == 0) ? 0.0 : 1.0;
    s.max_apex_distance = (k % 5 == 0) ? 0.0 : 4.0;
    const auto dense = dense_kernel(cone, grid, s);
    const auto row = system_row(cone, grid, s);

    std::vector<double> sparse(grid.size(), 0.0);
    for (std::size_t e = 0; e < row.size(); ++e) sparse[row.indices[e]] = row.weights[e];
    double max_diff = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      max_diff = std::max(max_diff, std::abs(sparse[j] - dense[j]));
    }
    CHECK(max_diff < 1e-12);
  }
}

TEST_CASE("system_row geometry rules") {
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), 0.1);
  ReconSettings s;

  SUBCASE("apex voxel and its immediate surroundings are excluded") {
    ConeOfResponse cone;
    cone.apex = grid.center(10, 10, 10);
    cone.axis = Vec3(0, 0, 1);
    cone.half_angle = 1.0;
    cone.sigma_angle = 0.3;
    const auto row = system_row(cone, grid, s);
    REQUIRE(!row.empty());
    for (const auto idx : row.indices) {
      CHECK((grid.center(idx) - cone.apex).norm() >= grid.resolution);
    }
  }

  SUBCASE("max apex distance truncates the row") {
    ConeOfResponse cone;
    cone.apex = Vec3(1.0, 1.0, 1.0);
    cone.axis = Vec3(0, 0, 1);
    cone.half_angle = 1.2;
    cone.sigma_angle = 0.2;
    s.max_apex_distance = 0.5;
    const auto row = system_row(cone, grid, s);
    REQUIRE(!row.empty());
    for (const auto idx : row.indices) {
      CHECK((grid.center(idx) - cone.apex).norm() <= 0.5);
    }
  }

  SUBCASE("90 degree cone concentrates on the apex plane") {
    ConeOfResponse cone;
    cone.apex = grid.center(10, 10, 10);
    cone.axis = Vec3(0, 0, 1);
    cone.half_angle = std::acos(-1.0) / 2.0;
    cone.sigma_angle = 0.05;
    const auto row = system_row(cone, grid, s);
    REQUIRE(!row.empty());
    double best = 0.0;
    for (std::size_t e = 0; e < row.size(); ++e) best = std::max(best, row.weights[e]);
    for (std::size_t e = 0; e < row.size(); ++e) {
      if (row.weights[e] > 0.99 * best) {
        CHECK(std::abs(static_cast<int>(grid.coords(row.indices[e]).z()) - 10) <= 1);
      }
    }
  }

  SUBCASE("cone aimed away from a distant grid yields an empty row") {
    ConeOfResponse cone;
    cone.apex = Vec3(50, 50, 50);
    cone.axis = Vec3(1, 1, 1).normalized();
    cone.half_angle = 0.3;
    cone.sigma_angle = 0.02;
    const auto row = system_row(cone, grid, s);
    CHECK(row.empty());
  }

  SUBCASE("full surface of revolution, both nappes' directions included") {
    // A 90 degree cone is the apex plane; voxels on either side of the axis
    // (opposite azimuths) must both appear.
    ConeOfResponse cone;
    cone.apex = grid.center(10, 10, 10);
    cone.axis = Vec3(0, 0, 1);
    cone.half_angle = std::acos(-1.0) / 2.0;
    cone.sigma_angle = 0.05;
    const auto row = system_row(cone, grid, s);
    bool plus_x = false, minus_x = false;
    for (const auto idx : row.indices) {
      const Vec3 d = grid.center(idx) - cone.apex;
      if (d.x() > 0.3) plus_x = true;
      if (d.x() < -0.3) minus_x = true;
    }
    CHECK(plus_x);
    CHECK(minus_x);
  }
}

TEST_CASE("sbp is linear and order independent") {
  std::mt19937_64 rng(11);
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), 0.1);
  ReconSettings s;
  std::vector<ConeOfResponse> cones;
  for (int k = 0; k < 12; ++k) cones.push_back(random_cone(rng, grid));

  const Grid once = sbp(cones, grid, s);
  std::vector<ConeOfResponse> doubled = cones;
  doubled.insert(doubled.end(), cones.begin(), cones.end());
  const Grid twice = sbp(doubled, grid, s);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(twice.values[j] == doctest::Approx(2.0 * once.values[j]).epsilon(1e-12));
  }

  std::vector<ConeOfResponse> shuffled = cones;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Grid perm = sbp(shuffled, grid, s);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(perm.values[j] == doctest::Approx(once.values[j]).epsilon(1e-12));
  }

  ConeOfResponse miss;
  miss.apex = Vec3(100, 100, 100);
  miss.axis = Vec3(1, 0, 0);
  miss.half_angle = 0.2;
  miss.sigma_angle = 0.02;
  CHECK_THROWS_AS(sbp({miss}, grid, s), AllRowsEmpty);
  CHECK_THROWS_AS(sbp({}, grid, s), AllRowsEmpty);
}

TEST_CASE("two orthogonal exact cones triangulate the source voxel") {
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), 0.1);  // 20^3
  const Vec3 target = grid.center(10, 10, 10);
  ReconSettings s;
  s.epsilon = 0.0;
  s.iterations = 20;

  const auto a = cone_through(Vec3(1.05, 1.05, -1.0), target, 0.45, 0.05,
                              Vec3(1, 0, 0));
  const auto b = cone_through(Vec3(-1.0, 1.05, 1.05), target, 0.45, 0.05,
                              Vec3(0, 0, 1));
  const std::vector<ConeOfResponse> cones{a, b};

  const Grid bp = sbp(cones, grid, s);
  CHECK(grid_argmax(bp).index == grid.index(10, 10, 10));

  Grid init = grid;
  init.fill(1.0);
  const MlemResult em = mlem(cones, init, s);
  CHECK(grid_argmax(em.grid).index == grid.index(10, 10, 10));
  CHECK(em.dropped_events == 0);
}

TEST_CASE("mlem single cone single iteration is the normalized row") {
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.1);
  ReconSettings s;
  s.iterations = 1;
  ConeOfResponse cone;
  cone.apex = Vec3(0.5, 0.5, -0.4);
  cone.axis = Vec3(0, 0, 1);
  cone.half_angle = 0.7;
  cone.sigma_angle = 0.1;

  const auto row = system_row(cone, grid, s);
  REQUIRE(!row.empty());
  double row_sum = 0.0;
  for (const double w : row.weights) row_sum += w;

  Grid init = grid;
  init.fill(3.7);  // arbitrary positive level must not matter
  const MlemResult em = mlem({cone}, init, s);
  REQUIRE(em.log_likelihood.size() == 1);
  std::vector<double> expect(grid.size(), 0.0);
  for (std::size_t e = 0; e < row.size(); ++e) {
    expect[row.indices[e]] = row.weights[e] / row_sum;
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(em.grid.values[j] == doctest::Approx(expect[j]).epsilon(1e-12));
  }
}

TEST_CASE("mlem log-likelihood is non-decreasing and mass preserving") {
  std::mt19937_64 rng(77);
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), 0.2);
  ReconSettings s;
  s.iterations = 15;
  s.epsilon = 0.0;
  std::vector<ConeOfResponse> cones;
  while (cones.size() < 30) {
    const auto cone = random_cone(rng, grid);
    if (!system_row(cone, grid, s).empty()) cones.push_back(cone);
  }
  Grid init = grid;
  init.fill(1.0);
  const MlemResult em = mlem(cones, init, s);
  REQUIRE(em.log_likelihood.size() == 15);
  for (std::size_t t = 1; t < em.log_likelihood.size(); ++t) {
    const double prev = em.log_likelihood[t - 1];
    CHECK(em.log_likelihood[t] >= prev - 1e-9 * std::abs(prev));
  }
  CHECK(em.grid.total() == doctest::Approx(30.0).epsilon(1e-9));
  for (const double v : em.grid.values) CHECK(v >= 0.0);
}

TEST_CASE("mlem delta concentration is a fixed point") {
  std::mt19937_64 rng(13);
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), 0.1);
  const Vec3 target = grid.center(10, 10, 10);
  const std::size_t tidx = grid.index(10, 10, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<ConeOfResponse> cones;
  for (int k = 0; k < 8; ++k) {
    Vec3 apex;
    do {
      apex = Vec3(4 * u(rng) - 1, 4 * u(rng) - 1, 4 * u(rng) - 1);
    } while ((apex - target).norm() < 1.2 ||
             (apex.x() > 0 && apex.x() < 2 && apex.y() > 0 && apex.y() < 2 &&
              apex.z() > 0 && apex.z() < 2));
    Vec3 hint;
    do {
      hint = Vec3(u(rng), u(rng), u(rng));
    } while (hint.cross(target - apex).norm() < 0.1);
    cones.push_back(cone_through(apex, target, 0.3 + u(rng), 0.05, hint));
  }

  ReconSettings s;
  s.iterations = 1;
  Grid init = grid;
  init.fill(1e-12);
  init.values[tidx] = 1.0;
  const MlemResult em = mlem(cones, init, s);

  const double spike0 = 8.0 * (1.0 / init.total());  // after mass normalization
  CHECK(std::abs(em.grid.values[tidx] - spike0) < 1e-6 * spike0);
  double background = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (j != tidx) background += em.grid.values[j];
  }
  CHECK(background < 1e-6 * em.grid.values[tidx]);
}

TEST_CASE("mlem streamed rows match cached rows exactly") {
  std::mt19937_64 rng(55);
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(1.5, 1.5, 1.5), 0.15);
  ReconSettings s;
  s.iterations = 5;
  s.epsilon = 0.0;
  std::vector<ConeOfResponse> cones;
  for (int k = 0; k < 10; ++k) cones.push_back(random_cone(rng, grid));
  Grid init = grid;
  init.fill(1.0);

  ReconSettings streamed = s;
  streamed.row_cache_budget = 1;  // forces per-iteration recomputation
  const MlemResult a = mlem(cones, init, s);
  const MlemResult b = mlem(cones, init, streamed);
  REQUIRE(a.log_likelihood.size() == b.log_likelihood.size());
  for (std::size_t t = 0; t < a.log_likelihood.size(); ++t) {
    CHECK(a.log_likelihood[t] == b.log_likelihood[t]);
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(a.grid.values[j] == b.grid.values[j]);
  }
  CHECK(a.dropped_events == b.dropped_events);
}

TEST_CASE("mlem input validation") {
  const Grid grid = Grid::from_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.25);
  ReconSettings s;
  Grid init = grid;
  init.fill(1.0);
  ConeOfResponse cone;
  cone.apex = Vec3(0.5, 0.5, -0.5);
  cone.axis = Vec3(0, 0, 1);
  cone.half_angle = 0.6;
  cone.sigma_angle = 0.1;

  s.iterations = 0;
  CHECK_THROWS_AS(mlem({cone}, init, s), OutOfRange);
  s.iterations = 1;

  Grid zeroed = init;
  zeroed.values[3] = 0.0;
  CHECK_THROWS_AS(mlem({cone}, zeroed, s), OutOfRange);

  ConeOfResponse miss = cone;
  miss.apex = Vec3(90, 90, 90);
  CHECK_THROWS_AS(mlem({miss}, init, s), AllRowsEmpty);

  // A missing cone among good ones is dropped, not fatal.
  const MlemResult em = mlem({cone, miss}, init, s);
  CHECK(em.dropped_events == 1);
}

TEST_CASE("grid_argmax tie-breaks to the lowest index") {
  Grid g = Grid::from_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.5);
  g.fill(2.0);
  CHECK(grid_argmax(g).index == 0);
  g.values[5] = 3.0;
  g.values[7] = 3.0;
  const auto peak = grid_argmax(g);
  CHECK(peak.index == 5);
  CHECK(peak.value == 3.0);
  CHECK((peak.center - g.center(5)).norm() == 0.0);
  CHECK_THROWS_AS(grid_argmax(Grid{}), EmptyGrid);
}

TEST_CASE("sbp rotation equivariance at 90 degrees") {
  std::mt19937_64 rng(17);
  const Grid ga = Grid::from_box(Vec3(0, 0, 0), Vec3(0.8, 0.6, 0.4), 0.1);
  const Grid gb = Grid::from_box(Vec3(-0.6, 0, 0), Vec3(0, 0.8, 0.4), 0.1);
  ReconSettings s;
  s.max_apex_distance = 5.0;

  std::vector<ConeOfResponse> cones_a, cones_b;
  for (int k = 0; k < 8; ++k) {
    ConeOfResponse c = random_cone(rng, ga);
    cones_a.push_back(c);
    ConeOfResponse r = c;  // exact 90 degree z-rotation: (x,y,z) -> (-y,x,z)
    r.apex = Vec3(-c.apex.y(), c.apex.x(), c.apex.z());
    r.axis = Vec3(-c.axis.y(), c.axis.x(), c.axis.z());
    cones_b.push_back(r);
  }
  const Grid a = sbp(cones_a, ga, s);
  const Grid b = sbp(cones_b, gb, s);
  for (int iz = 0; iz < ga.nz; ++iz) {
    for (int iy = 0; iy < ga.ny; ++iy) {
      for (int ix = 0; ix < ga.nx; ++ix) {
        const double va = a(ix, iy, iz);
        const double vb = b(ga.ny - 1 - iy, ix, iz);
        CHECK(std::abs(va - vb) < 1e-12);
      }
    }
  }
}

TEST_CASE("grid binary file round-trip") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Grid g = Grid::from_box(Vec3(-0.5, 0.25, 1.0), Vec3(1.0, 1.0, 2.0), 0.25);
  for (double& v : g.values) v = u(rng);

  const std::string path = "grid_roundtrip_test.gvx";
  save_grid(path, g);
  const VoxelGrid<float> back = load_grid(path);
  CHECK(back.nx == g.nx);
  CHECK(back.ny == g.ny);
  CHECK(back.nz == g.nz);
  CHECK((back.origin - g.origin).norm() == 0.0);
  CHECK(back.resolution == g.resolution);
  REQUIRE(back.size() == g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(back.values[j] == static_cast<float>(g.values[j]));
  }
  std::remove(path.c_str());

  const std::string bad = "grid_badmagic_test.gvx";
  {
    FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_grid(bad), ParseError);
  std::remove(bad.c_str());
  CHECK_THROWS_AS(load_grid("no_such_grid_file.gvx"), ParseError);
}

TEST_CASE("grid text export lists exactly the nonzero voxels") {
  Grid g = Grid::from_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.5);
  g.values[1] = 4.25;
  g.values[6] = 0.5;
  const std::string path = "grid_export_test.txt";
  export_grid_text(path, g);
  FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f != nullptr);
  char buf[256];
  int data_lines = 0;
  while (std::fgets(buf, sizeof(buf), f)) {
    if (buf[0] != '#') ++data_lines;
  }
  std::fclose(f);
  CHECK(data_lines == 2);
  std::remove(path.c_str());
}
