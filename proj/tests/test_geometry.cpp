#include "doctest.h"

#include "spseg/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace spseg;

namespace {

PointCloud cloud_of(std::vector<Vec3> pts) {
  PointCloud c;
  c.positions = std::move(pts);
  return c;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Vec3> p(n);
  for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng));
  return p;
}

}  // namespace

TEST_CASE("point cloud validation") {
  PointCloud c = cloud_of({Vec3(0, 0, 0)});
  CHECK_NOTHROW(c.validate());
  c.colors = {Vec3(0.5, 0.5, 1.5)};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.colors = {Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 0)};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.colors.clear();
  c.positions[0].x() = std::nan("");
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(PointCloud{}.validate(), std::invalid_argument);
}

TEST_CASE("cell_of floors each coordinate") {
  CHECK(cell_of(Vec3(0.12, -0.01, 0.0), 0.05) == CellKey{2, -1, 0});
  const auto pts = random_points(500, 3, 2.0);
  SpatialIndex index(pts, 0.3);
  std::vector<int> seen(pts.size(), 0);
  for (const auto& [key, ids] : index.cells())
    for (int id : ids) {
      ++seen[static_cast<std::size_t>(id)];
      CHECK(cell_of(pts[static_cast<std::size_t>(id)], 0.3) == key);
    }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("voxel_downsample") {
  SUBCASE("single point is kept") {
    const auto d = voxel_downsample(cloud_of({Vec3(1, 2, 3)}), 0.05);
    REQUIRE(d.cloud.size() == 1);
    CHECK(d.cloud.positions[0].isApprox(Vec3(1, 2, 3)));
  }
  SUBCASE("points on the x axis group by cell") {
    const auto d = voxel_downsample(cloud_of({Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(0.20, 0, 0), Vec3(0.21, 0, 0)}), 0.05);
    REQUIRE(d.cloud.size() == 2);
    CHECK(d.cloud.positions[0].x() == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(d.cloud.positions[1].x() == doctest::Approx(0.205).epsilon(1e-12));
    CHECK(d.mapping == std::vector<int>{0, 0, 1, 1});
  }
  SUBCASE("labels take the majority of non-ignored members") {
    PointCloud c = cloud_of({Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(0.02, 0, 0), Vec3(0.5, 0, 0), Vec3(1, 0, 0), Vec3(1.01, 0, 0)});
    c.labels = {2, kIgnoreLabel, 2, kIgnoreLabel, 3, 1};
    const auto d = voxel_downsample(c, 0.05);
    CHECK(d.cloud.labels == std::vector<int>{2, kIgnoreLabel, 1});
  }
  SUBCASE("colours are averaged") {
    PointCloud c = cloud_of({Vec3(0, 0, 0), Vec3(0.01, 0, 0)});
    c.colors = {Vec3(0, 0, 0), Vec3(1, 0.5, 0)};
    CHECK(voxel_downsample(c, 0.05).cloud.colors[0].isApprox(Vec3(0.5, 0.25, 0)));
  }
  SUBCASE("idempotent") {
    const auto once = voxel_downsample(cloud_of(random_points(2000, 7)), 0.1);
    const auto twice = voxel_downsample(once.cloud, 0.1);
    REQUIRE(twice.cloud.size() == once.cloud.size());
    for (std::size_t i = 0; i < once.cloud.size(); ++i)
      CHECK((twice.cloud.positions[i] - once.cloud.positions[i]).norm() < 1e-12);
  }
  CHECK_THROWS_AS(voxel_downsample(cloud_of({Vec3(0, 0, 0)}), 0.0), std::invalid_argument);
}

TEST_CASE("spatial index queries") {
  SUBCASE("two points") {
    SpatialIndex index(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0)}, 0.5);
    CHECK(index.knn(0, 1) == std::vector<int>{1});
    CHECK(index.knn(0, 5).size() == 1);
  }
  SUBCASE("radius on a line") {
    SpatialIndex index(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)}, 0.5);
    CHECK(index.radius(1, 1.5) == std::vector<int>{0, 2});
    CHECK(index.radius(1, 1.5, true) == std::vector<int>{0, 1, 2});
  }
  SUBCASE("equidistant tie goes to the lower id") {
    SpatialIndex index(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 0, 0)}, 0.7);
    CHECK(index.knn(2, 1) == std::vector<int>{0});
    CHECK(index.knn(Vec3(0, 0, 0), 2) == std::vector<int>{2, 0});
  }
  SUBCASE("brute-force agreement") {
    const auto pts = random_points(400, 11);
    SpatialIndex index(pts, 0.13);
    for (int q = 0; q < 400; q += 37) {
      std::vector<int> order(pts.size());
      std::iota(order.begin(), order.end(), 0);
      order.erase(order.begin() + q);
      const Vec3& p = pts[static_cast<std::size_t>(q)];
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return (pts[static_cast<std::size_t>(a)] - p).squaredNorm() < (pts[static_cast<std::size_t>(b)] - p).squaredNorm();
      });
      order.resize(9);
      CHECK(index.knn(q, 9) == order);
      std::vector<int> near;
      for (int j = 0; j < 400; ++j)
        if (j != q && (pts[static_cast<std::size_t>(j)] - p).norm() <= 0.2) near.push_back(j);
      CHECK(index.radius(q, 0.2) == near);
    }
  }
  SUBCASE("knn length is min(k, N-1)") {
    const auto pts = random_points(30, 5);
    SpatialIndex index(pts, 0.05);
    CHECK(index.knn(0, 10).size() == 10);
    CHECK(index.knn(0, 100).size() == 29);
  }
  SUBCASE("radius commutes with reordering") {
    const auto pts = random_points(300, 13);
    std::vector<int> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    std::vector<Vec3> shuffled(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) shuffled[i] = pts[static_cast<std::size_t>(perm[i])];
    SpatialIndex a(pts, 0.1), b(shuffled, 0.1);
    for (int i = 0; i < 300; i += 17) {
      std::vector<int> mapped;
      for (int j : b.radius(i, 0.15)) mapped.push_back(perm[static_cast<std::size_t>(j)]);
      std::sort(mapped.begin(), mapped.end());
      CHECK(mapped == a.radius(perm[static_cast<std::size_t>(i)], 0.15));
    }
  }
}

TEST_CASE("normals") {
  SUBCASE("plane z=0") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) pts.emplace_back(0.1 * i, 0.1 * j, 0.0);
    const auto nf = estimate_normals(cloud_of(pts), 16);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK((nf.normals[i] - Vec3(0, 0, 1)).norm() < 1e-12);
      CHECK(nf.curvatures[i] == doctest::Approx(0.0));
    }
  }
  SUBCASE("plane x=y canonicalises to (-1,1,0)/sqrt2") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) pts.emplace_back(0.1 * i, 0.1 * i, 0.1 * j);
    const auto nf = estimate_normals(cloud_of(pts), 12);
    for (const auto& n : nf.normals) CHECK((n - Vec3(-1, 1, 0) / std::sqrt(2.0)).norm() < 1e-9);
  }
  SUBCASE("isotropic neighbourhood has curvature 1/3") {
    std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                          Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
    const auto nf = estimate_normals(cloud_of(pts), 6);
    CHECK(nf.curvatures[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("invariants on random clouds") {
    const auto pts = random_points(300, 17);
    const auto nf = estimate_normals(cloud_of(pts), 16);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(nf.normals[i].norm() - 1.0) < 1e-9);
      CHECK(nf.curvatures[i] >= 0.0);
      CHECK(nf.curvatures[i] <= 1.0 / 3.0 + 1e-12);
      CHECK(canonicalize_normal(nf.normals[i]) == nf.normals[i]);
    }
  }
  SUBCASE("rotation carries normals up to sign") {
    const auto pts = random_points(200, 19);
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    std::vector<Vec3> rotated;
    for (const auto& p : pts) rotated.push_back(rot * p);
    const auto a = estimate_normals(cloud_of(pts), 16), b = estimate_normals(cloud_of(rotated), 16);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs((rot * a.normals[i]).dot(b.normals[i])) > 1.0 - 1e-6);
  }
  SUBCASE("translation leaves normals unchanged") {
    const auto pts = random_points(200, 23);
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(p + Vec3(4, -8, 2));
    const auto a = estimate_normals(cloud_of(pts), 16), b = estimate_normals(cloud_of(moved), 16);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((a.normals[i] - b.normals[i]).norm() < 1e-9);
  }
  SUBCASE("coincident points are degenerate") {
    const auto nf = estimate_normals(cloud_of({Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)}), 3);
    CHECK(nf.degenerate[0]);
    CHECK(nf.normals[0] == Vec3(0, 0, 1));
  }
}

TEST_CASE("canonicalize_normal") {
  CHECK(canonicalize_normal(Vec3(0, 0, -1)) == Vec3(0, 0, 1));
  CHECK(canonicalize_normal(Vec3(1, -1, 0)) == Vec3(-1, 1, 0));
  CHECK(canonicalize_normal(Vec3(-1, 0, 0)) == Vec3(1, 0, 0));
}
