#pragma once

#include "spseg/geometry.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace spseg {

// Per-point superpoint ids. -1 marks points that belong to no superpoint;
// the non-negative ids are contiguous 0..count-1 and each is used.
struct Partition {
  std::vector<int> assignment;
  int count = 0;

  std::size_t size() const { return assignment.size(); }
  // Member point ids per superpoint, ascending.
  std::vector<std::vector<int>> members() const;
  // Throws std::invalid_argument when ids are not contiguous and non-empty.
  void validate() const;
};

// Renumbers arbitrary labels (negative = unassigned) to 0..count-1 in order
// of first occurrence.
Partition make_partition(const std::vector<int>& labels);

// Sets every point whose label is kIgnoreLabel to -1 and renumbers.
Partition mask_ignored(const Partition& p, const std::vector<int>& labels);

// True when both partitions induce the same grouping of the same points.
bool same_grouping(const Partition& a, const Partition& b);

struct Plane {
  Vec3 normal{0, 0, 1};
  double offset = 0.0;  // normal.dot(x) + offset == 0 on the plane
  double distance(const Vec3& x) const { return std::abs(normal.dot(x) + offset); }
};

struct VccsWeights {
  double color = 0.2;
  double spatial = 0.4;
  double normal = 1.0;
};

struct VccsParams {
  double voxel_resolution = 0.05;
  double seed_resolution = 0.5;
  VccsWeights weights{};
};

// Supervoxels grown from seeds on a regular seed_resolution grid. Growth is
// breadth-first over the 27-cell voxel neighbourhood and bounded by a sphere
// of radius seed_resolution around each seed. A point belongs to the
// adjacent supervoxel whose seed is closest under
//   D = sqrt(wc*Dc^2 + ws*Ds/(3*Rseed^2) + wn*Dn)
// with Dc the RGB distance, Ds the squared spatial distance and
// Dn = 1 - |cos| between normals; a claimed point is taken over whenever a
// neighbouring supervoxel offers a strictly smaller D. Unreached points join
// the supervoxel with the nearest centroid.
Partition vccs_supervoxels(const PointCloud& cloud, const NormalField& normals, const VccsParams& params);

struct RegionGrowParams {
  double angle_threshold = 10.0 * 3.14159265358979323846 / 180.0;  // radians
  double curvature_threshold = 0.1;
  int neighbors = 16;
};

// Smoothness-constrained region growing seeded at the unconsumed point of
// least curvature.
Partition region_grow(const PointCloud& cloud, const NormalField& normals, const RegionGrowParams& params);
Partition region_grow(const SpatialIndex& index, const NormalField& normals, const RegionGrowParams& params);

// Each supervoxel with at least half of its points inside one region
// (the largest overlap, smaller region id on ties) is relabelled to that
// region; the others survive unchanged. Result is renumbered.
Partition merge_vccs_into_rg(const Partition& vccs, const Partition& rg);

struct GroundFit {
  Plane plane;
  std::vector<int> inliers;
};

// Best of `iterations` three-point hypotheses by inlier count, refit by least
// squares over its inliers. Throws std::runtime_error when no non-degenerate
// hypothesis exists (for example, collinear points).
GroundFit ransac_ground(const PointCloud& cloud, double dist_thresh = 0.2, int iterations = 500,
                        std::uint64_t seed = 0);

// Connected components under the "within dist" relation. Points outside the
// subset (when given) get -1.
Partition euclidean_cluster(const PointCloud& cloud, double dist = 0.2,
                            const std::optional<std::vector<int>>& subset = std::nullopt);

enum class SceneMode { Indoor, Outdoor };

struct SuperpointParams {
  SceneMode mode = SceneMode::Indoor;
  int normal_neighbors = 10;
  VccsParams vccs{};
  RegionGrowParams region_grow{};
  double ransac_threshold = 0.2;
  int ransac_iterations = 500;
  double cluster_distance = 0.2;
  int min_size = 10;
  std::uint64_t seed = 0;
};

// Superpoints with fewer than min_size points are absorbed by the superpoint
// of the nearest point that belongs to a large one.
Partition dissolve_small(const PointCloud& cloud, const Partition& p, int min_size);

Partition initial_superpoints(const PointCloud& cloud, const SuperpointParams& params);

}  // namespace spseg
