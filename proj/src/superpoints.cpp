#include "spseg/superpoints.hpp"

#include "spseg/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace spseg {

std::vector<std::vector<int>> Partition::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] >= 0) out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  return out;
}

void Partition::validate() const {
  if (count < 0 || static_cast<std::size_t>(count) > assignment.size())
    throw std::invalid_argument("partition count out of range");
  std::vector<char> used(static_cast<std::size_t>(count), 0);
  for (int a : assignment) {
    if (a < -1 || a >= count) throw std::invalid_argument("partition id out of range");
    if (a >= 0) used[static_cast<std::size_t>(a)] = 1;
  }
  if (std::find(used.begin(), used.end(), 0) != used.end())
    throw std::invalid_argument("partition has an empty superpoint id");
}

Partition make_partition(const std::vector<int>& labels) {
  Partition p;
  p.assignment.assign(labels.size(), -1);
  std::unordered_map<int, int> remap;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    auto [it, inserted] = remap.try_emplace(labels[i], p.count);
    if (inserted) ++p.count;
    p.assignment[i] = it->second;
  }
  return p;
}

Partition mask_ignored(const Partition& p, const std::vector<int>& labels) {
  if (labels.empty()) return p;
  if (labels.size() != p.size()) throw std::invalid_argument("label count does not match partition size");
  std::vector<int> masked = p.assignment;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (labels[i] == kIgnoreLabel) masked[i] = -1;
  return make_partition(masked);
}

bool same_grouping(const Partition& a, const Partition& b) {
  if (a.size() != b.size() || a.count != b.count) return false;
  std::vector<int> a_to_b(static_cast<std::size_t>(a.count), -1), b_to_a(static_cast<std::size_t>(b.count), -1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = a.assignment[i], y = b.assignment[i];
    if ((x < 0) != (y < 0)) return false;
    if (x < 0) continue;
    int& fx = a_to_b[static_cast<std::size_t>(x)];
    int& fy = b_to_a[static_cast<std::size_t>(y)];
    if (fx == -1) fx = y;
    if (fy == -1) fy = x;
    if (fx != y || fy != x) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// VCCS

Partition vccs_supervoxels(const PointCloud& cloud, const NormalField& normals, const VccsParams& params) {
  cloud.validate();
  const std::size_t n = cloud.size();
  if (normals.normals.size() != n) throw std::invalid_argument("normal field size does not match cloud");
  if (!(params.voxel_resolution > 0.0) || !(params.seed_resolution > params.voxel_resolution))
    throw std::invalid_argument("vccs requires 0 < voxel_resolution < seed_resolution");

  const double seed_r = params.seed_resolution;
  const double seed_r2 = seed_r * seed_r;
  const VccsWeights& w = params.weights;
  const bool use_color = cloud.has_colors();

  // Adjacency: everything in the 27 surrounding voxel cells.
  const SpatialIndex voxels(cloud.positions, params.voxel_resolution);
  std::vector<std::vector<int>> adjacency(n);
  parallel_for(n, [&](std::size_t i) {
    auto nb = voxels.cell_neighborhood(cloud.positions[i]);
    std::erase(nb, static_cast<int>(i));
    adjacency[i] = std::move(nb);
  });

  // Seeds: per occupied seed cell, the point nearest to the cell centre.
  std::map<CellKey, int> seed_of_cell;
  for (std::size_t i = 0; i < n; ++i) {
    const CellKey key = cell_of(cloud.positions[i], seed_r);
    const Vec3 centre((static_cast<double>(key.x) + 0.5) * seed_r, (static_cast<double>(key.y) + 0.5) * seed_r,
                      (static_cast<double>(key.z) + 0.5) * seed_r);
    auto [it, inserted] = seed_of_cell.try_emplace(key, static_cast<int>(i));
    if (!inserted) {
      const double cur = (cloud.positions[static_cast<std::size_t>(it->second)] - centre).squaredNorm();
      if ((cloud.positions[i] - centre).squaredNorm() < cur) it->second = static_cast<int>(i);
    }
  }
  std::vector<int> seeds;
  for (const auto& [key, id] : seed_of_cell) seeds.push_back(id);

  auto distance = [&](std::size_t q, std::size_t seed) {
    const double ds = (cloud.positions[q] - cloud.positions[seed]).squaredNorm();
    const double dn = 1.0 - std::min(1.0, std::abs(normals.normals[q].dot(normals.normals[seed])));
    double d2 = w.spatial * ds / (3.0 * seed_r2) + w.normal * dn;
    if (use_color) d2 += w.color * (cloud.colors[q] - cloud.colors[seed]).squaredNorm();
    return std::sqrt(d2);
  };

  std::vector<int> owner(n, -1);
  std::vector<double> best_d(n, std::numeric_limits<double>::infinity());
  std::vector<int> frontier;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    owner[static_cast<std::size_t>(seeds[s])] = static_cast<int>(s);
    best_d[static_cast<std::size_t>(seeds[s])] = 0.0;
    frontier.push_back(seeds[s]);
  }

  // Label-correcting expansion: a point changes hands whenever an adjacent
  // supervoxel offers a strictly smaller distance, and then expands again.
  std::vector<int> claim(n, -1);
  std::vector<double> claim_d(n, 0.0);
  while (!frontier.empty()) {
    std::vector<int> touched;
    for (int f : frontier) {
      const int sv = owner[static_cast<std::size_t>(f)];
      const auto seed = static_cast<std::size_t>(seeds[static_cast<std::size_t>(sv)]);
      for (int q : adjacency[static_cast<std::size_t>(f)]) {
        const auto qi = static_cast<std::size_t>(q);
        if (owner[qi] == sv || claim[qi] == sv) continue;
        if ((cloud.positions[qi] - cloud.positions[seed]).squaredNorm() > seed_r2) continue;
        const double d = distance(qi, seed);
        const double current = claim[qi] >= 0 ? claim_d[qi] : best_d[qi];
        if (!(d < current)) continue;
        if (claim[qi] < 0) touched.push_back(q);
        claim[qi] = sv;
        claim_d[qi] = d;
      }
    }
    for (int q : touched) {
      const auto qi = static_cast<std::size_t>(q);
      owner[qi] = claim[qi];
      best_d[qi] = claim_d[qi];
      claim[qi] = -1;
    }
    std::sort(touched.begin(), touched.end(), [&](int a, int b) {
      const int sa = owner[static_cast<std::size_t>(a)], sb = owner[static_cast<std::size_t>(b)];
      return sa != sb ? sa < sb : a < b;
    });
    frontier = std::move(touched);
  }

  // Orphans join the supervoxel with the nearest centroid.
  std::vector<Vec3> centroid(seeds.size(), Vec3::Zero());
  std::vector<int> members(seeds.size(), 0);
  for (std::size_t i = 0; i < n; ++i)
    if (owner[i] >= 0) {
      centroid[static_cast<std::size_t>(owner[i])] += cloud.positions[i];
      ++members[static_cast<std::size_t>(owner[i])];
    }
  for (std::size_t s = 0; s < seeds.size(); ++s) centroid[s] /= static_cast<double>(members[s]);
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i] >= 0) continue;
    double best = std::numeric_limits<double>::infinity();
    int pick = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double d = (cloud.positions[i] - centroid[s]).squaredNorm();
      if (d < best) best = d, pick = static_cast<int>(s);
    }
    owner[i] = pick;
  }
  return make_partition(owner);
}

// ---------------------------------------------------------------------------
// Region growing

Partition region_grow(const PointCloud& cloud, const NormalField& normals, const RegionGrowParams& params) {
  cloud.validate();
  const Bounds b = bounding_box(cloud.positions);
  const double extent = (b.max - b.min).maxCoeff();
  const double cell = extent > 0 ? extent * std::sqrt(std::max(params.neighbors, 4) / static_cast<double>(cloud.size()))
                                 : 1.0;
  return region_grow(SpatialIndex(cloud.positions, std::max(cell, 1e-6)), normals, params);
}

Partition region_grow(const SpatialIndex& index, const NormalField& normals, const RegionGrowParams& params) {
  if (!(params.angle_threshold > 0.0) || !(params.curvature_threshold > 0.0) || params.neighbors < 1)
    throw std::invalid_argument("region growing thresholds must be positive");
  const std::size_t n = index.size();
  if (normals.normals.size() != n || normals.curvatures.size() != n)
    throw std::invalid_argument("normal field size does not match cloud");

  std::vector<std::vector<int>> nbrs(n);
  parallel_for(n, [&](std::size_t i) { nbrs[i] = index.knn(static_cast<int>(i), params.neighbors); });

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
    return normals.curvatures[static_cast<std::size_t>(a)] < normals.curvatures[static_cast<std::size_t>(c)];
  });

  const double cos_thresh = std::cos(params.angle_threshold);
  std::vector<int> label(n, -1);
  int regions = 0;
  std::vector<int> queue;
  for (int seed : order) {
    if (label[static_cast<std::size_t>(seed)] != -1) continue;
    const int r = regions++;
    label[static_cast<std::size_t>(seed)] = r;
    queue.assign(1, seed);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const auto f = static_cast<std::size_t>(queue[head]);
      for (int q : nbrs[f]) {
        const auto qi = static_cast<std::size_t>(q);
        if (label[qi] != -1) continue;
        if (std::abs(normals.normals[f].dot(normals.normals[qi])) < cos_thresh) continue;
        label[qi] = r;
        if (normals.curvatures[qi] <= params.curvature_threshold) queue.push_back(q);
      }
    }
  }
  Partition p;
  p.assignment = std::move(label);
  p.count = regions;
  return p;
}

Partition merge_vccs_into_rg(const Partition& vccs, const Partition& rg) {
  if (vccs.size() != rg.size()) throw std::invalid_argument("partitions differ in length");
  const auto groups = vccs.members();
  std::vector<int> merged(vccs.size(), -1);
  for (std::size_t s = 0; s < groups.size(); ++s) {
    std::map<int, int> overlap;
    for (int i : groups[s]) {
      const int r = rg.assignment[static_cast<std::size_t>(i)];
      if (r >= 0) ++overlap[r];
    }
    int best = -1, best_count = 0;
    for (const auto& [r, c] : overlap)
      if (c > best_count) best = r, best_count = c;
    // Region ids go to [0, rg.count); surviving supervoxels above that.
    const bool absorb = best >= 0 && 2 * static_cast<std::size_t>(best_count) >= groups[s].size();
    const int target = absorb ? best : rg.count + static_cast<int>(s);
    for (int i : groups[s]) merged[static_cast<std::size_t>(i)] = target;
  }
  return make_partition(merged);
}

// ---------------------------------------------------------------------------
// Outdoor mode

namespace {

Plane fit_plane(const std::vector<Vec3>& positions, const std::vector<int>& ids) {
  Vec3 mean = Vec3::Zero();
  for (int i : ids) mean += positions[static_cast<std::size_t>(i)];
  mean /= static_cast<double>(ids.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : ids) {
    const Vec3 d = positions[static_cast<std::size_t>(i)] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Plane plane;
  plane.normal = canonicalize_normal(solver.eigenvectors().col(0).normalized());
  plane.offset = -plane.normal.dot(mean);
  return plane;
}

std::vector<int> plane_inliers(const std::vector<Vec3>& positions, const Plane& plane, double thresh) {
  std::vector<int> out;
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (plane.distance(positions[i]) <= thresh) out.push_back(static_cast<int>(i));
  return out;
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent[static_cast<std::size_t>(b)] = a;
  }
};

}  // namespace

GroundFit ransac_ground(const PointCloud& cloud, double dist_thresh, int iterations, std::uint64_t seed) {
  cloud.validate();
  const auto& pos = cloud.positions;
  if (pos.size() < 3) throw std::invalid_argument("ransac needs at least 3 points");
  if (!(dist_thresh > 0.0) || iterations < 1) throw std::invalid_argument("invalid ransac parameters");

  const auto n = pos.size();
  std::size_t best_count = 0;
  std::optional<Plane> best;
  for (int it = 0; it < iterations; ++it) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(it)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng), c = pick(rng);
    while (b == a) b = pick(rng);
    while (c == a || c == b) c = pick(rng);
    const Vec3 u = pos[b] - pos[a], v = pos[c] - pos[a];
    const Vec3 cross = u.cross(v);
    const double norm = cross.norm();
    if (!(norm > 1e-12 * u.norm() * v.norm())) continue;
    Plane plane;
    plane.normal = cross / norm;
    plane.offset = -plane.normal.dot(pos[a]);
    std::size_t count = 0;
    for (const auto& p : pos) count += plane.distance(p) <= dist_thresh;
    if (count > best_count) best_count = count, best = plane;
  }
  if (!best) throw std::runtime_error("ransac found no valid plane hypothesis (collinear or coincident points?)");

  GroundFit fit;
  fit.plane = fit_plane(pos, plane_inliers(pos, *best, dist_thresh));
  fit.inliers = plane_inliers(pos, fit.plane, dist_thresh);
  return fit;
}

Partition euclidean_cluster(const PointCloud& cloud, double dist, const std::optional<std::vector<int>>& subset) {
  cloud.validate();
  if (!(dist > 0.0)) throw std::invalid_argument("cluster distance must be positive");
  std::vector<int> ids;
  if (subset) {
    ids = *subset;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  } else {
    ids.resize(cloud.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  std::vector<int> labels(cloud.size(), -1);
  if (ids.empty()) return make_partition(labels);

  std::vector<Vec3> sub;
  sub.reserve(ids.size());
  for (int i : ids) sub.push_back(cloud.positions.at(static_cast<std::size_t>(i)));
  const SpatialIndex index(sub, dist);
  DisjointSet sets(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j : index.radius(static_cast<int>(i), dist))
      if (static_cast<std::size_t>(j) > i) sets.unite(static_cast<int>(i), j);
  for (std::size_t i = 0; i < ids.size(); ++i) labels[static_cast<std::size_t>(ids[i])] = sets.find(static_cast<int>(i));
  return make_partition(labels);
}

// ---------------------------------------------------------------------------

Partition dissolve_small(const PointCloud& cloud, const Partition& p, int min_size) {
  const auto groups = p.members();
  std::vector<int> large_points;
  std::vector<char> is_small(groups.size(), 0);
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (static_cast<int>(groups[s].size()) >= min_size)
      large_points.insert(large_points.end(), groups[s].begin(), groups[s].end());
    else
      is_small[s] = 1;
  }
  if (large_points.empty() || std::find(is_small.begin(), is_small.end(), 1) == is_small.end()) return p;

  std::vector<Vec3> sub;
  sub.reserve(large_points.size());
  for (int i : large_points) sub.push_back(cloud.positions[static_cast<std::size_t>(i)]);
  const Bounds b = bounding_box(sub);
  const double extent = (b.max - b.min).maxCoeff();
  const double cell = extent > 0 ? extent * std::sqrt(4.0 / static_cast<double>(sub.size())) : 1.0;
  const SpatialIndex index(sub, std::max(cell, 1e-6));

  std::vector<int> out = p.assignment;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (!is_small[s]) continue;
    for (int i : groups[s]) {
      const int nearest = index.knn(cloud.positions[static_cast<std::size_t>(i)], 1).front();
      out[static_cast<std::size_t>(i)] = p.assignment[static_cast<std::size_t>(large_points[static_cast<std::size_t>(nearest)])];
    }
  }
  return make_partition(out);
}

Partition initial_superpoints(const PointCloud& cloud, const SuperpointParams& params) {
  cloud.validate();
  Partition raw;
  if (params.mode == SceneMode::Indoor) {
    if (cloud.size() < 3) {
      raw = make_partition(std::vector<int>(cloud.size(), 0));
    } else {
      const SpatialIndex index(cloud.positions, 2.0 * params.vccs.voxel_resolution);
      const NormalField normals = estimate_normals(index, params.normal_neighbors);
      const Partition vccs = vccs_supervoxels(cloud, normals, params.vccs);
      const Partition rg = region_grow(index, normals, params.region_grow);
      raw = merge_vccs_into_rg(vccs, rg);
    }
  } else {
    const GroundFit ground = ransac_ground(cloud, params.ransac_threshold, params.ransac_iterations, params.seed);
    std::vector<char> on_ground(cloud.size(), 0);
    for (int i : ground.inliers) on_ground[static_cast<std::size_t>(i)] = 1;
    std::vector<int> rest;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (!on_ground[i]) rest.push_back(static_cast<int>(i));
    const Partition clusters = euclidean_cluster(cloud, params.cluster_distance, rest);
    std::vector<int> labels(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) labels[i] = on_ground[i] ? 0 : clusters.assignment[i] + 1;
    raw = make_partition(labels);
  }
  return dissolve_small(cloud, raw, params.min_size);
}

}  // namespace spseg
