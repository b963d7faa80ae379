#include "spseg/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace spseg {

void PointCloud::validate() const {
  if (positions.empty()) throw std::invalid_argument("point cloud '" + id + "' is empty");
  if (!colors.empty() && colors.size() != positions.size())
    throw std::invalid_argument("point cloud '" + id + "': color count does not match position count");
  if (!labels.empty() && labels.size() != positions.size())
    throw std::invalid_argument("point cloud '" + id + "': label count does not match position count");
  for (const auto& p : positions)
    if (!p.allFinite()) throw std::invalid_argument("point cloud '" + id + "' has a non-finite coordinate");
  for (const auto& c : colors)
    if (!c.allFinite() || c.minCoeff() < 0.0 || c.maxCoeff() > 1.0)
      throw std::invalid_argument("point cloud '" + id + "' has a color outside [0,1]");
  for (int l : labels)
    if (l < kIgnoreLabel) throw std::invalid_argument("point cloud '" + id + "' has a negative label other than -1");
}

Vec3 canonicalize_normal(const Vec3& n) {
  constexpr double kTol = 1e-9;
  for (int axis : {2, 1, 0}) {
    if (std::abs(n[axis]) > kTol) return n[axis] > 0 ? n : Vec3(-n);
  }
  return n;
}

std::size_t CellKeyHash::operator()(const CellKey& k) const noexcept {
  auto h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
  h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

CellKey cell_of(const Vec3& p, double cell_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_size)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_size)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_size))};
}

SpatialIndex::SpatialIndex(std::span<const Vec3> positions, double cell_size)
    : positions_(positions.begin(), positions.end()), cell_size_(cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("spatial index cell size must be positive");
  bool first = true;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    const CellKey key = cell_of(positions_[i], cell_size_);
    cells_[key].push_back(static_cast<int>(i));
    if (first) {
      lo_ = hi_ = key;
      first = false;
    } else {
      lo_ = {std::min(lo_.x, key.x), std::min(lo_.y, key.y), std::min(lo_.z, key.z)};
      hi_ = {std::max(hi_.x, key.x), std::max(hi_.y, key.y), std::max(hi_.z, key.z)};
    }
  }
}

namespace {

using Candidate = std::pair<double, int>;

void sort_and_truncate(std::vector<Candidate>& found, std::size_t k) {
  const auto mid = found.begin() + static_cast<std::ptrdiff_t>(std::min(k, found.size()));
  std::partial_sort(found.begin(), mid, found.end());
  found.resize(static_cast<std::size_t>(mid - found.begin()));
}

}  // namespace

std::vector<int> SpatialIndex::knn_impl(const Vec3& q, int k, int exclude) const {
  const std::size_t available = positions_.size() - (exclude >= 0 ? 1 : 0);
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), available);
  if (want == 0) return {};

  std::vector<Candidate> found;
  auto take = [&](int id) {
    if (id == exclude) return;
    found.emplace_back((positions_[static_cast<std::size_t>(id)] - q).squaredNorm(), id);
  };

  const CellKey c = cell_of(q, cell_size_);
  const std::int64_t max_ring = std::max({c.x - lo_.x, hi_.x - c.x, c.y - lo_.y, hi_.y - c.y, c.z - lo_.z,
                                          hi_.z - c.z, std::int64_t{0}});
  bool complete = false;
  for (std::int64_t s = 0; s <= max_ring; ++s) {
    const double side = static_cast<double>(2 * s + 1);
    if (side * side * side > 8.0 * static_cast<double>(cells_.size()) + 27.0) break;  // brute force below
    for (std::int64_t dx = -s; dx <= s; ++dx)
      for (std::int64_t dy = -s; dy <= s; ++dy)
        for (std::int64_t dz = -s; dz <= s; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != s) continue;
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (int id : it->second) take(id);
        }
    if (s == max_ring) {
      complete = true;
      break;
    }
    if (found.size() >= want) {
      std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(want - 1), found.end());
      const double kth = found[want - 1].first;
      double bound = std::numeric_limits<double>::infinity();
      const std::array<std::int64_t, 3> cc{c.x, c.y, c.z};
      for (int a = 0; a < 3; ++a) {
        const double lo = static_cast<double>(cc[static_cast<std::size_t>(a)] - s) * cell_size_;
        const double hi = static_cast<double>(cc[static_cast<std::size_t>(a)] + s + 1) * cell_size_;
        bound = std::min({bound, q[a] - lo, hi - q[a]});
      }
      if (bound > 0 && kth < bound * bound) {
        complete = true;
        break;
      }
    }
  }
  if (!complete) {
    found.clear();
    for (std::size_t i = 0; i < positions_.size(); ++i) take(static_cast<int>(i));
  }
  sort_and_truncate(found, want);
  std::vector<int> out;
  out.reserve(found.size());
  for (const auto& [d, id] : found) out.push_back(id);
  return out;
}

std::vector<int> SpatialIndex::knn(int query, int k, bool include_self) const {
  if (query < 0 || static_cast<std::size_t>(query) >= positions_.size())
    throw std::out_of_range("knn query id out of range");
  if (!include_self) return knn_impl(positions_[static_cast<std::size_t>(query)], k, query);
  if (k <= 0) return {};
  auto rest = knn_impl(positions_[static_cast<std::size_t>(query)], k - 1, query);
  rest.insert(rest.begin(), query);
  return rest;
}

std::vector<int> SpatialIndex::knn(const Vec3& query, int k) const { return knn_impl(query, k, -1); }

std::vector<int> SpatialIndex::radius_impl(const Vec3& q, double r, int exclude) const {
  if (!(r > 0.0)) throw std::invalid_argument("radius must be positive");
  std::vector<int> out;
  const double r2 = r * r;
  auto scan = [&](const std::vector<int>& ids) {
    for (int id : ids)
      if (id != exclude && (positions_[static_cast<std::size_t>(id)] - q).squaredNorm() <= r2) out.push_back(id);
  };
  const auto reach = static_cast<std::int64_t>(std::ceil(r / cell_size_));
  const double side = static_cast<double>(2 * reach + 1);
  if (side * side * side > static_cast<double>(cells_.size())) {
    for (const auto& [key, ids] : cells_) scan(ids);
  } else {
    const CellKey c = cell_of(q, cell_size_);
    for (std::int64_t dx = -reach; dx <= reach; ++dx)
      for (std::int64_t dy = -reach; dy <= reach; ++dy)
        for (std::int64_t dz = -reach; dz <= reach; ++dz) {
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it != cells_.end()) scan(it->second);
        }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> SpatialIndex::radius(int query, double r, bool include_self) const {
  if (query < 0 || static_cast<std::size_t>(query) >= positions_.size())
    throw std::out_of_range("radius query id out of range");
  return radius_impl(positions_[static_cast<std::size_t>(query)], r, include_self ? -1 : query);
}

std::vector<int> SpatialIndex::radius(const Vec3& query, double r) const { return radius_impl(query, r, -1); }

std::vector<int> SpatialIndex::cell_neighborhood(const Vec3& p) const {
  std::vector<int> out;
  const CellKey c = cell_of(p, cell_size_);
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
        if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
  std::sort(out.begin(), out.end());
  return out;
}

Downsampled voxel_downsample(const PointCloud& cloud, double grid) {
  if (!(grid > 0.0)) throw std::invalid_argument("voxel grid size must be positive");
  cloud.validate();

  std::unordered_map<CellKey, int, CellKeyHash> slot;
  std::vector<Vec3> pos_sum, col_sum;
  std::vector<int> count;
  std::vector<std::map<int, int>> votes;
  Downsampled out;
  out.mapping.resize(cloud.size());

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [it, inserted] = slot.try_emplace(cell_of(cloud.positions[i], grid), static_cast<int>(pos_sum.size()));
    if (inserted) {
      pos_sum.emplace_back(Vec3::Zero());
      col_sum.emplace_back(Vec3::Zero());
      count.push_back(0);
      votes.emplace_back();
    }
    const auto v = static_cast<std::size_t>(it->second);
    out.mapping[i] = it->second;
    pos_sum[v] += cloud.positions[i];
    if (cloud.has_colors()) col_sum[v] += cloud.colors[i];
    ++count[v];
    if (cloud.has_labels() && cloud.labels[i] != kIgnoreLabel) ++votes[v][cloud.labels[i]];
  }

  PointCloud& ds = out.cloud;
  ds.id = cloud.id;
  const std::size_t m = pos_sum.size();
  ds.positions.resize(m);
  if (cloud.has_colors()) ds.colors.resize(m);
  if (cloud.has_labels()) ds.labels.assign(m, kIgnoreLabel);
  for (std::size_t v = 0; v < m; ++v) {
    const double n = static_cast<double>(count[v]);
    ds.positions[v] = pos_sum[v] / n;
    if (cloud.has_colors()) ds.colors[v] = (col_sum[v] / n).cwiseMax(0.0).cwiseMin(1.0);
    if (cloud.has_labels()) {
      int best = kIgnoreLabel, best_count = 0;
      for (const auto& [label, c] : votes[v])
        if (c > best_count) best = label, best_count = c;  // map order gives the smaller label on ties
      ds.labels[v] = best;
    }
  }
  return out;
}

NormalField estimate_normals(const PointCloud& cloud, int k) {
  if (cloud.size() < 3) throw std::invalid_argument("normal estimation needs at least 3 points");
  const Bounds b = bounding_box(cloud.positions);
  const double extent = (b.max - b.min).maxCoeff();
  // Roughly k points per cell on a surface keeps ring searches short.
  const double density_cell =
      extent > 0 ? extent * std::sqrt(static_cast<double>(std::max(k, 4)) / static_cast<double>(cloud.size())) : 1.0;
  return estimate_normals(SpatialIndex(cloud.positions, std::max(density_cell, 1e-6)), k);
}

NormalField estimate_normals(const SpatialIndex& index, int k) {
  if (index.size() < 3) throw std::invalid_argument("normal estimation needs at least 3 points");
  if (k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
  const std::size_t n = index.size();
  NormalField field;
  field.normals.resize(n);
  field.curvatures.resize(n);
  field.degenerate.assign(n, false);

  for (std::size_t i = 0; i < n; ++i) {
    const int id = static_cast<int>(i);
    auto nbrs = index.knn(id, k);
    nbrs.push_back(id);
    // Offsets relative to the query point keep the result independent of
    // where the cloud sits in space.
    const Vec3& origin = index.position(id);
    Vec3 mean = Vec3::Zero();
    for (int j : nbrs) mean += index.position(j) - origin;
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nbrs) {
      const Vec3 d = index.position(j) - origin - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());

    if (cov.trace() <= 1e-24) {
      field.normals[i] = Vec3(0, 0, 1);
      field.curvatures[i] = 0.0;
      field.degenerate[i] = true;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Vec3 ev = solver.eigenvalues().cwiseMax(0.0);
    const double total = ev.sum();
    field.normals[i] = canonicalize_normal(solver.eigenvectors().col(0).normalized());
    field.curvatures[i] = total > 0 ? std::min(ev[0] / total, 1.0 / 3.0) : 0.0;
  }
  return field;
}

Bounds bounding_box(std::span<const Vec3> positions) {
  if (positions.empty()) throw std::invalid_argument("bounding box of an empty point set");
  Bounds b{positions.front(), positions.front()};
  for (const auto& p : positions) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  return b;
}

}  // namespace spseg
