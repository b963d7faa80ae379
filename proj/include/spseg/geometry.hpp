#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace spseg {

using Vec3 = Eigen::Vector3d;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kIgnoreLabel = -1;

// A scene. Colors are RGB in [0,1]; labels use kIgnoreLabel for points that
// must not take part in clustering, losses or metrics. Either optional array
// may be empty; when present it has one entry per position.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<int> labels;
  std::string id;

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_labels() const { return !labels.empty(); }

  // Throws std::invalid_argument when the container invariants are broken.
  void validate() const;
};

struct NormalField {
  std::vector<Vec3> normals;
  std::vector<double> curvatures;
  std::vector<bool> degenerate;
};

// Flips n so that the first component of (z, y, x) whose magnitude exceeds
// a small tolerance is positive.
Vec3 canonicalize_normal(const Vec3& n);

struct CellKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const CellKey&) const = default;
  auto operator<=>(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept;
};

CellKey cell_of(const Vec3& p, double cell_size);

// Uniform voxel hash over a fixed set of positions. Owns a copy of the
// positions so queries never dangle.
class SpatialIndex {
 public:
  SpatialIndex(std::span<const Vec3> positions, double cell_size);

  double cell_size() const { return cell_size_; }
  std::size_t size() const { return positions_.size(); }
  const Vec3& position(int id) const { return positions_[static_cast<std::size_t>(id)]; }
  const std::unordered_map<CellKey, std::vector<int>, CellKeyHash>& cells() const { return cells_; }

  // k nearest points to a stored point, ordered by (distance, id). k is
  // clamped to the number of available candidates.
  std::vector<int> knn(int query, int k, bool include_self = false) const;
  // k nearest stored points to an arbitrary location.
  std::vector<int> knn(const Vec3& query, int k) const;
  // All points within distance r (inclusive), ascending id.
  std::vector<int> radius(int query, double r, bool include_self = false) const;
  std::vector<int> radius(const Vec3& query, double r) const;
  // Ids stored in the 27 cells around (and including) the cell of p.
  std::vector<int> cell_neighborhood(const Vec3& p) const;

 private:
  std::vector<int> knn_impl(const Vec3& q, int k, int exclude) const;
  std::vector<int> radius_impl(const Vec3& q, double r, int exclude) const;

  std::vector<Vec3> positions_;
  double cell_size_;
  std::unordered_map<CellKey, std::vector<int>, CellKeyHash> cells_;
  CellKey lo_{}, hi_{};
};

struct Downsampled {
  PointCloud cloud;
  std::vector<int> mapping;  // original point id -> downsampled point id
};

// One output point per occupied voxel at the centroid of its members.
// Colors are averaged; labels take the majority among non-ignored members
// (ties to the smaller label), or kIgnoreLabel when every member is ignored.
// Output order follows the first occurrence of each voxel in the input.
Downsampled voxel_downsample(const PointCloud& cloud, double grid);

// PCA normals over each point and its k nearest neighbours. Degenerate
// neighbourhoods (all points coincident) yield (0,0,1) with curvature 0.
NormalField estimate_normals(const PointCloud& cloud, int k = 16);
NormalField estimate_normals(const SpatialIndex& index, int k = 16);

struct Bounds {
  Vec3 min, max;
};
Bounds bounding_box(std::span<const Vec3> positions);

}  // namespace spseg
