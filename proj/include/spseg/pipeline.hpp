#pragma once

#include "spseg/checkpoint.hpp"
#include "spseg/clustering.hpp"
#include "spseg/extractor.hpp"
#include "spseg/superpoints.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace spseg {

struct TrainConfig {
  int m1 = 80;            // superpoints per cloud at the first growth event
  int mt = 10;            // final superpoint count
  int round_epochs = 10;  // epochs between primitive refreshes / growth events
  int epochs = 720;
  int primitives = 300;   // S
  double pfh_weight = 1.0;
  double tau = 0.1;

  double lr = 0.1;
  double momentum = 0.9;
  double poly_power = 0.9;
  int batch_clouds = 4;

  int feature_dim = 32;
  std::vector<int> hidden{32, 32};
  double voxel = 0.05;
  double aggregation_radius = 0.0;  // 0 selects 3 * voxel
  int normal_neighbors = 16;
  int pfh_max_pairs = 1024;

  // Rounds between growth events, and the superpoint decrement per event.
  int growth_interval = 1;
  int growth_step = 1;
  bool refresh_every_epoch = false;

  // false clusters individual points into primitives and never grows.
  bool use_superpoints = true;
  // Points used to fit the per-point primitive centroids (all points are
  // assigned afterwards).
  int point_sample_limit = 10000;

  KMeansOptions primitive_kmeans{};
  KMeansOptions growth_kmeans{};
  std::uint64_t seed = 0;

  double radius() const { return aggregation_radius > 0.0 ? aggregation_radius : 3.0 * voxel; }
  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

// Superpoint target after `level` growth events (level >= 1).
int superpoint_target(const TrainConfig& config, int level);

struct PrimitiveModel {
  RowMatrix centroids;  // S x K, unit rows
  int size() const { return static_cast<int>(centroids.rows()); }
};

// A preprocessed cloud and its frozen initial superpoints. Labels, when
// present, are only read for the ignore mask.
struct TrainScene {
  PointCloud cloud;
  Partition initial;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  int round = 0;  // 1-based
  int level = 0;  // t, number of growth events so far
  int target = 0;  // Mt at this level, 0 before the first growth event
  double loss = 0.0;
  double lr = 0.0;
};

struct RoundInfo {
  int round = 0;
  int level = 0;
  int target = 0;
  const std::vector<Partition>* current = nullptr;  // per cloud, ignored points masked
  const std::vector<Partition>* initial = nullptr;
  const std::vector<std::vector<int>>* pseudo = nullptr;  // per cloud, per point
  int primitives = 0;
};

using RoundObserver = std::function<void(const RoundInfo&)>;

struct TrainResult {
  ExtractorParams params;
  PrimitiveModel model;
  std::vector<EpochRecord> log;
  std::vector<Partition> final_partitions;
};

struct TrainHooks {
  RoundObserver on_round;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called at every round boundary with the current parameters and primitives.
  std::function<void(int round, const ExtractorParams&, const PrimitiveModel&)> on_checkpoint;
};

// Re-clusters the initial superpoints of one cloud into min(target, M0)
// superpoints by K-means on their (L2-normalised unless `normalize` is
// false) mean features. Points outside the initial partition stay -1.
Partition grow_superpoints(const RowMatrix& features, const Partition& initial, int target, std::uint64_t seed,
                           const KMeansOptions& options = {}, bool normalize = true);

struct PrimitiveClustering {
  PrimitiveModel model;
  std::vector<std::vector<int>> pseudo;  // per cloud, per point
};

// Dataset-wide K-means of superpoint features into min(S, total) primitives.
// `augmented[c]` holds the rows of cloud c's superpoints.
PrimitiveClustering cluster_primitives(const std::vector<RowMatrix>& augmented, const std::vector<Partition>& partitions,
                                       int primitives, int feature_dim, std::uint64_t seed,
                                       const KMeansOptions& options = {});

TrainResult train(const std::vector<TrainScene>& scenes, const TrainConfig& config, const TrainHooks& hooks = {});

// K-means of the primitive centroids into C classes, rows L2-normalised.
RowMatrix fit_test_classifier(const PrimitiveModel& model, int classes, std::uint64_t seed);

std::vector<int> segment(const PointCloud& cloud, const ExtractorParams& params, const RowMatrix& class_centroids,
                         double voxel, double radius);

// Per-scene K-means on (x, y, z, r, g, b) with coordinates min-max scaled to
// [0, 1] per axis.
std::vector<int> vanilla_kmeans_baseline(const PointCloud& cloud, int classes, std::uint64_t seed);

// Checkpoint conversion: extractor layers, primitive centroids, and the
// geometry settings needed to rebuild inputs at test time.
std::vector<NamedTensor> to_tensors(const ExtractorParams& params, const PrimitiveModel& model, const TrainConfig& config);
struct LoadedModel {
  ExtractorParams params;
  PrimitiveModel model;
  double voxel = 0.05;
  double radius = 0.15;
};
LoadedModel from_tensors(const std::vector<NamedTensor>& tensors);

}  // namespace spseg
