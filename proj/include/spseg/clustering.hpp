#pragma once

#include "spseg/geometry.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spseg {

struct KMeansOptions {
  int max_iter = 100;
  // Convergence when the summed squared centroid shift falls below
  // tol * mean per-column variance of the data.
  double tol = 1e-4;
  // Independent k-means++ restarts; the lowest inertia wins.
  int restarts = 1;
  // When positive and smaller than n, centroids are fitted on a seeded
  // uniform subsample of this many rows and every row is assigned at the end.
  int sample_limit = 0;
};

struct KMeansResult {
  std::vector<int> assignments;
  RowMatrix centroids;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // after every assignment step
};

// Seeded k-means++ followed by Lloyd iterations. k is clamped to n. Empty
// clusters are refilled with the point farthest from its centroid. Rows with
// NaN or Inf raise std::invalid_argument.
KMeansResult kmeans(const RowMatrix& x, int k, std::uint64_t seed, const KMeansOptions& options = {});

// Index of the nearest centroid (squared Euclidean, smaller id on ties).
int nearest_centroid(const RowMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Maximum-weight perfect matching on a square score matrix. perm[r] is the
// column matched to row r; among optimal permutations the lexicographically
// smallest one is returned. Rectangular inputs are padded with zeros.
std::vector<int> hungarian(const Eigen::MatrixXd& score);

struct Metrics {
  double oa = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::vector<double> iou;          // per ground-truth class, NaN when absent
  std::vector<int> matching;        // predicted cluster -> class (or -1)
  std::int64_t evaluated = 0;       // non-ignored points
  Eigen::MatrixXd confusion;        // matched prediction x ground truth
};

// Confusion counts of raw predictions (rows, cluster ids) against ground
// truth (columns, class ids); points with gt == kIgnoreLabel are skipped.
Eigen::MatrixXd confusion_counts(const std::vector<int>& pred, const std::vector<int>& gt, int pred_classes,
                                 int classes);

// OA / mAcc / mIoU after Hungarian matching of predicted clusters to classes.
// Class averages run over classes present in the ground truth.
Metrics evaluate(const std::vector<int>& pred, const std::vector<int>& gt, int classes);
// Same, from an accumulated raw confusion matrix (rows: clusters, cols: classes).
Metrics evaluate_confusion(const Eigen::MatrixXd& raw, int classes);

// Several scenes whose predicted ids share one meaning: the confusions are
// summed and matched once.
Metrics evaluate_dataset(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gt, int classes);
// Scenes with unrelated predicted ids (per-scene clusterings): each scene is
// matched on its own and the matched confusions are summed.
Metrics evaluate_per_scene(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gt,
                           int classes);

// "key = value" lines: evaluated, oa, macc, miou, iou.<c>.
std::string format_report(const Metrics& m);

}  // namespace spseg
