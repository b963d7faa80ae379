#pragma once

#include "spseg/geometry.hpp"
#include "spseg/superpoints.hpp"

#include <cstdint>

namespace spseg {

inline constexpr int kPfhBins = 10;

struct SuperpointFeatures {
  RowMatrix neural;     // count x K, mean embeddings
  RowMatrix pfh;        // count x 10, normal-cosine histograms
  RowMatrix augmented;  // count x (K + 10)
};

// Row m is the mean feature of the points assigned to superpoint m. Points
// with assignment -1 are skipped.
RowMatrix mean_feature(const RowMatrix& features, const Partition& partition);

// 10-bin histogram of pairwise normal cosines per superpoint over [-1, 1]
// with bin width 0.2 (the last bin is closed at 1). All pairs are used when
// there are at most max_pairs of them, otherwise max_pairs pairs are drawn
// uniformly with a per-superpoint stream derived from seed.
RowMatrix pfh_histogram(const NormalField& normals, const Partition& partition, int max_pairs = 1024,
                        std::uint64_t seed = 0);

// Bin index of a cosine value.
int pfh_bin(double cosine);

// [normalize(neural) | weight * pfh]. Zero neural rows stay zero.
RowMatrix augment(const RowMatrix& neural, const RowMatrix& pfh, double weight = 1.0);

// Scales every non-zero row to unit L2 norm.
void normalize_rows(RowMatrix& m);

}  // namespace spseg
