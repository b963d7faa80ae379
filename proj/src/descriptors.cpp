#include "spseg/descriptors.hpp"

#include "spseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace spseg {

RowMatrix mean_feature(const RowMatrix& features, const Partition& partition) {
  if (static_cast<std::size_t>(features.rows()) != partition.size())
    throw std::invalid_argument("feature rows do not match partition length");
  RowMatrix sums = RowMatrix::Zero(partition.count, features.cols());
  std::vector<int> counts(static_cast<std::size_t>(partition.count), 0);
  for (std::size_t i = 0; i < partition.size(); ++i) {
    const int s = partition.assignment[i];
    if (s < 0) continue;
    sums.row(s) += features.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(s)];
  }
  for (int s = 0; s < partition.count; ++s) {
    if (counts[static_cast<std::size_t>(s)] == 0) throw std::invalid_argument("partition has an empty superpoint");
    sums.row(s) /= static_cast<double>(counts[static_cast<std::size_t>(s)]);
  }
  return sums;
}

int pfh_bin(double cosine) {
  const double c = std::clamp(cosine, -1.0, 1.0);
  return std::min(static_cast<int>(std::floor((c + 1.0) / 0.2)), kPfhBins - 1);
}

RowMatrix pfh_histogram(const NormalField& normals, const Partition& partition, int max_pairs, std::uint64_t seed) {
  if (normals.normals.size() != partition.size()) throw std::invalid_argument("normal field does not match partition");
  const auto groups = partition.members();
  RowMatrix hist = RowMatrix::Zero(partition.count, kPfhBins);
  parallel_for(groups.size(), [&](std::size_t s) {
    const auto& g = groups[s];
    const auto row = static_cast<Eigen::Index>(s);
    const auto q = g.size();
    if (q < 2) {
      hist(row, kPfhBins - 1) = 1.0;
      return;
    }
    auto add = [&](int a, int b) {
      hist(row, pfh_bin(normals.normals[static_cast<std::size_t>(a)].dot(normals.normals[static_cast<std::size_t>(b)])))
          += 1.0;
    };
    const std::uint64_t pairs = static_cast<std::uint64_t>(q) * (q - 1) / 2;
    if (max_pairs <= 0 || pairs <= static_cast<std::uint64_t>(max_pairs)) {
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i + 1; j < q; ++j) add(g[i], g[j]);
    } else {
      std::mt19937_64 rng(derive_seed(seed, s));
      std::uniform_int_distribution<std::size_t> pick(0, q - 1);
      for (int p = 0; p < max_pairs; ++p) {
        const std::size_t i = pick(rng);
        std::size_t j = pick(rng);
        while (j == i) j = pick(rng);
        add(g[i], g[j]);
      }
    }
    hist.row(row) /= hist.row(row).sum();
  });
  return hist;
}

void normalize_rows(RowMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0) m.row(r) /= n;
  }
}

RowMatrix augment(const RowMatrix& neural, const RowMatrix& pfh, double weight) {
  if (neural.rows() != pfh.rows()) throw std::invalid_argument("neural and pfh row counts differ");
  RowMatrix out(neural.rows(), neural.cols() + pfh.cols());
  RowMatrix normed = neural;
  normalize_rows(normed);
  out.leftCols(neural.cols()) = normed;
  out.rightCols(pfh.cols()) = weight * pfh;
  return out;
}

}  // namespace spseg
