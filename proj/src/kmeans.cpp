#include "spseg/clustering.hpp"

#include "spseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace spseg {

namespace {

constexpr Eigen::Index kBlock = 512;

// Nearest centroid per row. Candidates are ranked with the expanded form
// |c|^2 - 2 x.c (one GEMM per block of rows); the reported squared distance
// of the winner is recomputed directly.
void assign_rows(const RowMatrix& x, const RowMatrix& c, std::vector<int>& labels, std::vector<double>& d2) {
  const Eigen::Index n = x.rows();
  labels.resize(static_cast<std::size_t>(n));
  d2.resize(static_cast<std::size_t>(n));
  const Eigen::RowVectorXd c_norm = c.rowwise().squaredNorm().transpose();
  const auto blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b) {
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kBlock;
    const Eigen::Index rows = std::min(kBlock, n - begin);
    RowMatrix score = -2.0 * (x.middleRows(begin, rows) * c.transpose());
    score.rowwise() += c_norm;
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      double best_score = score(r, 0);
      for (Eigen::Index j = 1; j < score.cols(); ++j)
        if (score(r, j) < best_score) best_score = score(r, j), best = j;
      const auto i = static_cast<std::size_t>(begin + r);
      labels[i] = static_cast<int>(best);
      d2[i] = (x.row(begin + r) - c.row(best)).squaredNorm();
    }
  });
}

RowMatrix means_of(const RowMatrix& x, const std::vector<int>& labels, int k) {
  RowMatrix sums = RowMatrix::Zero(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sums.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (int j = 0; j < k; ++j)
    if (counts[static_cast<std::size_t>(j)] > 0) sums.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
  return sums;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
// Returns the clusters that were refilled.
std::vector<int> repair_empty(const RowMatrix& x, RowMatrix& c, std::vector<int>& labels, std::vector<double>& d2) {
  const int k = static_cast<int>(c.rows());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  std::vector<int> refilled;
  for (int j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) continue;
    std::size_t far = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (counts[static_cast<std::size_t>(labels[i])] < 2) continue;
      if (far == labels.size() || d2[i] > d2[far]) far = i;
    }
    if (far == labels.size()) break;  // cannot happen while k <= n
    --counts[static_cast<std::size_t>(labels[far])];
    labels[far] = j;
    ++counts[static_cast<std::size_t>(j)];
    d2[far] = 0.0;
    c.row(j) = x.row(static_cast<Eigen::Index>(far));
    refilled.push_back(j);
  }
  return refilled;
}

// Greedy k-means++: each new centre is the best of a few D^2-weighted draws.
RowMatrix init_plus_plus(const RowMatrix& x, int k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  RowMatrix c(k, x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  c.row(0) = x.row(static_cast<Eigen::Index>(pick));
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = (x.row(static_cast<Eigen::Index>(i)) - c.row(0)).squaredNorm();

  std::vector<double> candidate_d(n);
  for (int j = 1; j < k; ++j) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    if (!(total > 0.0)) {
      // Every point coincides with a chosen centre; duplicates are all that is left.
      c.row(j) = x.row(static_cast<Eigen::Index>(pick));
      continue;
    }
    std::uniform_real_distribution<double> uni(0.0, total);
    double best_pot = std::numeric_limits<double>::infinity();
    std::vector<double> best_closest;
    std::size_t best_idx = 0;
    for (int t = 0; t < trials; ++t) {
      const double r = uni(rng);
      double acc = 0.0;
      std::size_t idx = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += closest[i];
        if (acc > r && closest[i] > 0.0) {
          idx = i;
          break;
        }
      }
      while (closest[idx] <= 0.0 && idx > 0) --idx;
      double pot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        candidate_d[i] = std::min(closest[i], (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(idx))).squaredNorm());
        pot += candidate_d[i];
      }
      if (pot < best_pot) {
        best_pot = pot;
        best_idx = idx;
        best_closest = candidate_d;
      }
    }
    pick = best_idx;
    c.row(j) = x.row(static_cast<Eigen::Index>(pick));
    closest = std::move(best_closest);
  }
  return c;
}

// Single-point moves that lower the total inertia, taking the change of both
// cluster means into account. Lloyd fixed points are often not stable under
// these moves; the result is. Returns true when anything moved.
bool hartigan_sweeps(const RowMatrix& x, RowMatrix& c, std::vector<int>& labels, int max_sweeps) {
  const int k = static_cast<int>(c.rows());
  c = means_of(x, labels, k);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  bool any = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool moved = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int a = labels[i];
      const double na = counts[static_cast<std::size_t>(a)];
      if (na < 2) continue;
      const auto row = x.row(static_cast<Eigen::Index>(i));
      const double remove = na / (na - 1.0) * (row - c.row(a)).squaredNorm();
      int best = a;
      double best_add = remove;
      for (int b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = counts[static_cast<std::size_t>(b)];
        const double add = nb / (nb + 1.0) * (row - c.row(b)).squaredNorm();
        if (add < best_add * (1.0 - 1e-12)) best_add = add, best = b;
      }
      if (best == a) continue;
      const double nb = counts[static_cast<std::size_t>(best)];
      c.row(a) = (c.row(a) * na - row) / (na - 1.0);
      c.row(best) = (c.row(best) * nb + row) / (nb + 1.0);
      --counts[static_cast<std::size_t>(a)];
      ++counts[static_cast<std::size_t>(best)];
      labels[i] = best;
      moved = true;
    }
    if (!moved) break;
    any = true;
    c = means_of(x, labels, k);
  }
  return any;
}

double column_variance_mean(const RowMatrix& x) {
  if (x.rows() < 2) return 0.0;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return (x.rowwise() - mean).colwise().squaredNorm().mean() / static_cast<double>(x.rows());
}

KMeansResult lloyd(const RowMatrix& x, int k, std::uint64_t seed, const KMeansOptions& options) {
  std::mt19937_64 rng(seed);
  KMeansResult res;
  RowMatrix c = init_plus_plus(x, k, rng);
  const double tol = options.tol * column_variance_mean(x);

  std::vector<int> labels, prev;
  std::vector<double> d2;
  for (int it = 0; it < options.max_iter; ++it) {
    assign_rows(x, c, labels, d2);
    res.inertia_history.push_back(std::accumulate(d2.begin(), d2.end(), 0.0));
    const bool repaired = !repair_empty(x, c, labels, d2).empty();
    if (!repaired && labels == prev) break;
    RowMatrix next = means_of(x, labels, k);
    const double shift = (next - c).squaredNorm();
    c = std::move(next);
    prev = labels;
    res.iterations = it + 1;
    if (shift <= tol) {
      assign_rows(x, c, labels, d2);
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      if (std::find(counts.begin(), counts.end(), 0) == counts.end()) break;
    }
  }
  assign_rows(x, c, labels, d2);
  repair_empty(x, c, labels, d2);
  // Alternate until the labels are both Hartigan-stable and nearest-centroid.
  for (int it = 0; it < options.max_iter; ++it) {
    const bool moved = hartigan_sweeps(x, c, labels, options.max_iter);
    prev = labels;
    assign_rows(x, c, labels, d2);
    repair_empty(x, c, labels, d2);
    if (!moved && labels == prev) break;
  }
  c = means_of(x, labels, k);
  res.assignments = std::move(labels);
  res.centroids = std::move(c);
  return res;
}

double inertia_of(const RowMatrix& x, const RowMatrix& c, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += (x.row(static_cast<Eigen::Index>(i)) - c.row(labels[i])).squaredNorm();
  return total;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& x, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (x.rows() < 1 || k < 1) throw std::invalid_argument("kmeans needs n >= 1 and k >= 1");
  if (!x.allFinite()) throw std::invalid_argument("kmeans input contains NaN or Inf");
  const Eigen::Index n = x.rows();
  k = static_cast<int>(std::min<Eigen::Index>(k, n));

  const bool sampled = options.sample_limit > 0 && options.sample_limit < n;
  RowMatrix sample;
  if (sampled) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, 0x5A5A));
    for (int i = 0; i < options.sample_limit; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(options.sample_limit));
    std::sort(idx.begin(), idx.end());
    sample.resize(options.sample_limit, x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) sample.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    k = std::min(k, options.sample_limit);
  }
  const RowMatrix& fit_on = sampled ? sample : x;

  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    KMeansResult run = lloyd(fit_on, k, derive_seed(seed, static_cast<std::uint64_t>(r)), options);
    run.inertia = inertia_of(fit_on, run.centroids, run.assignments);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }

  if (sampled) {
    std::vector<double> d2;
    assign_rows(x, best.centroids, best.assignments, d2);
    repair_empty(x, best.centroids, best.assignments, d2);
    best.inertia = inertia_of(x, best.centroids, best.assignments);
  }
  return best;
}

int nearest_centroid(const RowMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double d = (centroids.row(j) - row).squaredNorm();
    if (d < best_d) best_d = d, best = static_cast<int>(j);
  }
  return best;
}

}  // namespace spseg
