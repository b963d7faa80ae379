#include "spseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spseg {

namespace {

// Kuhn-Munkres with potentials, O(n^3), minimising cost on a square matrix.
// Returns col_of_row.
std::vector<int> solve_min_cost(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) col_of_row[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return col_of_row;
}

double max_total(const Eigen::MatrixXd& score) {
  if (score.rows() == 0) return 0.0;
  const auto perm = solve_min_cost(-score);
  double total = 0.0;
  for (std::size_t r = 0; r < perm.size(); ++r) total += score(static_cast<Eigen::Index>(r), perm[r]);
  return total;
}

}  // namespace

std::vector<int> hungarian(const Eigen::MatrixXd& input) {
  const Eigen::Index n = std::max(input.rows(), input.cols());
  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(n, n);
  score.topLeftCorner(input.rows(), input.cols()) = input;
  if (n == 0) return {};

  const double best = max_total(score);
  const double eps = 1e-9 * std::max(1.0, std::abs(best));

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<int> perm(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> free_cols(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) free_cols[static_cast<std::size_t>(j)] = j;
  double fixed = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index rest = n - r - 1;
    for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
      const Eigen::Index col = free_cols[ci];
      Eigen::MatrixXd sub(rest, rest);
      for (Eigen::Index a = 0; a < rest; ++a) {
        Eigen::Index b = 0;
        for (std::size_t cj = 0; cj < free_cols.size(); ++cj) {
          if (cj == ci) continue;
          sub(a, b++) = score(r + 1 + a, free_cols[cj]);
        }
      }
      const double total = fixed + score(r, col) + max_total(sub);
      if (total >= best - eps) {
        perm[static_cast<std::size_t>(r)] = static_cast<int>(col);
        fixed += score(r, col);
        free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(ci));
        break;
      }
    }
  }
  return perm;
}

}  // namespace spseg
