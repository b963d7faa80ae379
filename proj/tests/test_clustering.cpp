#include "doctest.h"

#include "oracles.hpp"
#include "spseg/clustering.hpp"

#include <numeric>
#include <random>

using namespace spseg;

TEST_CASE("kmeans fixtures") {
  SUBCASE("k = n") {
    RowMatrix x(4, 2);
    x << 0, 0, 1, 0, 0, 1, 3, 3;
    const auto r = kmeans(x, 4, 1);
    CHECK(r.inertia == 0.0);
    std::vector<int> sorted = r.assignments;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("k = 1 gives the column mean") {
    const RowMatrix x = RowMatrix::Random(30, 3);
    const auto r = kmeans(x, 1, 2);
    CHECK((r.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("1-D two clusters") {
    RowMatrix x(4, 1);
    x << 0, 0.1, 10, 10.1;
    const auto r = kmeans(x, 2, 3);
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
    const int a = r.assignments[0];
    CHECK(r.centroids(a, 0) == doctest::Approx(0.05));
    CHECK(r.centroids(1 - a, 0) == doctest::Approx(10.05));
    CHECK(r.inertia == doctest::Approx(oracle::exhaustive_kmeans_inertia(x, 2)).epsilon(1e-12));
  }
  SUBCASE("k is clamped to n") {
    RowMatrix x(2, 1);
    x << 0, 1;
    CHECK(kmeans(x, 5, 0).centroids.rows() == 2);
  }
  SUBCASE("non-finite input") {
    RowMatrix x(2, 1);
    x << 0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(kmeans(x, 1, 0), std::invalid_argument);
  }
}

TEST_CASE("kmeans properties") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> pick_k(2, 8);
    RowMatrix x = RowMatrix::Random(120, 4);
    for (Eigen::Index r = 0; r < 40; ++r) x.row(r).array() += 3.0;
    const int k = pick_k(rng);
    const auto res = kmeans(x, k, rng());
    for (std::size_t i = 1; i < res.inertia_history.size(); ++i)
      CHECK(res.inertia_history[i] <= res.inertia_history[i - 1] + 1e-12);
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const int a = res.assignments[static_cast<std::size_t>(r)];
      ++sizes[static_cast<std::size_t>(a)];
      CHECK(nearest_centroid(res.centroids, x.row(r)) == a);
    }
    CHECK(std::all_of(sizes.begin(), sizes.end(), [](int s) { return s > 0; }));
  }
  SUBCASE("same seed, same result") {
    const RowMatrix x = RowMatrix::Random(200, 3);
    const auto a = kmeans(x, 6, 99), b = kmeans(x, 6, 99);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
  }
  SUBCASE("subsampled fit assigns every row") {
    const RowMatrix x = RowMatrix::Random(500, 3);
    KMeansOptions o;
    o.sample_limit = 50;
    const auto r = kmeans(x, 4, 5, o);
    CHECK(r.assignments.size() == 500);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      CHECK(r.assignments[static_cast<std::size_t>(i)] == nearest_centroid(r.centroids, x.row(i)));
  }
}

TEST_CASE("kmeans reaches the exhaustive optimum on tiny instances") {
  std::mt19937_64 rng(77);
  KMeansOptions o;
  o.restarts = 10;
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> pick_n(1, 8), pick_k(1, 3), pick_d(1, 3);
    const int n = pick_n(rng), k = pick_k(rng), d = pick_d(rng);
    std::normal_distribution<double> g;
    RowMatrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    CHECK(std::abs(kmeans(x, k, rng(), o).inertia - oracle::exhaustive_kmeans_inertia(x, k)) <= 1e-9);
  }
}

TEST_CASE("nearest centroid ties go to the lower id") {
  RowMatrix c(2, 1);
  c << -1, 1;
  Eigen::RowVectorXd p(1);
  p << 0;
  CHECK(nearest_centroid(c, p) == 0);
}

TEST_CASE("hungarian") {
  SUBCASE("diagonal") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(4, 4) * 10.0;
    m(0, 1) = 1;
    CHECK(hungarian(m) == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("hand example") {
    Eigen::MatrixXd m(3, 3);
    m << 0, 5, 1, 4, 0, 0, 0, 1, 3;
    CHECK(hungarian(m) == std::vector<int>{1, 0, 2});
    CHECK(oracle::brute_force_assignment(m) == 12.0);
  }
  SUBCASE("all zero") { CHECK(hungarian(Eigen::MatrixXd::Zero(3, 3)) == std::vector<int>{0, 1, 2}); }
  SUBCASE("lexicographically smallest among optima") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(3, 3, 2.0);
    m(0, 0) = 0;
    CHECK(hungarian(m) == std::vector<int>{1, 0, 2});
  }
  SUBCASE("rectangular input is padded") {
    Eigen::MatrixXd m(2, 3);
    m << 0, 0, 5, 4, 0, 0;
    const auto p = hungarian(m);
    CHECK(p[0] == 2);
    CHECK(p[1] == 0);
  }
  SUBCASE("random integer matrices against brute force") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<int> pick_n(1, 6), val(0, 20);
      const int n = pick_n(rng);
      Eigen::MatrixXd m(n, n);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = val(rng);
      const auto p = hungarian(m);
      double total = 0;
      std::vector<int> seen(static_cast<std::size_t>(n), 0);
      for (int r = 0; r < n; ++r) total += m(r, p[static_cast<std::size_t>(r)]), ++seen[static_cast<std::size_t>(p[static_cast<std::size_t>(r)])];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
      CHECK(total == oracle::brute_force_assignment(m));
    }
  }
}

TEST_CASE("metrics") {
  SUBCASE("perfect prediction") {
    const Metrics m = evaluate({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
    CHECK(m.oa == 1.0);
    CHECK(m.miou == 1.0);
    CHECK(m.macc == 1.0);
  }
  SUBCASE("hand fixture") {
    const Metrics m = evaluate({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(std::abs(m.oa - 0.75) <= 1e-12);
    CHECK(std::abs(m.iou[0] - 0.5) <= 1e-12);
    CHECK(std::abs(m.iou[1] - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(m.miou - 7.0 / 12.0) <= 1e-12);
    CHECK(std::abs(m.macc - 5.0 / 6.0) <= 1e-12);
  }
  SUBCASE("ignored ground truth is not evaluated") {
    const Metrics m = evaluate({0, 1, 1, 0}, {0, 1, kIgnoreLabel, kIgnoreLabel}, 2);
    CHECK(m.evaluated == 2);
    CHECK(m.oa == 1.0);
  }
  SUBCASE("absent classes do not count") {
    const Metrics m = evaluate({0, 0, 1}, {0, 0, 2}, 4);
    CHECK(std::isnan(m.iou[1]));
    CHECK(std::isnan(m.iou[3]));
    CHECK(m.miou == 1.0);
  }
  SUBCASE("more clusters than classes") {
    const Metrics m = evaluate({0, 1, 2, 2}, {0, 0, 1, 1}, 2);
    CHECK(m.oa == 0.75);
    CHECK(m.matching[2] == 1);
  }
  SUBCASE("relabelling predictions changes nothing") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<int> lab(0, 3), gtl(-1, 3);
      std::vector<int> pred(50), gt(50);
      for (auto& p : pred) p = lab(rng);
      for (auto& g : gt) g = gtl(rng);
      gt[0] = 0;
      std::vector<int> perm{0, 1, 2, 3};
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<int> relabelled;
      for (int p : pred) relabelled.push_back(perm[static_cast<std::size_t>(p)]);
      const Metrics a = evaluate(pred, gt, 4), b = evaluate(relabelled, gt, 4);
      CHECK(std::abs(a.oa - b.oa) < 1e-12);
      CHECK(std::abs(a.miou - b.miou) < 1e-12);
      CHECK(std::abs(a.macc - b.macc) < 1e-12);
      for (double v : {a.oa, a.miou, a.macc}) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
  SUBCASE("dataset and per-scene matching") {
    // Scene 2 swaps the cluster ids; one global matching cannot fix both scenes.
    const std::vector<std::vector<int>> pred{{0, 0, 1, 1}, {1, 1, 0, 0}};
    const std::vector<std::vector<int>> gt{{0, 0, 1, 1}, {0, 0, 1, 1}};
    CHECK(evaluate_dataset(pred, gt, 2).oa == 0.5);
    CHECK(evaluate_per_scene(pred, gt, 2).oa == 1.0);
  }
  SUBCASE("report format") {
    const std::string r = format_report(evaluate({0, 0, 1, 1}, {0, 1, 1, 1}, 3));
    CHECK(r == "evaluated = 4\noa = 0.750000\nmacc = 0.833333\nmiou = 0.583333\niou.0 = 0.500000\niou.1 = 0.666667\niou.2 = nan\n");
  }
  CHECK_THROWS_AS(evaluate({0, 1}, {0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(evaluate({0}, {kIgnoreLabel}, 2), std::invalid_argument);
  CHECK_THROWS_AS(evaluate({0}, {5}, 2), std::invalid_argument);
}
