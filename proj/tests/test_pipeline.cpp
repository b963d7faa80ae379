#include "doctest.h"

#include "spseg/dataset.hpp"
#include "spseg/parallel.hpp"
#include "spseg/pipeline.hpp"
#include "spseg/synth.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace spseg;

namespace {

bool refines(const Partition& grown, const Partition& initial) {
  std::map<int, int> owner;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    const int s = initial.assignment[i], g = grown.assignment[i];
    if (s < 0) {
      if (g >= 0) return false;
      continue;
    }
    const auto [it, inserted] = owner.emplace(s, g);
    if (!inserted && it->second != g) return false;
  }
  return true;
}

const std::vector<TrainScene>& tiny_scenes() {
  static const std::vector<TrainScene> scenes = [] {
    SynthSpec spec;
    spec.seed = 3;
    spec.scenes = 3;
    spec.test_scenes = 0;
    spec.points = 3000;
    spec.room_min = Vec3(2.0, 2.0, 2.2);
    spec.room_max = Vec3(2.5, 2.5, 2.4);
    spec.clutter_fraction = 0.05;
    std::vector<TrainScene> out;
    for (const auto& s : gen_synthetic(spec)) {
      PreprocessResult r = preprocess(s.cloud, 0.05, SuperpointParams{});
      out.push_back({std::move(r.cloud), std::move(r.initial)});
    }
    return out;
  }();
  return scenes;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 24;
  c.round_epochs = 3;
  c.m1 = 9;
  c.mt = 4;
  c.primitives = 20;
  c.feature_dim = 8;
  c.hidden = {8};
  c.batch_clouds = 2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("config validation and targets") {
  TrainConfig c;
  CHECK(c.m1 == 80);
  CHECK(c.mt == 10);
  CHECK(c.primitives == 300);
  CHECK(c.round_epochs == 10);
  CHECK(c.momentum == 0.9);
  CHECK(c.radius() == doctest::Approx(0.15));
  CHECK_NOTHROW(c.validate());
  CHECK(superpoint_target(c, 1) == 80);
  CHECK(superpoint_target(c, 2) == 79);
  CHECK(superpoint_target(c, 71) == 10);
  CHECK(superpoint_target(c, 90) == 10);
  CHECK_THROWS_AS(superpoint_target(c, 0), std::invalid_argument);
  c.growth_step = 5;
  CHECK(superpoint_target(c, 3) == 70);
  c = TrainConfig{};
  c.mt = 90;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.epochs = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("grow_superpoints") {
  SUBCASE("target at or above M0 keeps the partition") {
    const Partition init = make_partition({0, 0, 1, 2, 2});
    const RowMatrix f = RowMatrix::Random(5, 3);
    CHECK(grow_superpoints(f, init, 3, 1).assignment == init.assignment);
    CHECK(grow_superpoints(f, init, 10, 1).assignment == init.assignment);
  }
  SUBCASE("nearby superpoints merge") {
    // Four single-point superpoints with raw means (0,0),(0.1,0),(5,5),(5.1,5).
    RowMatrix f(4, 2);
    f << 0, 0, 0.1, 0, 5, 5, 5.1, 5;
    const Partition out = grow_superpoints(f, make_partition({0, 1, 2, 3}), 2, 7, {}, false);
    CHECK(out.count == 2);
    CHECK(out.assignment[0] == out.assignment[1]);
    CHECK(out.assignment[2] == out.assignment[3]);
    CHECK(out.assignment[0] != out.assignment[2]);
  }
  SUBCASE("grown superpoints are unions of initial ones") {
    std::vector<int> labels(200);
    for (int i = 0; i < 200; ++i) labels[static_cast<std::size_t>(i)] = (i * 7) % 23;
    labels[5] = -1;
    const Partition init = make_partition(labels);
    const Partition out = grow_superpoints(RowMatrix::Random(200, 4), init, 6, 3);
    CHECK(out.count == 6);
    CHECK(refines(out, init));
  }
}

TEST_CASE("cluster_primitives") {
  const Partition a = make_partition({0, 0, 1, -1}), b = make_partition({0, 1, 1});
  RowMatrix fa = RowMatrix::Random(2, 5), fb = RowMatrix::Random(2, 5);
  SUBCASE("fewer superpoints than S") {
    const auto pc = cluster_primitives({fa, fb}, {a, b}, 300, 3, 1);
    CHECK(pc.model.size() == 4);
    CHECK(pc.model.centroids.cols() == 3);
    for (Eigen::Index r = 0; r < 4; ++r) CHECK(pc.model.centroids.row(r).norm() == doctest::Approx(1.0));
    std::set<int> labels{pc.pseudo[0][0], pc.pseudo[0][2], pc.pseudo[1][0], pc.pseudo[1][1]};
    CHECK(labels.size() == 4);
    CHECK(pc.pseudo[0][0] == pc.pseudo[0][1]);
    CHECK(pc.pseudo[0][3] == kIgnoreLabel);
    CHECK(pc.pseudo[1][1] == pc.pseudo[1][2]);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(cluster_primitives({fa}, {a, b}, 3, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(cluster_primitives({fa, fb}, {a, b}, 3, 6, 1), std::invalid_argument);
  }
}

TEST_CASE("test-time classifier and segmentation") {
  SUBCASE("C = S returns the primitives") {
    PrimitiveModel m;
    m.centroids = RowMatrix::Random(5, 4);
    for (Eigen::Index r = 0; r < 5; ++r) m.centroids.row(r).normalize();
    const RowMatrix c = fit_test_classifier(m, 5, 1);
    for (Eigen::Index r = 0; r < 5; ++r) {
      double best = 1e9;
      for (Eigen::Index q = 0; q < 5; ++q) best = std::min(best, (c.row(q) - m.centroids.row(r)).norm());
      CHECK(best < 1e-12);
    }
  }
  SUBCASE("two tight groups") {
    PrimitiveModel m;
    m.centroids.resize(4, 2);
    m.centroids << 1, 0.01, 1, -0.01, 0.01, 1, -0.01, 1;
    const RowMatrix c = fit_test_classifier(m, 2, 1);
    std::set<std::pair<long, long>> got;
    for (Eigen::Index r = 0; r < 2; ++r) got.insert({std::lround(c(r, 0) * 1000), std::lround(c(r, 1) * 1000)});
    CHECK(got == std::set<std::pair<long, long>>{{1000, 0}, {0, 1000}});
  }
  CHECK_THROWS_AS(fit_test_classifier(PrimitiveModel{RowMatrix::Random(2, 3)}, 3, 1), std::invalid_argument);

  const TrainScene& scene = tiny_scenes()[0];
  const auto params = init_params(1, kInputDim, {8}, 4);
  SUBCASE("single class labels everything 0") {
    const auto labels = segment(scene.cloud, params, RowMatrix::Constant(1, 4, 0.5), 0.05, 0.15);
    CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
  }
  SUBCASE("duplicate points agree") {
    PointCloud c = scene.cloud;
    c.positions.push_back(c.positions[10]);
    c.colors.push_back(c.colors[10]);
    c.labels.push_back(c.labels[10]);
    const auto labels = segment(c, params, RowMatrix::Random(3, 4), 0.05, 0.15);
    CHECK(labels[10] == labels.back());
  }
}

TEST_CASE("vanilla k-means baseline") {
  PointCloud plane;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) plane.positions.emplace_back(0.1 * i, 0.1 * j, 0);
  const auto one = vanilla_kmeans_baseline(plane, 1, 0);
  CHECK(std::all_of(one.begin(), one.end(), [](int l) { return l == 0; }));

  PointCloud blobs;
  for (int i = 0; i < 50; ++i) {
    blobs.positions.emplace_back(0.01 * i, 0, 0);
    blobs.colors.emplace_back(1, 0, 0);
    blobs.positions.emplace_back(5 + 0.01 * i, 0, 0);
    blobs.colors.emplace_back(0, 0, 1);
  }
  const auto two = vanilla_kmeans_baseline(blobs, 2, 0);
  for (std::size_t i = 0; i < two.size(); ++i) CHECK(two[i] == two[i % 2]);
  CHECK(two[0] != two[1]);
}

TEST_CASE("training invariants") {
  const auto& scenes = tiny_scenes();
  const TrainConfig config = tiny_config();
  std::vector<int> m0;
  for (const auto& s : scenes) m0.push_back(mask_ignored(s.initial, s.cloud.labels).count);

  int rounds = 0;
  std::vector<std::vector<int>> counts;
  TrainHooks hooks;
  hooks.on_round = [&](const RoundInfo& info) {
    ++rounds;
    std::vector<int> c;
    for (std::size_t k = 0; k < scenes.size(); ++k) {
      const Partition& cur = (*info.current)[k];
      const Partition& init = (*info.initial)[k];
      const auto& pseudo = (*info.pseudo)[k];
      CHECK(refines(cur, init));
      c.push_back(cur.count);
      if (info.level > 0) CHECK(cur.count == std::min(info.target, m0[k]));
      std::map<int, int> label_of;
      for (std::size_t i = 0; i < cur.size(); ++i) {
        if (scenes[k].cloud.labels[i] == kIgnoreLabel) {
          CHECK(cur.assignment[i] == -1);
          CHECK(pseudo[i] == kIgnoreLabel);
          continue;
        }
        const auto [it, inserted] = label_of.emplace(cur.assignment[i], pseudo[i]);
        if (!inserted) CHECK(it->second == pseudo[i]);
      }
    }
    counts.push_back(c);
  };
  int checkpoints = 0;
  hooks.on_checkpoint = [&](int, const ExtractorParams&, const PrimitiveModel&) { ++checkpoints; };
  const TrainResult r = train(scenes, config, hooks);

  CHECK(rounds == 8);
  CHECK(checkpoints == 8);
  REQUIRE(r.log.size() == 24);
  for (std::size_t i = 1; i < counts.size(); ++i)
    for (std::size_t k = 0; k < scenes.size(); ++k) {
      CHECK(counts[i][k] <= counts[i - 1][k]);
      CHECK(counts[i][k] >= std::min(config.mt, m0[k]));
    }
  for (const auto& e : r.log) CHECK(std::isfinite(e.loss));
  // Six growth events (targets 9 down to 4) after rounds 1..6; none after the last round.
  CHECK(r.log.back().level == 6);
  CHECK(r.log.back().target == 4);
  CHECK(r.model.size() <= config.primitives);
}

TEST_CASE("training is deterministic across thread counts") {
  const auto& scenes = tiny_scenes();
  TrainConfig config = tiny_config();
  config.epochs = 6;
  set_num_threads(1);
  const TrainResult a = train(scenes, config);
  set_num_threads(3);
  const TrainResult b = train(scenes, config);
  set_num_threads(0);
  for (std::size_t l = 0; l < a.params.layers.size(); ++l) CHECK(a.params.layers[l].weight == b.params.layers[l].weight);
  CHECK(a.model.centroids == b.model.centroids);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("degenerate single-round run") {
  TrainConfig config = tiny_config();
  config.epochs = 3;
  config.round_epochs = 3;
  config.m1 = config.mt = 4;
  const TrainResult r = train(tiny_scenes(), config);
  for (const auto& e : r.log) CHECK(e.level == 0);
  for (std::size_t k = 0; k < tiny_scenes().size(); ++k)
    CHECK(same_grouping(r.final_partitions[k], mask_ignored(tiny_scenes()[k].initial, tiny_scenes()[k].cloud.labels)));
}

TEST_CASE("per-point ablation never grows") {
  TrainConfig config = tiny_config();
  config.epochs = 6;
  config.use_superpoints = false;
  config.point_sample_limit = 500;
  const TrainResult r = train(tiny_scenes(), config);
  for (const auto& e : r.log) CHECK(e.level == 0);
  for (std::size_t k = 0; k < tiny_scenes().size(); ++k) {
    const auto& labels = tiny_scenes()[k].cloud.labels;
    const auto kept = std::count_if(labels.begin(), labels.end(), [](int l) { return l != kIgnoreLabel; });
    CHECK(r.final_partitions[k].count == kept);
  }
}

TEST_CASE("checkpoint tensors roundtrip") {
  TrainConfig config;
  config.voxel = 0.04;
  const auto params = init_params(2, kInputDim, {5, 6}, 7);
  PrimitiveModel model{RowMatrix::Random(9, 7)};
  const LoadedModel back = from_tensors(to_tensors(params, model, config));
  REQUIRE(back.params.layers.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(back.params.layers[l].weight == params.layers[l].weight);
    CHECK(back.params.layers[l].bias == params.layers[l].bias);
  }
  CHECK(back.model.centroids == model.centroids);
  CHECK(back.voxel == 0.04);
  CHECK(back.radius == doctest::Approx(0.12));
  CHECK_THROWS_AS(from_tensors({}), std::runtime_error);
}

TEST_CASE("training errors name the cloud") {
  std::vector<TrainScene> scenes{tiny_scenes()[0]};
  scenes[0].cloud.id = "broken";
  scenes[0].initial.assignment.pop_back();
  try {
    train(scenes, tiny_config());
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }
}
