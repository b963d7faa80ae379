#include "spseg/pipeline.hpp"

#include "spseg/descriptors.hpp"
#include "spseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace spseg {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid training config: ") + what);
  };
  require(mt >= 1, "mt must be >= 1");
  require(m1 >= mt, "m1 must be >= mt");
  require(round_epochs >= 1, "round_epochs must be >= 1");
  require(epochs >= round_epochs, "epochs must be >= round_epochs");
  require(primitives >= 1, "primitives must be >= 1");
  require(tau > 0.0, "tau must be positive");
  require(pfh_weight >= 0.0, "pfh_weight must be non-negative");
  require(lr >= 0.0 && momentum >= 0.0 && poly_power >= 0.0, "optimizer settings must be non-negative");
  require(batch_clouds >= 1, "batch_clouds must be >= 1");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(std::all_of(hidden.begin(), hidden.end(), [](int h) { return h >= 1; }), "hidden sizes must be >= 1");
  require(voxel > 0.0 && aggregation_radius >= 0.0, "voxel must be positive");
  require(normal_neighbors >= 3, "normal_neighbors must be >= 3");
  require(growth_interval >= 1 && growth_step >= 1, "growth cadence must be >= 1");
  require(point_sample_limit >= 0, "point_sample_limit must be non-negative");
}

int superpoint_target(const TrainConfig& config, int level) {
  if (level < 1) throw std::invalid_argument("growth level starts at 1");
  const long long t = static_cast<long long>(config.m1) - static_cast<long long>(level - 1) * config.growth_step;
  return static_cast<int>(std::max<long long>(config.mt, t));
}

Partition grow_superpoints(const RowMatrix& features, const Partition& initial, int target, std::uint64_t seed,
                           const KMeansOptions& options, bool normalize) {
  if (target < 1) throw std::invalid_argument("superpoint target must be >= 1");
  if (initial.count == 0 || target >= initial.count) return initial;
  RowMatrix means = mean_feature(features, initial);
  if (normalize) normalize_rows(means);
  const KMeansResult km = kmeans(means, target, seed, options);
  std::vector<int> labels(initial.size(), -1);
  for (std::size_t i = 0; i < initial.size(); ++i) {
    const int s = initial.assignment[i];
    if (s >= 0) labels[i] = km.assignments[static_cast<std::size_t>(s)];
  }
  return make_partition(labels);
}

PrimitiveClustering cluster_primitives(const std::vector<RowMatrix>& augmented, const std::vector<Partition>& partitions,
                                       int primitives, int feature_dim, std::uint64_t seed,
                                       const KMeansOptions& options) {
  if (augmented.size() != partitions.size()) throw std::invalid_argument("one feature block per partition expected");
  Eigen::Index total = 0, cols = -1;
  for (std::size_t c = 0; c < augmented.size(); ++c) {
    if (augmented[c].rows() != partitions[c].count)
      throw std::invalid_argument("superpoint feature rows do not match the partition");
    if (augmented[c].rows() == 0) continue;
    if (cols >= 0 && augmented[c].cols() != cols) throw std::invalid_argument("superpoint feature widths differ");
    cols = augmented[c].cols();
    total += augmented[c].rows();
  }
  if (total == 0) throw std::invalid_argument("no superpoints to cluster");
  if (feature_dim < 1 || feature_dim > cols) throw std::invalid_argument("feature_dim exceeds superpoint feature width");

  RowMatrix all(total, cols);
  std::vector<Eigen::Index> offset(augmented.size(), 0);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < augmented.size(); ++c) {
    offset[c] = row;
    if (augmented[c].rows() == 0) continue;
    all.middleRows(row, augmented[c].rows()) = augmented[c];
    row += augmented[c].rows();
  }

  const KMeansResult km = kmeans(all, static_cast<int>(std::min<Eigen::Index>(primitives, total)), seed, options);
  PrimitiveClustering out;
  out.model.centroids = km.centroids.leftCols(feature_dim);
  normalize_rows(out.model.centroids);
  out.pseudo.resize(partitions.size());
  for (std::size_t c = 0; c < partitions.size(); ++c) {
    auto& labels = out.pseudo[c];
    labels.assign(partitions[c].size(), kIgnoreLabel);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int s = partitions[c].assignment[i];
      if (s >= 0) labels[i] = km.assignments[static_cast<std::size_t>(offset[c] + s)];
    }
  }
  return out;
}

namespace {

struct PreparedScene {
  ExtractorInput input;
  NormalField normals;
  Partition initial;  // ignored points masked
  Partition per_point;  // used when superpoints are disabled
  int labelled = 0;
};

std::runtime_error stage_error(const std::string& cloud, int epoch, const std::string& stage, const std::exception& e) {
  return std::runtime_error("cloud '" + cloud + "' epoch " + std::to_string(epoch) + " (" + stage + "): " + e.what());
}

}  // namespace

TrainResult train(const std::vector<TrainScene>& scenes, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (scenes.empty()) throw std::invalid_argument("training needs at least one scene");
  const std::size_t h = scenes.size();

  std::vector<PreparedScene> prep(h);
  parallel_for(h, [&](std::size_t c) {
    const TrainScene& sc = scenes[c];
    try {
      sc.cloud.validate();
      sc.initial.validate();
      if (sc.initial.size() != sc.cloud.size()) throw std::invalid_argument("initial partition length mismatch");
      PreparedScene& p = prep[c];
      p.input = prepare_input(sc.cloud, config.voxel, config.radius());
      p.normals = estimate_normals(sc.cloud, config.normal_neighbors);
      p.initial = sc.cloud.has_labels() ? mask_ignored(sc.initial, sc.cloud.labels) : sc.initial;
      std::vector<int> ids(sc.cloud.size());
      std::iota(ids.begin(), ids.end(), 0);
      p.per_point = make_partition(ids);
      if (sc.cloud.has_labels()) p.per_point = mask_ignored(p.per_point, sc.cloud.labels);
      p.labelled = static_cast<int>(std::count_if(p.initial.assignment.begin(), p.initial.assignment.end(),
                                                  [](int s) { return s >= 0; }));
    } catch (const std::exception& e) {
      throw stage_error(sc.cloud.id, 0, "prepare", e);
    }
  });

  std::vector<Partition> initial(h), current(h);
  for (std::size_t c = 0; c < h; ++c) {
    initial[c] = prep[c].initial;
    current[c] = config.use_superpoints ? prep[c].initial : prep[c].per_point;
  }

  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < h; ++c)
    if (prep[c].labelled > 0) active.push_back(c);
  if (active.empty()) throw std::invalid_argument("every point of every scene is ignored");

  TrainResult result;
  result.params = init_params(derive_seed(config.seed, 1), kInputDim, config.hidden, config.feature_dim);
  const auto batches_per_epoch =
      static_cast<std::int64_t>((active.size() + static_cast<std::size_t>(config.batch_clouds) - 1) /
                                static_cast<std::size_t>(config.batch_clouds));
  SgdState sgd = make_sgd_state(result.params, batches_per_epoch * config.epochs, config.lr, config.momentum,
                                config.poly_power);

  const int levels = (config.m1 - config.mt + config.growth_step - 1) / config.growth_step + 1;
  int level = 0, target = 0;
  std::vector<RowMatrix> features(h);
  bool fresh = false;
  std::vector<std::vector<int>> pseudo;

  auto forward_all = [&](int epoch) {
    parallel_for(h, [&](std::size_t c) {
      try {
        features[c] = forward(result.params, prep[c].input);
      } catch (const std::exception& e) {
        throw stage_error(scenes[c].cloud.id, epoch, "forward", e);
      }
    });
    fresh = true;
  };

  KMeansOptions primitive_opts = config.primitive_kmeans;
  if (!config.use_superpoints) primitive_opts.sample_limit = config.point_sample_limit;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const int round = (epoch - 1) / config.round_epochs + 1;
    const bool round_start = (epoch - 1) % config.round_epochs == 0;

    if (round_start || config.refresh_every_epoch) {
      if (!fresh) forward_all(epoch);
      std::vector<RowMatrix> augmented(h);
      parallel_for(h, [&](std::size_t c) {
        try {
          const RowMatrix neural = mean_feature(features[c], current[c]);
          const RowMatrix pfh = pfh_histogram(prep[c].normals, current[c], config.pfh_max_pairs,
                                              derive_seed(config.seed, 2, static_cast<std::uint64_t>(c)));
          augmented[c] = augment(neural, pfh, config.pfh_weight);
        } catch (const std::exception& e) {
          throw stage_error(scenes[c].cloud.id, epoch, "superpoint features", e);
        }
      });
      PrimitiveClustering pc = cluster_primitives(augmented, current, config.primitives, config.feature_dim,
                                                  derive_seed(config.seed, 3, static_cast<std::uint64_t>(epoch)),
                                                  primitive_opts);
      result.model = std::move(pc.model);
      pseudo = std::move(pc.pseudo);
      if (round_start && hooks.on_round) {
        RoundInfo info;
        info.round = round;
        info.level = level;
        info.target = target;
        info.current = &current;
        info.initial = &initial;
        info.pseudo = &pseudo;
        info.primitives = result.model.size();
        hooks.on_round(info);
      }
    }

    std::vector<std::size_t> order = active;
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 4, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.round = round;
    rec.level = level;
    rec.target = target;
    rec.lr = poly_lr(sgd);
    double loss_sum = 0.0;
    long long loss_points = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_clouds)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config.batch_clouds));
      long long batch_points = 0;
      for (std::size_t i = b; i < e; ++i) batch_points += prep[order[i]].labelled;
      std::vector<Gradients> grads(e - b);
      std::vector<double> losses(e - b, 0.0);
      parallel_for(e - b, [&](std::size_t i) {
        const std::size_t c = order[b + i];
        try {
          ForwardCache cache;
          const RowMatrix f = forward(result.params, prep[c].input, &cache);
          LossResult lr = ce_loss_and_feature_grad(f, pseudo[c], result.model.centroids, config.tau);
          lr.feature_grad *= static_cast<double>(lr.labelled) / static_cast<double>(batch_points);
          losses[i] = lr.loss * lr.labelled;
          grads[i] = backward(result.params, prep[c].input, cache, lr.feature_grad);
        } catch (const std::exception& ex) {
          throw stage_error(scenes[c].cloud.id, epoch, "training step", ex);
        }
      });
      Gradients total = zero_gradients(result.params);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        accumulate(total, grads[i]);
        loss_sum += losses[i];
      }
      loss_points += batch_points;
      sgd_step(result.params, total, sgd);
    }
    fresh = false;
    rec.loss = loss_sum / static_cast<double>(loss_points);
    result.log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    const bool round_end = epoch % config.round_epochs == 0;
    if (round_end && epoch < config.epochs && config.use_superpoints && round % config.growth_interval == 0 &&
        level < levels) {
      forward_all(epoch);
      ++level;
      target = superpoint_target(config, level);
      parallel_for(h, [&](std::size_t c) {
        try {
          current[c] = grow_superpoints(features[c], initial[c], target,
                                        derive_seed(config.seed, 5, static_cast<std::uint64_t>(level) * h + c),
                                        config.growth_kmeans);
        } catch (const std::exception& e) {
          throw stage_error(scenes[c].cloud.id, epoch, "growth", e);
        }
      });
    }
    if ((round_end || epoch == config.epochs) && hooks.on_checkpoint) hooks.on_checkpoint(round, result.params, result.model);
  }
  result.final_partitions = std::move(current);
  return result;
}

RowMatrix fit_test_classifier(const PrimitiveModel& model, int classes, std::uint64_t seed) {
  if (classes < 1) throw std::invalid_argument("class count must be >= 1");
  if (classes > model.size()) throw std::invalid_argument("class count exceeds the number of primitives");
  KMeansOptions opts;
  opts.restarts = 10;
  RowMatrix c = kmeans(model.centroids, classes, seed, opts).centroids;
  normalize_rows(c);
  return c;
}

std::vector<int> segment(const PointCloud& cloud, const ExtractorParams& params, const RowMatrix& class_centroids,
                         double voxel, double radius) {
  const ExtractorInput input = prepare_input(cloud, voxel, radius);
  return classify(forward(params, input), class_centroids);
}

std::vector<int> vanilla_kmeans_baseline(const PointCloud& cloud, int classes, std::uint64_t seed) {
  cloud.validate();
  if (cloud.size() == 0) return {};
  const Bounds b = bounding_box(cloud.positions);
  const Vec3 extent = b.max - b.min;
  RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(cloud.size()), 6);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      x(r, a) = extent[a] > 0 ? (cloud.positions[i][a] - b.min[a]) / extent[a] : 0.0;
      if (cloud.has_colors()) x(r, 3 + a) = cloud.colors[i][a];
    }
  }
  return kmeans(x, classes, seed).assignments;
}

std::vector<NamedTensor> to_tensors(const ExtractorParams& params, const PrimitiveModel& model,
                                    const TrainConfig& config) {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string base = "extractor." + std::to_string(l);
    out.push_back({base + ".weight", params.layers[l].weight});
    out.push_back({base + ".bias", params.layers[l].bias});
  }
  out.push_back({"primitives.centroids", model.centroids});
  out.push_back({"config.voxel", RowMatrix::Constant(1, 1, config.voxel)});
  out.push_back({"config.radius", RowMatrix::Constant(1, 1, config.radius())});
  return out;
}

LoadedModel from_tensors(const std::vector<NamedTensor>& tensors) {
  LoadedModel m;
  for (std::size_t l = 0;; ++l) {
    const std::string base = "extractor." + std::to_string(l);
    const auto has = std::any_of(tensors.begin(), tensors.end(),
                                 [&](const NamedTensor& t) { return t.name == base + ".weight"; });
    if (!has) break;
    Linear layer{find_tensor(tensors, base + ".weight"), find_tensor(tensors, base + ".bias")};
    if (layer.bias.size() != layer.weight.cols()) throw std::runtime_error(base + ": bias does not match weight");
    if (!m.params.layers.empty() && m.params.layers.back().weight.cols() != layer.weight.rows())
      throw std::runtime_error(base + ": layer shapes do not chain");
    m.params.layers.push_back(std::move(layer));
  }
  if (m.params.layers.empty()) throw std::runtime_error("checkpoint holds no extractor layers");
  m.model.centroids = find_tensor(tensors, "primitives.centroids");
  if (m.model.centroids.cols() != m.params.feature_dim())
    throw std::runtime_error("primitive centroids do not match the feature width");
  m.voxel = find_tensor(tensors, "config.voxel")(0, 0);
  m.radius = find_tensor(tensors, "config.radius")(0, 0);
  return m;
}

}  // namespace spseg
