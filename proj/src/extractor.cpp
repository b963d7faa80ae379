#include "spseg/extractor.hpp"

#include "spseg/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace spseg {

std::size_t ExtractorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

ExtractorParams init_params(std::uint64_t seed, int input_dim, const std::vector<int>& hidden_dims, int feature_dim) {
  if (input_dim < 1 || feature_dim < 1) throw std::invalid_argument("extractor dimensions must be positive");
  std::vector<int> dims{input_dim};
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("extractor dimensions must be positive");
    dims.push_back(h);
  }
  dims.push_back(feature_dim);

  std::mt19937_64 rng(seed);
  ExtractorParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    Linear layer{RowMatrix(in, out), Eigen::RowVectorXd::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = uni(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ExtractorInput prepare_input(const PointCloud& cloud, double voxel_size, double radius) {
  cloud.validate();
  if (!(voxel_size > 0.0) || !(radius > 0.0)) throw std::invalid_argument("voxel size and radius must be positive");
  const auto n = static_cast<Eigen::Index>(cloud.size());
  ExtractorInput in;
  in.features = RowMatrix::Zero(n, kInputDim);
  const Bounds b = bounding_box(cloud.positions);
  const Vec3 extent = b.max - b.min;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& p = cloud.positions[static_cast<std::size_t>(i)];
    for (int a = 0; a < 3; ++a) {
      in.features(i, a) = extent[a] > 0 ? (p[a] - b.min[a]) / extent[a] : 0.0;
      const double scaled = p[a] / voxel_size;
      in.features(i, 3 + a) = 2.0 * (scaled - std::floor(scaled)) - 1.0;
      if (cloud.has_colors()) in.features(i, 6 + a) = cloud.colors[static_cast<std::size_t>(i)][a];
    }
  }
  const SpatialIndex index(cloud.positions, radius);
  in.offsets.reserve(static_cast<std::size_t>(n) + 1);
  in.offsets.push_back(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nb = index.radius(static_cast<int>(i), radius, /*include_self=*/true);
    in.neighbors.insert(in.neighbors.end(), nb.begin(), nb.end());
    in.offsets.push_back(static_cast<int>(in.neighbors.size()));
  }
  return in;
}

namespace {

RowMatrix aggregate(const ExtractorInput& in, const RowMatrix& a) {
  RowMatrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int begin = in.offsets[static_cast<std::size_t>(i)], end = in.offsets[static_cast<std::size_t>(i) + 1];
    auto row = out.row(i);
    row.setZero();
    for (int k = begin; k < end; ++k) row += a.row(in.neighbors[static_cast<std::size_t>(k)]);
    row /= static_cast<double>(end - begin);
  }
  return out;
}

// Transpose of aggregate: every output row spreads its gradient equally over
// its contributors.
RowMatrix aggregate_backward(const ExtractorInput& in, const RowMatrix& g) {
  RowMatrix out = RowMatrix::Zero(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const int begin = in.offsets[static_cast<std::size_t>(i)], end = in.offsets[static_cast<std::size_t>(i) + 1];
    const Eigen::RowVectorXd share = g.row(i) / static_cast<double>(end - begin);
    for (int k = begin; k < end; ++k) out.row(in.neighbors[static_cast<std::size_t>(k)]) += share;
  }
  return out;
}

}  // namespace

RowMatrix forward(const ExtractorParams& params, const ExtractorInput& input, ForwardCache* cache) {
  if (params.layers.empty()) throw std::invalid_argument("extractor has no layers");
  if (input.features.cols() != params.input_dim()) throw std::invalid_argument("input width does not match extractor");
  if (cache) {
    cache->layer_inputs.clear();
    cache->pre_activations.clear();
  }
  RowMatrix x = input.features;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Linear& layer = params.layers[l];
    RowMatrix h = x * layer.weight;
    h.rowwise() += layer.bias;
    if (cache) cache->layer_inputs.push_back(std::move(x));
    if (l == last) return h;
    if (cache) cache->pre_activations.push_back(h);
    x = aggregate(input, h.cwiseMax(0.0));
  }
  return x;  // unreachable
}

LossResult ce_loss_and_feature_grad(const RowMatrix& features, const std::vector<int>& pseudo,
                                    const RowMatrix& centroids, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (static_cast<std::size_t>(features.rows()) != pseudo.size())
    throw std::invalid_argument("pseudo label count does not match features");
  if (centroids.cols() != features.cols()) throw std::invalid_argument("centroid width does not match features");
  const Eigen::Index n = features.rows(), s = centroids.rows();

  int labelled = 0;
  for (int y : pseudo) {
    if (y >= s) throw std::invalid_argument("pseudo label out of range");
    labelled += y >= 0;
  }
  if (labelled == 0) throw std::invalid_argument("no labelled points for the loss");

  RowMatrix c = centroids;
  normalize_rows(c);
  Eigen::VectorXd norms = features.rowwise().norm();
  RowMatrix unit = features;
  for (Eigen::Index i = 0; i < n; ++i) unit.row(i) /= std::max(norms[i], 1e-12);

  LossResult out;
  out.labelled = labelled;
  out.feature_grad = RowMatrix::Zero(n, features.cols());
  const double scale = 1.0 / labelled;
  double total = 0.0;
  // Row blocks keep the n x S logit buffer small.
  constexpr Eigen::Index kBlock = 1024;
  RowMatrix logits, d_unit;
  for (Eigen::Index b0 = 0; b0 < n; b0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - b0);
    logits.noalias() = unit.middleRows(b0, rows) * c.transpose();
    logits /= tau;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int y = pseudo[static_cast<std::size_t>(b0 + r)];
      auto row = logits.row(r);
      if (y < 0) {
        row.setZero();
        continue;
      }
      const double mx = row.maxCoeff();
      row = (row.array() - mx).exp().matrix();
      const double z = row.sum();
      total += std::log(z) - std::log(row(y));
      row /= z;
      row(y) -= 1.0;
      row *= scale;
    }
    // logits now hold d loss / d logits.
    d_unit.noalias() = logits * c;
    d_unit /= tau;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = b0 + r;
      if (pseudo[static_cast<std::size_t>(i)] < 0) continue;
      const double proj = unit.row(i).dot(d_unit.row(r));
      out.feature_grad.row(i) = (d_unit.row(r) - proj * unit.row(i)) / std::max(norms[i], 1e-12);
    }
  }
  out.loss = total * scale;
  return out;
}

Gradients zero_gradients(const ExtractorParams& params) {
  Gradients g;
  for (const auto& l : params.layers)
    g.push_back({RowMatrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::RowVectorXd::Zero(l.bias.size())});
  return g;
}

Gradients backward(const ExtractorParams& params, const ExtractorInput& input, const ForwardCache& cache,
                   const RowMatrix& feature_grad) {
  const std::size_t layers = params.layers.size();
  if (cache.layer_inputs.size() != layers || cache.pre_activations.size() + 1 != layers)
    throw std::invalid_argument("forward cache does not match the extractor");
  if (feature_grad.rows() != input.rows() || feature_grad.cols() != params.feature_dim())
    throw std::invalid_argument("feature gradient shape mismatch");

  Gradients g(layers);
  RowMatrix upstream = feature_grad;  // d loss / d output of layer l
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      // upstream is d loss / d aggregated activation of hidden layer l.
      RowMatrix d_act = aggregate_backward(input, upstream);
      upstream = d_act.cwiseProduct((cache.pre_activations[l].array() > 0.0).cast<double>().matrix());
    }
    g[l].weight = cache.layer_inputs[l].transpose() * upstream;
    g[l].bias = upstream.colwise().sum();
    if (l > 0) upstream = upstream * params.layers[l].weight.transpose();
  }
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  if (into.size() != g.size()) throw std::invalid_argument("gradient shapes differ");
  for (std::size_t l = 0; l < g.size(); ++l) {
    into[l].weight += g[l].weight;
    into[l].bias += g[l].bias;
  }
}

SgdState make_sgd_state(const ExtractorParams& params, std::int64_t max_steps, double base_lr, double momentum,
                        double power) {
  SgdState s;
  s.velocity = zero_gradients(params);
  s.max_steps = std::max<std::int64_t>(1, max_steps);
  s.base_lr = base_lr;
  s.momentum = momentum;
  s.power = power;
  return s;
}

double poly_lr(const SgdState& state) {
  if (state.step >= state.max_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(state.step) / static_cast<double>(state.max_steps);
  return state.base_lr * std::pow(frac, state.power);
}

void sgd_step(ExtractorParams& params, const Gradients& grads, SgdState& state) {
  if (grads.size() != params.layers.size() || state.velocity.size() != params.layers.size())
    throw std::invalid_argument("gradient shapes differ from parameters");
  const double lr = poly_lr(state);
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& v = state.velocity[l];
    v.weight = state.momentum * v.weight + grads[l].weight;
    v.bias = state.momentum * v.bias + grads[l].bias;
    if (lr > 0.0) {
      params.layers[l].weight -= lr * v.weight;
      params.layers[l].bias -= lr * v.bias;
    }
  }
  ++state.step;
}

std::vector<int> classify(const RowMatrix& features, const RowMatrix& centroids) {
  RowMatrix unit = features;
  normalize_rows(unit);
  RowMatrix c = centroids;
  normalize_rows(c);
  const RowMatrix sim = unit * c.transpose();
  std::vector<int> labels(static_cast<std::size_t>(features.rows()), 0);
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j)
      if (sim(i, j) > sim(i, best)) best = j;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace spseg
