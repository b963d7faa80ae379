#pragma once

#include "spseg/geometry.hpp"

#include <cstdint>
#include <vector>

namespace spseg {

// Per-point input: bounding-box normalised xyz, offset inside the voxel cell
// in [-1,1]^3, and rgb (zeros for colourless clouds).
inline constexpr int kInputDim = 9;

struct Linear {
  RowMatrix weight;            // in x out
  Eigen::RowVectorXd bias;     // out
};

// Hidden layers are linear -> ReLU -> neighbourhood mean; the last layer is
// a plain linear map to the feature dimension.
struct ExtractorParams {
  std::vector<Linear> layers;

  int input_dim() const { return static_cast<int>(layers.front().weight.rows()); }
  int feature_dim() const { return static_cast<int>(layers.back().weight.cols()); }
  std::size_t parameter_count() const;
};

// Glorot-uniform weights from a seeded stream, zero biases.
ExtractorParams init_params(std::uint64_t seed, int input_dim, const std::vector<int>& hidden_dims, int feature_dim);

// Point features plus each point's aggregation neighbourhood (itself and all
// points within the aggregation radius) in CSR form.
struct ExtractorInput {
  RowMatrix features;
  std::vector<int> offsets;    // size N + 1
  std::vector<int> neighbors;  // ascending ids per point, includes the point

  Eigen::Index rows() const { return features.rows(); }
};

ExtractorInput prepare_input(const PointCloud& cloud, double voxel_size, double radius);

struct ForwardCache {
  std::vector<RowMatrix> layer_inputs;  // input of every linear layer
  std::vector<RowMatrix> pre_activations;  // hidden layers only
};

RowMatrix forward(const ExtractorParams& params, const ExtractorInput& input, ForwardCache* cache = nullptr);

struct LossResult {
  double loss = 0.0;  // mean over labelled points
  int labelled = 0;
  RowMatrix feature_grad;  // d loss / d features (raw, before normalisation)
};

// Cross entropy of cosine-similarity logits f.c / tau against per-point
// pseudo labels; label -1 contributes neither loss nor gradient. Throws
// std::invalid_argument when no point is labelled.
LossResult ce_loss_and_feature_grad(const RowMatrix& features, const std::vector<int>& pseudo,
                                    const RowMatrix& centroids, double tau);

using Gradients = std::vector<Linear>;

Gradients zero_gradients(const ExtractorParams& params);
Gradients backward(const ExtractorParams& params, const ExtractorInput& input, const ForwardCache& cache,
                   const RowMatrix& feature_grad);
void accumulate(Gradients& into, const Gradients& g);

struct SgdState {
  Gradients velocity;
  std::int64_t step = 0;
  std::int64_t max_steps = 1;
  double base_lr = 0.1;
  double momentum = 0.9;
  double power = 0.9;
};

SgdState make_sgd_state(const ExtractorParams& params, std::int64_t max_steps, double base_lr = 0.1,
                        double momentum = 0.9, double power = 0.9);
// lr(t) = base_lr * (1 - t / max_steps)^power, zero once t reaches max_steps.
double poly_lr(const SgdState& state);
void sgd_step(ExtractorParams& params, const Gradients& grads, SgdState& state);

// Row-wise L2 normalised features and argmax cosine against the given
// (normalised) centroids; smaller index wins ties.
std::vector<int> classify(const RowMatrix& features, const RowMatrix& centroids);

}  // namespace spseg
