#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace fedlab {

struct Batch {
  Matrix inputs;                // n x d
  std::vector<int32_t> labels;  // values in [0, m)
};

// Dense ReLU network: affine + ReLU on every layer except the last, which is
// affine only (logits). weights[l] is (layer_dims[l] x layer_dims[l+1]),
// row-major; biases[l] has layer_dims[l+1] entries. All math is f64.
struct ModelParams {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int num_layers() const { return int(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  // width of the activations entering the last layer
  int feature_dim() const { return layer_dims[layer_dims.size() - 2]; }
  int64_t param_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Glorot-uniform weights in [-a, a] with a = sqrt(6 / (fan_in + fan_out));
// biases start at zero. Same (dims, seed) always gives the same bits.
ModelParams init_model(const std::vector<int>& layer_dims, uint64_t seed);

struct Forward {
  Matrix features;  // activations entering the last layer, n x h
  Matrix logits;    // n x m
};
Forward forward(const ModelParams& model, const Matrix& inputs);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Mean cross-entropy via log-sum-exp; never exponentiates raw logits.
double loss_ce(const Matrix& logits, const std::vector<int32_t>& labels);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

// d(mean CE)/d(params). Loss gradient only; weight decay belongs to the
// optimizer step.
Gradients backward(const ModelParams& model, const Batch& batch);

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::vector<Matrix> velocity_w;
  std::vector<std::vector<double>> velocity_b;

  void reset(const ModelParams& model);  // zero velocities shaped like model
};

// One momentum-SGD step on one batch:
//   g = dL/dw + weight_decay * w  (+ prox_mu * (w - prox_ref) when given)
//   v = momentum * v + g
//   w = w - learning_rate * v
// With freeze_encoder only the last layer's parameters and velocity change;
// everything else is left bit-identical. Non-finite applied gradients raise
// a numeric error naming the layer.
void sgd_step(ModelParams& model, OptimizerState& opt, const Batch& batch,
              bool freeze_encoder = false, double prox_mu = 0.0,
              const ModelParams* prox_ref = nullptr);

// Max relative error between analytic and central-difference gradients.
double gradient_check(const ModelParams& model, const Batch& batch, double epsilon);

// Encoder = all layers except the last, ReLU after each (including its own
// last layer, whose output is the feature vector). Classifier = the final
// affine layer alone, represented as a single-layer ModelParams {h, m}.
struct Encoder {
  std::vector<int> layer_dims;  // d .. h; may be just {d} (empty encoder)
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int num_layers() const { return int(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int feature_dim() const { return layer_dims.back(); }
  int64_t param_count() const;
  Matrix forward(const Matrix& inputs) const;

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

struct SplitModel {
  Encoder encoder;
  ModelParams classifier;
};
SplitModel split_model(const ModelParams& model);
ModelParams merge_model(const Encoder& encoder, const ModelParams& classifier);

// Feature-axis concatenation of per-cluster encoders, kept in cluster-index
// order: forward(x) = [e_0(x) | e_1(x) | ... | e_{K-1}(x)].
struct GlobalEncoder {
  std::vector<Encoder> parts;

  int size() const { return int(parts.size()); }
  int input_dim() const { return parts.front().input_dim(); }
  int feature_dim() const;
  int64_t param_count() const;
  Matrix forward(const Matrix& inputs) const;
};
GlobalEncoder concat_encoders(std::vector<Encoder> encoders);

// Top-1 accuracy; argmax ties go to the lowest class index.
double accuracy_from_logits(const Matrix& logits, const std::vector<int32_t>& labels);
double evaluate(const ModelParams& model, const Matrix& inputs, const std::vector<int32_t>& labels);
double evaluate(const GlobalEncoder& encoder, const ModelParams& classifier, const Matrix& inputs,
                const std::vector<int32_t>& labels);

// FCK1 checkpoint: "FCK1", u32 dim count, u32 layer_dims..., then per layer
// the row-major f64 LE weights followed by the f64 LE biases.
std::vector<uint8_t> serialize_model(const ModelParams& model);
std::vector<uint8_t> serialize_encoder(const Encoder& encoder);
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);
void save_encoder(const Encoder& encoder, const std::string& path);
Encoder load_encoder(const std::string& path);

// Content hash over the serialized bytes (dims + parameters).
uint64_t fingerprint(const ModelParams& model);
uint64_t fingerprint(const Encoder& encoder);
uint64_t fingerprint(const GlobalEncoder& encoder);

}  // namespace fedlab
