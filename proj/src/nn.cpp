#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "io.hpp"
#include "rng.hpp"

namespace fedlab {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) fail(ErrorCode::InvalidArgument, "model needs at least 2 layer dims");
  for (size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) {
      fail(ErrorCode::InvalidArgument,
           "layer dim " + std::to_string(i) + " must be >= 1, got " + std::to_string(dims[i]));
    }
  }
}

void check_input(const Matrix& inputs, int expect, const char* who) {
  if (inputs.cols() != expect) {
    fail(ErrorCode::InvalidArgument, std::string(who) + ": input width " +
                                         std::to_string(inputs.cols()) + " does not match layer 0 dim " +
                                         std::to_string(expect));
  }
}

// out = act(in * W + b); act = ReLU when relu is set, identity otherwise.
Matrix affine(const Matrix& in, const Matrix& w, const std::vector<double>& b, bool relu) {
  Matrix out(in.rows(), w.cols());
  for (int r = 0; r < in.rows(); ++r) {
    const double* x = in.row(r);
    double* y = out.row(r);
    for (int c = 0; c < w.cols(); ++c) y[c] = b[size_t(c)];
    for (int k = 0; k < w.rows(); ++k) {
      double xk = x[k];
      if (xk == 0.0) continue;
      const double* wrow = w.row(k);
      for (int c = 0; c < w.cols(); ++c) y[c] += xk * wrow[c];
    }
    if (relu) {
      for (int c = 0; c < w.cols(); ++c) {
        if (y[c] < 0.0) y[c] = 0.0;
      }
    }
  }
  return out;
}

}  // namespace

int64_t ModelParams::param_count() const {
  int64_t total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    total += int64_t(weights[size_t(l)].rows()) * weights[size_t(l)].cols();
    total += int64_t(biases[size_t(l)].size());
  }
  return total;
}

int64_t Encoder::param_count() const {
  int64_t total = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    total += int64_t(weights[l].rows()) * weights[l].cols();
    total += int64_t(biases[l].size());
  }
  return total;
}

ModelParams init_model(const std::vector<int>& layer_dims, uint64_t seed) {
  check_dims(layer_dims);
  ModelParams m;
  m.layer_dims = layer_dims;
  Rng rng(mix_seed(seed, stream::kModelInit));
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    int fan_in = layer_dims[l];
    int fan_out = layer_dims[l + 1];
    double a = std::sqrt(6.0 / double(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform_range(-a, a);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(size_t(fan_out), 0.0);
  }
  return m;
}

Forward forward(const ModelParams& model, const Matrix& inputs) {
  check_input(inputs, model.input_dim(), "forward");
  Forward out;
  Matrix act = inputs;
  int last = model.num_layers() - 1;
  for (int l = 0; l < last; ++l) {
    act = affine(act, model.weights[size_t(l)], model.biases[size_t(l)], /*relu=*/true);
  }
  out.features = act;
  out.logits = affine(act, model.weights[size_t(last)], model.biases[size_t(last)], /*relu=*/false);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    const double* z = logits.row(r);
    double* q = p.row(r);
    double zmax = z[0];
    for (int c = 1; c < logits.cols(); ++c) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (int c = 0; c < logits.cols(); ++c) {
      q[c] = std::exp(z[c] - zmax);
      denom += q[c];
    }
    for (int c = 0; c < logits.cols(); ++c) q[c] /= denom;
  }
  return p;
}

double loss_ce(const Matrix& logits, const std::vector<int32_t>& labels) {
  if (logits.rows() == 0) fail(ErrorCode::InvalidArgument, "loss_ce: empty batch");
  if (size_t(logits.rows()) != labels.size()) {
    fail(ErrorCode::InvalidArgument, "loss_ce: logits rows != labels size");
  }
  double total = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    int32_t y = labels[size_t(r)];
    if (y < 0 || y >= logits.cols()) {
      fail(ErrorCode::InvalidArgument,
           "loss_ce: label " + std::to_string(y) + " out of range at row " + std::to_string(r));
    }
    const double* z = logits.row(r);
    double zmax = z[0];
    for (int c = 1; c < logits.cols(); ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (int c = 0; c < logits.cols(); ++c) sum += std::exp(z[c] - zmax);
    total += zmax + std::log(sum) - z[y];
  }
  return total / double(logits.rows());
}

namespace {

// dz for mean CE: (softmax(logits) - onehot(y)) / n.
Matrix loss_delta(const Matrix& logits, const std::vector<int32_t>& labels) {
  Matrix dz = softmax_rows(logits);
  double inv_n = 1.0 / double(logits.rows());
  for (int r = 0; r < dz.rows(); ++r) {
    dz(r, labels[size_t(r)]) -= 1.0;
    double* p = dz.row(r);
    for (int c = 0; c < dz.cols(); ++c) p[c] *= inv_n;
  }
  return dz;
}

}  // namespace

Gradients backward(const ModelParams& model, const Batch& batch) {
  check_input(batch.inputs, model.input_dim(), "backward");
  if (batch.inputs.rows() == 0) fail(ErrorCode::InvalidArgument, "backward: empty batch");
  if (size_t(batch.inputs.rows()) != batch.labels.size()) {
    fail(ErrorCode::InvalidArgument, "backward: inputs rows != labels size");
  }

  int layers = model.num_layers();
  // forward pass, keeping pre-activations for the ReLU mask
  std::vector<Matrix> acts;  // acts[l] feeds layer l
  acts.reserve(size_t(layers));
  acts.push_back(batch.inputs);
  std::vector<Matrix> zs(static_cast<size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    zs[size_t(l)] =
        affine(acts.back(), model.weights[size_t(l)], model.biases[size_t(l)], /*relu=*/false);
    if (l + 1 < layers) {
      Matrix a = zs[size_t(l)];
      for (double& v : a.data()) {
        if (v < 0.0) v = 0.0;
      }
      acts.push_back(std::move(a));
    }
  }

  for (int r = 0; r < zs.back().rows(); ++r) {
    int32_t y = batch.labels[size_t(r)];
    if (y < 0 || y >= model.output_dim()) {
      fail(ErrorCode::InvalidArgument,
           "backward: label " + std::to_string(y) + " out of range at row " + std::to_string(r));
    }
  }

  Gradients g;
  g.weights.resize(size_t(layers));
  g.biases.resize(size_t(layers));

  Matrix dz = loss_delta(zs.back(), batch.labels);
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& a = acts[size_t(l)];
    // dW = a^T dz, db = column sums of dz
    Matrix dw(model.weights[size_t(l)].rows(), model.weights[size_t(l)].cols());
    std::vector<double> db(size_t(model.weights[size_t(l)].cols()), 0.0);
    for (int r = 0; r < dz.rows(); ++r) {
      const double* arow = a.row(r);
      const double* drow = dz.row(r);
      for (int i = 0; i < dw.rows(); ++i) {
        double ai = arow[i];
        if (ai == 0.0) continue;
        double* grow = dw.row(i);
        for (int j = 0; j < dw.cols(); ++j) grow[j] += ai * drow[j];
      }
      for (int j = 0; j < dw.cols(); ++j) db[size_t(j)] += drow[j];
    }
    g.weights[size_t(l)] = std::move(dw);
    g.biases[size_t(l)] = std::move(db);

    if (l > 0) {
      // da = dz W^T, masked by relu'(z)
      const Matrix& w = model.weights[size_t(l)];
      const Matrix& z = zs[size_t(l - 1)];
      Matrix prev(dz.rows(), w.rows());
      for (int r = 0; r < dz.rows(); ++r) {
        const double* drow = dz.row(r);
        double* prow = prev.row(r);
        for (int i = 0; i < w.rows(); ++i) {
          const double* wrow = w.row(i);
          double acc = 0.0;
          for (int j = 0; j < w.cols(); ++j) acc += drow[j] * wrow[j];
          prow[i] = z(r, i) > 0.0 ? acc : 0.0;
        }
      }
      dz = std::move(prev);
    }
  }
  return g;
}

void OptimizerState::reset(const ModelParams& model) {
  velocity_w.clear();
  velocity_b.clear();
  for (int l = 0; l < model.num_layers(); ++l) {
    velocity_w.emplace_back(model.weights[size_t(l)].rows(), model.weights[size_t(l)].cols());
    velocity_b.emplace_back(model.biases[size_t(l)].size(), 0.0);
  }
}

namespace {

// Applies the update for one layer; grad arrays come in raw (no decay yet).
void apply_layer(Matrix& w, std::vector<double>& b, Matrix& vw, std::vector<double>& vb,
                 const Matrix& gw, const std::vector<double>& gb, const OptimizerState& opt,
                 double prox_mu, const Matrix* ref_w, const std::vector<double>* ref_b, int layer) {
  auto step = [&](double& param, double& vel, double grad, double ref) {
    double g = grad + opt.weight_decay * param;
    if (prox_mu != 0.0) g += prox_mu * (param - ref);
    if (!std::isfinite(g)) {
      fail(ErrorCode::Numeric, "non-finite gradient in layer " + std::to_string(layer));
    }
    vel = opt.momentum * vel + g;
    param -= opt.learning_rate * vel;
  };
  for (size_t i = 0; i < w.data().size(); ++i) {
    step(w.data()[i], vw.data()[i], gw.data()[i], ref_w ? ref_w->data()[i] : 0.0);
  }
  for (size_t i = 0; i < b.size(); ++i) {
    step(b[i], vb[i], gb[i], ref_b ? (*ref_b)[i] : 0.0);
  }
}

}  // namespace

namespace {

bool velocity_matches(const OptimizerState& opt, const ModelParams& model) {
  if (opt.velocity_w.size() != size_t(model.num_layers())) return false;
  for (int l = 0; l < model.num_layers(); ++l) {
    if (!opt.velocity_w[size_t(l)].same_shape(model.weights[size_t(l)])) return false;
    if (opt.velocity_b[size_t(l)].size() != model.biases[size_t(l)].size()) return false;
  }
  return true;
}

}  // namespace

void sgd_step(ModelParams& model, OptimizerState& opt, const Batch& batch, bool freeze_encoder,
              double prox_mu, const ModelParams* prox_ref) {
  if (!velocity_matches(opt, model)) opt.reset(model);  // shape change resets state
  if (prox_mu != 0.0 && prox_ref == nullptr) {
    fail(ErrorCode::InvalidArgument, "sgd_step: prox term requires a reference model");
  }
  int last = model.num_layers() - 1;

  if (freeze_encoder) {
    // Only the last layer moves, so the backward pass reduces to the
    // classifier gradient on the (frozen) features.
    Forward fwd = forward(model, batch.inputs);
    for (size_t r = 0; r < batch.labels.size(); ++r) {
      int32_t y = batch.labels[r];
      if (y < 0 || y >= model.output_dim()) {
        fail(ErrorCode::InvalidArgument,
             "sgd_step: label " + std::to_string(y) + " out of range at row " + std::to_string(r));
      }
    }
    Matrix dz = loss_delta(fwd.logits, batch.labels);
    Matrix gw(model.weights[size_t(last)].rows(), model.weights[size_t(last)].cols());
    std::vector<double> gb(model.biases[size_t(last)].size(), 0.0);
    for (int r = 0; r < dz.rows(); ++r) {
      const double* frow = fwd.features.row(r);
      const double* drow = dz.row(r);
      for (int i = 0; i < gw.rows(); ++i) {
        double fi = frow[i];
        if (fi == 0.0) continue;
        double* grow = gw.row(i);
        for (int j = 0; j < gw.cols(); ++j) grow[j] += fi * drow[j];
      }
      for (int j = 0; j < gw.cols(); ++j) gb[size_t(j)] += drow[j];
    }
    apply_layer(model.weights[size_t(last)], model.biases[size_t(last)], opt.velocity_w[size_t(last)],
                opt.velocity_b[size_t(last)], gw, gb, opt, prox_mu,
                prox_ref ? &prox_ref->weights[size_t(last)] : nullptr,
                prox_ref ? &prox_ref->biases[size_t(last)] : nullptr, last);
    return;
  }

  Gradients g = backward(model, batch);
  for (int l = 0; l <= last; ++l) {
    apply_layer(model.weights[size_t(l)], model.biases[size_t(l)], opt.velocity_w[size_t(l)],
                opt.velocity_b[size_t(l)], g.weights[size_t(l)], g.biases[size_t(l)], opt, prox_mu,
                prox_ref ? &prox_ref->weights[size_t(l)] : nullptr,
                prox_ref ? &prox_ref->biases[size_t(l)] : nullptr, l);
  }
}

double gradient_check(const ModelParams& model, const Batch& batch, double epsilon) {
  if (!(epsilon > 0.0) || epsilon > 1e-2) {
    fail(ErrorCode::InvalidArgument, "gradient_check: epsilon must be in (0, 1e-2]");
  }
  Gradients analytic = backward(model, batch);
  ModelParams probe = model;

  // ReLU sign pattern over every hidden pre-activation. A central difference
  // is only a derivative estimate when both perturbed points sit in the same
  // linear region; parameters whose +/-eps points straddle a kink are skipped
  // (exact zeros happen routinely, e.g. a row that kills a whole layer).
  auto region = [&]() {
    std::vector<bool> sig;
    Matrix act = batch.inputs;
    for (int l = 0; l + 1 < probe.num_layers(); ++l) {
      act = affine(act, probe.weights[size_t(l)], probe.biases[size_t(l)], /*relu=*/false);
      for (double v : act.data()) sig.push_back(v > 0.0);
      for (double& v : act.data()) {
        if (v < 0.0) v = 0.0;
      }
    }
    return sig;
  };

  double worst = 0.0;
  auto check_param = [&](double& slot, double a) {
    double orig = slot;
    slot = orig + epsilon;
    double up = loss_ce(forward(probe, batch.inputs).logits, batch.labels);
    std::vector<bool> up_region = region();
    slot = orig - epsilon;
    double down = loss_ce(forward(probe, batch.inputs).logits, batch.labels);
    bool same_region = up_region == region();
    slot = orig;
    if (!same_region) return;
    double numeric = (up - down) / (2.0 * epsilon);
    double denom = std::max(std::fabs(a) + std::fabs(numeric), 1e-4);
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  };

  for (int l = 0; l < model.num_layers(); ++l) {
    Matrix& w = probe.weights[size_t(l)];
    for (size_t i = 0; i < w.data().size(); ++i) {
      check_param(w.data()[i], analytic.weights[size_t(l)].data()[i]);
    }
    std::vector<double>& b = probe.biases[size_t(l)];
    for (size_t i = 0; i < b.size(); ++i) {
      check_param(b[i], analytic.biases[size_t(l)][i]);
    }
  }
  return worst;
}

Matrix Encoder::forward(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    fail(ErrorCode::InvalidArgument, "encoder forward: input width " + std::to_string(inputs.cols()) +
                                         " does not match dim " + std::to_string(input_dim()));
  }
  Matrix act = inputs;
  for (size_t l = 0; l < weights.size(); ++l) {
    act = affine(act, weights[l], biases[l], /*relu=*/true);
  }
  return act;
}

SplitModel split_model(const ModelParams& model) {
  check_dims(model.layer_dims);
  SplitModel out;
  int last = model.num_layers() - 1;
  out.encoder.layer_dims.assign(model.layer_dims.begin(), model.layer_dims.end() - 1);
  out.encoder.weights.assign(model.weights.begin(), model.weights.begin() + last);
  out.encoder.biases.assign(model.biases.begin(), model.biases.begin() + last);
  out.classifier.layer_dims = {model.feature_dim(), model.output_dim()};
  out.classifier.weights = {model.weights[size_t(last)]};
  out.classifier.biases = {model.biases[size_t(last)]};
  return out;
}

ModelParams merge_model(const Encoder& encoder, const ModelParams& classifier) {
  if (classifier.num_layers() != 1) {
    fail(ErrorCode::InvalidArgument, "merge_model: classifier must be a single layer");
  }
  if (encoder.feature_dim() != classifier.input_dim()) {
    fail(ErrorCode::InvalidArgument, "merge_model: encoder feature dim " +
                                         std::to_string(encoder.feature_dim()) +
                                         " != classifier input dim " +
                                         std::to_string(classifier.input_dim()));
  }
  ModelParams m;
  m.layer_dims = encoder.layer_dims;
  m.layer_dims.push_back(classifier.output_dim());
  m.weights = encoder.weights;
  m.weights.push_back(classifier.weights[0]);
  m.biases = encoder.biases;
  m.biases.push_back(classifier.biases[0]);
  return m;
}

int GlobalEncoder::feature_dim() const {
  int total = 0;
  for (const Encoder& e : parts) total += e.feature_dim();
  return total;
}

int64_t GlobalEncoder::param_count() const {
  int64_t total = 0;
  for (const Encoder& e : parts) total += e.param_count();
  return total;
}

Matrix GlobalEncoder::forward(const Matrix& inputs) const {
  Matrix out(inputs.rows(), feature_dim());
  int offset = 0;
  for (const Encoder& e : parts) {
    Matrix f = e.forward(inputs);
    for (int r = 0; r < f.rows(); ++r) {
      std::memcpy(out.row(r) + offset, f.row(r), size_t(f.cols()) * sizeof(double));
    }
    offset += f.cols();
  }
  return out;
}

GlobalEncoder concat_encoders(std::vector<Encoder> encoders) {
  if (encoders.empty()) fail(ErrorCode::InvalidArgument, "concat_encoders: no encoders");
  for (size_t i = 1; i < encoders.size(); ++i) {
    if (encoders[i].input_dim() != encoders[0].input_dim()) {
      fail(ErrorCode::InvalidArgument,
           "concat_encoders: encoder " + std::to_string(i) + " input dim mismatch");
    }
  }
  GlobalEncoder g;
  g.parts = std::move(encoders);
  return g;
}

double accuracy_from_logits(const Matrix& logits, const std::vector<int32_t>& labels) {
  if (labels.empty()) fail(ErrorCode::InvalidArgument, "evaluate: empty dataset");
  int64_t hits = 0;
  for (int r = 0; r < logits.rows(); ++r) {
    const double* z = logits.row(r);
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c) {
      if (z[c] > z[best]) best = c;  // strict: ties keep the lowest index
    }
    if (best == labels[size_t(r)]) ++hits;
  }
  return double(hits) / double(logits.rows());
}

double evaluate(const ModelParams& model, const Matrix& inputs, const std::vector<int32_t>& labels) {
  if (labels.empty()) fail(ErrorCode::InvalidArgument, "evaluate: empty dataset");
  return accuracy_from_logits(forward(model, inputs).logits, labels);
}

double evaluate(const GlobalEncoder& encoder, const ModelParams& classifier, const Matrix& inputs,
                const std::vector<int32_t>& labels) {
  if (labels.empty()) fail(ErrorCode::InvalidArgument, "evaluate: empty dataset");
  Matrix feats = encoder.forward(inputs);
  return accuracy_from_logits(forward(classifier, feats).logits, labels);
}

namespace {

constexpr char kModelMagic[4] = {'F', 'C', 'K', '1'};

std::vector<uint8_t> serialize_stack(const std::vector<int>& dims, const std::vector<Matrix>& weights,
                                     const std::vector<std::vector<double>>& biases) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  put_u32_le(out, uint32_t(dims.size()));
  for (int d : dims) put_u32_le(out, uint32_t(d));
  for (size_t l = 0; l < weights.size(); ++l) {
    for (double v : weights[l].data()) put_f64_le(out, v);
    for (double v : biases[l]) put_f64_le(out, v);
  }
  return out;
}

struct ParsedStack {
  std::vector<int> dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

ParsedStack parse_stack(const std::vector<uint8_t>& bytes, const std::string& path,
                        size_t min_dims) {
  auto bad = [&](size_t offset, const std::string& msg) {
    fail(ErrorCode::Format, path + ": " + msg + " (offset " + std::to_string(offset) + ")");
  };
  if (bytes.size() < 8) bad(0, "truncated header");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) bad(0, "bad magic, want FCK1");
  uint32_t ndims = get_u32_le(bytes.data() + 4);
  if (ndims < min_dims || ndims > 64) bad(4, "implausible layer count " + std::to_string(ndims));
  size_t need = 8 + size_t(ndims) * 4;
  if (bytes.size() < need) bad(bytes.size(), "truncated layer dims");

  ParsedStack out;
  uint64_t params = 0;
  out.dims.resize(ndims);
  for (uint32_t i = 0; i < ndims; ++i) {
    uint32_t d = get_u32_le(bytes.data() + 8 + size_t(i) * 4);
    if (d < 1 || d > (1u << 24)) bad(8 + size_t(i) * 4, "bad layer dim " + std::to_string(d));
    out.dims[i] = int(d);
  }
  for (uint32_t l = 0; l + 1 < ndims; ++l) {
    params += uint64_t(out.dims[l]) * uint64_t(out.dims[l + 1]) + uint64_t(out.dims[l + 1]);
  }
  size_t expect = need + size_t(params) * 8;
  if (bytes.size() != expect) {
    bad(std::min(bytes.size(), expect),
        "size mismatch: have " + std::to_string(bytes.size()) + " bytes, want " +
            std::to_string(expect));
  }

  size_t off = need;
  for (uint32_t l = 0; l + 1 < ndims; ++l) {
    Matrix w(out.dims[l], out.dims[l + 1]);
    for (double& v : w.data()) {
      v = get_f64_le(bytes.data() + off);
      off += 8;
    }
    std::vector<double> b(size_t(out.dims[l + 1]));
    for (double& v : b) {
      v = get_f64_le(bytes.data() + off);
      off += 8;
    }
    out.weights.push_back(std::move(w));
    out.biases.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<uint8_t> serialize_model(const ModelParams& model) {
  return serialize_stack(model.layer_dims, model.weights, model.biases);
}

std::vector<uint8_t> serialize_encoder(const Encoder& encoder) {
  return serialize_stack(encoder.layer_dims, encoder.weights, encoder.biases);
}

void save_model(const ModelParams& model, const std::string& path) {
  write_file_atomic(path, serialize_model(model));
}

ModelParams load_model(const std::string& path) {
  ParsedStack s = parse_stack(read_file(path), path, /*min_dims=*/2);
  ModelParams m;
  m.layer_dims = std::move(s.dims);
  m.weights = std::move(s.weights);
  m.biases = std::move(s.biases);
  return m;
}

void save_encoder(const Encoder& encoder, const std::string& path) {
  write_file_atomic(path, serialize_encoder(encoder));
}

Encoder load_encoder(const std::string& path) {
  ParsedStack s = parse_stack(read_file(path), path, /*min_dims=*/1);
  Encoder e;
  e.layer_dims = std::move(s.dims);
  e.weights = std::move(s.weights);
  e.biases = std::move(s.biases);
  return e;
}

uint64_t fingerprint(const ModelParams& model) { return fnv1a64(serialize_model(model)); }

uint64_t fingerprint(const Encoder& encoder) { return fnv1a64(serialize_encoder(encoder)); }

uint64_t fingerprint(const GlobalEncoder& encoder) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const Encoder& e : encoder.parts) {
    std::vector<uint8_t> bytes = serialize_encoder(e);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace fedlab
