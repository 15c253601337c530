#include "analysis.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace fedlab {

double fedconcat_cost(double w, double c, double n, double k, double t_e, double t_c) {
  return 2.0 * w * n * (t_e + k / 2.0 + c * k * t_c);
}

double fedavg_cost(double w, double n, double t) { return 2.0 * w * n * t; }

double classifier_fraction(const ModelParams& model) {
  if (model.num_layers() < 2) {
    fail(ErrorCode::InvalidArgument, "classifier_fraction: model needs at least 2 layers");
  }
  int last = model.num_layers() - 1;
  int64_t cls = int64_t(model.weights[size_t(last)].rows()) * model.weights[size_t(last)].cols() +
                int64_t(model.biases[size_t(last)].size());
  return double(cls) / double(model.param_count());
}

double parity_encoder_rounds(double c, double k, double t_c, double t) {
  return t - k / 2.0 - c * k * t_c;
}

double parity_fedavg_rounds(double c, double k, double t_e, double t_c) {
  return t_e + k / 2.0 + c * k * t_c;
}

namespace {

// test rows whose label sits in the client's own support
std::vector<int32_t> own_label_rows(const Dataset& train, const Dataset& test,
                                    const ClientState& client) {
  std::vector<bool> in_support(size_t(train.num_classes), false);
  for (int32_t i : client.indices) in_support[size_t(train.labels[size_t(i)])] = true;
  std::vector<int32_t> rows;
  for (int i = 0; i < test.n(); ++i) {
    if (in_support[size_t(test.labels[size_t(i)])]) rows.push_back(i);
  }
  return rows;
}

}  // namespace

std::vector<DegradationRecord> track_averaging_degradation(
    const Dataset& train, const Dataset& test, const std::vector<ClientState>& clients, int rounds,
    int epochs, const FedConfig& cfg) {
  if (clients.size() < 2) {
    fail(ErrorCode::InvalidArgument, "track_averaging_degradation: need at least 2 clients");
  }
  if (rounds < 1) fail(ErrorCode::InvalidArgument, "track_averaging_degradation: rounds must be >= 1");
  if (epochs < 0) fail(ErrorCode::InvalidArgument, "track_averaging_degradation: epochs must be >= 0");

  std::vector<std::vector<int32_t>> eval_rows(clients.size());
  std::vector<Dataset> eval_sets(clients.size());
  for (size_t i = 0; i < clients.size(); ++i) {
    eval_rows[i] = own_label_rows(train, test, clients[i]);
    if (eval_rows[i].empty()) {
      fail(ErrorCode::InvalidArgument,
           "track_averaging_degradation: no test rows for client " + std::to_string(i));
    }
    eval_sets[i] = subset(test, eval_rows[i]);
  }

  std::vector<DegradationRecord> out;
  ModelParams global = init_model(model_dims(train, cfg), mix_seed(cfg.seed, stream::kModelInit));
  for (int r = 0; r < rounds; ++r) {
    std::vector<ModelParams> locals(clients.size(), global);
    std::vector<int64_t> counts(clients.size());
    for (size_t ci = 0; ci < clients.size(); ++ci) {
      counts[ci] = clients[ci].sample_count();
      // epoch-at-a-time so we can snapshot between epochs; the momentum state
      // carries across epochs like a single local_train(epochs) call would
      ModelParams& m = locals[ci];
      OptimizerState opt;
      opt.learning_rate = cfg.learning_rate;
      opt.momentum = cfg.momentum;
      opt.weight_decay = cfg.weight_decay;
      opt.reset(m);
      Rng rng(mix_seed(cfg.seed, stream::kLocalTrain, uint64_t(r), uint64_t(clients[ci].id)));
      std::vector<int32_t> order = clients[ci].indices;
      for (int e = 0; e < epochs; ++e) {
        shuffle_vec(order, rng);
        for (int pos = 0; pos < int(order.size()); pos += cfg.batch_size) {
          int take = std::min(cfg.batch_size, int(order.size()) - pos);
          std::vector<int32_t> rows(order.begin() + pos, order.begin() + pos + take);
          Batch b = gather_batch(train, rows);
          sgd_step(m, opt, b);
        }
        out.push_back({r + 1, e + 1, int(ci), false,
                       evaluate(m, eval_sets[ci].inputs, eval_sets[ci].labels)});
      }
    }
    global = weighted_average(locals, counts);
    for (size_t ci = 0; ci < clients.size(); ++ci) {
      out.push_back({r + 1, std::max(epochs, 1), int(ci), true,
                     evaluate(global, eval_sets[ci].inputs, eval_sets[ci].labels)});
    }
  }
  return out;
}

ProbeResult probe_frozen_encoder(const GlobalEncoder& encoder, const Dataset& probe_train,
                                 const Dataset& probe_eval, int steps, double learning_rate) {
  if (probe_train.n() == 0 || probe_eval.n() == 0) {
    fail(ErrorCode::InvalidArgument, "probe_frozen_encoder: empty probe dataset");
  }
  Matrix train_feats = encoder.forward(probe_train.inputs);

  // zero-init linear probe; plain full-batch gradient descent (convex, so
  // zero init is a fine deterministic start)
  ModelParams probe;
  probe.layer_dims = {encoder.feature_dim(), probe_train.num_classes};
  probe.weights = {Matrix(encoder.feature_dim(), probe_train.num_classes)};
  probe.biases = {std::vector<double>(size_t(probe_train.num_classes), 0.0)};

  OptimizerState opt;
  opt.learning_rate = learning_rate;
  opt.momentum = 0.0;
  opt.weight_decay = 0.0;
  opt.reset(probe);

  Batch full;
  full.inputs = train_feats;
  full.labels = probe_train.labels;
  for (int s = 0; s < steps; ++s) sgd_step(probe, opt, full);

  Matrix eval_feats = encoder.forward(probe_eval.inputs);
  Matrix logits = forward(probe, eval_feats).logits;
  ProbeResult out;
  out.loss = loss_ce(logits, probe_eval.labels);
  out.accuracy = accuracy_from_logits(logits, probe_eval.labels);
  return out;
}

ProbeResult probe_frozen_encoder(const Encoder& encoder, const Dataset& probe_train,
                                 const Dataset& probe_eval, int steps, double learning_rate) {
  return probe_frozen_encoder(concat_encoders({encoder}), probe_train, probe_eval, steps,
                              learning_rate);
}

}  // namespace fedlab
