#include "fed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "parallel.hpp"
#include "rng.hpp"

namespace fedlab {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Avg: return "avg";
    case Stage::Encoder: return "encoder";
    case Stage::Classifier: return "classifier";
  }
  return "?";
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::FedAvg: return "fedavg";
    case Variant::FedProx: return "fedprox";
    case Variant::FedConcat: return "fedconcat";
    case Variant::FedConcatId: return "fedconcat_id";
  }
  return "?";
}

std::vector<ClientState> make_clients(const FederatedPartition& part) {
  std::vector<ClientState> out(static_cast<size_t>(part.clients()));
  for (int i = 0; i < part.clients(); ++i) {
    out[size_t(i)].id = i;
    out[size_t(i)].indices = part.client_indices[size_t(i)];
  }
  return out;
}

std::vector<int> model_dims(const Dataset& ds, const FedConfig& cfg) {
  std::vector<int> dims;
  dims.push_back(ds.dim());
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(ds.num_classes);
  return dims;
}

Batch gather_batch(const Dataset& ds, const std::vector<int32_t>& indices) {
  Batch b;
  b.inputs = Matrix(int(indices.size()), ds.dim());
  b.labels.resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    int32_t src = indices[i];
    if (src < 0 || src >= ds.n()) fail(ErrorCode::InvalidArgument, "gather_batch: index out of range");
    std::memcpy(b.inputs.row(int(i)), ds.inputs.row(src), size_t(ds.dim()) * sizeof(double));
    b.labels[i] = ds.labels[size_t(src)];
  }
  return b;
}

namespace {

Batch gather_rows(const Dataset& ds, const int32_t* idx, int count) {
  Batch b;
  b.inputs = Matrix(count, ds.dim());
  b.labels.resize(size_t(count));
  for (int i = 0; i < count; ++i) {
    std::memcpy(b.inputs.row(i), ds.inputs.row(idx[i]), size_t(ds.dim()) * sizeof(double));
    b.labels[size_t(i)] = ds.labels[size_t(idx[i])];
  }
  return b;
}

void check_fed_cfg(const FedConfig& cfg) {
  if (cfg.batch_size < 1) fail(ErrorCode::Config, "batch_size must be >= 1");
  if (cfg.local_epochs < 0) fail(ErrorCode::Config, "local_epochs must be >= 0");
  if (!(cfg.participation > 0.0) || cfg.participation > 1.0) {
    fail(ErrorCode::Config, "participation must be in (0, 1]");
  }
  if (!(cfg.learning_rate > 0.0)) fail(ErrorCode::Config, "learning_rate must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail(ErrorCode::Config, "momentum must be in [0, 1)");
  if (cfg.weight_decay < 0.0) fail(ErrorCode::Config, "weight_decay must be >= 0");
}

}  // namespace

ModelParams local_train(const ModelParams& model, const Dataset& train, const ClientState& client,
                        int epochs, const FedConfig& cfg, uint64_t seed, Variant variant,
                        const ModelParams* global_ref) {
  if (epochs < 0) fail(ErrorCode::InvalidArgument, "local_train: epochs must be >= 0");
  ModelParams m = model;
  if (epochs == 0 || client.indices.empty()) return m;

  double mu = (variant == Variant::FedProx) ? cfg.prox_mu : 0.0;
  if (mu != 0.0 && global_ref == nullptr) {
    fail(ErrorCode::InvalidArgument, "local_train: fedprox needs the global reference model");
  }

  OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.reset(m);

  Rng rng(mix_seed(seed, stream::kLocalTrain));
  std::vector<int32_t> order = client.indices;
  int n = int(order.size());
  for (int e = 0; e < epochs; ++e) {
    shuffle_vec(order, rng);
    for (int pos = 0; pos < n; pos += cfg.batch_size) {
      int take = std::min(cfg.batch_size, n - pos);
      Batch b = gather_rows(train, order.data() + pos, take);
      sgd_step(m, opt, b, /*freeze_encoder=*/false, mu, global_ref);
    }
  }
  return m;
}

ModelParams weighted_average(const std::vector<ModelParams>& models,
                             const std::vector<int64_t>& weights) {
  if (models.empty()) fail(ErrorCode::InvalidArgument, "weighted_average: no models");
  if (models.size() != weights.size()) {
    fail(ErrorCode::InvalidArgument, "weighted_average: models/weights size mismatch");
  }
  int64_t total = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0) {
      fail(ErrorCode::InvalidArgument,
           "weighted_average: weight for model " + std::to_string(i) + " must be > 0");
    }
    total += weights[i];
  }
  const ModelParams& base = models[0];
  for (size_t i = 1; i < models.size(); ++i) {
    if (models[i].layer_dims != base.layer_dims) {
      fail(ErrorCode::InvalidArgument,
           "weighted_average: model " + std::to_string(i) + " shape mismatch");
    }
  }

  // Anchored form: base + sum_i w_i * (p_i - base) / W. Folding deviations
  // keeps averaging copies of one model exact, and the i-order sum keeps the
  // result independent of scheduling.
  ModelParams out = base;
  double inv_total = 1.0 / double(total);
  for (int l = 0; l < base.num_layers(); ++l) {
    std::vector<double>& ow = out.weights[size_t(l)].data();
    for (size_t e = 0; e < ow.size(); ++e) {
      double anchor = base.weights[size_t(l)].data()[e];
      double acc = 0.0;
      for (size_t i = 0; i < models.size(); ++i) {
        acc += double(weights[i]) * (models[i].weights[size_t(l)].data()[e] - anchor);
      }
      ow[e] = anchor + acc * inv_total;
    }
    std::vector<double>& ob = out.biases[size_t(l)];
    for (size_t e = 0; e < ob.size(); ++e) {
      double anchor = base.biases[size_t(l)][e];
      double acc = 0.0;
      for (size_t i = 0; i < models.size(); ++i) {
        acc += double(weights[i]) * (models[i].biases[size_t(l)][e] - anchor);
      }
      ob[e] = anchor + acc * inv_total;
    }
  }
  return out;
}

std::vector<int> sample_participants(int n_clients, double fraction, int round_index,
                                     uint64_t seed) {
  if (n_clients < 1) fail(ErrorCode::InvalidArgument, "sample_participants: no clients");
  if (!(fraction > 0.0) || fraction > 1.0) {
    fail(ErrorCode::InvalidArgument, "sample_participants: fraction must be in (0, 1]");
  }
  std::vector<int> all(static_cast<size_t>(n_clients));
  for (int i = 0; i < n_clients; ++i) all[size_t(i)] = i;
  if (fraction >= 1.0) return all;

  int count = int(std::ceil(fraction * double(n_clients)));
  if (count < 1) count = 1;
  if (count > n_clients) count = n_clients;
  Rng rng(mix_seed(seed, stream::kParticipation, uint64_t(round_index)));
  for (int i = 0; i < count; ++i) {
    int j = i + int(rng.below(uint64_t(n_clients - i)));
    std::swap(all[size_t(i)], all[size_t(j)]);
  }
  all.resize(size_t(count));
  std::sort(all.begin(), all.end());
  return all;
}

FedAvgResult run_fedavg(const Dataset& train, const std::vector<ClientState>& clients,
                        const Dataset& test, const FedConfig& cfg) {
  if (clients.empty()) fail(ErrorCode::InvalidArgument, "run_fedavg: no clients");
  if (cfg.rounds < 0) fail(ErrorCode::Config, "rounds must be >= 0");
  check_fed_cfg(cfg);

  std::vector<int> dims = model_dims(train, cfg);
  ModelParams global = init_model(dims, mix_seed(cfg.seed, stream::kModelInit));
  double w = double(global.param_count());
  Variant variant = (cfg.variant == Variant::FedProx) ? Variant::FedProx : Variant::FedAvg;

  FedAvgResult res;
  double cum = 0.0;
  for (int r = 0; r < cfg.rounds; ++r) {
    std::vector<int> parts =
        sample_participants(int(clients.size()), cfg.participation, r, cfg.seed);
    std::vector<ModelParams> locals(parts.size());
    std::vector<int64_t> counts(parts.size());
    parallel_for(int(parts.size()), [&](int i) {
      const ClientState& cl = clients[size_t(parts[size_t(i)])];
      locals[size_t(i)] =
          local_train(global, train, cl, cfg.local_epochs, cfg,
                      mix_seed(cfg.seed, stream::kLocalTrain, uint64_t(r), uint64_t(cl.id)),
                      variant, &global);
      counts[size_t(i)] = cl.sample_count();
    });
    global = weighted_average(locals, counts);
    cum += 2.0 * w * double(parts.size());
    double acc = evaluate(global, test.inputs, test.labels);
    res.log.records.push_back({r + 1, Stage::Avg, acc, cum});
  }
  res.log.final_accuracy =
      res.log.records.empty() ? evaluate(global, test.inputs, test.labels)
                              : res.log.records.back().accuracy;
  res.log.total_cost = cum;
  res.model = std::move(global);
  return res;
}

ModelParams classifier_init(const std::vector<ModelParams>& cluster_classifiers) {
  if (cluster_classifiers.empty()) fail(ErrorCode::InvalidArgument, "classifier_init: no classifiers");
  int m = cluster_classifiers[0].output_dim();
  int h_total = 0;
  for (size_t k = 0; k < cluster_classifiers.size(); ++k) {
    const ModelParams& c = cluster_classifiers[k];
    if (c.num_layers() != 1) {
      fail(ErrorCode::InvalidArgument,
           "classifier_init: classifier " + std::to_string(k) + " must be a single layer");
    }
    if (c.output_dim() != m) {
      fail(ErrorCode::InvalidArgument,
           "classifier_init: classifier " + std::to_string(k) + " output dim mismatch");
    }
    h_total += c.input_dim();
  }

  ModelParams out;
  out.layer_dims = {h_total, m};
  Matrix w(h_total, m);
  std::vector<double> b(size_t(m), 0.0);
  int row = 0;
  for (const ModelParams& c : cluster_classifiers) {
    const Matrix& cw = c.weights[0];
    for (int r = 0; r < cw.rows(); ++r, ++row) {
      std::memcpy(w.row(row), cw.row(r), size_t(m) * sizeof(double));
    }
    for (int j = 0; j < m; ++j) b[size_t(j)] += c.biases[0][size_t(j)];
  }
  out.weights = {std::move(w)};
  out.biases = {std::move(b)};
  return out;
}

const Matrix& features_cached(const GlobalEncoder& encoder, const Matrix& inputs, int slot,
                              FeatureCache& cache) {
  if (slot < 0 || size_t(slot) >= cache.entries.size()) {
    fail(ErrorCode::InvalidArgument, "features_cached: slot out of range");
  }
  uint64_t key = fingerprint(encoder);
  FeatureCache::Entry& e = cache.entries[size_t(slot)];
  if (!e.valid || e.key != key || e.features.rows() != inputs.rows()) {
    e.features = encoder.forward(inputs);
    e.key = key;
    e.valid = true;
  }
  return e.features;
}

namespace {

// post_local_steps minibatch steps over the client's frozen features, fresh
// momentum, reshuffling whenever the pass wraps.
ModelParams train_classifier_steps(const ModelParams& classifier, const GlobalEncoder& encoder,
                                   const Batch& raw, const Matrix* cached_features, int steps,
                                   const FedConfig& cfg, uint64_t seed) {
  ModelParams cls = classifier;
  int n = raw.inputs.rows();
  if (steps <= 0 || n == 0) return cls;

  OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.reset(cls);

  Rng rng(mix_seed(seed, stream::kPostLocal));
  std::vector<int32_t> order = iota_indices(n);
  shuffle_vec(order, rng);
  int pos = 0;
  for (int s = 0; s < steps; ++s) {
    if (pos >= n) {
      shuffle_vec(order, rng);
      pos = 0;
    }
    int take = std::min(cfg.batch_size, n - pos);
    Batch fb;
    fb.inputs = Matrix(take, cls.input_dim());
    fb.labels.resize(size_t(take));
    if (cached_features != nullptr) {
      for (int i = 0; i < take; ++i) {
        int32_t src = order[size_t(pos + i)];
        std::memcpy(fb.inputs.row(i), cached_features->row(src),
                    size_t(cls.input_dim()) * sizeof(double));
        fb.labels[size_t(i)] = raw.labels[size_t(src)];
      }
    } else {
      // recompute-every-step path: same numbers, no cache
      Matrix rows(take, raw.inputs.cols());
      for (int i = 0; i < take; ++i) {
        int32_t src = order[size_t(pos + i)];
        std::memcpy(rows.row(i), raw.inputs.row(src), size_t(raw.inputs.cols()) * sizeof(double));
        fb.labels[size_t(i)] = raw.labels[size_t(src)];
      }
      fb.inputs = encoder.forward(rows);
    }
    pos += take;
    sgd_step(cls, opt, fb);
  }
  return cls;
}

}  // namespace

FedConcatResult run_fedconcat(const Dataset& train, const std::vector<ClientState>& clients,
                              const Dataset& test, const FedConfig& cfg, bool use_feature_cache) {
  if (clients.empty()) fail(ErrorCode::InvalidArgument, "run_fedconcat: no clients");
  if (cfg.encoder_rounds < 0 || cfg.classifier_rounds < 0) {
    fail(ErrorCode::Config, "encoder/classifier rounds must be >= 0");
  }
  if (cfg.post_local_steps < 0) fail(ErrorCode::Config, "post_local_steps must be >= 0");
  check_fed_cfg(cfg);

  int n_clients = int(clients.size());
  std::vector<int> dims = model_dims(train, cfg);
  bool inferred = (cfg.variant == Variant::FedConcatId) ||
                  (cfg.clustering == ClusteringMode::InferredDist);

  FedConcatResult res;
  double cum = 0.0;

  // ---- stage 1: one distribution vector per client ------------------------
  res.dists.resize(size_t(n_clients));
  if (inferred) {
    // Per-client models: one round of local training from a shared init, used
    // only for inference here; stage-2 training restarts from fresh inits.
    ModelParams shared = init_model(dims, mix_seed(cfg.seed, stream::kModelInit));
    Matrix probes = make_probes(cfg.probe_count, train.dim(), cfg.seed);
    parallel_for(n_clients, [&](int i) {
      const ClientState& cl = clients[size_t(i)];
      ModelParams local =
          local_train(shared, train, cl, cfg.local_epochs, cfg,
                      mix_seed(cfg.seed, stream::kIdInfer, uint64_t(cl.id)));
      res.dists[size_t(i)] = infer_label_distribution(local, probes, cl.id);
    });
    // counted as one extra full-model round
    cum += 2.0 * double(shared.param_count()) * double(n_clients);
  } else {
    for (int i = 0; i < n_clients; ++i) {
      res.dists[size_t(i)] = label_distribution(train, clients[size_t(i)].indices, clients[size_t(i)].id);
    }
    if (cfg.clustering == ClusteringMode::DpTrueDist) {
      for (int i = 0; i < n_clients; ++i) {
        res.dists[size_t(i)] = laplace_noise(res.dists[size_t(i)], cfg.dp_epsilon,
                                             mix_seed(cfg.seed, stream::kDpNoise,
                                                      uint64_t(clients[size_t(i)].id)));
      }
    }
  }

  std::vector<std::vector<double>> points(static_cast<size_t>(n_clients));
  for (int i = 0; i < n_clients; ++i) points[size_t(i)] = res.dists[size_t(i)].probs;

  int k = cfg.clusters;
  if (k == 0) k = elbow_select_k(points, std::min(n_clients, 10), cfg.seed);
  if (k < 1 || k > n_clients) {
    fail(ErrorCode::Config, "clusters must be in [1, clients], got " + std::to_string(k));
  }
  res.assignment = cfg.balanced_clusters ? kmeans_balanced(points, k, cfg.seed)
                                         : kmeans(points, k, cfg.seed);

  std::vector<std::vector<int>> members(static_cast<size_t>(k));
  for (int i = 0; i < n_clients; ++i) {
    members[size_t(res.assignment.labels[size_t(i)])].push_back(i);
  }
  for (int c = 0; c < k; ++c) {
    if (members[size_t(c)].empty()) fail(ErrorCode::Internal, "kmeans produced an empty cluster");
  }

  // ---- stage 2: FedAvg inside each cluster ---------------------------------
  res.cluster_models.resize(size_t(k));
  for (int c = 0; c < k; ++c) {
    res.cluster_models[size_t(c)] =
        init_model(dims, mix_seed(cfg.seed, stream::kClusterInit, uint64_t(c)));
  }
  double w = double(res.cluster_models[0].param_count());

  auto ensemble_snapshot = [&]() {
    std::vector<Encoder> encs;
    std::vector<ModelParams> clss;
    encs.reserve(size_t(k));
    clss.reserve(size_t(k));
    for (int c = 0; c < k; ++c) {
      SplitModel s = split_model(res.cluster_models[size_t(c)]);
      encs.push_back(std::move(s.encoder));
      clss.push_back(std::move(s.classifier));
    }
    GlobalEncoder ge = concat_encoders(std::move(encs));
    ModelParams cls = classifier_init(clss);
    return std::make_pair(std::move(ge), std::move(cls));
  };

  for (int r = 0; r < cfg.encoder_rounds; ++r) {
    // flatten this round's (cluster, client) jobs for the worker pool
    struct Job {
      int cluster;
      int client;
      int slot;
    };
    std::vector<Job> jobs;
    std::vector<std::vector<int>> selected(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
      std::vector<int> parts =
          sample_participants(int(members[size_t(c)].size()), cfg.participation, r,
                              mix_seed(cfg.seed, stream::kParticipation, uint64_t(c)));
      if (parts.empty()) {
        // unreachable with ceil-based sampling; keep one seeded member anyway
        Rng rng(mix_seed(cfg.seed, stream::kParticipation, uint64_t(c), uint64_t(r)));
        parts.push_back(int(rng.below(uint64_t(members[size_t(c)].size()))));
      }
      for (int p : parts) {
        int client = members[size_t(c)][size_t(p)];
        jobs.push_back({c, client, int(jobs.size())});
      }
      selected[size_t(c)] = std::move(parts);
    }

    std::vector<ModelParams> trained(jobs.size());
    parallel_for(int(jobs.size()), [&](int j) {
      const Job& job = jobs[size_t(j)];
      const ClientState& cl = clients[size_t(job.client)];
      trained[size_t(j)] =
          local_train(res.cluster_models[size_t(job.cluster)], train, cl, cfg.local_epochs, cfg,
                      mix_seed(cfg.seed, stream::kLocalTrain, uint64_t(r), uint64_t(cl.id)));
    });

    size_t cursor = 0;
    for (int c = 0; c < k; ++c) {
      std::vector<ModelParams> locals;
      std::vector<int64_t> counts;
      for (size_t p = 0; p < selected[size_t(c)].size(); ++p, ++cursor) {
        locals.push_back(std::move(trained[cursor]));
        counts.push_back(clients[size_t(jobs[cursor].client)].sample_count());
      }
      res.cluster_models[size_t(c)] = weighted_average(locals, counts);
      cum += 2.0 * w * double(selected[size_t(c)].size());
    }

    auto [ge, cls] = ensemble_snapshot();
    double acc = evaluate(ge, cls, test.inputs, test.labels);
    res.log.records.push_back({r + 1, Stage::Encoder, acc, cum});
  }

  // ---- stage 3: freeze encoders, post-train the global classifier ---------
  {
    auto [ge, cls] = ensemble_snapshot();
    res.encoder = std::move(ge);
    res.classifier = std::move(cls);
  }
  // one-time broadcast of the concatenated model (K encoder blocks + init
  // classifier), costed as K full models per client to match the cost model
  cum += double(k) * w * double(n_clients);

  const ModelParams& any_cluster = res.cluster_models[0];
  int last = any_cluster.num_layers() - 1;
  double w_cls = double(int64_t(any_cluster.weights[size_t(last)].rows()) *
                            any_cluster.weights[size_t(last)].cols() +
                        int64_t(any_cluster.biases[size_t(last)].size()));

  FeatureCache cache(n_clients + 1);
  std::vector<Batch> client_data(static_cast<size_t>(n_clients));
  for (int i = 0; i < n_clients; ++i) {
    client_data[size_t(i)] = gather_batch(train, clients[size_t(i)].indices);
  }
  const Matrix& test_features = features_cached(res.encoder, test.inputs, n_clients, cache);

  for (int r = 0; r < cfg.classifier_rounds; ++r) {
    std::vector<int> parts =
        sample_participants(n_clients, cfg.participation, r,
                            mix_seed(cfg.seed, stream::kParticipationPost));
    std::vector<ModelParams> locals(parts.size());
    std::vector<int64_t> counts(parts.size());
    parallel_for(int(parts.size()), [&](int i) {
      int id = parts[size_t(i)];
      const Batch& raw = client_data[size_t(id)];
      const Matrix* feats =
          use_feature_cache ? &features_cached(res.encoder, raw.inputs, id, cache) : nullptr;
      locals[size_t(i)] = train_classifier_steps(
          res.classifier, res.encoder, raw, feats, cfg.post_local_steps, cfg,
          mix_seed(cfg.seed, stream::kPostLocal, uint64_t(r), uint64_t(id)));
      counts[size_t(i)] = clients[size_t(id)].sample_count();
    });
    res.classifier = weighted_average(locals, counts);
    cum += 2.0 * double(k) * w_cls * double(parts.size());
    double acc = accuracy_from_logits(forward(res.classifier, test_features).logits, test.labels);
    res.log.records.push_back({r + 1, Stage::Classifier, acc, cum});
  }

  res.log.final_accuracy = res.log.records.empty()
                               ? evaluate(res.encoder, res.classifier, test.inputs, test.labels)
                               : res.log.records.back().accuracy;
  res.log.total_cost = cum;
  return res;
}

}  // namespace fedlab
