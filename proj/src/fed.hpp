#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "clustering.hpp"
#include "dataset.hpp"
#include "nn.hpp"
#include "partition.hpp"

namespace fedlab {

enum class Variant { FedAvg, FedProx, FedConcat, FedConcatId };
enum class ClusteringMode { TrueDist, InferredDist, DpTrueDist };
enum class Stage { Avg, Encoder, Classifier };

const char* stage_name(Stage s);
const char* variant_name(Variant v);

struct ClientState {
  int id = -1;
  std::vector<int32_t> indices;  // rows owned in the training set

  int64_t sample_count() const { return int64_t(indices.size()); }
};

// Defaults follow the evaluation protocol of the replicated study: SGD with
// momentum 0.9 and weight decay 1e-5, lr 0.01, batch 64, 10 local epochs per
// round, 3 classifier steps in post-training, K = 5 clusters.
struct FedConfig {
  Variant variant = Variant::FedAvg;
  int rounds = 50;             // T, fedavg/fedprox
  int encoder_rounds = 31;     // T_e, fedconcat stage 2
  int classifier_rounds = 200; // T_c, fedconcat stage 3
  int local_epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double prox_mu = 0.01;       // fedprox only
  double participation = 1.0;  // fraction of clients sampled per round
  int clusters = 5;            // K; 0 = pick by elbow sweep
  ClusteringMode clustering = ClusteringMode::TrueDist;
  double dp_epsilon = 2.5;     // used when clustering == DpTrueDist
  bool balanced_clusters = false;
  int post_local_steps = 3;    // classifier minibatch steps per round
  int probe_count = 10000;     // random inputs for distribution inference
  std::vector<int> hidden_dims = {64, 32};
  uint64_t seed = 0;
};

// One round record per evaluated global model; rounds are 1-based and
// strictly increasing within a stage. cum_cost counts transferred f64
// parameters.
struct RoundRecord {
  int round = 0;
  Stage stage = Stage::Avg;
  double accuracy = 0.0;
  double cum_cost = 0.0;
};

struct MetricsLog {
  std::vector<RoundRecord> records;
  double final_accuracy = 0.0;
  double total_cost = 0.0;
};

std::vector<ClientState> make_clients(const FederatedPartition& part);
std::vector<int> model_dims(const Dataset& ds, const FedConfig& cfg);
Batch gather_batch(const Dataset& ds, const std::vector<int32_t>& indices);

// `epochs` seeded-shuffle passes over the client's shard, momentum state
// fresh at entry. FedProx adds prox_mu * (w - global_ref) to every gradient.
ModelParams local_train(const ModelParams& model, const Dataset& train, const ClientState& client,
                        int epochs, const FedConfig& cfg, uint64_t seed,
                        Variant variant = Variant::FedAvg,
                        const ModelParams* global_ref = nullptr);

// Sample-count weighted parameter mean, folded in model-index order. Written
// in anchored form p0 + sum(w_i * (p_i - p0)) / W so averaging copies of one
// model returns that model exactly.
ModelParams weighted_average(const std::vector<ModelParams>& models,
                             const std::vector<int64_t>& weights);

// ceil(fraction * n) distinct clients for the given round, keyed by
// (seed, round_index); fraction 1 short-circuits to everyone in index order.
std::vector<int> sample_participants(int n_clients, double fraction, int round_index,
                                     uint64_t seed);

struct FedAvgResult {
  ModelParams model;
  MetricsLog log;
};

// T rounds of sample -> local train -> weighted average, evaluating on the
// held-out set every round. Handles both FedAvg and FedProx.
FedAvgResult run_fedavg(const Dataset& train, const std::vector<ClientState>& clients,
                        const Dataset& test, const FedConfig& cfg);

// Global classifier over concatenated features: weights of the per-cluster
// classifiers stacked along the feature axis, biases summed, so the initial
// global logits equal the sum of the cluster logits.
ModelParams classifier_init(const std::vector<ModelParams>& cluster_classifiers);

// Per-slot encoder outputs keyed by the encoder's content hash; recomputes on
// fingerprint mismatch. Slots are index-addressed so parallel fills stay
// single-writer.
struct FeatureCache {
  struct Entry {
    uint64_t key = 0;
    Matrix features;
    bool valid = false;
  };
  std::vector<Entry> entries;

  explicit FeatureCache(int slots = 0) : entries(size_t(slots)) {}
};

const Matrix& features_cached(const GlobalEncoder& encoder, const Matrix& inputs, int slot,
                              FeatureCache& cache);

struct FedConcatResult {
  GlobalEncoder encoder;
  ModelParams classifier;  // single layer, K*h -> m
  MetricsLog log;
  std::vector<LabelDistVector> dists;  // stage-1 vectors, client order
  ClusterAssignment assignment;
  std::vector<ModelParams> cluster_models;  // stage-2 results, cluster order
};

// Stage 1 cluster -> stage 2 per-cluster FedAvg -> stage 3 classifier
// post-training on frozen concatenated features. With use_feature_cache off,
// stage 3 recomputes encoder outputs on every step instead (same numbers, for
// the cache-equivalence check).
FedConcatResult run_fedconcat(const Dataset& train, const std::vector<ClientState>& clients,
                              const Dataset& test, const FedConfig& cfg,
                              bool use_feature_cache = true);

}  // namespace fedlab
