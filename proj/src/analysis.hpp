#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "fed.hpp"
#include "nn.hpp"

namespace fedlab {

// Communication model, in transferred f64 parameters. w = full model size,
// c = classifier fraction of the model, N = clients, K = clusters, T_e/T_c =
// encoder/classifier rounds, T = FedAvg rounds. FedConcat's total is
//   2*w*N*(T_e + K/2 + c*K*T_c)
// (encoder rounds, the one-time concatenated-model broadcast, classifier
// rounds); FedAvg's is 2*w*N*T.
double fedconcat_cost(double w, double c, double n, double k, double t_e, double t_c);
double fedavg_cost(double w, double n, double t);

// Last-layer parameter share of the model. Needs at least two layers.
double classifier_fraction(const ModelParams& model);

// Budget parity: the T_e (possibly fractional or negative) that makes
// fedconcat_cost equal fedavg_cost at T rounds, and the inverse direction.
double parity_encoder_rounds(double c, double k, double t_c, double t);
double parity_fedavg_rounds(double c, double k, double t_e, double t_c);

struct CommCostReport {
  double w = 0.0;
  double c = 0.0;
  double n = 0.0;
  double k = 0.0;
  double t_e = 0.0;
  double t_c = 0.0;
  double t_avg = 0.0;       // fedavg/fedprox rounds
  double total = 0.0;       // actual accumulated cost of the run
  double formula_total = 0.0;  // closed-form prediction at full participation
};

// Per-epoch accuracy of each client's model on the test rows of its own label
// support, before and after the averaging step (the Figure-1 style probe).
struct DegradationRecord {
  int round = 0;
  int epoch = 0;   // 1-based; post_avg rows repeat the last epoch index
  int client = 0;
  bool post_avg = false;
  double accuracy = 0.0;
};

std::vector<DegradationRecord> track_averaging_degradation(
    const Dataset& train, const Dataset& test, const std::vector<ClientState>& clients, int rounds,
    int epochs, const FedConfig& cfg);

// Linear probe on frozen encoder outputs: 200 full-batch softmax-regression
// steps at lr 0.1, no momentum, no decay; reports eval-set loss and accuracy.
struct ProbeResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

ProbeResult probe_frozen_encoder(const GlobalEncoder& encoder, const Dataset& probe_train,
                                 const Dataset& probe_eval, int steps = 200,
                                 double learning_rate = 0.1);
ProbeResult probe_frozen_encoder(const Encoder& encoder, const Dataset& probe_train,
                                 const Dataset& probe_eval, int steps = 200,
                                 double learning_rate = 0.1);

}  // namespace fedlab
