#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fed.hpp"

namespace fedlab {

struct BlobsSpec {
  int classes = 10;
  int dim = 32;
  int train_per_class = 500;
  int test_per_class = 100;
  double spread = 0.5;
  uint64_t seed = 0;
};

struct DatasetSpec {
  bool generated = true;
  BlobsSpec blobs;
  std::string train_path;
  std::string test_path;
};

struct PartitionSpec {
  PartitionKind kind = PartitionKind::ClassesPerClient;
  int clients = 40;
  int classes_per_client = 2;
  double beta = 0.5;
  uint64_t seed = 0;
};

struct ProbeSpec {
  std::vector<std::vector<int>> groups;  // label groups, one synthetic client each
  int rounds = 2;
  int local_epochs = 10;
  int convergence_epochs = 50;  // per-client training before encoder probes
  int probe_steps = 200;
  double probe_lr = 0.1;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PartitionSpec partition;
  FedConfig algorithm;
  ProbeSpec probe;  // probe verb only
  bool has_probe = false;
  std::string output_dir;
};

// Parse + validate; errors carry the failing field path (e.g.
// "algorithm.rounds: must be >= 0"). Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text, bool expect_probe);
ExperimentConfig load_experiment_config(const std::string& path, bool expect_probe);

// --seed S pins algorithm.seed = S and re-derives generator/partition seeds
// from S, so one flag moves every stochastic stage together.
void apply_seed_override(ExperimentConfig& cfg, uint64_t seed);

std::string resolved_config_json(const ExperimentConfig& cfg);
// Hash of the resolved config minus output_dir: changes iff a semantic field
// changes.
std::string config_hash(const ExperimentConfig& cfg);

struct RunResult {
  MetricsLog log;
  std::string metrics_json;  // bytes written to metrics.json
};

// Executes the configured experiment and writes metrics.json, curves.csv,
// config_resolved.json and model checkpoints under out_dir (atomically).
// threads <= 0 falls back to FEDLAB_THREADS, then 1.
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int threads);

// Figure-1 degradation probe + frozen-encoder exchange probes; writes a
// metrics.json carrying the "probes" report.
RunResult run_probe_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                               int threads);

// Budget-aligned comparison of finished runs: reads each metrics.json, aligns
// on the smallest total cost, writes a CSV (optional) and returns the text
// table. Needs at least two runs; warns when test-set fingerprints differ.
std::string compare_runs(const std::vector<std::string>& metrics_paths,
                         const std::string& csv_out_path);

int resolve_threads(int requested);  // CLI/--threads semantics, env fallback

}  // namespace fedlab
