#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "analysis.hpp"
#include "io.hpp"
#include "json.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace fedlab {

using nlohmann::json;

namespace {

[[noreturn]] void cfg_fail(const std::string& path, const std::string& msg) {
  fail(ErrorCode::Config, path + ": " + msg);
}

std::string join_path(const std::string& base, const char* key) {
  return base.empty() ? std::string(key) : base + "." + key;
}

const json& need_object(const json& j, const std::string& path) {
  if (!j.is_object()) cfg_fail(path, "must be an object");
  return j;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) cfg_fail(join_path(path, it.key().c_str()), "unknown field");
  }
}

bool has(const json& obj, const char* key) { return obj.contains(key); }

int get_int(const json& obj, const std::string& path, const char* key, int fallback, int min_v,
            int max_v) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    cfg_fail(join_path(path, key), "must be an integer");
  }
  int64_t x = v.get<int64_t>();
  if (x < min_v || x > max_v) {
    cfg_fail(join_path(path, key), "must be in [" + std::to_string(min_v) + ", " +
                                       std::to_string(max_v) + "], got " + std::to_string(x));
  }
  return int(x);
}

double get_double(const json& obj, const std::string& path, const char* key, double fallback) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) cfg_fail(join_path(path, key), "must be a number");
  return v.get<double>();
}

uint64_t get_seed(const json& obj, const std::string& path, const char* key, uint64_t fallback) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (v.is_number_integer() && v.get<int64_t>() >= 0) return uint64_t(v.get<int64_t>());
  cfg_fail(join_path(path, key), "must be a non-negative integer");
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) cfg_fail(join_path(path, key), "must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) cfg_fail(join_path(path, key), "must be a string");
  return v.get<std::string>();
}

DatasetSpec parse_dataset(const json& j, const std::string& path) {
  need_object(j, path);
  check_keys(j, path, {"blobs", "train_path", "test_path"});
  DatasetSpec out;
  bool blobs = has(j, "blobs");
  bool paths = has(j, "train_path") || has(j, "test_path");
  if (blobs == paths) {
    cfg_fail(path, "give exactly one of: blobs, train_path+test_path");
  }
  if (blobs) {
    const json& b = need_object(j.at("blobs"), join_path(path, "blobs"));
    std::string bp = join_path(path, "blobs");
    check_keys(b, bp, {"classes", "dim", "train_per_class", "test_per_class", "spread", "seed"});
    out.generated = true;
    out.blobs.classes = get_int(b, bp, "classes", 10, 2, 65535);
    out.blobs.dim = get_int(b, bp, "dim", 32, 1, 1 << 20);
    out.blobs.train_per_class = get_int(b, bp, "train_per_class", 500, 1, 1 << 24);
    out.blobs.test_per_class = get_int(b, bp, "test_per_class", 100, 1, 1 << 24);
    out.blobs.spread = get_double(b, bp, "spread", 0.5);
    if (!(out.blobs.spread > 0.0)) cfg_fail(join_path(bp, "spread"), "must be > 0");
    out.blobs.seed = get_seed(b, bp, "seed", 0);
  } else {
    out.generated = false;
    out.train_path = get_string(j, path, "train_path", "");
    out.test_path = get_string(j, path, "test_path", "");
    if (out.train_path.empty()) cfg_fail(join_path(path, "train_path"), "required");
    if (out.test_path.empty()) cfg_fail(join_path(path, "test_path"), "required");
  }
  return out;
}

PartitionSpec parse_partition(const json& j, const std::string& path) {
  need_object(j, path);
  check_keys(j, path, {"kind", "clients", "classes_per_client", "beta", "seed"});
  PartitionSpec out;
  std::string kind = get_string(j, path, "kind", "classes_per_client");
  if (kind == "classes_per_client") {
    out.kind = PartitionKind::ClassesPerClient;
  } else if (kind == "dirichlet") {
    out.kind = PartitionKind::Dirichlet;
  } else if (kind == "iid") {
    out.kind = PartitionKind::Iid;
  } else {
    cfg_fail(join_path(path, "kind"), "must be one of classes_per_client, dirichlet, iid");
  }
  out.clients = get_int(j, path, "clients", 40, 1, 1 << 20);
  out.classes_per_client = get_int(j, path, "classes_per_client", 2, 1, 65535);
  out.beta = get_double(j, path, "beta", 0.5);
  if (out.kind == PartitionKind::Dirichlet && !(out.beta > 0.0)) {
    cfg_fail(join_path(path, "beta"), "must be > 0");
  }
  out.seed = get_seed(j, path, "seed", 0);
  return out;
}

FedConfig parse_algorithm(const json& j, const std::string& path) {
  need_object(j, path);
  check_keys(j, path,
             {"variant", "rounds", "encoder_rounds", "classifier_rounds", "local_epochs",
              "batch_size", "learning_rate", "momentum", "weight_decay", "prox_mu",
              "participation", "clusters", "clustering", "dp_epsilon", "balanced_clusters",
              "post_local_steps", "probe_count", "hidden_dims", "seed"});
  FedConfig out;
  std::string variant = get_string(j, path, "variant", "fedavg");
  if (variant == "fedavg") {
    out.variant = Variant::FedAvg;
  } else if (variant == "fedprox") {
    out.variant = Variant::FedProx;
  } else if (variant == "fedconcat") {
    out.variant = Variant::FedConcat;
  } else if (variant == "fedconcat_id") {
    out.variant = Variant::FedConcatId;
  } else {
    cfg_fail(join_path(path, "variant"),
             "must be one of fedavg, fedprox, fedconcat, fedconcat_id");
  }
  out.rounds = get_int(j, path, "rounds", 50, 0, 1 << 20);
  out.encoder_rounds = get_int(j, path, "encoder_rounds", 31, 0, 1 << 20);
  out.classifier_rounds = get_int(j, path, "classifier_rounds", 200, 0, 1 << 20);
  out.local_epochs = get_int(j, path, "local_epochs", 10, 0, 1 << 20);
  out.batch_size = get_int(j, path, "batch_size", 64, 1, 1 << 24);
  out.learning_rate = get_double(j, path, "learning_rate", 0.01);
  if (!(out.learning_rate > 0.0)) cfg_fail(join_path(path, "learning_rate"), "must be > 0");
  out.momentum = get_double(j, path, "momentum", 0.9);
  if (out.momentum < 0.0 || out.momentum >= 1.0) {
    cfg_fail(join_path(path, "momentum"), "must be in [0, 1)");
  }
  out.weight_decay = get_double(j, path, "weight_decay", 1e-5);
  if (out.weight_decay < 0.0) cfg_fail(join_path(path, "weight_decay"), "must be >= 0");
  out.prox_mu = get_double(j, path, "prox_mu", 0.01);
  if (out.prox_mu < 0.0) cfg_fail(join_path(path, "prox_mu"), "must be >= 0");
  out.participation = get_double(j, path, "participation", 1.0);
  if (!(out.participation > 0.0) || out.participation > 1.0) {
    cfg_fail(join_path(path, "participation"), "must be in (0, 1]");
  }
  out.clusters = get_int(j, path, "clusters", 5, 0, 1 << 20);  // 0 = elbow sweep
  std::string clustering = get_string(j, path, "clustering", "true_dist");
  if (clustering == "true_dist") {
    out.clustering = ClusteringMode::TrueDist;
  } else if (clustering == "inferred_dist") {
    out.clustering = ClusteringMode::InferredDist;
  } else if (clustering == "dp") {
    out.clustering = ClusteringMode::DpTrueDist;
  } else {
    cfg_fail(join_path(path, "clustering"), "must be one of true_dist, inferred_dist, dp");
  }
  if (out.variant == Variant::FedConcatId && has(j, "clustering") &&
      out.clustering != ClusteringMode::InferredDist) {
    cfg_fail(join_path(path, "clustering"),
             "fedconcat_id always infers distributions; drop this field or use inferred_dist");
  }
  if (out.variant == Variant::FedConcatId) out.clustering = ClusteringMode::InferredDist;
  if (out.variant == Variant::FedConcat && out.clustering == ClusteringMode::InferredDist) {
    cfg_fail(join_path(path, "clustering"),
             "inferred_dist belongs to variant fedconcat_id");
  }
  out.dp_epsilon = get_double(j, path, "dp_epsilon", 2.5);
  if (!(out.dp_epsilon > 0.0)) cfg_fail(join_path(path, "dp_epsilon"), "must be > 0");
  out.balanced_clusters = get_bool(j, path, "balanced_clusters", false);
  out.post_local_steps = get_int(j, path, "post_local_steps", 3, 0, 1 << 20);
  out.probe_count = get_int(j, path, "probe_count", 10000, 1, 1 << 24);
  if (has(j, "hidden_dims")) {
    const json& hd = j.at("hidden_dims");
    if (!hd.is_array() || hd.empty()) {
      cfg_fail(join_path(path, "hidden_dims"), "must be a non-empty array of integers");
    }
    out.hidden_dims.clear();
    for (size_t i = 0; i < hd.size(); ++i) {
      if (!hd[i].is_number_integer() && !hd[i].is_number_unsigned()) {
        cfg_fail(join_path(path, "hidden_dims"), "must be a non-empty array of integers");
      }
      int64_t v = hd[i].get<int64_t>();
      if (v < 1 || v > (1 << 20)) {
        cfg_fail(join_path(path, "hidden_dims"),
                 "entry " + std::to_string(i) + " out of range [1, 2^20]");
      }
      out.hidden_dims.push_back(int(v));
    }
  }
  out.seed = get_seed(j, path, "seed", 0);
  return out;
}

ProbeSpec parse_probe(const json& j, const std::string& path) {
  need_object(j, path);
  check_keys(j, path,
             {"groups", "rounds", "local_epochs", "convergence_epochs", "probe_steps", "probe_lr"});
  ProbeSpec out;
  if (has(j, "groups")) {
    const json& g = j.at("groups");
    if (!g.is_array() || g.size() < 2) {
      cfg_fail(join_path(path, "groups"), "must be an array of at least 2 label groups");
    }
    std::set<int> seen;
    for (size_t i = 0; i < g.size(); ++i) {
      if (!g[i].is_array() || g[i].empty()) {
        cfg_fail(join_path(path, "groups"), "group " + std::to_string(i) + " must be a non-empty array");
      }
      std::vector<int> group;
      for (const json& v : g[i]) {
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
          cfg_fail(join_path(path, "groups"), "labels must be integers");
        }
        int label = v.get<int>();
        if (label < 0) cfg_fail(join_path(path, "groups"), "labels must be >= 0");
        if (!seen.insert(label).second) {
          cfg_fail(join_path(path, "groups"),
                   "label " + std::to_string(label) + " appears in more than one group");
        }
        group.push_back(label);
      }
      out.groups.push_back(std::move(group));
    }
  }
  out.rounds = get_int(j, path, "rounds", 2, 1, 1 << 16);
  out.local_epochs = get_int(j, path, "local_epochs", 10, 1, 1 << 16);
  out.convergence_epochs = get_int(j, path, "convergence_epochs", 50, 1, 1 << 16);
  out.probe_steps = get_int(j, path, "probe_steps", 200, 1, 1 << 20);
  out.probe_lr = get_double(j, path, "probe_lr", 0.1);
  if (!(out.probe_lr > 0.0)) cfg_fail(join_path(path, "probe_lr"), "must be > 0");
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, bool expect_probe) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Config, std::string("config: invalid JSON: ") + e.what());
  }
  need_object(j, "config");
  check_keys(j, "", {"dataset", "partition", "algorithm", "probe", "output_dir"});

  ExperimentConfig out;
  if (!has(j, "dataset")) cfg_fail("dataset", "required");
  out.dataset = parse_dataset(j.at("dataset"), "dataset");
  out.partition = parse_partition(has(j, "partition") ? j.at("partition") : json::object(),
                                  "partition");
  out.algorithm = parse_algorithm(has(j, "algorithm") ? j.at("algorithm") : json::object(),
                                  "algorithm");
  if (has(j, "probe")) {
    out.probe = parse_probe(j.at("probe"), "probe");
    out.has_probe = true;
  } else if (expect_probe) {
    out.probe = parse_probe(json::object(), "probe");
    out.has_probe = true;
  }
  out.output_dir = get_string(j, "", "output_dir", "");
  return out;
}

ExperimentConfig load_experiment_config(const std::string& path, bool expect_probe) {
  std::vector<uint8_t> bytes = read_file(path);
  return parse_experiment_config(std::string(bytes.begin(), bytes.end()), expect_probe);
}

void apply_seed_override(ExperimentConfig& cfg, uint64_t seed) {
  cfg.algorithm.seed = seed;
  cfg.dataset.blobs.seed = mix_seed(seed, 1);
  cfg.partition.seed = mix_seed(seed, 2);
}

namespace {

json dataset_to_json(const DatasetSpec& d) {
  json j;
  if (d.generated) {
    j["blobs"] = {{"classes", d.blobs.classes},
                  {"dim", d.blobs.dim},
                  {"train_per_class", d.blobs.train_per_class},
                  {"test_per_class", d.blobs.test_per_class},
                  {"spread", d.blobs.spread},
                  {"seed", d.blobs.seed}};
  } else {
    j["train_path"] = d.train_path;
    j["test_path"] = d.test_path;
  }
  return j;
}

json partition_to_json(const PartitionSpec& p) {
  json j;
  switch (p.kind) {
    case PartitionKind::ClassesPerClient:
      j["kind"] = "classes_per_client";
      j["classes_per_client"] = p.classes_per_client;
      break;
    case PartitionKind::Dirichlet:
      j["kind"] = "dirichlet";
      j["beta"] = p.beta;
      break;
    case PartitionKind::Iid:
      j["kind"] = "iid";
      break;
  }
  j["clients"] = p.clients;
  j["seed"] = p.seed;
  return j;
}

const char* clustering_name(ClusteringMode m) {
  switch (m) {
    case ClusteringMode::TrueDist: return "true_dist";
    case ClusteringMode::InferredDist: return "inferred_dist";
    case ClusteringMode::DpTrueDist: return "dp";
  }
  return "?";
}

json algorithm_to_json(const FedConfig& a) {
  json j;
  j["variant"] = variant_name(a.variant);
  j["local_epochs"] = a.local_epochs;
  j["batch_size"] = a.batch_size;
  j["learning_rate"] = a.learning_rate;
  j["momentum"] = a.momentum;
  j["weight_decay"] = a.weight_decay;
  j["participation"] = a.participation;
  j["hidden_dims"] = a.hidden_dims;
  j["seed"] = a.seed;
  if (a.variant == Variant::FedAvg || a.variant == Variant::FedProx) {
    j["rounds"] = a.rounds;
  }
  if (a.variant == Variant::FedProx) j["prox_mu"] = a.prox_mu;
  if (a.variant == Variant::FedConcat || a.variant == Variant::FedConcatId) {
    j["encoder_rounds"] = a.encoder_rounds;
    j["classifier_rounds"] = a.classifier_rounds;
    j["clusters"] = a.clusters;
    j["clustering"] = clustering_name(a.clustering);
    j["balanced_clusters"] = a.balanced_clusters;
    j["post_local_steps"] = a.post_local_steps;
    if (a.clustering == ClusteringMode::DpTrueDist) j["dp_epsilon"] = a.dp_epsilon;
    if (a.clustering == ClusteringMode::InferredDist) j["probe_count"] = a.probe_count;
  }
  return j;
}

json probe_to_json(const ProbeSpec& p) {
  json j;
  j["groups"] = p.groups;
  j["rounds"] = p.rounds;
  j["local_epochs"] = p.local_epochs;
  j["convergence_epochs"] = p.convergence_epochs;
  j["probe_steps"] = p.probe_steps;
  j["probe_lr"] = p.probe_lr;
  return j;
}

json resolved_json(const ExperimentConfig& cfg, bool with_output_dir) {
  json j;
  j["dataset"] = dataset_to_json(cfg.dataset);
  j["partition"] = partition_to_json(cfg.partition);
  j["algorithm"] = algorithm_to_json(cfg.algorithm);
  if (cfg.has_probe) j["probe"] = probe_to_json(cfg.probe);
  if (with_output_dir && !cfg.output_dir.empty()) j["output_dir"] = cfg.output_dir;
  return j;
}

}  // namespace

std::string resolved_config_json(const ExperimentConfig& cfg) {
  return resolved_json(cfg, /*with_output_dir=*/true).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string canon = resolved_json(cfg, /*with_output_dir=*/false).dump();
  return hex64(fnv1a64(reinterpret_cast<const uint8_t*>(canon.data()), canon.size()));
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const char* env = std::getenv("FEDLAB_THREADS");
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != nullptr && *end == '\0' && v > 0 && v < 4096) return int(v);
  }
  return 1;
}

namespace {

struct BuiltData {
  Dataset train;
  Dataset test;
};

BuiltData build_datasets(const ExperimentConfig& cfg) {
  BuiltData out;
  if (cfg.dataset.generated) {
    const BlobsSpec& b = cfg.dataset.blobs;
    auto pair = gen_blobs_split(b.classes, b.dim, b.train_per_class, b.test_per_class, b.spread,
                                b.seed);
    out.train = std::move(pair.first);
    out.test = std::move(pair.second);
  } else {
    out.train = load_dataset(cfg.dataset.train_path);
    out.test = load_dataset(cfg.dataset.test_path);
    if (out.test.dim() != out.train.dim()) {
      cfg_fail("dataset.test_path", "feature dim does not match the training set");
    }
    if (out.test.num_classes != out.train.num_classes) {
      cfg_fail("dataset.test_path", "class count does not match the training set");
    }
  }
  return out;
}

FederatedPartition build_partition(const ExperimentConfig& cfg, const Dataset& train) {
  switch (cfg.partition.kind) {
    case PartitionKind::ClassesPerClient:
      return partition_classes(train, cfg.partition.clients, cfg.partition.classes_per_client,
                               cfg.partition.seed);
    case PartitionKind::Dirichlet:
      return partition_dirichlet(train, cfg.partition.clients, cfg.partition.beta,
                                 cfg.partition.seed);
    case PartitionKind::Iid:
      return partition_iid(train, cfg.partition.clients, cfg.partition.seed);
  }
  fail(ErrorCode::Internal, "unreachable partition kind");
}

json records_to_json(const MetricsLog& log) {
  json arr = json::array();
  for (const RoundRecord& r : log.records) {
    arr.push_back({{"round", r.round},
                   {"stage", stage_name(r.stage)},
                   {"accuracy", r.accuracy},
                   {"cum_cost", r.cum_cost}});
  }
  return arr;
}

std::string curves_csv(const MetricsLog& log) {
  std::string out = "round,stage,accuracy,cumulative_cost\n";
  char buf[160];
  for (const RoundRecord& r : log.records) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g\n", r.round, stage_name(r.stage), r.accuracy,
                  r.cum_cost);
    out += buf;
  }
  return out;
}

json env_stamp(const ExperimentConfig& cfg, const Dataset& test) {
  json env;
  env["config_hash"] = config_hash(cfg);
  env["variant"] = variant_name(cfg.algorithm.variant);
  env["seed_algorithm"] = cfg.algorithm.seed;
  env["seed_partition"] = cfg.partition.seed;
  if (cfg.dataset.generated) env["seed_dataset"] = cfg.dataset.blobs.seed;
  env["test_fingerprint"] = hex64(fingerprint(test));
  return env;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
  set_max_threads(resolve_threads(threads));
  auto t0 = std::chrono::steady_clock::now();

  BuiltData data = build_datasets(cfg);
  FederatedPartition part = build_partition(cfg, data.train);
  std::vector<ClientState> clients = make_clients(part);

  json metrics;
  MetricsLog log;
  const FedConfig& algo = cfg.algorithm;

  if (algo.variant == Variant::FedAvg || algo.variant == Variant::FedProx) {
    FedAvgResult res = run_fedavg(data.train, clients, data.test, algo);
    log = res.log;
    save_model(res.model, out_dir + "/model.fck");

    double w = double(res.model.param_count());
    metrics["comm_cost"] = {
        {"w", w},
        {"clients", int(clients.size())},
        {"rounds", algo.rounds},
        {"participation", algo.participation},
        {"actual_total", log.total_cost},
        {"formula_total_full_participation", fedavg_cost(w, double(clients.size()), double(algo.rounds))},
    };
  } else {
    FedConcatResult res = run_fedconcat(data.train, clients, data.test, algo);
    log = res.log;

    json manifest;
    manifest["format"] = "fedconcat-global-v1";
    manifest["classes"] = data.train.num_classes;
    manifest["feature_dim"] = res.encoder.feature_dim();
    manifest["classifier_file"] = "classifier.fck";
    json member_arr = json::array();
    json encoder_files = json::array();
    int k = res.assignment.k;
    std::vector<std::vector<int>> members(static_cast<size_t>(k));
    for (size_t i = 0; i < res.assignment.labels.size(); ++i) {
      members[size_t(res.assignment.labels[i])].push_back(int(i));
    }
    for (int c = 0; c < k; ++c) {
      std::string name = "encoder_" + std::to_string(c) + ".fck";
      save_encoder(res.encoder.parts[size_t(c)], out_dir + "/" + name);
      encoder_files.push_back(name);
      member_arr.push_back(members[size_t(c)]);
    }
    manifest["encoder_files"] = encoder_files;
    manifest["cluster_members"] = member_arr;
    save_model(res.classifier, out_dir + "/classifier.fck");
    write_file_atomic(out_dir + "/global_model.json", manifest.dump(2) + "\n");

    double w = double(res.cluster_models[0].param_count());
    double c_frac = classifier_fraction(res.cluster_models[0]);
    double formula = fedconcat_cost(w, c_frac, double(clients.size()), double(k),
                                    double(algo.encoder_rounds), double(algo.classifier_rounds));
    if (algo.variant == Variant::FedConcatId) {
      formula += 2.0 * w * double(clients.size());  // the extra inference round
    }
    metrics["comm_cost"] = {
        {"w", w},
        {"c", c_frac},
        {"clients", int(clients.size())},
        {"clusters", k},
        {"encoder_rounds", algo.encoder_rounds},
        {"classifier_rounds", algo.classifier_rounds},
        {"participation", algo.participation},
        {"actual_total", log.total_cost},
        {"formula_total_full_participation", formula},
        {"fedavg_parity_rounds",
         parity_fedavg_rounds(c_frac, double(k), double(algo.encoder_rounds),
                              double(algo.classifier_rounds))},
    };
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  metrics["records"] = records_to_json(log);
  metrics["summary"] = {{"final_accuracy", log.final_accuracy},
                        {"total_cost", log.total_cost},
                        {"total_bytes", log.total_cost * 8.0},
                        {"wall_time_sec", wall}};
  metrics["env"] = env_stamp(cfg, data.test);

  RunResult out;
  out.log = std::move(log);
  out.metrics_json = metrics.dump(2) + "\n";
  write_file_atomic(out_dir + "/metrics.json", out.metrics_json);
  write_file_atomic(out_dir + "/curves.csv", curves_csv(out.log));
  write_file_atomic(out_dir + "/config_resolved.json", resolved_config_json(cfg));
  return out;
}

RunResult run_probe_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                               int threads) {
  set_max_threads(resolve_threads(threads));
  auto t0 = std::chrono::steady_clock::now();

  BuiltData data = build_datasets(cfg);
  ProbeSpec probe = cfg.probe;
  if (probe.groups.empty()) {
    // default: split the label space into two halves
    int m = data.train.num_classes;
    probe.groups.resize(2);
    for (int c = 0; c < m; ++c) probe.groups[size_t(c >= m / 2)].push_back(c);
  }
  for (size_t g = 0; g < probe.groups.size(); ++g) {
    for (int label : probe.groups[g]) {
      if (label >= data.train.num_classes) {
        cfg_fail("probe.groups", "label " + std::to_string(label) + " out of range for " +
                                     std::to_string(data.train.num_classes) + " classes");
      }
    }
  }

  // one synthetic client per label group
  std::vector<ClientState> clients(probe.groups.size());
  for (size_t g = 0; g < probe.groups.size(); ++g) {
    clients[g].id = int(g);
    std::vector<bool> in_group(size_t(data.train.num_classes), false);
    for (int label : probe.groups[g]) in_group[size_t(label)] = true;
    for (int i = 0; i < data.train.n(); ++i) {
      if (in_group[size_t(data.train.labels[size_t(i)])]) clients[g].indices.push_back(i);
    }
    if (clients[g].indices.empty()) {
      cfg_fail("probe.groups", "group " + std::to_string(g) + " matches no training samples");
    }
  }

  FedConfig algo = cfg.algorithm;
  std::vector<DegradationRecord> degradation =
      track_averaging_degradation(data.train, data.test, clients, probe.rounds, probe.local_epochs,
                                  algo);

  // Appendix-style encoder exchange: train the first two clients to
  // convergence from a shared init, then probe frozen encoders.
  std::vector<int> dims = model_dims(data.train, algo);
  ModelParams shared = init_model(dims, mix_seed(algo.seed, stream::kModelInit));
  std::vector<Encoder> encoders(2);
  std::vector<Dataset> client_sets(2);
  parallel_for(2, [&](int i) {
    ModelParams trained =
        local_train(shared, data.train, clients[size_t(i)], probe.convergence_epochs, algo,
                    mix_seed(algo.seed, stream::kIdInfer, uint64_t(i)));
    encoders[size_t(i)] = split_model(trained).encoder;
    client_sets[size_t(i)] = subset(data.train, clients[size_t(i)].indices);
  });
  std::vector<int32_t> combined_rows = clients[0].indices;
  combined_rows.insert(combined_rows.end(), clients[1].indices.begin(), clients[1].indices.end());
  Dataset combined = subset(data.train, combined_rows);

  json exchange;
  json per_client = json::array();
  for (int i = 0; i < 2; ++i) {
    int other = 1 - i;
    ProbeResult own = probe_frozen_encoder(encoders[size_t(i)], client_sets[size_t(i)],
                                           client_sets[size_t(i)], probe.probe_steps, probe.probe_lr);
    ProbeResult exchanged =
        probe_frozen_encoder(encoders[size_t(other)], client_sets[size_t(i)],
                             client_sets[size_t(i)], probe.probe_steps, probe.probe_lr);
    per_client.push_back({{"client", i},
                          {"own_loss", own.loss},
                          {"own_accuracy", own.accuracy},
                          {"exchanged_loss", exchanged.loss},
                          {"exchanged_accuracy", exchanged.accuracy}});
  }
  exchange["clients"] = per_client;

  json combined_report;
  json single_loss = json::array();
  json single_acc = json::array();
  for (int i = 0; i < 2; ++i) {
    ProbeResult r =
        probe_frozen_encoder(encoders[size_t(i)], combined, combined, probe.probe_steps, probe.probe_lr);
    single_loss.push_back(r.loss);
    single_acc.push_back(r.accuracy);
  }
  GlobalEncoder both = concat_encoders({encoders[0], encoders[1]});
  ProbeResult concat_res = probe_frozen_encoder(both, combined, combined, probe.probe_steps, probe.probe_lr);
  combined_report["per_encoder_loss"] = single_loss;
  combined_report["per_encoder_accuracy"] = single_acc;
  combined_report["concat_loss"] = concat_res.loss;
  combined_report["concat_accuracy"] = concat_res.accuracy;
  exchange["combined"] = combined_report;

  json deg = json::array();
  for (const DegradationRecord& r : degradation) {
    deg.push_back({{"round", r.round},
                   {"epoch", r.epoch},
                   {"client", r.client},
                   {"phase", r.post_avg ? "post_avg" : "local"},
                   {"accuracy", r.accuracy}});
  }

  json metrics;
  metrics["records"] = json::array();
  metrics["probes"] = {{"degradation", deg}, {"encoder_exchange", exchange}};
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  metrics["summary"] = {{"wall_time_sec", wall}};
  metrics["env"] = env_stamp(cfg, data.test);

  RunResult out;
  out.metrics_json = metrics.dump(2) + "\n";
  write_file_atomic(out_dir + "/metrics.json", out.metrics_json);
  ExperimentConfig echo = cfg;
  echo.probe = probe;
  echo.has_probe = true;
  write_file_atomic(out_dir + "/config_resolved.json", resolved_config_json(echo));
  return out;
}

std::string compare_runs(const std::vector<std::string>& metrics_paths,
                         const std::string& csv_out_path) {
  if (metrics_paths.size() < 2) {
    fail(ErrorCode::InvalidArgument, "compare: need at least two metrics files");
  }

  struct RunView {
    std::string path;
    std::string variant;
    double final_accuracy = 0.0;
    double total_cost = 0.0;
    std::string test_fingerprint;
    std::vector<std::pair<double, double>> curve;  // (cum_cost, accuracy)
  };

  std::vector<RunView> runs;
  for (const std::string& path : metrics_paths) {
    std::vector<uint8_t> bytes = read_file(path);
    json j;
    try {
      j = json::parse(std::string(bytes.begin(), bytes.end()));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::Format, path + ": invalid JSON: " + e.what());
    }
    RunView v;
    v.path = path;
    if (!j.contains("summary") || !j.contains("records")) {
      fail(ErrorCode::Format, path + ": not a run metrics file (missing summary/records)");
    }
    const json& s = j.at("summary");
    if (!s.contains("final_accuracy") || !s.contains("total_cost")) {
      fail(ErrorCode::Format, path + ": summary lacks final_accuracy/total_cost (probe output?)");
    }
    v.final_accuracy = s.at("final_accuracy").get<double>();
    v.total_cost = s.at("total_cost").get<double>();
    if (j.contains("env")) {
      v.variant = j.at("env").value("variant", "?");
      v.test_fingerprint = j.at("env").value("test_fingerprint", "");
    }
    for (const json& r : j.at("records")) {
      v.curve.emplace_back(r.at("cum_cost").get<double>(), r.at("accuracy").get<double>());
    }
    runs.push_back(std::move(v));
  }

  double budget = runs[0].total_cost;
  for (const RunView& r : runs) budget = std::min(budget, r.total_cost);

  bool fp_mismatch = false;
  for (const RunView& r : runs) {
    if (r.test_fingerprint != runs[0].test_fingerprint) fp_mismatch = true;
  }

  auto acc_at = [](const RunView& r, double b) {
    double acc = 0.0;
    bool found = false;
    for (const auto& [cost, a] : r.curve) {
      if (cost <= b * (1.0 + 1e-12)) {
        acc = a;
        found = true;
      } else {
        break;
      }
    }
    return std::make_pair(found, acc);
  };

  char buf[512];
  std::string table;
  std::snprintf(buf, sizeof buf, "matched budget: %.6g transferred parameters\n", budget);
  table += buf;
  if (fp_mismatch) {
    table += "warning: runs were evaluated on different test sets; accuracies are not comparable\n";
  }
  std::snprintf(buf, sizeof buf, "%-40s %-12s %12s %16s %12s\n", "run", "variant", "final_acc",
                "total_cost", "acc@budget");
  table += buf;

  std::string csv = "run,variant,final_accuracy,total_cost,accuracy_at_budget,budget\n";
  for (const RunView& r : runs) {
    auto [found, acc] = acc_at(r, budget);
    char acc_table[32], acc_csv[32];
    if (found) {
      std::snprintf(acc_table, sizeof acc_table, "%.4f", acc);
      std::snprintf(acc_csv, sizeof acc_csv, "%.17g", acc);
    } else {
      std::snprintf(acc_table, sizeof acc_table, "n/a");
      std::snprintf(acc_csv, sizeof acc_csv, "n/a");
    }
    std::snprintf(buf, sizeof buf, "%-40s %-12s %12.4f %16.6g %12s\n", r.path.c_str(),
                  r.variant.c_str(), r.final_accuracy, r.total_cost, acc_table);
    table += buf;
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%s,%.17g\n", r.path.c_str(),
                  r.variant.c_str(), r.final_accuracy, r.total_cost, acc_csv, budget);
    csv += buf;
  }

  if (!csv_out_path.empty()) write_file_atomic(csv_out_path, csv);
  return table;
}

}  // namespace fedlab
