#include "fedlab.h"

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "experiment.hpp"

using namespace fedlab;

struct fedlab_dataset {
  Dataset data;
  std::vector<int32_t> labels32;  // exposed label view
};

namespace {

thread_local std::string g_last_error;

fedlab_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return FEDLAB_ERR_INVALID_ARGUMENT;
    case ErrorCode::Config: return FEDLAB_ERR_CONFIG;
    case ErrorCode::Format: return FEDLAB_ERR_FORMAT;
    case ErrorCode::Io: return FEDLAB_ERR_IO;
    case ErrorCode::Numeric: return FEDLAB_ERR_NUMERIC;
    case ErrorCode::Internal: return FEDLAB_ERR_INTERNAL;
  }
  return FEDLAB_ERR_INTERNAL;
}

template <typename Fn>
fedlab_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FEDLAB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FEDLAB_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FEDLAB_ERR_INTERNAL;
  }
}

fedlab_status bad_arg(const char* msg) {
  g_last_error = msg;
  return FEDLAB_ERR_INVALID_ARGUMENT;
}

fedlab_dataset* wrap(Dataset&& ds) {
  auto* h = new fedlab_dataset;
  h->data = std::move(ds);
  h->labels32 = h->data.labels;
  return h;
}

fedlab_status run_common(const char* config_path, const char* out_dir, int64_t seed_override,
                         int32_t threads, bool probe) {
  if (config_path == nullptr || out_dir == nullptr) {
    return bad_arg("config_path and out_dir are required");
  }
  return guarded([&] {
    ExperimentConfig cfg = load_experiment_config(config_path, probe);
    if (seed_override >= 0) apply_seed_override(cfg, uint64_t(seed_override));
    std::filesystem::create_directories(out_dir);
    if (probe) {
      run_probe_experiment(cfg, out_dir, threads);
    } else {
      run_experiment(cfg, out_dir, threads);
    }
  });
}

}  // namespace

extern "C" {

const char* fedlab_version(void) { return "0.1.0"; }

const char* fedlab_last_error(void) { return g_last_error.c_str(); }

fedlab_status fedlab_dataset_generate(int32_t classes, int32_t dim, int32_t per_class,
                                      double spread, uint64_t seed, fedlab_dataset** out) {
  if (out == nullptr) return bad_arg("out is required");
  *out = nullptr;
  return guarded([&] { *out = wrap(gen_blobs(classes, dim, per_class, spread, seed)); });
}

fedlab_status fedlab_dataset_generate_split(int32_t classes, int32_t dim,
                                            int32_t train_per_class, int32_t test_per_class,
                                            double spread, uint64_t seed,
                                            fedlab_dataset** out_train,
                                            fedlab_dataset** out_test) {
  if (out_train == nullptr && out_test == nullptr) {
    return bad_arg("at least one of out_train/out_test is required");
  }
  if (out_train != nullptr) *out_train = nullptr;
  if (out_test != nullptr) *out_test = nullptr;
  return guarded([&] {
    auto pair = gen_blobs_split(classes, dim, train_per_class, test_per_class, spread, seed);
    if (out_train != nullptr) *out_train = wrap(std::move(pair.first));
    if (out_test != nullptr) *out_test = wrap(std::move(pair.second));
  });
}

fedlab_status fedlab_dataset_load(const char* path, fedlab_dataset** out) {
  if (path == nullptr || out == nullptr) return bad_arg("path and out are required");
  *out = nullptr;
  return guarded([&] { *out = wrap(load_dataset(path)); });
}

fedlab_status fedlab_dataset_save(const fedlab_dataset* ds, const char* path) {
  if (ds == nullptr || path == nullptr) return bad_arg("dataset and path are required");
  return guarded([&] { save_dataset(ds->data, path); });
}

int32_t fedlab_dataset_samples(const fedlab_dataset* ds) { return ds ? ds->data.n() : 0; }

int32_t fedlab_dataset_dim(const fedlab_dataset* ds) { return ds ? ds->data.dim() : 0; }

int32_t fedlab_dataset_classes(const fedlab_dataset* ds) { return ds ? ds->data.num_classes : 0; }

const double* fedlab_dataset_features(const fedlab_dataset* ds) {
  return ds ? ds->data.inputs.data().data() : nullptr;
}

const int32_t* fedlab_dataset_labels(const fedlab_dataset* ds) {
  return ds ? ds->labels32.data() : nullptr;
}

void fedlab_dataset_free(fedlab_dataset* ds) { delete ds; }

fedlab_status fedlab_run_experiment(const char* config_path, const char* out_dir,
                                    int64_t seed_override, int32_t threads) {
  return run_common(config_path, out_dir, seed_override, threads, /*probe=*/false);
}

fedlab_status fedlab_probe_experiment(const char* config_path, const char* out_dir,
                                      int64_t seed_override, int32_t threads) {
  return run_common(config_path, out_dir, seed_override, threads, /*probe=*/true);
}

fedlab_status fedlab_compare_runs(const char* const* metrics_paths, int32_t count,
                                  const char* csv_out_path, char** out_table) {
  if (out_table == nullptr) return bad_arg("out_table is required");
  *out_table = nullptr;
  if (metrics_paths == nullptr || count < 1) return bad_arg("metrics_paths must be non-empty");
  return guarded([&] {
    std::vector<std::string> paths;
    for (int32_t i = 0; i < count; ++i) {
      if (metrics_paths[i] == nullptr) fail(ErrorCode::InvalidArgument, "NULL metrics path");
      paths.emplace_back(metrics_paths[i]);
    }
    std::string table = compare_runs(paths, csv_out_path ? csv_out_path : "");
    char* buf = new char[table.size() + 1];
    std::memcpy(buf, table.data(), table.size() + 1);
    *out_table = buf;
  });
}

void fedlab_string_free(char* s) { delete[] s; }

}  // extern "C"
