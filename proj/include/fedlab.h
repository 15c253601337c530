/* fedlab — deterministic federated-learning simulation library.
 *
 * C API. All functions return a fedlab_status; every failure leaves a
 * human-readable message retrievable via fedlab_last_error() (thread-local).
 * Handles are opaque and must be released with the matching *_free call.
 */
#ifndef FEDLAB_H
#define FEDLAB_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedlab_status {
  FEDLAB_OK = 0,
  FEDLAB_ERR_INVALID_ARGUMENT = 1,
  FEDLAB_ERR_CONFIG = 2,
  FEDLAB_ERR_FORMAT = 3,
  FEDLAB_ERR_IO = 4,
  FEDLAB_ERR_NUMERIC = 5,
  FEDLAB_ERR_INTERNAL = 6
} fedlab_status;

/* Library version, e.g. "0.1.0". Static storage; do not free. */
const char* fedlab_version(void);

/* Message for the most recent failure on this thread ("" if none). The
 * pointer stays valid until the next fedlab_* call on the same thread. */
const char* fedlab_last_error(void);

/* ---- datasets ------------------------------------------------------- */

typedef struct fedlab_dataset fedlab_dataset;

/* Gaussian-blob classification set: `classes` clusters in [0,1]^dim,
 * `per_class` samples each. Deterministic in `seed`. */
fedlab_status fedlab_dataset_generate(int32_t classes, int32_t dim, int32_t per_class,
                                      double spread, uint64_t seed, fedlab_dataset** out);

/* Train/test split drawn from the same blob centers. Either output may be
 * NULL if that half is not wanted. */
fedlab_status fedlab_dataset_generate_split(int32_t classes, int32_t dim,
                                            int32_t train_per_class, int32_t test_per_class,
                                            double spread, uint64_t seed,
                                            fedlab_dataset** out_train,
                                            fedlab_dataset** out_test);

fedlab_status fedlab_dataset_load(const char* path, fedlab_dataset** out);
fedlab_status fedlab_dataset_save(const fedlab_dataset* ds, const char* path);

/* Accessors; return 0/NULL on a NULL handle. */
int32_t fedlab_dataset_samples(const fedlab_dataset* ds);
int32_t fedlab_dataset_dim(const fedlab_dataset* ds);
int32_t fedlab_dataset_classes(const fedlab_dataset* ds);
/* Row-major feature matrix (samples x dim) and label array. Valid while the
 * handle lives. */
const double* fedlab_dataset_features(const fedlab_dataset* ds);
const int32_t* fedlab_dataset_labels(const fedlab_dataset* ds);

void fedlab_dataset_free(fedlab_dataset* ds);

/* ---- experiments ----------------------------------------------------- */

/* Run the experiment described by the JSON config at `config_path`, writing
 * metrics.json / curves.csv / config_resolved.json / model checkpoints into
 * `out_dir` (created if missing; overrides the config's output_dir).
 *
 * seed_override >= 0 replaces the algorithm seed and re-derives the dataset
 * and partition seeds from it; pass -1 to keep the config's seeds.
 * threads <= 0 means "use FEDLAB_THREADS or 1". */
fedlab_status fedlab_run_experiment(const char* config_path, const char* out_dir,
                                    int64_t seed_override, int32_t threads);

/* Analysis probes (averaging degradation + frozen-encoder exchange) for the
 * same config schema, plus an optional "probe" section. */
fedlab_status fedlab_probe_experiment(const char* config_path, const char* out_dir,
                                      int64_t seed_override, int32_t threads);

/* Compare >= 2 runs by their metrics.json files at a matched communication
 * budget. On success *out_table holds a text table (free with
 * fedlab_string_free). csv_out_path may be NULL to skip the CSV. */
fedlab_status fedlab_compare_runs(const char* const* metrics_paths, int32_t count,
                                  const char* csv_out_path, char** out_table);

void fedlab_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* FEDLAB_H */
