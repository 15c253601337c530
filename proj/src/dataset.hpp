#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "matrix.hpp"

namespace fedlab {

struct Dataset {
  Matrix inputs;                // n x d, features in [0, 1]
  std::vector<int32_t> labels;  // values in [0, num_classes)
  int num_classes = 0;

  int n() const { return inputs.rows(); }
  int dim() const { return inputs.cols(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Gaussian blobs: one uniformly drawn center per class in [0,1]^d, samples =
// center + spread * gauss, clipped to [0,1]. Rows are class-major (all of
// class 0 first). Balanced: per_class samples for every class.
Dataset gen_blobs(int classes, int dim, int per_class, double spread, uint64_t seed);

// Train/test cut of a single blob draw, so both splits share class centers:
// generates per_class_train + per_class_test samples per class and cuts each
// class block.
std::pair<Dataset, Dataset> gen_blobs_split(int classes, int dim, int per_class_train,
                                            int per_class_test, double spread, uint64_t seed);

// FDS1 container: "FDS1", u32 n, u32 d, u32 m, n*d f64 LE row-major features,
// n u16 LE labels. Round-trips bit-exactly.
std::vector<uint8_t> serialize_dataset(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::vector<int64_t> class_counts(const Dataset& ds);
Dataset subset(const Dataset& ds, const std::vector<int32_t>& indices);
uint64_t fingerprint(const Dataset& ds);

}  // namespace fedlab
