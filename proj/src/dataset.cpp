#include "dataset.hpp"

#include <cstring>

#include "io.hpp"
#include "rng.hpp"

namespace fedlab {

Dataset gen_blobs(int classes, int dim, int per_class, double spread, uint64_t seed) {
  if (classes < 2) fail(ErrorCode::InvalidArgument, "gen_blobs: classes must be >= 2");
  if (dim < 1) fail(ErrorCode::InvalidArgument, "gen_blobs: dim must be >= 1");
  if (per_class < 1) fail(ErrorCode::InvalidArgument, "gen_blobs: per_class must be >= 1");
  if (!(spread > 0.0)) fail(ErrorCode::InvalidArgument, "gen_blobs: spread must be > 0");

  Matrix centers(classes, dim);
  Rng center_rng(mix_seed(seed, stream::kBlobCenters));
  for (double& v : centers.data()) v = center_rng.uniform();

  Dataset ds;
  ds.num_classes = classes;
  ds.inputs = Matrix(classes * per_class, dim);
  ds.labels.resize(size_t(classes) * size_t(per_class));

  Rng noise_rng(mix_seed(seed, stream::kBlobNoise));
  int row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      double* x = ds.inputs.row(row);
      const double* mu = centers.row(c);
      for (int j = 0; j < dim; ++j) {
        double v = mu[j] + spread * noise_rng.gauss();
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        x[j] = v;
      }
      ds.labels[size_t(row)] = c;
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> gen_blobs_split(int classes, int dim, int per_class_train,
                                            int per_class_test, double spread, uint64_t seed) {
  if (per_class_train < 1 || per_class_test < 1) {
    fail(ErrorCode::InvalidArgument, "gen_blobs_split: per-class sizes must be >= 1");
  }
  Dataset all = gen_blobs(classes, dim, per_class_train + per_class_test, spread, seed);
  std::vector<int32_t> train_idx, test_idx;
  int per_class = per_class_train + per_class_test;
  for (int c = 0; c < classes; ++c) {
    int base = c * per_class;
    for (int i = 0; i < per_class_train; ++i) train_idx.push_back(base + i);
    for (int i = per_class_train; i < per_class; ++i) test_idx.push_back(base + i);
  }
  return {subset(all, train_idx), subset(all, test_idx)};
}

namespace {
constexpr char kDataMagic[4] = {'F', 'D', 'S', '1'};
}

std::vector<uint8_t> serialize_dataset(const Dataset& ds) {
  std::vector<uint8_t> out;
  out.reserve(16 + ds.inputs.data().size() * 8 + ds.labels.size() * 2);
  out.insert(out.end(), kDataMagic, kDataMagic + 4);
  put_u32_le(out, uint32_t(ds.n()));
  put_u32_le(out, uint32_t(ds.dim()));
  put_u32_le(out, uint32_t(ds.num_classes));
  for (double v : ds.inputs.data()) put_f64_le(out, v);
  for (int32_t y : ds.labels) put_u16_le(out, uint16_t(y));
  return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  if (ds.num_classes < 2 || ds.num_classes > 65535) {
    fail(ErrorCode::InvalidArgument, "save_dataset: class count out of u16 range");
  }
  write_file_atomic(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  auto bad = [&](size_t offset, const std::string& msg) {
    fail(ErrorCode::Format, path + ": " + msg + " (offset " + std::to_string(offset) + ")");
  };
  if (bytes.size() < 16) bad(0, "truncated header");
  if (std::memcmp(bytes.data(), kDataMagic, 4) != 0) bad(0, "bad magic, want FDS1");
  uint32_t n = get_u32_le(bytes.data() + 4);
  uint32_t d = get_u32_le(bytes.data() + 8);
  uint32_t m = get_u32_le(bytes.data() + 12);
  if (n < 1) bad(4, "sample count must be >= 1");
  if (d < 1) bad(8, "feature dim must be >= 1");
  if (m < 2 || m > 65535) bad(12, "class count " + std::to_string(m) + " out of range [2, 65535]");
  size_t expect = 16 + size_t(n) * size_t(d) * 8 + size_t(n) * 2;
  if (bytes.size() != expect) {
    bad(std::min(bytes.size(), expect), "size mismatch: have " + std::to_string(bytes.size()) +
                                            " bytes, want " + std::to_string(expect));
  }

  Dataset ds;
  ds.num_classes = int(m);
  ds.inputs = Matrix(int(n), int(d));
  size_t off = 16;
  for (double& v : ds.inputs.data()) {
    v = get_f64_le(bytes.data() + off);
    off += 8;
  }
  ds.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint16_t y = get_u16_le(bytes.data() + off);
    if (y >= m) {
      bad(off, "label " + std::to_string(y) + " out of range for " + std::to_string(m) + " classes");
    }
    ds.labels[i] = int32_t(y);
    off += 2;
  }
  return ds;
}

std::vector<int64_t> class_counts(const Dataset& ds) {
  std::vector<int64_t> counts(size_t(ds.num_classes), 0);
  for (int32_t y : ds.labels) {
    if (y < 0 || y >= ds.num_classes) {
      fail(ErrorCode::InvalidArgument, "class_counts: label out of range");
    }
    ++counts[size_t(y)];
  }
  return counts;
}

Dataset subset(const Dataset& ds, const std::vector<int32_t>& indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.inputs = Matrix(int(indices.size()), ds.dim());
  out.labels.resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    int32_t src = indices[i];
    if (src < 0 || src >= ds.n()) fail(ErrorCode::InvalidArgument, "subset: index out of range");
    std::memcpy(out.inputs.row(int(i)), ds.inputs.row(src), size_t(ds.dim()) * sizeof(double));
    out.labels[i] = ds.labels[size_t(src)];
  }
  return out;
}

uint64_t fingerprint(const Dataset& ds) { return fnv1a64(serialize_dataset(ds)); }

}  // namespace fedlab
