#include <cmath>
#include <filesystem>
#include <vector>

#include "dataset.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "io.hpp"

using namespace fedlab;

namespace {

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "fedlab_dataset_tests";
  std::filesystem::create_directories(p);
  return p;
}

std::vector<double> class_mean(const Dataset& ds, int cls) {
  std::vector<double> mean(size_t(ds.dim()), 0.0);
  int count = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.labels[size_t(i)] != cls) continue;
    ++count;
    for (int j = 0; j < ds.dim(); ++j) mean[size_t(j)] += ds.inputs(i, j);
  }
  for (double& v : mean) v /= count;
  return mean;
}

}  // namespace

TEST_CASE("gen_blobs: shape, balance, range, class-major order, determinism") {
  Dataset ds = gen_blobs(4, 6, 25, 0.1, 42);
  CHECK(ds.n() == 100);
  CHECK(ds.dim() == 6);
  CHECK(ds.num_classes == 4);

  std::vector<int64_t> counts = class_counts(ds);
  for (int64_t c : counts) CHECK(c == 25);

  for (int i = 0; i < ds.n(); ++i) {
    CHECK(ds.labels[size_t(i)] == i / 25);  // class-major rows
    for (int j = 0; j < ds.dim(); ++j) {
      CHECK(ds.inputs(i, j) >= 0.0);
      CHECK(ds.inputs(i, j) <= 1.0);
    }
  }

  CHECK(gen_blobs(4, 6, 25, 0.1, 42) == ds);
  CHECK(gen_blobs(4, 6, 25, 0.1, 43) != ds);
}

TEST_CASE("gen_blobs: samples cluster near their class center") {
  // tight spread: within-class scatter must be far below between-class spread
  Dataset ds = gen_blobs(5, 8, 200, 0.02, 7);
  std::vector<std::vector<double>> means;
  for (int c = 0; c < 5; ++c) means.push_back(class_mean(ds, c));

  double min_between = 1e9;
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      double d2 = 0.0;
      for (int j = 0; j < 8; ++j) {
        double diff = means[size_t(a)][size_t(j)] - means[size_t(b)][size_t(j)];
        d2 += diff * diff;
      }
      min_between = std::min(min_between, std::sqrt(d2));
    }
  }

  double max_within = 0.0;
  for (int i = 0; i < ds.n(); ++i) {
    const auto& mu = means[size_t(ds.labels[size_t(i)])];
    double d2 = 0.0;
    for (int j = 0; j < 8; ++j) {
      double diff = ds.inputs(i, j) - mu[size_t(j)];
      d2 += diff * diff;
    }
    max_within = std::max(max_within, std::sqrt(d2));
  }
  CHECK(max_within < min_between);
}

TEST_CASE("gen_blobs_split shares centers between train and test") {
  auto [train, test] = gen_blobs_split(3, 5, 300, 100, 0.05, 11);
  CHECK(train.n() == 900);
  CHECK(test.n() == 300);
  CHECK(train.num_classes == 3);
  CHECK(test.num_classes == 3);
  for (int64_t c : class_counts(train)) CHECK(c == 300);
  for (int64_t c : class_counts(test)) CHECK(c == 100);

  // same centers => per-class means agree to sampling error (sigma/sqrt(n))
  for (int c = 0; c < 3; ++c) {
    auto mt = class_mean(train, c);
    auto me = class_mean(test, c);
    for (int j = 0; j < 5; ++j) {
      CHECK(std::fabs(mt[size_t(j)] - me[size_t(j)]) < 0.02);
    }
  }
}

TEST_CASE("gen_blobs input validation") {
  CHECK_THROWS_AS((void)gen_blobs(1, 4, 10, 0.1, 0), Error);
  CHECK_THROWS_AS((void)gen_blobs(3, 0, 10, 0.1, 0), Error);
  CHECK_THROWS_AS((void)gen_blobs(3, 4, 0, 0.1, 0), Error);
  CHECK_THROWS_AS((void)gen_blobs(3, 4, 10, 0.0, 0), Error);
}

TEST_CASE("FDS1 round trip is bit exact") {
  auto dir = tmp_dir();
  Dataset ds = gen_blobs(3, 4, 17, 0.2, 5);
  std::string path = (dir / "data.fds").string();
  save_dataset(ds, path);
  Dataset loaded = load_dataset(path);
  CHECK(loaded == ds);
  CHECK(fingerprint(loaded) == fingerprint(ds));
}

TEST_CASE("FDS1 loader pinpoints corruption with byte offsets") {
  auto dir = tmp_dir();
  Dataset ds = gen_blobs(3, 2, 5, 0.2, 1);
  std::vector<uint8_t> bytes = serialize_dataset(ds);

  auto expect_format_error = [&](std::vector<uint8_t> data, const char* name,
                                 const char* needle) {
    std::string path = (dir / name).string();
    write_file_atomic(path, data);
    try {
      (void)load_dataset(path);
      FAIL_CHECK("expected a format error for ", name);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Format);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  };

  std::vector<uint8_t> bad_magic = bytes;
  bad_magic[1] = 'X';
  expect_format_error(bad_magic, "bad_magic.fds", "magic");

  std::vector<uint8_t> short_header(bytes.begin(), bytes.begin() + 10);
  expect_format_error(short_header, "short.fds", "truncated");

  std::vector<uint8_t> short_body(bytes.begin(), bytes.end() - 3);
  expect_format_error(short_body, "short_body.fds", "size mismatch");

  // label out of range: last two bytes are the last u16 label
  std::vector<uint8_t> bad_label = bytes;
  bad_label[bad_label.size() - 2] = 99;
  bad_label[bad_label.size() - 1] = 0;
  expect_format_error(bad_label, "bad_label.fds", "label");

  // class count out of range
  std::vector<uint8_t> bad_m = bytes;
  bad_m[12] = 1;
  bad_m[13] = 0;
  bad_m[14] = 0;
  bad_m[15] = 0;
  expect_format_error(bad_m, "bad_m.fds", "class count");
}

TEST_CASE("load_dataset on a missing path is an io error") {
  try {
    (void)load_dataset((tmp_dir() / "nope.fds").string());
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}

TEST_CASE("subset keeps rows, labels and class count") {
  Dataset ds = gen_blobs(3, 4, 10, 0.2, 9);
  Dataset sub = subset(ds, {0, 10, 29});
  CHECK(sub.n() == 3);
  CHECK(sub.num_classes == 3);
  CHECK(sub.labels == std::vector<int32_t>{0, 1, 2});
  for (int j = 0; j < 4; ++j) {
    CHECK(sub.inputs(0, j) == ds.inputs(0, j));
    CHECK(sub.inputs(1, j) == ds.inputs(10, j));
    CHECK(sub.inputs(2, j) == ds.inputs(29, j));
  }
  CHECK_THROWS_AS((void)subset(ds, {30}), Error);
}

TEST_CASE("dataset fingerprint tracks content") {
  Dataset a = gen_blobs(3, 4, 10, 0.2, 9);
  Dataset b = a;
  CHECK(fingerprint(a) == fingerprint(b));
  b.inputs(0, 0) += 1e-12;
  CHECK(fingerprint(a) != fingerprint(b));
}
