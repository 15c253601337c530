#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "clustering.hpp"
#include "dataset.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "nn.hpp"

using namespace fedlab;

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

// global k=2 optimum by enumerating every 2-coloring
double brute_force_wcss2(const std::vector<std::vector<double>>& pts) {
  size_t n = pts.size();
  size_t d = pts[0].size();
  double best = 1e300;
  for (uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<std::vector<double>> centroids(2, std::vector<double>(d, 0.0));
    std::vector<int> count(2, 0);
    for (size_t i = 0; i < n; ++i) {
      int g = (mask >> i) & 1;
      ++count[size_t(g)];
      for (size_t j = 0; j < d; ++j) centroids[size_t(g)][j] += pts[i][j];
    }
    if (count[0] == 0 || count[1] == 0) continue;
    for (int g = 0; g < 2; ++g) {
      for (size_t j = 0; j < d; ++j) centroids[size_t(g)][j] /= count[size_t(g)];
    }
    double obj = 0.0;
    for (size_t i = 0; i < n; ++i) {
      int g = (mask >> i) & 1;
      for (size_t j = 0; j < d; ++j) {
        double diff = pts[i][j] - centroids[size_t(g)][j];
        obj += diff * diff;
      }
    }
    best = std::min(best, obj);
  }
  return best;
}

}  // namespace

TEST_CASE("label_distribution matches counts / N") {
  Dataset ds = gen_blobs(4, 3, 10, 0.2, 1);  // labels 0..3, 10 each, class-major
  LabelDistVector d = label_distribution(ds, {0, 1, 2, 10, 39}, 7);
  CHECK(d.client_id == 7);
  CHECK(d.source == DistSource::True);
  REQUIRE(d.probs.size() == 4);
  CHECK(d.probs[0] == doctest::Approx(3.0 / 5.0));
  CHECK(d.probs[1] == doctest::Approx(1.0 / 5.0));
  CHECK(d.probs[2] == 0.0);
  CHECK(d.probs[3] == doctest::Approx(1.0 / 5.0));
  double sum = 0.0;
  for (double p : d.probs) sum += p;
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("make_probes: deterministic uniform inputs in [0,1)") {
  Matrix a = make_probes(100, 7, 3);
  Matrix b = make_probes(100, 7, 3);
  Matrix c = make_probes(100, 7, 4);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.rows() == 100);
  CHECK(a.cols() == 7);
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("infer_label_distribution is the mean softmax over probes") {
  // bias-only model: softmax([0, 0, ln 2]) = [1/4, 1/4, 1/2] for every input
  ModelParams m;
  m.layer_dims = {2, 3};
  m.weights = {Matrix(2, 3)};  // zeros
  m.biases = {{0.0, 0.0, std::log(2.0)}};

  LabelDistVector d = infer_label_distribution(m, 50, 2, 9, 3);
  CHECK(d.source == DistSource::Inferred);
  CHECK(d.client_id == 3);
  CHECK(d.probs[0] == doctest::Approx(0.25));
  CHECK(d.probs[1] == doctest::Approx(0.25));
  CHECK(d.probs[2] == doctest::Approx(0.5));

  // column-mean property against a by-hand reduction
  ModelParams m2 = init_model({2, 4, 3}, 5);
  Matrix probes = make_probes(20, 2, 9);
  LabelDistVector dv = infer_label_distribution(m2, probes, 0);
  Matrix soft = softmax_rows(forward(m2, probes).logits);
  for (int j = 0; j < 3; ++j) {
    double col = 0.0;
    for (int i = 0; i < 20; ++i) col += soft(i, j);
    CHECK(dv.probs[size_t(j)] == doctest::Approx(col / 20.0).epsilon(1e-12));
  }

  // overload equivalence
  LabelDistVector dv2 = infer_label_distribution(m2, 20, 2, 9, 0);
  CHECK(dv.probs == dv2.probs);
}

TEST_CASE("project_to_simplex clips, renormalizes, handles all-zero") {
  std::vector<double> v = project_to_simplex({0.5, -0.3, 0.5});
  CHECK(v[0] == doctest::Approx(0.5));
  CHECK(v[1] == 0.0);
  CHECK(v[2] == doctest::Approx(0.5));

  std::vector<double> z = project_to_simplex({-1.0, -2.0, -3.0, -4.0});
  for (double p : z) CHECK(p == doctest::Approx(0.25));

  std::vector<double> w = project_to_simplex({3.0, 1.0});
  CHECK(w[0] == doctest::Approx(0.75));
  CHECK(w[1] == doctest::Approx(0.25));
}

TEST_CASE("laplace_noise: deterministic, simplex output, less distortion at high epsilon") {
  LabelDistVector d;
  d.probs = {0.7, 0.2, 0.1, 0.0};
  d.client_id = 2;

  LabelDistVector a = laplace_noise(d, 2.5, 11);
  LabelDistVector b = laplace_noise(d, 2.5, 11);
  CHECK(a.probs == b.probs);
  CHECK(a.source == DistSource::DpNoised);
  CHECK(laplace_noise(d, 2.5, 12).probs != a.probs);

  double sum = 0.0;
  for (double p : a.probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0));

  auto mean_l1 = [&](double eps) {
    double total = 0.0;
    for (uint64_t s = 0; s < 300; ++s) total += l1(laplace_noise(d, eps, s).probs, d.probs);
    return total / 300.0;
  };
  double noisy = mean_l1(0.5);
  double mid = mean_l1(2.5);
  double calm = mean_l1(50.0);
  CHECK(noisy > mid);
  CHECK(mid > calm);
  CHECK(calm < 0.1);
}

TEST_CASE("wcss oracle") {
  std::vector<std::vector<double>> pts = {{0.0, 0.0}, {2.0, 0.0}, {10.0, 0.0}};
  std::vector<int> labels = {0, 0, 1};
  std::vector<std::vector<double>> centroids = {{1.0, 0.0}, {10.0, 0.0}};
  CHECK(wcss(pts, labels, centroids) == doctest::Approx(2.0));  // 1 + 1 + 0
}

TEST_CASE("kmeans separates two obvious groups exactly") {
  std::vector<std::vector<double>> pts = {{0.0, 0.0}, {0.0, 0.1}, {10.0, 10.0}, {10.0, 10.1}};
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ClusterAssignment a = kmeans(pts, 2, seed);
    CHECK(a.k == 2);
    CHECK(a.labels[0] == a.labels[1]);
    CHECK(a.labels[2] == a.labels[3]);
    CHECK(a.labels[0] != a.labels[2]);
    CHECK(a.objective == doctest::Approx(0.005 * 2));  // two pairs at d^2 = 0.0025*2... per pair
  }
}

TEST_CASE("kmeans finds the global two-cluster optimum on a small instance") {
  // 8 points, two tight groups; brute force certifies the optimum. The jitter
  // is irregular on purpose: a symmetric grid has exact distance ties that
  // admit a second Lloyd fixpoint, which is not what this test is about.
  std::vector<std::vector<double>> pts = {
      {0.00, 0.00}, {0.13, 0.07}, {0.05, 0.19}, {0.21, 0.12},
      {5.00, 5.00}, {5.17, 5.06}, {5.04, 5.23}, {5.11, 5.14},
  };
  double best = brute_force_wcss2(pts);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ClusterAssignment a = kmeans(pts, 2, seed);
    CHECK(a.objective == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("kmeans invariants: label range, non-empty clusters, monotone history") {
  Dataset ds = gen_blobs(6, 5, 40, 0.4, 8);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < ds.n(); i += 4) {
    pts.push_back(std::vector<double>(ds.inputs.row(i), ds.inputs.row(i) + ds.dim()));
  }
  ClusterAssignment a = kmeans(pts, 4, 3);
  std::set<int> used;
  for (int label : a.labels) {
    CHECK(label >= 0);
    CHECK(label < 4);
    used.insert(label);
  }
  CHECK(int(used.size()) == 4);
  for (size_t i = 1; i < a.wcss_history.size(); ++i) {
    CHECK(a.wcss_history[i] <= a.wcss_history[i - 1] + 1e-9);
  }
  CHECK(a.objective == doctest::Approx(wcss(pts, a.labels, a.centroids)));

  ClusterAssignment b = kmeans(pts, 4, 3);
  CHECK(a.labels == b.labels);  // same seed, same everything
}

TEST_CASE("kmeans argument validation") {
  std::vector<std::vector<double>> pts = {{0.0}, {1.0}};
  CHECK_THROWS_AS((void)kmeans(pts, 0, 0), Error);
  CHECK_THROWS_AS((void)kmeans(pts, 3, 0), Error);  // k > N
}

TEST_CASE("kmeans_balanced enforces the size cap") {
  // 9 points near the origin + 1 far away: plain kmeans gives sizes {9, 1}
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 9; ++i) pts.push_back({double(i) * 0.01, 0.0});
  pts.push_back({100.0, 0.0});

  ClusterAssignment plain = kmeans(pts, 2, 1);
  std::vector<int> plain_sizes(2, 0);
  for (int label : plain.labels) ++plain_sizes[size_t(label)];
  std::sort(plain_sizes.begin(), plain_sizes.end());
  CHECK(plain_sizes == std::vector<int>{1, 9});

  ClusterAssignment bal = kmeans_balanced(pts, 2, 1);  // cap = ceil(1.2*10/2) = 6
  std::vector<int> sizes(2, 0);
  for (int label : bal.labels) ++sizes[size_t(label)];
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<int>{4, 6});
  CHECK(bal.objective >= plain.objective - 1e-12);  // balance can only cost WCSS
  CHECK(bal.objective == doctest::Approx(wcss(pts, bal.labels, bal.centroids)));
}

TEST_CASE("kmeans_balanced cap property on random points") {
  Dataset ds = gen_blobs(5, 4, 30, 0.5, 12);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < ds.n(); i += 3) {
    pts.push_back(std::vector<double>(ds.inputs.row(i), ds.inputs.row(i) + ds.dim()));
  }
  int n = int(pts.size());
  int k = 5;
  int cap = int(std::ceil(1.2 * double(n) / double(k)));
  ClusterAssignment a = kmeans_balanced(pts, k, 7);
  std::vector<int> sizes(size_t(k), 0);
  for (int label : a.labels) ++sizes[size_t(label)];
  for (int s : sizes) {
    CHECK(s >= 1);
    CHECK(s <= cap);
  }
}

TEST_CASE("kmeans_balanced rejects an unsatisfiable cap") {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({double(i)});
  try {
    (void)kmeans_balanced(pts, 2, 0, 0.4);  // cap = 2, 2*2 < 10
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }
}

TEST_CASE("elbow picks the knee of the WCSS curve") {
  // three tight groups on an equilateral triangle: with equal pair distances
  // the 1->2 WCSS drop is flat and the 2->3 drop is the knee
  std::vector<std::vector<double>> centers = {{0.0, 0.0}, {10.0, 0.0}, {5.0, 8.66}};
  std::vector<std::vector<double>> pts;
  for (const auto& c : centers) {
    for (int i = 0; i < 8; ++i) {
      pts.push_back({c[0] + 0.01 * i, c[1] + 0.005 * i});
    }
  }
  CHECK(elbow_select_k(pts, 8, 0) == 3);
  CHECK(elbow_select_k(pts, 2, 0) == 2);  // degenerate sweep
}
