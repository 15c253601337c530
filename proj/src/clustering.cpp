#include "clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rng.hpp"

namespace fedlab {

LabelDistVector label_distribution(const Dataset& ds, const std::vector<int32_t>& indices,
                                   int client_id) {
  if (indices.empty()) fail(ErrorCode::InvalidArgument, "label_distribution: client has no samples");
  LabelDistVector out;
  out.source = DistSource::True;
  out.client_id = client_id;
  out.probs.assign(size_t(ds.num_classes), 0.0);
  for (int32_t i : indices) {
    int32_t y = ds.labels[size_t(i)];
    if (y < 0 || y >= ds.num_classes) {
      fail(ErrorCode::InvalidArgument, "label_distribution: label out of range");
    }
    out.probs[size_t(y)] += 1.0;
  }
  double inv = 1.0 / double(indices.size());
  for (double& p : out.probs) p *= inv;
  return out;
}

Matrix make_probes(int probe_count, int dim, uint64_t seed) {
  if (probe_count < 1) fail(ErrorCode::InvalidArgument, "make_probes: probe_count must be >= 1");
  Matrix probes(probe_count, dim);
  Rng rng(mix_seed(seed, stream::kProbes));
  for (double& v : probes.data()) v = rng.uniform();
  return probes;
}

LabelDistVector infer_label_distribution(const ModelParams& model, const Matrix& probes,
                                         int client_id) {
  Matrix p = softmax_rows(forward(model, probes).logits);
  LabelDistVector out;
  out.source = DistSource::Inferred;
  out.client_id = client_id;
  out.probs.assign(size_t(p.cols()), 0.0);
  for (int r = 0; r < p.rows(); ++r) {
    const double* row = p.row(r);
    for (int c = 0; c < p.cols(); ++c) out.probs[size_t(c)] += row[c];
  }
  double inv = 1.0 / double(p.rows());
  for (double& v : out.probs) v *= inv;
  return out;
}

LabelDistVector infer_label_distribution(const ModelParams& model, int probe_count, int dim,
                                         uint64_t seed, int client_id) {
  return infer_label_distribution(model, make_probes(probe_count, dim, seed), client_id);
}

std::vector<double> project_to_simplex(std::vector<double> v) {
  double total = 0.0;
  for (double& x : v) {
    if (x < 0.0) x = 0.0;
    total += x;
  }
  if (total <= 0.0) {
    double u = 1.0 / double(v.size());
    for (double& x : v) x = u;
    return v;
  }
  for (double& x : v) x /= total;
  return v;
}

LabelDistVector laplace_noise(const LabelDistVector& dist, double epsilon, uint64_t seed) {
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "laplace_noise: epsilon must be > 0");
  Rng rng(mix_seed(seed, stream::kDpNoise));
  LabelDistVector out;
  out.source = DistSource::DpNoised;
  out.client_id = dist.client_id;
  out.probs = dist.probs;
  double scale = 1.0 / epsilon;  // sensitivity of a label distribution is 1
  for (double& p : out.probs) p += rng.laplace(scale);
  out.probs = project_to_simplex(std::move(out.probs));
  return out;
}

double wcss(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
            const std::vector<std::vector<double>>& centroids) {
  double total = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const std::vector<double>& p = points[i];
    const std::vector<double>& c = centroids[size_t(labels[i])];
    for (size_t j = 0; j < p.size(); ++j) {
      double d = p[j] - c[j];
      total += d * d;
    }
  }
  return total;
}

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    total += d * d;
  }
  return total;
}

void check_points(const std::vector<std::vector<double>>& points, int k) {
  if (points.empty()) fail(ErrorCode::InvalidArgument, "kmeans: no points");
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].size() != points[0].size()) {
      fail(ErrorCode::InvalidArgument, "kmeans: point " + std::to_string(i) + " dim mismatch");
    }
  }
  if (k < 1 || size_t(k) > points.size()) {
    fail(ErrorCode::InvalidArgument, "kmeans: k must be in [1, N]");
  }
}

// nearest centroid, ties to the lowest index
int nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = dist2(p, centroids[0]);
  for (size_t c = 1; c < centroids.size(); ++c) {
    double d = dist2(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = int(c);
    }
  }
  return best;
}

void recompute_means(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                     int k, std::vector<std::vector<double>>& centroids) {
  size_t dim = points[0].size();
  std::vector<int64_t> count(size_t(k), 0);
  for (int c = 0; c < k; ++c) centroids[size_t(c)].assign(dim, 0.0);
  for (size_t i = 0; i < points.size(); ++i) {
    int c = labels[i];
    ++count[size_t(c)];
    for (size_t j = 0; j < dim; ++j) centroids[size_t(c)][j] += points[i][j];
  }
  for (int c = 0; c < k; ++c) {
    if (count[size_t(c)] > 0) {
      for (size_t j = 0; j < dim; ++j) centroids[size_t(c)][j] /= double(count[size_t(c)]);
    }
  }
}

// Re-seat every empty cluster on the point farthest from its current centroid
// (ties to the lowest point index). Returns true if anything moved.
bool patch_empty(const std::vector<std::vector<double>>& points, std::vector<int>& labels, int k,
                 std::vector<std::vector<double>>& centroids) {
  bool patched = false;
  std::vector<int> sizes(size_t(k), 0);
  for (int l : labels) ++sizes[size_t(l)];
  for (int c = 0; c < k; ++c) {
    if (sizes[size_t(c)] > 0) continue;
    int far = -1;
    double far_d = -1.0;
    for (size_t i = 0; i < points.size(); ++i) {
      if (sizes[size_t(labels[i])] <= 1) continue;  // don't empty another cluster
      double d = dist2(points[i], centroids[size_t(labels[i])]);
      if (d > far_d) {
        far_d = d;
        far = int(i);
      }
    }
    if (far < 0) continue;  // k == N corner: nothing movable
    --sizes[size_t(labels[size_t(far)])];
    labels[size_t(far)] = c;
    ++sizes[size_t(c)];
    centroids[size_t(c)] = points[size_t(far)];
    patched = true;
  }
  return patched;
}

}  // namespace

ClusterAssignment kmeans(const std::vector<std::vector<double>>& points, int k, uint64_t seed) {
  check_points(points, k);
  int n = int(points.size());

  ClusterAssignment out;
  out.k = k;

  // init: k seed points from a shuffled order, preferring distinct values.
  // Duplicated points are common here (clients with identical label
  // distributions); two equal centroids would start an empty-cluster
  // tug-of-war and could split those duplicates across clusters.
  std::vector<int32_t> order = iota_indices(n);
  Rng rng(mix_seed(seed, stream::kKmeansInit));
  shuffle_vec(order, rng);
  std::vector<int32_t> chosen;
  for (int32_t idx : order) {
    if (int(chosen.size()) == k) break;
    bool dup = false;
    for (int32_t c : chosen) {
      if (points[size_t(idx)] == points[size_t(c)]) {
        dup = true;
        break;
      }
    }
    if (!dup) chosen.push_back(idx);
  }
  for (int32_t idx : order) {  // fewer distinct values than k: allow repeats
    if (int(chosen.size()) == k) break;
    if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end()) chosen.push_back(idx);
  }
  out.centroids.resize(size_t(k));
  for (int c = 0; c < k; ++c) out.centroids[size_t(c)] = points[size_t(chosen[size_t(c)])];

  out.labels.assign(size_t(n), -1);
  std::vector<int> prev = out.labels;
  for (int iter = 0; iter < 300; ++iter) {
    for (int i = 0; i < n; ++i) out.labels[size_t(i)] = nearest(points[size_t(i)], out.centroids);
    out.wcss_history.push_back(wcss(points, out.labels, out.centroids));
    bool patched = patch_empty(points, out.labels, k, out.centroids);
    if (patched) out.wcss_history.push_back(wcss(points, out.labels, out.centroids));
    if (!patched && out.labels == prev) break;
    prev = out.labels;
    recompute_means(points, out.labels, k, out.centroids);
  }
  out.objective = wcss(points, out.labels, out.centroids);
  return out;
}

ClusterAssignment kmeans_balanced(const std::vector<std::vector<double>>& points, int k,
                                  uint64_t seed, double cap_factor) {
  check_points(points, k);
  if (!(cap_factor > 0.0)) fail(ErrorCode::InvalidArgument, "kmeans_balanced: cap_factor must be > 0");
  int n = int(points.size());
  int64_t cap = int64_t(std::ceil(cap_factor * double(n) / double(k)));
  if (cap * k < n) {
    fail(ErrorCode::Config, "kmeans_balanced: cap " + std::to_string(cap) + " * k cannot hold " +
                                std::to_string(n) + " points");
  }

  ClusterAssignment out = kmeans(points, k, seed);
  std::vector<int64_t> sizes(size_t(k), 0);
  for (int l : out.labels) ++sizes[size_t(l)];

  for (;;) {
    // largest over-cap cluster, ties to the lowest cluster index
    int src = -1;
    for (int c = 0; c < k; ++c) {
      if (sizes[size_t(c)] > cap && (src < 0 || sizes[size_t(c)] > sizes[size_t(src)])) src = c;
    }
    if (src < 0) break;

    // its member farthest from the centroid; ties to the lowest client index
    int member = -1;
    double member_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (out.labels[size_t(i)] != src) continue;
      double d = dist2(points[size_t(i)], out.centroids[size_t(src)]);
      if (d > member_d) {
        member_d = d;
        member = i;
      }
    }

    // nearest under-cap cluster by centroid distance; ties to the lowest index
    int dst = -1;
    double dst_d = 0.0;
    for (int c = 0; c < k; ++c) {
      if (sizes[size_t(c)] >= cap) continue;
      double d = dist2(points[size_t(member)], out.centroids[size_t(c)]);
      if (dst < 0 || d < dst_d) {
        dst_d = d;
        dst = c;
      }
    }

    out.labels[size_t(member)] = dst;
    --sizes[size_t(src)];
    ++sizes[size_t(dst)];
    // recompute the two affected centroids
    std::vector<std::vector<double>> all(out.centroids);
    recompute_means(points, out.labels, k, all);
    out.centroids[size_t(src)] = all[size_t(src)];
    out.centroids[size_t(dst)] = all[size_t(dst)];
  }

  out.objective = wcss(points, out.labels, out.centroids);
  return out;
}

int elbow_select_k(const std::vector<std::vector<double>>& points, int k_max, uint64_t seed) {
  if (k_max < 2 || size_t(k_max) > points.size()) {
    fail(ErrorCode::InvalidArgument, "elbow_select_k: k_max must be in [2, N]");
  }
  std::vector<double> w(size_t(k_max) + 1, 0.0);
  for (int k = 1; k <= k_max; ++k) {
    w[size_t(k)] = kmeans(points, k, mix_seed(seed, stream::kElbow, uint64_t(k))).objective;
  }
  if (k_max == 2) return 2;  // no interior point for a second difference
  int best_k = 2;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 2; k <= k_max - 1; ++k) {
    double curvature = w[size_t(k - 1)] - 2.0 * w[size_t(k)] + w[size_t(k + 1)];
    if (curvature > best) {  // strict: ties keep the smallest k
      best = curvature;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace fedlab
