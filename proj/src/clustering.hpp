#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "nn.hpp"

namespace fedlab {

enum class DistSource { True, Inferred, DpNoised };

struct LabelDistVector {
  std::vector<double> probs;  // length m, on the simplex
  DistSource source = DistSource::True;
  int client_id = -1;
};

// Empirical label distribution of a client's samples: counts / N_i.
LabelDistVector label_distribution(const Dataset& ds, const std::vector<int32_t>& indices,
                                   int client_id);

// Uniform [0,1)^d probe inputs shared by every client's inference call.
Matrix make_probes(int probe_count, int dim, uint64_t seed);

// Softmax outputs averaged over the probe inputs (the privacy-free stand-in
// for the true distribution when labels cannot be shared).
LabelDistVector infer_label_distribution(const ModelParams& model, const Matrix& probes,
                                         int client_id = -1);
LabelDistVector infer_label_distribution(const ModelParams& model, int probe_count, int dim,
                                         uint64_t seed, int client_id = -1);

// Clip negatives to zero and renormalize onto the simplex; an all-zero vector
// becomes uniform.
std::vector<double> project_to_simplex(std::vector<double> v);

// iid Lap(0, 1/epsilon) on every entry (L1 sensitivity of a label distribution
// is 1), then the simplex projection as post-processing.
LabelDistVector laplace_noise(const LabelDistVector& dist, double epsilon, uint64_t seed);

struct ClusterAssignment {
  std::vector<int> labels;  // N entries in [0, k)
  std::vector<std::vector<double>> centroids;
  int k = 0;
  double objective = 0.0;  // WCSS of (labels, centroids)
  // objective after each assignment/patch step; non-increasing by construction
  std::vector<double> wcss_history;
};

double wcss(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
            const std::vector<std::vector<double>>& centroids);

// Lloyd's algorithm. Init picks k distinct point indices from the seed;
// assignment ties break to the lowest centroid index; an emptied cluster is
// re-seated on the point farthest from its current centroid; at most 300
// iterations.
ClusterAssignment kmeans(const std::vector<std::vector<double>>& points, int k, uint64_t seed);

// kmeans, then enforce a size cap of ceil(cap_factor * N / k): repeatedly move
// the farthest-from-centroid member of an over-cap cluster to the nearest
// under-cap cluster, recomputing the two centroids after each move. Ties break
// by (distance, client index).
ClusterAssignment kmeans_balanced(const std::vector<std::vector<double>>& points, int k,
                                  uint64_t seed, double cap_factor = 1.2);

// Elbow sweep: K = argmax over k in [2, k_max-1] of the WCSS second difference
// WCSS(k-1) - 2*WCSS(k) + WCSS(k+1); ties take the smallest k.
int elbow_select_k(const std::vector<std::vector<double>>& points, int k_max, uint64_t seed = 0);

}  // namespace fedlab
