#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "htc/corpus.hpp"
#include "htc/embedding.hpp"

namespace htc {

// One class label as a point in embedding space: the mean of the label-name
// tokens' vectors by default, or a per-label document centroid.
struct LabelVector {
  int label = -1;
  Eigen::VectorXd vec;
  bool zero = false;  // no label token was in vocabulary
};

std::vector<LabelVector> label_name_vectors(const LabelDictionary& dict,
                                            const EmbeddingMatrix& emb,
                                            const Tokenizer& tokenizer);

std::vector<LabelVector> label_document_centroids(
    const std::vector<ValidRecord>& records, size_t n_labels,
    const EmbeddingMatrix& emb, const Tokenizer& tokenizer);

// Stacks label vectors into a row-per-point matrix for the fitters below.
MatrixRM stack_vectors(const std::vector<LabelVector>& vectors);

struct KMeansModel {
  int k = 0;
  MatrixRM centroids;            // k x d
  std::vector<int> assignments;  // point -> cluster
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // one entry per Lloyd iteration
};

// k-means++ seeding, Lloyd iterations to an assignment fixed point. Empty
// clusters are repaired by stealing the point farthest from its centroid.
KMeansModel kmeans(const MatrixRM& points, int k, uint64_t seed,
                   int max_iter = 100);

// Per-point silhouette coefficients, Euclidean distance; singleton clusters
// contribute 0. Requires >= 2 non-empty clusters.
std::vector<double> silhouette_samples(const MatrixRM& points,
                                       const std::vector<int>& assignments);
double silhouette_mean(const MatrixRM& points, const std::vector<int>& assignments);

struct KSelection {
  int best_k = 0;
  std::vector<std::pair<int, double>> silhouettes;  // (k, mean silhouette)
};

// argmax of mean silhouette over [k_lo, k_hi]; ties go to the smallest k.
KSelection select_k(const MatrixRM& points, int k_lo, int k_hi, uint64_t seed);

struct GmmModel {
  int k = 0;
  Eigen::VectorXd weights;       // k, sums to 1
  MatrixRM means;                // k x d
  MatrixRM variances;            // k x d diagonal covariances
  MatrixRM responsibilities;     // n x k, rows sum to 1
  std::vector<double> log_likelihood_trace;
  bool spherical = false;
  bool floor_hit = false;        // some variance was clamped to cov_floor
};

// EM on a diagonal-covariance mixture seeded from a fitted K-Means model
// (means, cluster proportions, within-cluster variances).
GmmModel gmm_em(const MatrixRM& points, const KMeansModel& init,
                int max_iter = 200, double tol = 1e-6, double cov_floor = 1e-6,
                bool spherical = false);

}  // namespace htc
