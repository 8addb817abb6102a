#include <doctest.h>

#include <cmath>
#include <vector>

#include "htc/clustering.hpp"
#include "htc/util.hpp"
#include "test_support.hpp"

using namespace htc;

namespace {

// three well-separated planted blobs: spread ~0.2, centers >= 10 apart
MatrixRM three_blobs(uint64_t seed, int per_blob = 6) {
  Rng rng(seed);
  const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  MatrixRM pts(3 * per_blob, 2);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per_blob; ++i) {
      pts(b * per_blob + i, 0) = centers[b][0] + 0.2 * rng.gaussian();
      pts(b * per_blob + i, 1) = centers[b][1] + 0.2 * rng.gaussian();
    }
  return pts;
}

std::vector<int> blob_truth(int per_blob = 6) {
  std::vector<int> t;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per_blob; ++i) t.push_back(b);
  return t;
}

EmbeddingMatrix axis_embedding() {
  EmbeddingMatrix emb;
  emb.dim = 2;
  emb.tokens = {"north", "water", "tax"};
  emb.index = {{"north", 0}, {"water", 1}, {"tax", 2}};
  emb.vectors.resize(3, 2);
  emb.vectors << 1.0, 0.0, 0.0, 1.0, -1.0, 0.0;
  return emb;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("label name vectors average the in-vocabulary name tokens") {
  EmbeddingMatrix emb = axis_embedding();
  LabelDictionary dict;
  dict.add_canonical("north water");  // mean of rows 0 and 1
  dict.add_canonical("tax");
  dict.add_canonical("unknown words");
  WhitespaceTokenizer tok;
  auto vecs = label_name_vectors(dict, emb, tok);
  REQUIRE(vecs.size() == 3);
  CHECK(vecs[0].vec(0) == 0.5);
  CHECK(vecs[0].vec(1) == 0.5);
  CHECK_FALSE(vecs[0].zero);
  CHECK(vecs[1].vec(0) == -1.0);
  CHECK(vecs[2].zero);
  CHECK(vecs[2].vec.norm() == 0.0);

  MatrixRM stacked = stack_vectors(vecs);
  CHECK(stacked.rows() == 3);
  CHECK(stacked(0, 0) == 0.5);
  CHECK_THROWS_AS(stack_vectors({}), std::runtime_error);
}

TEST_CASE("label document centroids average request tokens per label") {
  EmbeddingMatrix emb = axis_embedding();
  std::vector<ValidRecord> records(3);
  records[0].request_text = "north north water";
  records[0].canonical_label = 0;
  records[1].request_text = "tax";
  records[1].canonical_label = 1;
  records[2].request_text = "unseen";
  records[2].canonical_label = 1;
  WhitespaceTokenizer tok;
  auto vecs = label_document_centroids(records, 2, emb, tok);
  REQUIRE(vecs.size() == 2);
  CHECK(vecs[0].vec(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(vecs[0].vec(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(vecs[1].vec(0) == -1.0);  // the unseen-token record contributes nothing

  records[2].canonical_label = 7;
  CHECK_THROWS_AS(label_document_centroids(records, 2, emb, tok), std::runtime_error);
}

TEST_CASE("k-means recovers three planted blobs") {
  MatrixRM pts = three_blobs(1);
  KMeansModel model = kmeans(pts, 3, 5);
  CHECK(model.k == 3);
  CHECK(test::adjusted_rand(model.assignments, blob_truth()) == 1.0);
  CHECK(model.inertia < 5.0);  // within-blob scatter only
  REQUIRE_FALSE(model.inertia_trace.empty());
  for (size_t i = 1; i < model.inertia_trace.size(); ++i)
    CHECK(model.inertia_trace[i] <= model.inertia_trace[i - 1] + 1e-9);
}

TEST_CASE("k-means validates its arguments") {
  MatrixRM pts = three_blobs(2);
  CHECK_THROWS_AS(kmeans(pts, 1, 0), std::runtime_error);
  CHECK_THROWS_AS(kmeans(pts, static_cast<int>(pts.rows()) + 1, 0), std::runtime_error);
}

TEST_CASE("k-means handles duplicate points without dividing by zero") {
  MatrixRM pts(4, 2);
  pts << 0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0;
  KMeansModel model = kmeans(pts, 2, 3);
  CHECK(model.assignments[0] == model.assignments[1]);
  CHECK(model.assignments[2] == model.assignments[3]);
  CHECK(model.inertia == 0.0);
}

TEST_CASE("silhouette matches the textbook two-cluster hand computation") {
  MatrixRM pts(4, 2);
  pts << 0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0;
  std::vector<int> assign{0, 0, 1, 1};
  auto s = silhouette_samples(pts, assign);
  // point 0: a = 1, b = (10 + sqrt(101))/2
  double b0 = (10.0 + std::sqrt(101.0)) / 2.0;
  CHECK(s[0] == doctest::Approx((b0 - 1.0) / b0).epsilon(1e-12));
  CHECK(silhouette_mean(pts, assign) == doctest::Approx((s[0] + s[1] + s[2] + s[3]) / 4.0));
  for (double v : s) CHECK(v > 0.8);
}

TEST_CASE("singleton clusters contribute zero silhouette") {
  MatrixRM pts(3, 2);
  pts << 0.0, 0.0, 0.1, 0.0, 9.0, 0.0;
  auto s = silhouette_samples(pts, {0, 0, 1});
  CHECK(s[2] == 0.0);
  CHECK(s[0] > 0.9);
}

TEST_CASE("silhouette rejects degenerate partitions") {
  MatrixRM pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 2.0, 0.0;
  CHECK_THROWS_AS(silhouette_samples(pts, {0, 0, 0}), std::runtime_error);
  CHECK_THROWS_AS(silhouette_samples(pts, {0, 1}), std::runtime_error);
  CHECK_THROWS_AS(silhouette_samples(pts, {0, -1, 1}), std::runtime_error);
  CHECK_THROWS_AS(silhouette_samples(pts, {0, 2, 2}), std::runtime_error);  // empty cluster 1
}

TEST_CASE("mean silhouette selects the planted cluster count") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    MatrixRM pts = three_blobs(seed + 40);
    KSelection sel = select_k(pts, 2, 6, seed);
    CHECK(sel.best_k == 3);
    CHECK(sel.silhouettes.size() == 5);
    CHECK(sel.silhouettes[1].first == 3);
  }
  CHECK_THROWS_AS(select_k(three_blobs(1), 1, 5, 0), std::runtime_error);
  CHECK_THROWS_AS(select_k(three_blobs(1), 4, 2, 0), std::runtime_error);
}

TEST_CASE("EM refines the mixture without ever lowering the log likelihood") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    MatrixRM pts = three_blobs(seed + 10);
    KMeansModel km = kmeans(pts, 3, seed);
    GmmModel gmm = gmm_em(pts, km);
    REQUIRE(gmm.log_likelihood_trace.size() >= 2);
    for (size_t i = 1; i < gmm.log_likelihood_trace.size(); ++i)
      CHECK(gmm.log_likelihood_trace[i] >= gmm.log_likelihood_trace[i - 1] - 1e-8);
    CHECK(gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (Eigen::Index i = 0; i < gmm.responsibilities.rows(); ++i)
      CHECK(gmm.responsibilities.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("mixture responsibilities keep the planted structure sharp") {
  MatrixRM pts = three_blobs(21);
  KMeansModel km = kmeans(pts, 3, 4);
  GmmModel gmm = gmm_em(pts, km);
  std::vector<int> hard(static_cast<size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < gmm.k; ++c)
      if (gmm.responsibilities(i, c) > gmm.responsibilities(i, best)) best = c;
    hard[static_cast<size_t>(i)] = best;
  }
  CHECK(test::adjusted_rand(hard, blob_truth()) == 1.0);
}

TEST_CASE("spherical mode ties the per-dimension variances together") {
  MatrixRM pts = three_blobs(33);
  KMeansModel km = kmeans(pts, 3, 2);
  GmmModel gmm = gmm_em(pts, km, 50, 1e-6, 1e-6, true);
  CHECK(gmm.spherical);
  for (int c = 0; c < gmm.k; ++c)
    CHECK(gmm.variances(c, 0) == gmm.variances(c, 1));
}

TEST_CASE("identical points drive the variance onto the floor") {
  MatrixRM pts(6, 2);
  for (int i = 0; i < 6; ++i) {
    pts(i, 0) = i < 3 ? 0.0 : 8.0;
    pts(i, 1) = 0.0;
  }
  KMeansModel km = kmeans(pts, 2, 1);
  GmmModel gmm = gmm_em(pts, km, 20, 1e-6, 1e-4);
  CHECK(gmm.floor_hit);
  for (int c = 0; c < gmm.k; ++c)
    for (int j = 0; j < 2; ++j) CHECK(gmm.variances(c, j) >= 1e-4);
}

TEST_CASE("mixture fitting validates the seed model") {
  MatrixRM pts = three_blobs(3);
  KMeansModel km = kmeans(pts, 3, 0);
  km.assignments.pop_back();
  CHECK_THROWS_AS(gmm_em(pts, km), std::runtime_error);
}

}  // TEST_SUITE
