#include "htc/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "htc/util.hpp"

namespace htc {

std::vector<LabelVector> label_name_vectors(const LabelDictionary& dict,
                                            const EmbeddingMatrix& emb,
                                            const Tokenizer& tokenizer) {
  std::vector<LabelVector> out;
  out.reserve(dict.size());
  for (size_t li = 0; li < dict.size(); ++li) {
    LabelVector lv;
    lv.label = static_cast<int>(li);
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(emb.dim);
    int hits = 0;
    for (const auto& tok : tokenizer.tokenize(dict.canonical_names[li]).tokens) {
      int id = emb.id(tok);
      if (id < 0) continue;
      sum += emb.vectors.row(id);
      ++hits;
    }
    if (hits > 0) {
      lv.vec = (sum / static_cast<double>(hits)).transpose();
    } else {
      lv.vec = Eigen::VectorXd::Zero(emb.dim);
      lv.zero = true;
    }
    out.push_back(std::move(lv));
  }
  return out;
}

std::vector<LabelVector> label_document_centroids(
    const std::vector<ValidRecord>& records, size_t n_labels,
    const EmbeddingMatrix& emb, const Tokenizer& tokenizer) {
  std::vector<Eigen::RowVectorXd> sum(n_labels,
                                      Eigen::RowVectorXd::Zero(emb.dim));
  std::vector<int64_t> hits(n_labels, 0);
  for (const auto& rec : records) {
    if (rec.canonical_label < 0 ||
        static_cast<size_t>(rec.canonical_label) >= n_labels)
      throw std::runtime_error("record label out of range: " + rec.id);
    for (const auto& tok : tokenizer.tokenize(rec.request_text).tokens) {
      int id = emb.id(tok);
      if (id < 0) continue;
      sum[rec.canonical_label] += emb.vectors.row(id);
      ++hits[rec.canonical_label];
    }
  }
  std::vector<LabelVector> out(n_labels);
  for (size_t li = 0; li < n_labels; ++li) {
    out[li].label = static_cast<int>(li);
    if (hits[li] > 0) {
      out[li].vec = (sum[li] / static_cast<double>(hits[li])).transpose();
    } else {
      out[li].vec = Eigen::VectorXd::Zero(emb.dim);
      out[li].zero = true;
    }
  }
  return out;
}

MatrixRM stack_vectors(const std::vector<LabelVector>& vectors) {
  if (vectors.empty()) throw std::runtime_error("no label vectors");
  MatrixRM m(static_cast<Eigen::Index>(vectors.size()), vectors[0].vec.size());
  for (size_t i = 0; i < vectors.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = vectors[i].vec.transpose();
  return m;
}

namespace {

double sq_dist(const MatrixRM& points, Eigen::Index a, const MatrixRM& centroids,
               Eigen::Index c) {
  return (points.row(a) - centroids.row(c)).squaredNorm();
}

// k-means++: first centroid uniform, the rest D^2-weighted.
MatrixRM seed_centroids(const MatrixRM& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  MatrixRM centroids(k, points.cols());
  std::vector<double> d2(static_cast<size_t>(n),
                         std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.index(static_cast<size_t>(n)));
  centroids.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double d = sq_dist(points, i, centroids, c - 1);
      if (d < d2[static_cast<size_t>(i)]) d2[static_cast<size_t>(i)] = d;
      total += d2[static_cast<size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (u < acc) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<size_t>(n)));
    }
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

}  // namespace

KMeansModel kmeans(const MatrixRM& points, int k, uint64_t seed, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 2) throw std::runtime_error("kmeans: K must be >= 2");
  if (static_cast<Eigen::Index>(k) > n)
    throw std::runtime_error("kmeans: K exceeds point count");

  Rng rng(seed);
  KMeansModel model;
  model.k = k;
  model.centroids = seed_centroids(points, k, rng);
  model.assignments.assign(static_cast<size_t>(n), -1);

  for (int iter = 0; iter < max_iter; ++iter) {
    // assignment step; inertia measured against the centroids just used
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points, i, model.centroids, 0);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(points, i, model.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      inertia += best_d;
      if (model.assignments[static_cast<size_t>(i)] != best) {
        model.assignments[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }

    // empty-cluster repair: hand the cluster the point farthest from its
    // current centroid (one point per empty cluster)
    std::vector<Eigen::Index> counts(static_cast<size_t>(k), 0);
    for (int a : model.assignments) ++counts[static_cast<size_t>(a)];
    std::vector<bool> stolen(static_cast<size_t>(n), false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (stolen[static_cast<size_t>(i)]) continue;
        int a = model.assignments[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(a)] <= 1) continue;
        double d = sq_dist(points, i, model.centroids, a);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) throw std::runtime_error("kmeans: cannot repair empty cluster");
      --counts[static_cast<size_t>(model.assignments[static_cast<size_t>(far)])];
      model.assignments[static_cast<size_t>(far)] = c;
      counts[static_cast<size_t>(c)] = 1;
      stolen[static_cast<size_t>(far)] = true;
      changed = true;
    }

    model.inertia_trace.push_back(inertia);

    // update step
    MatrixRM sums = MatrixRM::Zero(k, points.cols());
    std::vector<double> sizes(static_cast<size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(model.assignments[static_cast<size_t>(i)]) += points.row(i);
      sizes[static_cast<size_t>(model.assignments[static_cast<size_t>(i)])] += 1.0;
    }
    for (int c = 0; c < k; ++c) model.centroids.row(c) = sums.row(c) / sizes[static_cast<size_t>(c)];

    if (!changed) break;
  }

  model.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    model.inertia +=
        sq_dist(points, i, model.centroids, model.assignments[static_cast<size_t>(i)]);
  return model;
}

std::vector<double> silhouette_samples(const MatrixRM& points,
                                       const std::vector<int>& assignments) {
  const Eigen::Index n = points.rows();
  if (static_cast<size_t>(n) != assignments.size())
    throw std::runtime_error("silhouette: assignment size mismatch");
  int k = 0;
  for (int a : assignments) k = std::max(k, a + 1);
  if (k < 2) throw std::runtime_error("silhouette: need at least 2 clusters");
  std::vector<Eigen::Index> counts(static_cast<size_t>(k), 0);
  for (int a : assignments) {
    if (a < 0) throw std::runtime_error("silhouette: unassigned point");
    ++counts[static_cast<size_t>(a)];
  }
  for (int c = 0; c < k; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw std::runtime_error("silhouette: empty cluster");

  std::vector<double> s(static_cast<size_t>(n), 0.0);
  std::vector<double> mean_dist(static_cast<size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    int own = assignments[static_cast<size_t>(i)];
    if (counts[static_cast<size_t>(own)] == 1) continue;  // singleton: s=0
    std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_dist[static_cast<size_t>(assignments[static_cast<size_t>(j)])] +=
          (points.row(i) - points.row(j)).norm();
    }
    double a = mean_dist[static_cast<size_t>(own)] /
               static_cast<double>(counts[static_cast<size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own) continue;
      b = std::min(b, mean_dist[static_cast<size_t>(c)] /
                          static_cast<double>(counts[static_cast<size_t>(c)]));
    }
    double denom = std::max(a, b);
    if (denom > 0.0) s[static_cast<size_t>(i)] = (b - a) / denom;
  }
  return s;
}

double silhouette_mean(const MatrixRM& points, const std::vector<int>& assignments) {
  std::vector<double> s = silhouette_samples(points, assignments);
  double total = 0.0;
  for (double v : s) total += v;
  return total / static_cast<double>(s.size());
}

KSelection select_k(const MatrixRM& points, int k_lo, int k_hi, uint64_t seed) {
  if (k_lo < 2 || k_hi < k_lo) throw std::runtime_error("select_k: bad range");
  KSelection sel;
  double best = -2.0;
  for (int k = k_lo; k <= k_hi; ++k) {
    KMeansModel model = kmeans(points, k, seed);
    double s = silhouette_mean(points, model.assignments);
    sel.silhouettes.emplace_back(k, s);
    if (s > best) {
      best = s;
      sel.best_k = k;
    }
  }
  return sel;
}

GmmModel gmm_em(const MatrixRM& points, const KMeansModel& init, int max_iter,
                double tol, double cov_floor, bool spherical) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  const int k = init.k;
  if (k < 1) throw std::runtime_error("gmm: bad K");
  if (static_cast<size_t>(n) != init.assignments.size())
    throw std::runtime_error("gmm: init does not match points");

  GmmModel model;
  model.k = k;
  model.spherical = spherical;
  model.means = init.centroids;
  model.weights.resize(k);
  model.variances.resize(k, d);
  model.responsibilities.resize(n, k);

  // seed weights and within-cluster variances from the K-Means partition
  std::vector<double> sizes(static_cast<size_t>(k), 0.0);
  MatrixRM ssq = MatrixRM::Zero(k, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    int c = init.assignments[static_cast<size_t>(i)];
    sizes[static_cast<size_t>(c)] += 1.0;
    ssq.row(c) += (points.row(i) - model.means.row(c)).array().square().matrix();
  }
  for (int c = 0; c < k; ++c) {
    model.weights(c) = sizes[static_cast<size_t>(c)] / static_cast<double>(n);
    model.variances.row(c) = ssq.row(c) / std::max(sizes[static_cast<size_t>(c)], 1.0);
  }

  auto apply_floor = [&]() {
    if (spherical) {
      for (int c = 0; c < k; ++c) {
        double v = model.variances.row(c).mean();
        if (v < cov_floor) {
          v = cov_floor;
          model.floor_hit = true;
        }
        model.variances.row(c).setConstant(v);
      }
    } else {
      for (int c = 0; c < k; ++c)
        for (Eigen::Index j = 0; j < d; ++j)
          if (model.variances(c, j) < cov_floor) {
            model.variances(c, j) = cov_floor;
            model.floor_hit = true;
          }
    }
  };
  apply_floor();

  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  Eigen::VectorXd log_norm(k);  // per-component -(1/2)(d ln 2pi + sum ln var)
  Eigen::VectorXd logp(k);

  for (int iter = 0; iter < max_iter; ++iter) {
    for (int c = 0; c < k; ++c)
      log_norm(c) = -0.5 * (static_cast<double>(d) * log2pi +
                            model.variances.row(c).array().log().sum());

    // E step with the current parameters; row-wise log-sum-exp
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) {
        double maha = ((points.row(i) - model.means.row(c)).array().square() /
                       model.variances.row(c).array())
                          .sum();
        logp(c) = std::log(std::max(model.weights(c), 1e-300)) + log_norm(c) -
                  0.5 * maha;
      }
      double mx = logp.maxCoeff();
      double sum = 0.0;
      for (int c = 0; c < k; ++c) sum += std::exp(logp(c) - mx);
      double lse = mx + std::log(sum);
      ll += lse;
      for (int c = 0; c < k; ++c)
        model.responsibilities(i, c) = std::exp(logp(c) - lse);
    }
    model.log_likelihood_trace.push_back(ll);
    if (model.log_likelihood_trace.size() > 1) {
      double prev = model.log_likelihood_trace[model.log_likelihood_trace.size() - 2];
      if (ll - prev < tol) break;
    }

    // M step
    for (int c = 0; c < k; ++c) {
      double nk = model.responsibilities.col(c).sum();
      double nk_safe = std::max(nk, 1e-12);
      model.weights(c) = nk / static_cast<double>(n);
      Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i)
        mu += model.responsibilities(i, c) * points.row(i);
      mu /= nk_safe;
      model.means.row(c) = mu;
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i)
        var += model.responsibilities(i, c) *
               (points.row(i) - mu).array().square().matrix();
      model.variances.row(c) = var / nk_safe;
    }
    double wsum = model.weights.sum();
    if (wsum > 0.0) model.weights /= wsum;
    apply_floor();
  }
  return model;
}

}  // namespace htc
