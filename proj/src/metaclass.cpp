#include "htc/metaclass.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {

std::vector<size_t> MetaClassMap::meta_sizes() const {
  std::vector<size_t> sizes(static_cast<size_t>(k), 0);
  for (int m : assignment) {
    if (m < 0 || m >= k) throw std::runtime_error("meta id out of range");
    ++sizes[static_cast<size_t>(m)];
  }
  return sizes;
}

void MetaClassMap::validate() const {
  if (k < 2) throw std::runtime_error("meta map: fewer than 2 meta-classes");
  if (assignment.empty()) throw std::runtime_error("meta map: no labels");
  for (size_t m = 0; m < meta_sizes().size(); ++m)
    if (meta_sizes()[m] == 0)
      throw std::runtime_error("meta map: empty meta-class " + std::to_string(m));
}

std::string MetaClassMap::to_json() const {
  nlohmann::ordered_json assigns = nlohmann::ordered_json::array();
  for (size_t li = 0; li < assignment.size(); ++li) {
    nlohmann::ordered_json diag;
    if (li < diagnostics.size()) {
      const auto& d = diagnostics[li];
      if (method == "kmeans_gmm") {
        diag["silhouette"] = d.silhouette;
      } else {
        diag["p"] = d.probs;
        diag["e"] = d.entropy;
        if (d.zero_vector) diag["zero_vector"] = true;
      }
    }
    assigns.push_back({{"label", li}, {"meta", assignment[li]}, {"diagnostics", diag}});
  }
  nlohmann::ordered_json root{{"method", method}, {"K", k}, {"assignments", assigns}};
  if (!warnings.empty()) root["warnings"] = warnings;
  return root.dump(2) + "\n";
}

MetaClassMap MetaClassMap::from_json(const std::string& json_text) {
  nlohmann::json root = nlohmann::json::parse(json_text);
  MetaClassMap map;
  map.method = root.at("method").get<std::string>();
  map.k = root.at("K").get<int>();
  const auto& assigns = root.at("assignments");
  map.assignment.resize(assigns.size(), -1);
  map.diagnostics.resize(assigns.size());
  for (const auto& a : assigns) {
    size_t li = a.at("label").get<size_t>();
    if (li >= map.assignment.size())
      throw std::runtime_error("meta map json: label id out of range");
    map.assignment[li] = a.at("meta").get<int>();
    if (a.contains("diagnostics")) {
      const auto& d = a["diagnostics"];
      auto& out = map.diagnostics[li];
      if (d.contains("silhouette")) out.silhouette = d["silhouette"].get<double>();
      if (d.contains("p")) out.probs = d["p"].get<std::vector<double>>();
      if (d.contains("e")) out.entropy = d["e"].get<std::vector<double>>();
      if (d.contains("zero_vector")) out.zero_vector = d["zero_vector"].get<bool>();
    }
  }
  for (int m : map.assignment)
    if (m < 0) throw std::runtime_error("meta map json: missing label assignment");
  if (root.contains("warnings"))
    map.warnings = root["warnings"].get<std::vector<std::string>>();
  return map;
}

uint64_t MetaClassMap::content_hash() const {
  uint64_t h = fnv1a64("metamap");
  h = fnv1a64(method, h);
  h = fnv1a64(std::to_string(k), h);
  for (int m : assignment) h = fnv1a64(std::to_string(m), h);
  return h;
}

namespace {

// topic representatives as weight-normalized centroids of top-word vectors
MatrixRM topic_centroids(const TopicModel& topics, const EmbeddingMatrix& emb) {
  MatrixRM c(topics.n_topics, emb.dim);
  for (int t = 0; t < topics.n_topics; ++t) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(emb.dim);
    double wsum = 0.0;
    for (const auto& [word, weight] : topics.top_words[static_cast<size_t>(t)]) {
      int id = emb.id(word);
      if (id < 0) continue;
      sum += weight * emb.vectors.row(id);
      wsum += weight;
    }
    if (wsum <= 0.0)
      throw std::runtime_error("topic " + std::to_string(t) +
                               " has no top word with an embedding");
    c.row(t) = sum / wsum;
  }
  return c;
}

// p(label -> topic) by shifted cosine; falls back to the topic prior for
// zero-vector labels (flagged via MetaDiagnostics).
void topic_probs(const LabelVector& label, const MatrixRM& centroids,
                 const TopicModel& topics, MetaDiagnostics& diag) {
  const int k = static_cast<int>(centroids.rows());
  diag.probs.assign(static_cast<size_t>(k), 0.0);
  diag.entropy.assign(static_cast<size_t>(k), 0.0);
  double label_norm = label.vec.norm();
  if (label.zero || label_norm == 0.0) {
    diag.zero_vector = true;
    for (int t = 0; t < k; ++t) diag.probs[static_cast<size_t>(t)] = topics.topic_prior(t);
  } else {
    double total = 0.0;
    for (int t = 0; t < k; ++t) {
      double cn = centroids.row(t).norm();
      double cos = cn == 0.0 ? 0.0
                             : centroids.row(t).dot(label.vec.transpose()) /
                                   (cn * label_norm);
      double sim = 0.5 * (1.0 + cos);
      diag.probs[static_cast<size_t>(t)] = sim;
      total += sim;
    }
    for (int t = 0; t < k; ++t) diag.probs[static_cast<size_t>(t)] /= total;
  }
  for (int t = 0; t < k; ++t) {
    double p = diag.probs[static_cast<size_t>(t)];
    diag.entropy[static_cast<size_t>(t)] = p > 0.0 ? -p * std::log(p) : 0.0;
  }
}

// for each empty meta-class, pull in the label that scores best for it
// (by `score`), provided the donor class keeps at least one member
template <typename Score>
void absorb_empty(MetaClassMap& map, Score&& score) {
  for (int m = 0; m < map.k; ++m) {
    auto sizes = map.meta_sizes();
    if (sizes[static_cast<size_t>(m)] > 0) continue;
    int best = -1;
    double best_s = -std::numeric_limits<double>::infinity();
    for (size_t li = 0; li < map.assignment.size(); ++li) {
      if (sizes[static_cast<size_t>(map.assignment[li])] <= 1) continue;
      double s = score(li, m);
      if (s > best_s) {
        best_s = s;
        best = static_cast<int>(li);
      }
    }
    if (best < 0)
      throw std::runtime_error("meta map: cannot repair empty meta-class " +
                               std::to_string(m));
    map.assignment[static_cast<size_t>(best)] = m;
    map.warnings.push_back("empty meta-class " + std::to_string(m) +
                           " absorbed label " + std::to_string(best));
  }
}

MetaClassMap assign_by_topics(const std::vector<LabelVector>& labels,
                              const TopicModel& topics, const EmbeddingMatrix& emb,
                              bool entropy_rule) {
  if (topics.n_topics < 2) throw std::runtime_error("meta map: need >= 2 topics");
  if (labels.empty()) throw std::runtime_error("meta map: no labels");
  MatrixRM centroids = topic_centroids(topics, emb);

  MetaClassMap map;
  map.method = "topic_entropy";
  map.k = topics.n_topics;
  map.assignment.resize(labels.size());
  map.diagnostics.resize(labels.size());

  for (size_t li = 0; li < labels.size(); ++li) {
    MetaDiagnostics& diag = map.diagnostics[li];
    topic_probs(labels[li], centroids, topics, diag);
    int pick = 0;
    if (diag.zero_vector || !entropy_rule) {
      // plain argmax p (prior fallback or the max_prob variant)
      for (int t = 1; t < map.k; ++t)
        if (diag.probs[static_cast<size_t>(t)] > diag.probs[static_cast<size_t>(pick)]) pick = t;
    } else {
      for (int t = 1; t < map.k; ++t) {
        double e = diag.entropy[static_cast<size_t>(t)], be = diag.entropy[static_cast<size_t>(pick)];
        double p = diag.probs[static_cast<size_t>(t)], bp = diag.probs[static_cast<size_t>(pick)];
        if (e < be || (e == be && p > bp)) pick = t;
      }
    }
    map.assignment[li] = pick;
  }

  absorb_empty(map, [&](size_t li, int m) {
    return map.diagnostics[li].probs[static_cast<size_t>(m)];
  });
  map.validate();
  return map;
}

}  // namespace

MetaClassMap entropy_assign(const std::vector<LabelVector>& labels,
                            const TopicModel& topics, const EmbeddingMatrix& emb) {
  return assign_by_topics(labels, topics, emb, true);
}

MetaClassMap max_prob_assign(const std::vector<LabelVector>& labels,
                             const TopicModel& topics, const EmbeddingMatrix& emb) {
  return assign_by_topics(labels, topics, emb, false);
}

MetaClassMap meta_from_gmm(const std::vector<LabelVector>& labels,
                           const KMeansModel& km, const GmmModel& gmm) {
  if (gmm.k < 2) throw std::runtime_error("meta map: need K >= 2");
  if (labels.empty() ||
      static_cast<Eigen::Index>(labels.size()) != gmm.responsibilities.rows())
    throw std::runtime_error("meta map: GMM does not cover the label set");

  MetaClassMap map;
  map.method = "kmeans_gmm";
  map.k = gmm.k;
  map.assignment.resize(labels.size());
  map.diagnostics.resize(labels.size());

  MatrixRM points = stack_vectors(labels);
  std::vector<double> sil = silhouette_samples(points, km.assignments);
  for (size_t li = 0; li < labels.size(); ++li) {
    int pick = 0;
    for (int c = 1; c < gmm.k; ++c)
      if (gmm.responsibilities(static_cast<Eigen::Index>(li), c) >
          gmm.responsibilities(static_cast<Eigen::Index>(li), pick))
        pick = c;
    map.assignment[li] = pick;
    map.diagnostics[li].silhouette = sil[li];
  }

  absorb_empty(map, [&](size_t li, int m) {
    return -(points.row(static_cast<Eigen::Index>(li)) - gmm.means.row(m)).norm();
  });
  map.validate();
  return map;
}

}  // namespace htc
