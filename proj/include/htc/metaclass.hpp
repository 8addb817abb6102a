#pragma once

#include <string>
#include <vector>

#include "htc/clustering.hpp"
#include "htc/topics.hpp"

namespace htc {

struct MetaDiagnostics {
  double silhouette = 0.0;         // kmeans_gmm path
  std::vector<double> probs;       // topic_entropy path: p(label -> topic)
  std::vector<double> entropy;     // e_i = -p_i ln p_i
  bool zero_vector = false;        // label had no embedding; prior fallback
};

// label -> meta-class partition plus per-label diagnostics.
struct MetaClassMap {
  std::string method;              // "kmeans_gmm" | "topic_entropy"
  int k = 0;
  std::vector<int> assignment;     // label id -> meta id
  std::vector<MetaDiagnostics> diagnostics;
  std::vector<std::string> warnings;

  std::vector<size_t> meta_sizes() const;
  // every meta-class non-empty, every label assigned exactly once
  void validate() const;
  std::string to_json() const;
  static MetaClassMap from_json(const std::string& json_text);
  uint64_t content_hash() const;
};

// Each topic's representative is the weight-normalized centroid of its top
// words' embedding vectors; a label's topic probabilities come from shifted
// cosine similarity, and the topic with minimal -p ln p wins (ties: larger
// p, then lower index). Zero-vector labels fall back to the max topic prior
// and are flagged. Empty topics absorb the label that is most probable for
// them; each such repair is a recorded warning.
MetaClassMap entropy_assign(const std::vector<LabelVector>& labels,
                            const TopicModel& topics, const EmbeddingMatrix& emb);

// Alternative assignment rule over the same probabilities: plain argmax p.
MetaClassMap max_prob_assign(const std::vector<LabelVector>& labels,
                             const TopicModel& topics, const EmbeddingMatrix& emb);

// Labels go to their argmax-responsibility component; silhouettes of the
// seeding K-Means partition are kept as diagnostics. Empty components absorb
// the label nearest to their mean, with a warning.
MetaClassMap meta_from_gmm(const std::vector<LabelVector>& labels,
                           const KMeansModel& km, const GmmModel& gmm);

}  // namespace htc
