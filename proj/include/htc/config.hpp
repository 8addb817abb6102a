#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace htc {

// Typed run configuration. INI sections mirror the pipeline stages; every
// key is declared in one binding table so unknown keys are rejected, command
// line overrides reuse the same names ("section.key"), and the canonical
// printout stays in sync automatically.

struct CorpusSection {
  std::string ingest;       // raw records file; empty -> synthetic corpus
  std::string format = "jsonl";
  std::string labels;       // label dictionary file (required with ingest)
  int synthetic_classes = 12;
  int synthetic_samples = 2000;
  int synthetic_vocab_per_class = 20;
  int synthetic_shared_vocab = 0;
  double synthetic_imbalance = 0.0;
  int doc_len_lo = 10;
  int doc_len_hi = 30;
  int min_df = 1;
  double split = 0.2;       // holdout fraction carved off during prepare
};

struct FeaturesSection {
  double woe_epsilon = 0.5;
  bool raw_count_woe = false;
};

struct EmbeddingSection {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double lr = 0.05;
  int max_len = 100;  // sequence rows per document
};

struct ClusterSection {
  std::string method = "kmeans_gmm";  // kmeans_gmm | topic_entropy
  int k_lo = 2;
  int k_hi = 10;
  int topics = 0;  // 0 -> topic count from reachability clustering
  int optics_min_samples = 5;
  double optics_xi = 0.05;
  double lda_alpha = -1.0;  // <0 -> 50 / topics
  double lda_beta = 0.01;
  int lda_iterations = 1000;
  int top_l = 10;
  std::string assign = "entropy";  // entropy | max_prob
  bool spherical = false;
};

struct TrainSection {
  std::string models = "nb_cascade,nb_max_prob,mlp_cascade,mlp_max_prob,rescnn";
  double nb_alpha = 0.2;
  std::string nb_mode = "onehot";  // onehot | tfidf
  bool nb_presence_only = false;
  int mlp_h1 = 512;
  int mlp_h2 = 128;
  int mlp_epochs = 10;
  double mlp_lr = 1e-3;
  int mlp_batch = 32;
  int cnn_epochs = 2;
  double cnn_lr = 1e-3;
  int cnn_batch = 8;
  std::vector<int> cnn_channels = {32, 64, 128, 256, 512};
  std::vector<int> cnn_blocks = {1, 2, 2, 2, 2};
  std::vector<int> cnn_strides = {1, 2, 2, 2, 2};
  bool cnn_flatten_head = false;
  int subsample = 0;  // cap on training samples for neural models; 0 = all
  bool use_predicted_meta = false;
};

struct EvaluateSection {
  int repeats = 5;    // timing repetitions
  double clip = 1e-7; // log-loss probability clip
};

struct RunConfig {
  uint64_t seed = 1;
  std::string out = "runs/default";
  CorpusSection corpus;
  FeaturesSection features;
  EmbeddingSection embedding;
  ClusterSection cluster;
  TrainSection train;
  EvaluateSection evaluate;

  // Throws on unknown sections/keys or unparsable values.
  static RunConfig from_ini_text(const std::string& text);
  static RunConfig from_ini_file(const std::string& path);
  // "section.key" (or "seed"/"out") -> value, same validation as the file.
  void set(const std::string& dotted_key, const std::string& value);
  std::string to_ini() const;
  // Cross-field checks shared by every stage.
  void validate() const;
};

std::vector<std::string> split_csv_names(const std::string& csv);

}  // namespace htc
