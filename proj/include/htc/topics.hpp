#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "htc/embedding.hpp"

namespace htc {

struct TopicModel {
  int n_topics = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::string> vocab;  // word id -> token
  MatrixRM topic_word;             // n_topics x |vocab|, rows sum to 1
  std::vector<std::vector<std::pair<std::string, double>>> top_words;
  Eigen::VectorXd topic_prior;     // empirical topic proportions
  std::vector<std::string> warnings;
};

struct LdaParams {
  int num_topics = 0;
  double alpha = -1.0;  // < 0 means 50 / num_topics
  double beta = 0.01;
  int iterations = 1000;
  int top_l = 10;
  uint64_t seed = 1;
};

// Collapsed Gibbs sampling; deterministic for a fixed seed. A vocabulary
// smaller than num_topics is a recorded warning, not an error.
TopicModel lda_fit(const std::vector<TokenStream>& documents, const LdaParams& params);

}  // namespace htc
