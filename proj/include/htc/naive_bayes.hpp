#pragma once

#include <vector>

#include <Eigen/Dense>

#include "htc/embedding.hpp"
#include "htc/text.hpp"

namespace htc {

enum class NbFeatureMode { onehot, tfidf };

struct NbConfig {
  double alpha = 0.2;
  NbFeatureMode mode = NbFeatureMode::onehot;
  // Drop the absence terms log(1-P) so scoring multiplies presence
  // probabilities only.
  bool presence_only = false;
};

// Bernoulli (onehot) or multinomial-over-TF-IDF naive Bayes. The model keeps
// its vocabulary snapshot so inference re-encodes with the training-time
// feature space.
struct NbModel {
  NbConfig config;
  Vocabulary vocab;
  int n_classes = 0;
  Eigen::VectorXd priors;  // class frequencies, sum 1
  MatrixRM cond;           // n_classes x |V|
};

NbModel nb_fit(const std::vector<TokenStream>& docs, const std::vector<int>& labels,
               int n_classes, const Vocabulary& vocab, const NbConfig& config = {});

// Softmax-normalized posterior over classes.
Eigen::VectorXd nb_predict_proba(const NbModel& model, const TokenStream& doc);
int nb_predict(const NbModel& model, const TokenStream& doc);

}  // namespace htc
