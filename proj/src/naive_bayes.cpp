#include "htc/naive_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "htc/features.hpp"

namespace htc {
namespace {

std::vector<int> unique_present_ids(const TokenStream& doc, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(doc.tokens.size());
  for (const auto& tok : doc.tokens) {
    int id = vocab.id(tok);
    if (id >= 0) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

NbModel nb_fit(const std::vector<TokenStream>& docs, const std::vector<int>& labels,
               int n_classes, const Vocabulary& vocab, const NbConfig& config) {
  if (docs.size() != labels.size()) throw std::invalid_argument("nb_fit: docs/labels size mismatch");
  if (docs.empty()) throw std::invalid_argument("nb_fit: empty training set");
  if (n_classes < 2) throw std::invalid_argument("nb_fit: need at least 2 classes");
  if (!(config.alpha > 0.0)) throw std::invalid_argument("nb_fit: alpha must be positive");
  const int v = vocab.size();
  if (v == 0) throw std::invalid_argument("nb_fit: empty vocabulary");

  NbModel model;
  model.config = config;
  model.vocab = vocab;
  model.n_classes = n_classes;
  model.priors = Eigen::VectorXd::Zero(n_classes);
  model.cond = MatrixRM::Zero(n_classes, v);

  std::vector<double> class_docs(n_classes, 0.0);
  for (size_t d = 0; d < docs.size(); ++d) {
    int c = labels[d];
    if (c < 0 || c >= n_classes) throw std::invalid_argument("nb_fit: label out of range");
    class_docs[c] += 1.0;
    if (config.mode == NbFeatureMode::onehot) {
      for (int id : unique_present_ids(docs[d], vocab)) model.cond(c, id) += 1.0;
    } else {
      for (const auto& [id, w] : tfidf_transform(docs[d], vocab)) model.cond(c, id) += w;
    }
  }
  for (int c = 0; c < n_classes; ++c) {
    if (class_docs[c] == 0.0)
      throw std::invalid_argument("nb_fit: class " + std::to_string(c) + " has no training documents");
  }

  const double a = config.alpha;
  for (int c = 0; c < n_classes; ++c) {
    model.priors(c) = class_docs[c] / static_cast<double>(docs.size());
    if (config.mode == NbFeatureMode::onehot) {
      // Bernoulli: P(token present | class) with additive smoothing on both
      // the present and absent cells.
      for (int i = 0; i < v; ++i) model.cond(c, i) = (model.cond(c, i) + a) / (class_docs[c] + 2.0 * a);
    } else {
      // Multinomial over TF-IDF mass.
      double total = model.cond.row(c).sum();
      for (int i = 0; i < v; ++i) model.cond(c, i) = (model.cond(c, i) + a) / (total + a * v);
    }
  }
  return model;
}

Eigen::VectorXd nb_predict_proba(const NbModel& model, const TokenStream& doc) {
  const int k = model.n_classes;
  const int v = model.vocab.size();
  if (k < 2 || model.cond.rows() != k || model.cond.cols() != v)
    throw std::invalid_argument("nb_predict_proba: malformed model");

  Eigen::VectorXd score(k);
  for (int c = 0; c < k; ++c) score(c) = std::log(model.priors(c));

  if (model.config.mode == NbFeatureMode::onehot) {
    std::vector<int> present = unique_present_ids(doc, model.vocab);
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      if (!model.config.presence_only) {
        for (int i = 0; i < v; ++i) s += std::log1p(-model.cond(c, i));
        for (int id : present) s -= std::log1p(-model.cond(c, id));
      }
      for (int id : present) s += std::log(model.cond(c, id));
      score(c) += s;
    }
  } else {
    for (const auto& [id, w] : tfidf_transform(doc, model.vocab))
      for (int c = 0; c < k; ++c) score(c) += w * std::log(model.cond(c, id));
  }

  double shift = score.maxCoeff();
  Eigen::VectorXd p = (score.array() - shift).exp();
  return p / p.sum();
}

int nb_predict(const NbModel& model, const TokenStream& doc) {
  Eigen::VectorXd p = nb_predict_proba(model, doc);
  int best = 0;
  for (int c = 1; c < model.n_classes; ++c)
    if (p(c) > p(best)) best = c;
  return best;
}

}  // namespace htc
