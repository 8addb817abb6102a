#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htc/metaclass.hpp"
#include "htc/naive_bayes.hpp"
#include "htc/nn.hpp"
#include "htc/text.hpp"

namespace htc {

// Shared sample store for hierarchical training: token view for naive Bayes,
// dense row view (flattened embedding sequences) for the neural classifiers.
// `features` may stay empty when only the token view is used.
struct HierDataset {
  std::vector<TokenStream> docs;
  Mat<float> features;
  std::vector<int> labels;  // global label ids
  int n_labels = 0;
  size_t size() const { return labels.size(); }
};

// Adapters give the hierarchy a uniform fit/predict surface. `salt`
// distinguishes the meta model (0) from leaf m (1 + m) so per-unit seeds
// differ deterministically.

struct NbAdapterOptions {
  NbConfig nb;
  const Vocabulary* vocab = nullptr;
};

struct NbAdapter {
  using Options = NbAdapterOptions;
  NbModel model;

  static NbAdapter fit(const HierDataset& data, const std::vector<size_t>& rows,
                       const std::vector<int>& targets, int n_out, const Options& opt,
                       uint64_t /*salt*/) {
    if (!opt.vocab) throw std::invalid_argument("hierarchy: nb adapter needs a vocabulary");
    std::vector<TokenStream> docs;
    docs.reserve(rows.size());
    for (size_t r : rows) docs.push_back(data.docs[r]);
    NbAdapter out;
    out.model = nb_fit(docs, targets, n_out, *opt.vocab, opt.nb);
    return out;
  }

  Eigen::VectorXd predict_proba(const HierDataset& data, size_t row) const {
    return nb_predict_proba(model, data.docs[row]);
  }
};

struct MlpAdapterOptions {
  TrainConfig train;
  int h1 = 512;
  int h2 = 128;
};

struct MlpAdapter {
  using Options = MlpAdapterOptions;
  // forward_logits caches activations for backward; inference keeps logical
  // constness.
  mutable Mlp<float> model;

  static MlpAdapter fit(const HierDataset& data, const std::vector<size_t>& rows,
                        const std::vector<int>& targets, int n_out, const Options& opt,
                        uint64_t salt) {
    if (static_cast<size_t>(data.features.rows()) != data.size())
      throw std::invalid_argument("hierarchy: mlp adapter needs dense features");
    Mat<float> x(rows.size(), data.features.cols());
    for (size_t i = 0; i < rows.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    uint64_t seed = opt.train.seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    MlpAdapter out;
    out.model = Mlp<float>(static_cast<int>(x.cols()), n_out, seed, opt.h1, opt.h2);
    TrainConfig cfg = opt.train;
    cfg.seed = seed + 1;
    fit_mlp(out.model, x, targets, cfg);
    return out;
  }

  Eigen::VectorXd predict_proba(const HierDataset& data, size_t row) const {
    Mat<float> x = data.features.row(static_cast<Eigen::Index>(row));
    Mat<float> p = softmax_rows(model.forward_logits(x, false));
    Eigen::VectorXd out(p.cols());
    for (Eigen::Index c = 0; c < p.cols(); ++c) out(c) = double(p(0, c));
    return out;
  }
};

struct HierOptions {
  // Route samples to leaves by the trained meta model's prediction instead of
  // their true label's meta-class.
  bool use_predicted_meta = false;
};

template <typename C>
struct Hierarchy {
  MetaClassMap map;
  std::vector<std::vector<int>> leaf_labels;  // meta id -> ascending global labels
  bool constant_meta = false;                 // k == 1
  C meta{};
  std::vector<C> leaves;
  std::vector<char> constant_leaf;            // single-label meta-class
  std::vector<std::string> warnings;

  int k() const { return map.k; }
  int n_labels() const { return static_cast<int>(map.assignment.size()); }
};

template <typename C>
Hierarchy<C> train_hierarchy(const HierDataset& data, const MetaClassMap& map,
                             const typename C::Options& meta_opt,
                             const typename C::Options& leaf_opt,
                             const HierOptions& hopt = {}) {
  map.validate();
  if (data.size() == 0) throw std::invalid_argument("hierarchy: empty training set");
  if (data.n_labels != static_cast<int>(map.assignment.size()))
    throw std::invalid_argument("hierarchy: label count does not match meta-class map");

  Hierarchy<C> h;
  h.map = map;
  const int k = map.k;
  h.leaf_labels.assign(k, {});
  for (size_t l = 0; l < map.assignment.size(); ++l)
    h.leaf_labels[map.assignment[l]].push_back(static_cast<int>(l));

  std::vector<int> meta_target(data.size());
  std::vector<size_t> meta_count(k, 0);
  for (size_t i = 0; i < data.size(); ++i) {
    int l = data.labels[i];
    if (l < 0 || l >= data.n_labels) throw std::invalid_argument("hierarchy: label out of range");
    meta_target[i] = map.assignment[l];
    ++meta_count[meta_target[i]];
  }
  for (int m = 0; m < k; ++m) {
    if (meta_count[m] == 0)
      throw std::invalid_argument("hierarchy: meta-class " + std::to_string(m) +
                                  " has no training samples");
  }

  std::vector<size_t> all_rows(data.size());
  for (size_t i = 0; i < data.size(); ++i) all_rows[i] = i;
  if (k == 1) {
    h.constant_meta = true;
  } else {
    h.meta = C::fit(data, all_rows, meta_target, k, meta_opt, 0);
  }

  std::vector<int> route = meta_target;
  if (hopt.use_predicted_meta && !h.constant_meta) {
    for (size_t i = 0; i < data.size(); ++i) {
      Eigen::VectorXd p = h.meta.predict_proba(data, i);
      int best = 0;
      for (int m = 1; m < k; ++m)
        if (p(m) > p(best)) best = m;
      route[i] = best;
    }
  }

  h.leaves.resize(k);
  h.constant_leaf.assign(k, 0);
  for (int m = 0; m < k; ++m) {
    const auto& labels_m = h.leaf_labels[m];
    if (labels_m.size() < 2) {
      h.constant_leaf[m] = 1;
      h.warnings.push_back("meta-class " + std::to_string(m) +
                           " has a single label; using a constant leaf predictor");
      continue;
    }
    std::vector<int> local_of(data.n_labels, -1);
    for (size_t j = 0; j < labels_m.size(); ++j) local_of[labels_m[j]] = static_cast<int>(j);
    std::vector<size_t> rows;
    std::vector<int> targets;
    size_t dropped = 0;
    for (size_t i = 0; i < data.size(); ++i) {
      if (route[i] != m) continue;
      int local = local_of[data.labels[i]];
      if (local < 0) {  // predicted routing sent a foreign-label sample here
        ++dropped;
        continue;
      }
      rows.push_back(i);
      targets.push_back(local);
    }
    if (dropped > 0)
      h.warnings.push_back("meta-class " + std::to_string(m) + ": dropped " +
                           std::to_string(dropped) +
                           " predicted-routing samples with labels outside the leaf");
    h.leaves[m] = C::fit(data, rows, targets, static_cast<int>(labels_m.size()), leaf_opt,
                         1 + static_cast<uint64_t>(m));
  }
  return h;
}

namespace detail {

template <typename C>
Eigen::VectorXd meta_proba(const Hierarchy<C>& h, const HierDataset& data, size_t row) {
  if (h.constant_meta) return Eigen::VectorXd::Ones(1);
  return h.meta.predict_proba(data, row);
}

template <typename C>
Eigen::VectorXd leaf_proba(const Hierarchy<C>& h, int m, const HierDataset& data, size_t row) {
  if (h.constant_leaf[m]) return Eigen::VectorXd::Ones(1);
  return h.leaves[m].predict_proba(data, row);
}

}  // namespace detail

struct HierPrediction {
  int label = -1;
  double prob = 0.0;
  int meta = -1;
};

// Two model evaluations: pick the top meta-class, then the top label inside
// it. Reported probability is the product of the two stage probabilities.
template <typename C>
HierPrediction cascade_predict(const Hierarchy<C>& h, const HierDataset& data, size_t row) {
  Eigen::VectorXd mp = detail::meta_proba(h, data, row);
  int m = 0;
  for (int i = 1; i < h.k(); ++i)
    if (mp(i) > mp(m)) m = i;
  Eigen::VectorXd lp = detail::leaf_proba(h, m, data, row);
  int j = 0;
  for (int i = 1; i < lp.size(); ++i)
    if (lp(i) > lp(j)) j = i;
  return {h.leaf_labels[m][j], mp(m) * lp(j), m};
}

// Evaluates every leaf and takes the label with the globally largest leaf
// probability; ties break toward the lowest label id.
template <typename C>
HierPrediction max_prob_predict(const Hierarchy<C>& h, const HierDataset& data, size_t row) {
  HierPrediction best;
  for (int m = 0; m < h.k(); ++m) {
    Eigen::VectorXd lp = detail::leaf_proba(h, m, data, row);
    for (int j = 0; j < lp.size(); ++j) {
      int label = h.leaf_labels[m][j];
      if (lp(j) > best.prob || (lp(j) == best.prob && (best.label < 0 || label < best.label)))
        best = {label, lp(j), m};
    }
  }
  return best;
}

// Joint distribution over all labels: P(label) = P(meta) * P(label | meta).
template <typename C>
Eigen::VectorXd cascade_distribution(const Hierarchy<C>& h, const HierDataset& data, size_t row) {
  Eigen::VectorXd mp = detail::meta_proba(h, data, row);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(h.n_labels());
  for (int m = 0; m < h.k(); ++m) {
    Eigen::VectorXd lp = detail::leaf_proba(h, m, data, row);
    for (int j = 0; j < lp.size(); ++j) out(h.leaf_labels[m][j]) = mp(m) * lp(j);
  }
  return out;
}

// Distribution consistent with the max-probability rule: concatenated leaf
// probabilities normalized across leaves (argmax is unchanged by the global
// rescale).
template <typename C>
Eigen::VectorXd max_prob_distribution(const Hierarchy<C>& h, const HierDataset& data, size_t row) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(h.n_labels());
  for (int m = 0; m < h.k(); ++m) {
    Eigen::VectorXd lp = detail::leaf_proba(h, m, data, row);
    for (int j = 0; j < lp.size(); ++j) out(h.leaf_labels[m][j]) = lp(j);
  }
  return out / out.sum();
}

}  // namespace htc
