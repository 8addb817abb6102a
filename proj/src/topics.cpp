#include "htc/topics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "htc/util.hpp"

namespace htc {

TopicModel lda_fit(const std::vector<TokenStream>& documents, const LdaParams& params) {
  const int k = params.num_topics;
  if (k < 2) throw std::runtime_error("lda: need at least 2 topics");
  if (documents.empty()) throw std::runtime_error("lda: no documents");
  if (params.iterations < 1 || params.top_l < 1)
    throw std::runtime_error("lda: bad parameters");

  TopicModel model;
  model.n_topics = k;
  model.alpha = params.alpha < 0.0 ? 50.0 / static_cast<double>(k) : params.alpha;
  model.beta = params.beta;

  // word ids in first-appearance order; docs as id sequences
  std::unordered_map<std::string, int> word_id;
  std::vector<std::vector<int>> docs(documents.size());
  for (size_t d = 0; d < documents.size(); ++d) {
    for (const auto& tok : documents[d].tokens) {
      auto [it, fresh] = word_id.emplace(tok, static_cast<int>(model.vocab.size()));
      if (fresh) model.vocab.push_back(tok);
      docs[d].push_back(it->second);
    }
  }
  const int v = static_cast<int>(model.vocab.size());
  if (v == 0) throw std::runtime_error("lda: empty documents");
  if (v < k)
    model.warnings.push_back("vocabulary smaller than the topic count");

  const int n_docs = static_cast<int>(docs.size());
  std::vector<std::vector<int>> z(docs.size());
  std::vector<std::vector<int>> n_dk(static_cast<size_t>(n_docs), std::vector<int>(static_cast<size_t>(k), 0));
  std::vector<std::vector<int>> n_kw(static_cast<size_t>(k), std::vector<int>(static_cast<size_t>(v), 0));
  std::vector<int64_t> n_k(static_cast<size_t>(k), 0);

  Rng rng(params.seed);
  for (size_t d = 0; d < docs.size(); ++d) {
    z[d].resize(docs[d].size());
    for (size_t i = 0; i < docs[d].size(); ++i) {
      int t = static_cast<int>(rng.index(static_cast<size_t>(k)));
      z[d][i] = t;
      ++n_dk[d][static_cast<size_t>(t)];
      ++n_kw[static_cast<size_t>(t)][static_cast<size_t>(docs[d][i])];
      ++n_k[static_cast<size_t>(t)];
    }
  }

  const double vbeta = static_cast<double>(v) * model.beta;
  std::vector<double> p(static_cast<size_t>(k));
  for (int iter = 0; iter < params.iterations; ++iter) {
    for (size_t d = 0; d < docs.size(); ++d) {
      for (size_t i = 0; i < docs[d].size(); ++i) {
        int w = docs[d][i];
        int old = z[d][i];
        --n_dk[d][static_cast<size_t>(old)];
        --n_kw[static_cast<size_t>(old)][static_cast<size_t>(w)];
        --n_k[static_cast<size_t>(old)];

        double total = 0.0;
        for (int t = 0; t < k; ++t) {
          total += (static_cast<double>(n_dk[d][static_cast<size_t>(t)]) + model.alpha) *
                   (static_cast<double>(n_kw[static_cast<size_t>(t)][static_cast<size_t>(w)]) + model.beta) /
                   (static_cast<double>(n_k[static_cast<size_t>(t)]) + vbeta);
          p[static_cast<size_t>(t)] = total;
        }
        double u = rng.uniform() * total;
        int pick = k - 1;
        for (int t = 0; t < k; ++t)
          if (u < p[static_cast<size_t>(t)]) {
            pick = t;
            break;
          }

        z[d][i] = pick;
        ++n_dk[d][static_cast<size_t>(pick)];
        ++n_kw[static_cast<size_t>(pick)][static_cast<size_t>(w)];
        ++n_k[static_cast<size_t>(pick)];
      }
    }
  }

  model.topic_word.resize(k, v);
  for (int t = 0; t < k; ++t)
    for (int w = 0; w < v; ++w)
      model.topic_word(t, w) =
          (static_cast<double>(n_kw[static_cast<size_t>(t)][static_cast<size_t>(w)]) + model.beta) /
          (static_cast<double>(n_k[static_cast<size_t>(t)]) + vbeta);

  int64_t n_total = std::accumulate(n_k.begin(), n_k.end(), int64_t{0});
  model.topic_prior.resize(k);
  for (int t = 0; t < k; ++t)
    model.topic_prior(t) =
        static_cast<double>(n_k[static_cast<size_t>(t)]) / static_cast<double>(n_total);

  const int l = std::min(params.top_l, v);
  model.top_words.resize(static_cast<size_t>(k));
  std::vector<int> order(static_cast<size_t>(v));
  for (int t = 0; t < k; ++t) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double wa = model.topic_word(t, a), wb = model.topic_word(t, b);
      if (wa != wb) return wa > wb;
      return a < b;
    });
    for (int i = 0; i < l; ++i)
      model.top_words[static_cast<size_t>(t)].emplace_back(
          model.vocab[static_cast<size_t>(order[static_cast<size_t>(i)])],
          model.topic_word(t, order[static_cast<size_t>(i)]));
  }
  return model;
}

}  // namespace htc
