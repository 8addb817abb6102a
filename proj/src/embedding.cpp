#include "htc/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "htc/util.hpp"

namespace htc {

namespace {

double log_sigmoid(double x) {
  // -softplus(-x), stable on both tails
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Eigen::RowVectorXd EmbeddingMatrix::vector_of(const std::string& token) const {
  int i = id(token);
  if (i < 0) return Eigen::RowVectorXd::Zero(dim);
  return vectors.row(i);
}

void EmbeddingMatrix::save(const std::string& path) const {
  std::ostringstream out;
  out << "dim=" << dim << " vocab=" << tokens.size() << "\n";
  for (size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i];
    for (int j = 0; j < dim; ++j)
      out << ' ' << format_double(vectors(static_cast<Eigen::Index>(i), j));
    out << "\n";
  }
  write_file(path, out.str());
}

EmbeddingMatrix EmbeddingMatrix::load(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("empty embedding file: " + path);
  int dim = 0;
  size_t vocab = 0;
  if (std::sscanf(header.c_str(), "dim=%d vocab=%zu", &dim, &vocab) != 2 ||
      dim <= 0)
    throw std::runtime_error("bad embedding header: " + header);

  EmbeddingMatrix emb;
  emb.dim = dim;
  emb.vectors.resize(static_cast<Eigen::Index>(vocab), dim);
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= vocab) throw std::runtime_error("embedding has extra rows: " + path);
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    for (int j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!(ls >> v))
        throw std::runtime_error("short embedding row for token: " + token);
    emb.vectors(static_cast<Eigen::Index>(row), j) = v;
    }
    emb.index.emplace(token, static_cast<int>(row));
    emb.tokens.push_back(token);
    ++row;
  }
  if (row != vocab)
    throw std::runtime_error("embedding row count mismatch: " + path);
  return emb;
}

uint64_t EmbeddingMatrix::content_hash() const {
  uint64_t h = fnv1a64("embedding");
  h = fnv1a64(std::to_string(dim), h);
  for (size_t i = 0; i < tokens.size(); ++i) {
    h = fnv1a64(tokens[i], h);
    for (int j = 0; j < dim; ++j)
      h = fnv1a64(format_double(vectors(static_cast<Eigen::Index>(i), j)), h);
  }
  return h;
}

double cbow_objective(const MatrixRM& input, const MatrixRM& output,
                      const std::vector<int>& context, int target,
                      const std::vector<int>& negatives, CbowGradients* grads) {
  if (context.empty()) throw std::runtime_error("cbow: empty context");
  const Eigen::Index d = input.cols();
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(d);
  for (int c : context) h += input.row(c);
  h /= static_cast<double>(context.size());

  if (grads) {
    grads->d_h = Eigen::RowVectorXd::Zero(d);
    grads->d_output.clear();
  }

  double loss = 0.0;
  auto accumulate = [&](int row, double sign) {
    double score = output.row(row).dot(h);
    loss -= log_sigmoid(sign * score);
    if (grads) {
      // d/dscore of -ln sigmoid(sign*score) = sigmoid(score) - (sign>0 ? 1 : 0)
      double g = sigmoid(score) - (sign > 0.0 ? 1.0 : 0.0);
      grads->d_h += g * output.row(row);
      grads->d_output.emplace_back(row, g * h);
    }
  };
  accumulate(target, 1.0);
  for (int k : negatives) accumulate(k, -1.0);
  return loss;
}

EmbeddingMatrix cbow_train(const std::vector<TokenStream>& corpus,
                           const Vocabulary& vocab, const CbowParams& params) {
  const size_t v = vocab.size();
  if (params.negatives >= 0 &&
      v < static_cast<size_t>(params.negatives) + 1)
    throw std::runtime_error("vocabulary smaller than negatives+1");
  if (params.dim <= 0 || params.window_block < 3 || params.epochs < 1)
    throw std::runtime_error("bad cbow parameters");

  // docs as id sequences, OOV dropped
  std::vector<std::vector<int>> docs;
  size_t n_centers = 0;
  for (const auto& stream : corpus) {
    std::vector<int> ids;
    for (const auto& tok : stream.tokens) {
      int id = vocab.id(tok);
      if (id >= 0) ids.push_back(id);
    }
    if (ids.size() >= 2) {
      n_centers += ids.size();
      docs.push_back(std::move(ids));
    }
  }
  if (n_centers == 0) throw std::runtime_error("cbow: no trainable positions");

  // unigram^0.75 noise distribution as a cumulative table
  std::vector<double> noise_cdf(v);
  double acc = 0.0;
  for (size_t i = 0; i < v; ++i) {
    acc += std::pow(static_cast<double>(vocab.cf[i]), 0.75);
    noise_cdf[i] = acc;
  }

  EmbeddingMatrix emb;
  emb.dim = params.dim;
  emb.tokens = vocab.tokens;
  for (size_t i = 0; i < v; ++i) emb.index.emplace(vocab.tokens[i], static_cast<int>(i));

  Rng rng(params.seed);
  emb.vectors.resize(static_cast<Eigen::Index>(v), params.dim);
  const double span = 0.5 / static_cast<double>(params.dim);
  for (Eigen::Index i = 0; i < emb.vectors.rows(); ++i)
    for (Eigen::Index j = 0; j < emb.vectors.cols(); ++j)
      emb.vectors(i, j) = rng.uniform(-span, span);
  emb.output = MatrixRM::Zero(static_cast<Eigen::Index>(v), params.dim);

  auto draw_negative = [&](int target) {
    for (;;) {
      double u = rng.uniform() * acc;
      auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), u);
      int id = static_cast<int>(it - noise_cdf.begin());
      if (id >= static_cast<int>(v)) id = static_cast<int>(v) - 1;
      if (id != target) return id;
    }
  };

  const int radius = (params.window_block - 1) / 2;
  const double total_steps =
      static_cast<double>(params.epochs) * static_cast<double>(n_centers);
  size_t step = 0;
  std::vector<int> context, negatives;
  CbowGradients grads;

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (const auto& ids : docs) {
      const int n = static_cast<int>(ids.size());
      for (int center = 0; center < n; ++center) {
        context.clear();
        for (int off = -radius; off <= radius; ++off) {
          int pos = center + off;
          if (off == 0 || pos < 0 || pos >= n) continue;
          context.push_back(ids[pos]);
        }
        double lr = params.lr *
                    std::max(0.1, 1.0 - static_cast<double>(step) / total_steps);
        ++step;
        if (context.empty()) continue;
        negatives.clear();
        for (int k = 0; k < params.negatives; ++k)
          negatives.push_back(draw_negative(ids[center]));

        epoch_sum += cbow_objective(emb.vectors, emb.output, context,
                                    ids[center], negatives, &grads);
        for (const auto& [row, g] : grads.d_output)
          emb.output.row(row) -= lr * g;
        Eigen::RowVectorXd d_in =
            grads.d_h / static_cast<double>(context.size());
        for (int c : context) emb.vectors.row(c) -= lr * d_in;
      }
    }
    emb.epoch_loss.push_back(epoch_sum / static_cast<double>(n_centers));
  }
  return emb;
}

SequenceTensor embed_sequence(const TokenStream& doc, const EmbeddingMatrix& emb,
                              int max_len) {
  if (max_len <= 0) throw std::runtime_error("max_len must be positive");
  SequenceTensor t;
  t.rows = MatrixRM::Zero(max_len, emb.dim);
  for (const auto& tok : doc.tokens) {
    if (t.true_length >= max_len) break;
    int id = emb.id(tok);
    if (id < 0) continue;
    t.rows.row(t.true_length++) = emb.vectors.row(id);
  }
  return t;
}

}  // namespace htc
