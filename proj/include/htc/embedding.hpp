#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "htc/text.hpp"

namespace htc {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Token vectors, one row per vocabulary entry. `output` holds the
// context-side weights used during negative-sampling training; it is not
// persisted and is empty after load().
struct EmbeddingMatrix {
  int dim = 0;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  MatrixRM vectors;              // |V| x dim
  MatrixRM output;               // |V| x dim, training only
  std::vector<double> epoch_loss;

  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? -1 : it->second;
  }
  // OOV tokens map to the zero vector.
  Eigen::RowVectorXd vector_of(const std::string& token) const;

  void save(const std::string& path) const;
  static EmbeddingMatrix load(const std::string& path);
  uint64_t content_hash() const;
};

struct CbowParams {
  int dim = 100;
  int window_block = 5;  // center word plus (window_block-1)/2 neighbors each side
  int negatives = 5;
  int epochs = 5;
  double lr = 0.05;      // decays linearly to 10% of the initial value
  uint64_t seed = 1;
};

// Negative-sampling CBOW objective for one center position, decomposed so the
// analytic gradients can be checked against finite differences. h is the mean
// of the context rows of `input`; the loss is
//   -ln sigmoid(out[target]·h) - sum_k ln sigmoid(-out[neg_k]·h).
struct CbowGradients {
  Eigen::RowVectorXd d_h;                                   // dL/dh
  std::vector<std::pair<int, Eigen::RowVectorXd>> d_output; // row id -> dL/drow
};

double cbow_objective(const MatrixRM& input, const MatrixRM& output,
                      const std::vector<int>& context, int target,
                      const std::vector<int>& negatives,
                      CbowGradients* grads = nullptr);

// Trains on the in-vocabulary token sequences of `corpus`. Deterministic for
// a fixed seed; per-epoch mean loss is recorded in the result.
EmbeddingMatrix cbow_train(const std::vector<TokenStream>& corpus,
                           const Vocabulary& vocab, const CbowParams& params);

// Fixed-shape input for the sequence models: the first max_len in-vocabulary
// tokens as embedding rows, zero-padded to max_len.
struct SequenceTensor {
  MatrixRM rows;        // max_len x dim
  int true_length = 0;
};

SequenceTensor embed_sequence(const TokenStream& doc, const EmbeddingMatrix& emb,
                              int max_len = 100);

}  // namespace htc
