#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htc/corpus.hpp"
#include "htc/text.hpp"

namespace htc {

// Sparse token-id -> weight map for one document.
using TfidfVector = std::map<int, double>;

// w = tf * ln(N / df). Tokens absent from the vocabulary are ignored; a token
// present in every document gets weight 0.
TfidfVector tfidf_transform(const TokenStream& doc, const Vocabulary& vocab);

// Rescales every weight by the global corpus sum so the corpus total is 1.
void normalize_corpus_tfidf(std::vector<TfidfVector>& vectors);

// Label x category-tag-combo contingency counts. The combo key is the
// order-preserving concatenation of the four tags' tokens.
struct TagComboTable {
  std::vector<std::string> combo_names;          // column order
  std::vector<std::vector<int64_t>> counts;      // [label][combo]
  size_t n_labels() const { return counts.size(); }
  size_t n_combos() const { return combo_names.size(); }
};

TagComboTable build_tag_combo_table(const std::vector<ValidRecord>& records,
                                    size_t n_labels, const Tokenizer& tokenizer);
TagComboTable build_tag_combo_table(const std::vector<ValidRecord>& records,
                                    size_t n_labels);

enum class IvStrength { useless, weak, medium, strong };
const char* iv_strength_name(IvStrength s);
IvStrength iv_strength_of(double iv);

struct IvReport {
  Eigen::MatrixXd woe;                 // n_labels x n_combos
  Eigen::VectorXd iv_per_combo;        // n_combos
  std::vector<IvStrength> strength;    // per combo
  std::string to_json(const TagComboTable& table) const;
};

// Distribution-percentage WoE with additive smoothing on zero cells.
// raw_count_woe switches to the raw-count ratio variant.
IvReport compute_woe_iv(const TagComboTable& table, double epsilon = 0.5,
                        bool raw_count_woe = false);

}  // namespace htc
