#include "htc/features.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {

TfidfVector tfidf_transform(const TokenStream& doc, const Vocabulary& vocab) {
  TfidfVector out;
  std::map<int, int64_t> tf;
  for (const auto& tok : doc.tokens) {
    int id = vocab.id(tok);
    if (id >= 0) ++tf[id];
  }
  const double n = static_cast<double>(vocab.n_docs);
  for (const auto& [id, count] : tf) {
    double df = static_cast<double>(vocab.df[id]);
    out[id] = static_cast<double>(count) * std::log(n / df);
  }
  return out;
}

void normalize_corpus_tfidf(std::vector<TfidfVector>& vectors) {
  double total = 0.0;
  for (const auto& v : vectors)
    for (const auto& [id, w] : v) total += w;
  if (total <= 0.0) throw std::runtime_error("tfidf corpus sum is not positive");
  for (auto& v : vectors)
    for (auto& [id, w] : v) w /= total;
}

namespace {

std::string combo_key(const ValidRecord& rec, const Tokenizer& tokenizer) {
  std::string key;
  for (const auto& tag : rec.categories) {
    for (const auto& tok : tokenizer.tokenize(tag).tokens) {
      if (!key.empty()) key += ' ';
      key += tok;
    }
  }
  return key;
}

}  // namespace

TagComboTable build_tag_combo_table(const std::vector<ValidRecord>& records,
                                    size_t n_labels, const Tokenizer& tokenizer) {
  TagComboTable table;
  table.counts.assign(n_labels, {});
  std::unordered_map<std::string, size_t> combo_id;
  for (const auto& rec : records) {
    if (rec.canonical_label < 0 ||
        static_cast<size_t>(rec.canonical_label) >= n_labels)
      throw std::runtime_error("record label out of range: " + rec.id);
    std::string key = combo_key(rec, tokenizer);
    auto [it, fresh] = combo_id.emplace(key, table.combo_names.size());
    if (fresh) {
      table.combo_names.push_back(key);
      for (auto& row : table.counts) row.push_back(0);
    }
    ++table.counts[rec.canonical_label][it->second];
  }
  return table;
}

TagComboTable build_tag_combo_table(const std::vector<ValidRecord>& records,
                                    size_t n_labels) {
  WhitespaceTokenizer tok;
  return build_tag_combo_table(records, n_labels, tok);
}

const char* iv_strength_name(IvStrength s) {
  switch (s) {
    case IvStrength::useless: return "useless";
    case IvStrength::weak: return "weak";
    case IvStrength::medium: return "medium";
    case IvStrength::strong: return "strong";
  }
  throw std::logic_error("bad strength");
}

IvStrength iv_strength_of(double iv) {
  if (iv <= 0.02) return IvStrength::useless;
  if (iv <= 0.10) return IvStrength::weak;
  if (iv <= 0.30) return IvStrength::medium;
  return IvStrength::strong;
}

IvReport compute_woe_iv(const TagComboTable& table, double epsilon,
                        bool raw_count_woe) {
  const size_t n_labels = table.n_labels();
  const size_t n_combos = table.n_combos();
  if (n_labels == 0 || n_combos == 0)
    throw std::runtime_error("empty contingency table");
  if (epsilon <= 0.0) throw std::runtime_error("epsilon must be positive");

  std::vector<double> row_total(n_labels, 0.0);
  for (size_t i = 0; i < n_labels; ++i)
    for (size_t j = 0; j < n_combos; ++j)
      row_total[i] += static_cast<double>(table.counts[i][j]);

  IvReport report;
  report.woe.resize(static_cast<Eigen::Index>(n_labels),
                    static_cast<Eigen::Index>(n_combos));
  report.iv_per_combo.resize(static_cast<Eigen::Index>(n_combos));
  report.strength.resize(n_combos);

  for (size_t j = 0; j < n_combos; ++j) {
    // a = label mass under this combo, b = label mass outside it, with zero
    // cells lifted to epsilon so both log arguments stay finite.
    std::vector<double> a(n_labels), b(n_labels);
    double a_sum = 0.0, b_sum = 0.0;
    for (size_t i = 0; i < n_labels; ++i) {
      double c = static_cast<double>(table.counts[i][j]);
      a[i] = c > 0.0 ? c : epsilon;
      b[i] = row_total[i] - c > 0.0 ? row_total[i] - c : epsilon;
      a_sum += a[i];
      b_sum += b[i];
    }
    double iv = 0.0;
    for (size_t i = 0; i < n_labels; ++i) {
      double p = a[i] / a_sum;
      double q = b[i] / b_sum;
      double woe = raw_count_woe ? std::log(a[i] / b[i]) : std::log(p / q);
      report.woe(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = woe;
      iv += (p - q) * woe;
    }
    report.iv_per_combo(static_cast<Eigen::Index>(j)) = iv;
    report.strength[j] = iv_strength_of(iv);
  }
  return report;
}

std::string IvReport::to_json(const TagComboTable& table) const {
  nlohmann::ordered_json combos = nlohmann::ordered_json::array();
  for (size_t j = 0; j < table.n_combos(); ++j) {
    nlohmann::ordered_json woe_col = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < woe.rows(); ++i)
      woe_col.push_back(woe(i, static_cast<Eigen::Index>(j)));
    combos.push_back({{"combo", table.combo_names[j]},
                      {"iv", iv_per_combo(static_cast<Eigen::Index>(j))},
                      {"strength", iv_strength_name(strength[j])},
                      {"woe", woe_col}});
  }
  nlohmann::ordered_json root{{"n_labels", table.n_labels()},
                              {"n_combos", table.n_combos()},
                              {"combos", combos}};
  return root.dump(2) + "\n";
}

}  // namespace htc
