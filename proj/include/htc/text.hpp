#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htc {

// Token sequence for one record. POS tags are optional; only tokenizer
// plugins that perform tagging fill them (parallel to tokens when present).
struct TokenStream {
  std::vector<std::string> tokens;
  std::vector<std::string> pos;
  bool has_pos() const { return !pos.empty() && pos.size() == tokens.size(); }
};

// Pluggable segmentation. The pipeline ships a whitespace splitter and a
// greedy longest-match lexicon segmenter; anything smarter (e.g. a
// statistics-based segmenter for Chinese) plugs in behind this interface.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenStream tokenize(std::string_view text) const = 0;
};

class WhitespaceTokenizer : public Tokenizer {
 public:
  TokenStream tokenize(std::string_view text) const override;
};

// Greedy longest-match against a lexicon, applied within whitespace-separated
// runs. Characters not covered by any entry fall back to single-char tokens.
class LexiconTokenizer : public Tokenizer {
 public:
  explicit LexiconTokenizer(std::set<std::string> lexicon);
  static LexiconTokenizer from_file(const std::string& path);
  TokenStream tokenize(std::string_view text) const override;

 private:
  std::set<std::string> lexicon_;
  size_t max_entry_len_ = 0;
};

// Stop-word list file: one token per line, '#' starts a comment line.
std::set<std::string> load_stop_words(const std::string& path);

struct DropClasses {
  bool digits = true;
  bool foreign_script = true;
  bool punctuation = true;
};

struct FilterStats {
  size_t stop_words = 0;
  size_t digits = 0;
  size_t foreign_script = 0;
  size_t punctuation = 0;
  size_t pos_drops = 0;
  bool pos_filter_applied = false;
};

// Order-preserving filter. POS-based drops (verbs/adjectives/adverbs) apply
// only when the stream carries POS tags; otherwise the rule is skipped and
// recorded as skipped in the stats.
TokenStream filter_tokens(const TokenStream& stream, const std::set<std::string>& stops,
                          const DropClasses& drop, FilterStats* stats = nullptr);

struct Vocabulary {
  std::vector<std::string> tokens;                 // id -> token
  std::unordered_map<std::string, int> id_of;      // token -> id
  std::vector<size_t> df;                          // document frequency per id
  std::vector<size_t> cf;                          // collection frequency per id
  size_t n_docs = 0;

  size_t size() const { return tokens.size(); }
  int id(const std::string& token) const {
    auto it = id_of.find(token);
    return it == id_of.end() ? -1 : it->second;
  }
  uint64_t content_hash() const;
};

// Ids assigned in first-appearance order; tokens with df < min_df dropped.
Vocabulary build_vocabulary(const std::vector<TokenStream>& corpus, size_t min_df = 1);

std::string vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const std::string& json_text);

struct Posting {
  size_t record = 0;
  uint32_t count = 0;
  bool operator==(const Posting&) const = default;
};

struct InvertedIndex {
  std::vector<std::vector<Posting>> postings;  // token id -> postings by record
};

InvertedIndex build_inverted_index(const std::vector<TokenStream>& corpus,
                                   const Vocabulary& vocab);

struct FreqBucket {
  uint64_t lo = 0;
  uint64_t hi = 0;  // inclusive; UINT64_MAX = unbounded
  size_t samples = 0;
};

// For each bucket, the number of records containing at least one token whose
// collection frequency lands in the bucket. Buckets must tile [1, inf).
std::vector<FreqBucket> frequency_histogram(const InvertedIndex& index,
                                            const Vocabulary& vocab,
                                            std::vector<FreqBucket> buckets);

std::string histogram_to_json(const std::vector<FreqBucket>& buckets);

}  // namespace htc
