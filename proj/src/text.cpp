#include "htc/text.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {

TokenStream WhitespaceTokenizer::tokenize(std::string_view text) const {
  TokenStream out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

LexiconTokenizer::LexiconTokenizer(std::set<std::string> lexicon)
    : lexicon_(std::move(lexicon)) {
  for (const auto& e : lexicon_) max_entry_len_ = std::max(max_entry_len_, e.size());
}

LexiconTokenizer LexiconTokenizer::from_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::set<std::string> lex;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lex.insert(line);
  }
  return LexiconTokenizer(std::move(lex));
}

TokenStream LexiconTokenizer::tokenize(std::string_view text) const {
  TokenStream out;
  size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) { ++i; continue; }
    size_t run_end = i;
    while (run_end < text.size() && !std::isspace(static_cast<unsigned char>(text[run_end])))
      ++run_end;
    size_t p = i;
    while (p < run_end) {
      size_t best = 0;
      size_t limit = std::min(max_entry_len_, run_end - p);
      for (size_t len = limit; len >= 1; --len) {
        if (lexicon_.count(std::string(text.substr(p, len)))) { best = len; break; }
      }
      if (best == 0) best = 1;  // uncovered char becomes its own token
      out.tokens.emplace_back(text.substr(p, best));
      p += best;
    }
    i = run_end;
  }
  return out;
}

std::set<std::string> load_stop_words(const std::string& path) {
  std::istringstream in(read_file(path));
  std::set<std::string> stops;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    stops.insert(line);
  }
  return stops;
}

namespace {

bool has_digit(const std::string& t) {
  for (unsigned char c : t)
    if (std::isdigit(c)) return true;
  return false;
}

// ASCII-core heuristic: any byte outside 7-bit ASCII counts as another script.
bool is_foreign(const std::string& t) {
  for (unsigned char c : t)
    if (c >= 0x80) return true;
  return false;
}

bool all_punct(const std::string& t) {
  if (t.empty()) return false;
  for (unsigned char c : t)
    if (!std::ispunct(c)) return false;
  return true;
}

bool pos_dropped(const std::string& tag) {
  // verbs, adjectives, adverbs
  return tag == "v" || tag == "a" || tag == "d" || tag == "VERB" || tag == "ADJ" ||
         tag == "ADV";
}

}  // namespace

TokenStream filter_tokens(const TokenStream& stream, const std::set<std::string>& stops,
                          const DropClasses& drop, FilterStats* stats) {
  FilterStats local;
  FilterStats& st = stats ? *stats : local;
  st = FilterStats{};
  st.pos_filter_applied = stream.has_pos();
  TokenStream out;
  for (size_t i = 0; i < stream.tokens.size(); ++i) {
    const std::string& t = stream.tokens[i];
    if (t.empty()) continue;
    if (stops.count(t)) { ++st.stop_words; continue; }
    if (drop.digits && has_digit(t)) { ++st.digits; continue; }
    if (drop.foreign_script && is_foreign(t)) { ++st.foreign_script; continue; }
    if (drop.punctuation && all_punct(t)) { ++st.punctuation; continue; }
    if (st.pos_filter_applied && pos_dropped(stream.pos[i])) { ++st.pos_drops; continue; }
    out.tokens.push_back(t);
    if (st.pos_filter_applied) out.pos.push_back(stream.pos[i]);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<TokenStream>& corpus, size_t min_df) {
  if (corpus.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  // first pass: df/cf in first-appearance order
  std::unordered_map<std::string, int> first_id;
  std::vector<std::string> order;
  std::vector<size_t> df, cf;
  std::vector<int> seen_in_doc;  // token id -> last doc index seen
  for (size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& t : corpus[d].tokens) {
      auto [it, inserted] = first_id.try_emplace(t, static_cast<int>(order.size()));
      if (inserted) {
        order.push_back(t);
        df.push_back(0);
        cf.push_back(0);
        seen_in_doc.push_back(-1);
      }
      size_t id = static_cast<size_t>(it->second);
      ++cf[id];
      if (seen_in_doc[id] != static_cast<int>(d)) {
        seen_in_doc[id] = static_cast<int>(d);
        ++df[id];
      }
    }
  }
  Vocabulary v;
  v.n_docs = corpus.size();
  for (size_t i = 0; i < order.size(); ++i) {
    if (df[i] < min_df) continue;
    v.id_of[order[i]] = static_cast<int>(v.tokens.size());
    v.tokens.push_back(order[i]);
    v.df.push_back(df[i]);
    v.cf.push_back(cf[i]);
  }
  if (v.tokens.empty())
    throw std::runtime_error("build_vocabulary: vocabulary empty after min_df pruning");
  return v;
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < tokens.size(); ++i) {
    h = fnv1a64(tokens[i], h);
    h = fnv1a64("\x1f", h);
    uint64_t counts[2] = {df[i], cf[i]};
    h = fnv1a64_bytes(counts, sizeof(counts), h);
  }
  h = fnv1a64_bytes(&n_docs, sizeof(n_docs), h);
  return h;
}

InvertedIndex build_inverted_index(const std::vector<TokenStream>& corpus,
                                   const Vocabulary& vocab) {
  InvertedIndex index;
  index.postings.resize(vocab.size());
  std::vector<uint32_t> counts(vocab.size(), 0);
  std::vector<int> touched;
  for (size_t d = 0; d < corpus.size(); ++d) {
    touched.clear();
    for (const auto& t : corpus[d].tokens) {
      int id = vocab.id(t);
      if (id < 0) continue;  // pruned token
      if (counts[static_cast<size_t>(id)]++ == 0) touched.push_back(id);
    }
    std::sort(touched.begin(), touched.end());
    for (int id : touched) {
      index.postings[static_cast<size_t>(id)].push_back({d, counts[static_cast<size_t>(id)]});
      counts[static_cast<size_t>(id)] = 0;
    }
  }
  return index;
}

std::vector<FreqBucket> frequency_histogram(const InvertedIndex& index,
                                            const Vocabulary& vocab,
                                            std::vector<FreqBucket> buckets) {
  if (buckets.empty()) throw std::invalid_argument("frequency_histogram: no buckets");
  std::sort(buckets.begin(), buckets.end(),
            [](const FreqBucket& a, const FreqBucket& b) { return a.lo < b.lo; });
  uint64_t expect = 1;
  for (const auto& b : buckets) {
    if (b.lo != expect)
      throw std::invalid_argument(b.lo < expect
                                      ? "frequency_histogram: overlapping buckets"
                                      : "frequency_histogram: gap in bucket coverage");
    if (b.hi < b.lo) throw std::invalid_argument("frequency_histogram: bucket hi < lo");
    if (b.hi == UINT64_MAX) { expect = UINT64_MAX; break; }
    expect = b.hi + 1;
  }
  if (expect != UINT64_MAX)
    throw std::invalid_argument("frequency_histogram: buckets must cover [1,inf)");

  std::vector<std::vector<char>> hit(buckets.size(), std::vector<char>(vocab.n_docs, 0));
  for (size_t id = 0; id < vocab.size(); ++id) {
    uint64_t freq = vocab.cf[id];
    size_t b = 0;
    while (b < buckets.size() && !(freq >= buckets[b].lo && freq <= buckets[b].hi)) ++b;
    if (b == buckets.size()) continue;  // freq 0 cannot happen for retained tokens
    for (const auto& post : index.postings[id]) hit[b][post.record] = 1;
  }
  for (size_t b = 0; b < buckets.size(); ++b)
    buckets[b].samples = static_cast<size_t>(
        std::count(hit[b].begin(), hit[b].end(), static_cast<char>(1)));
  return buckets;
}

std::string vocabulary_to_json(const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["tokens"] = vocab.tokens;
  j["df"] = vocab.df;
  j["cf"] = vocab.cf;
  j["n_docs"] = vocab.n_docs;
  return j.dump(2);
}

Vocabulary vocabulary_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("vocabulary: malformed JSON");
  Vocabulary v;
  v.tokens = j.at("tokens").get<std::vector<std::string>>();
  v.df = j.at("df").get<std::vector<size_t>>();
  v.cf = j.at("cf").get<std::vector<size_t>>();
  v.n_docs = j.at("n_docs").get<size_t>();
  if (v.df.size() != v.tokens.size() || v.cf.size() != v.tokens.size())
    throw std::runtime_error("vocabulary: field lengths disagree");
  for (size_t i = 0; i < v.tokens.size(); ++i) v.id_of[v.tokens[i]] = static_cast<int>(i);
  return v;
}

std::string histogram_to_json(const std::vector<FreqBucket>& buckets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : buckets) {
    nlohmann::json j;
    std::string range = std::to_string(b.lo);
    if (b.hi == UINT64_MAX) range += "+";
    else if (b.hi != b.lo) range += "-" + std::to_string(b.hi);
    j["range"] = range;
    j["samples"] = b.samples;
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace htc
