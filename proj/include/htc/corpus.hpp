#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace htc {

// One raw residential request row as ingested: identifier, timestamp, the
// four operator-supplied category tags, free-text request, and the free-text
// responsible-department description (may be missing or flagged invalid).
struct RawRecord {
  std::string id;
  std::string timestamp;
  std::array<std::string, 4> categories;  // empty string = empty slot
  std::string request_text;
  std::optional<std::string> department_text;
  bool invalid_flag = false;
};

// Maps free-form department descriptions onto a closed label space.
// File format: UTF-8 TSV with #CANONICAL / #ALIAS / #LOCATION sections.
struct LabelDictionary {
  std::vector<std::string> canonical_names;      // line order = label index
  std::map<std::string, int> aliases;            // variant -> canonical index
  std::set<std::string> location_nouns;          // stripped from name edges

  int add_canonical(const std::string& name);
  std::optional<int> index_of(const std::string& canonical) const;
  size_t size() const { return canonical_names.size(); }

  void save(const std::string& path) const;
  static LabelDictionary load(const std::string& path);
};

struct ValidRecord {
  std::string id;
  std::string timestamp;
  std::array<std::string, 4> categories;
  std::string request_text;
  std::string department_text;
  int canonical_label = -1;
};

struct DropStats {
  size_t invalid_flag = 0;
  size_t missing_dept = 0;
  size_t unmapped = 0;
  size_t total() const { return invalid_flag + missing_dept + unmapped; }
  std::string to_json() const;
};

enum class RecordFormat { jsonl, csv };

RecordFormat parse_record_format(const std::string& name);

// Reads one RawRecord per row, order preserved. Malformed rows raise with the
// 1-based row number in the message.
std::vector<RawRecord> load_records(const std::string& path, RecordFormat format);

void save_records_jsonl(const std::string& path, const std::vector<RawRecord>& records);
void save_valid_jsonl(const std::string& path, const std::vector<ValidRecord>& records);
std::vector<ValidRecord> load_valid_jsonl(const std::string& path);

// Strips location nouns off both ends of the tokenized description, then
// resolves via the alias map, then via exact canonical match.
std::optional<int> normalize_label(const std::string& department_text,
                                   const LabelDictionary& dict);

// Drops records with a missing department description or an invalid marker;
// unmappable labels are a counted drop reason, not an error.
std::pair<std::vector<ValidRecord>, DropStats> filter_valid(
    const std::vector<RawRecord>& records, const LabelDictionary& dict);

struct ShardPlan {
  std::vector<std::vector<size_t>> train_shards;  // indices into the record list
  std::vector<std::vector<size_t>> test_shards;
  size_t shard_size_train = 0;
  size_t shard_size_test = 0;
  double split_ratio = 0.0;
  bool partial_train = false;  // last shard smaller than shard_size
  bool partial_test = false;

  std::string to_json() const;
  static ShardPlan from_json(const std::string& json_text);
};

// Deterministic for a fixed seed. The final partial shard is kept and flagged.
ShardPlan split_shards(size_t n_records, double ratio, size_t train_shard,
                       size_t test_shard, uint64_t seed);

struct SyntheticSpec {
  int n_classes = 2;
  size_t n_samples = 0;
  int vocab_per_class = 20;
  int shared_vocab = 0;
  double imbalance_exponent = 0.0;  // class sizes ~ rank^-exponent
  std::pair<int, int> doc_length_range = {10, 30};
  uint64_t seed = 0;
};

// Power-law class sizes; class c draws tokens from its private vocabulary
// plus the shared vocabulary. Label names reuse the first two private tokens
// so label-name embeddings are trainable from the corpus itself.
std::pair<std::vector<ValidRecord>, LabelDictionary> generate_synthetic(
    const SyntheticSpec& spec);

// Exact class sizes used by generate_synthetic (largest-remainder rounding).
std::vector<size_t> synthetic_class_sizes(const SyntheticSpec& spec);

}  // namespace htc
