#include "htc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "htc/util.hpp"

using nlohmann::json;

namespace htc {

int LabelDictionary::add_canonical(const std::string& name) {
  if (auto idx = index_of(name)) return *idx;
  canonical_names.push_back(name);
  return static_cast<int>(canonical_names.size()) - 1;
}

std::optional<int> LabelDictionary::index_of(const std::string& canonical) const {
  for (size_t i = 0; i < canonical_names.size(); ++i)
    if (canonical_names[i] == canonical) return static_cast<int>(i);
  return std::nullopt;
}

void LabelDictionary::save(const std::string& path) const {
  std::ostringstream out;
  out << "#CANONICAL\n";
  for (const auto& n : canonical_names) out << n << "\n";
  out << "#ALIAS\n";
  for (const auto& [variant, idx] : aliases)
    out << variant << "\t" << canonical_names.at(static_cast<size_t>(idx)) << "\n";
  out << "#LOCATION\n";
  for (const auto& n : location_nouns) out << n << "\n";
  write_file(path, out.str());
}

LabelDictionary LabelDictionary::load(const std::string& path) {
  LabelDictionary dict;
  std::istringstream in(read_file(path));
  std::string line;
  enum { none, canonical, alias, location } section = none;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "#CANONICAL") { section = canonical; continue; }
    if (line == "#ALIAS") { section = alias; continue; }
    if (line == "#LOCATION") { section = location; continue; }
    switch (section) {
      case canonical: {
        if (dict.index_of(line))
          throw std::runtime_error("dictionary: duplicate canonical name at line " +
                                   std::to_string(lineno));
        dict.canonical_names.push_back(line);
        break;
      }
      case alias: {
        auto tab = line.find('\t');
        if (tab == std::string::npos)
          throw std::runtime_error("dictionary: alias line without tab at line " +
                                   std::to_string(lineno));
        std::string variant = line.substr(0, tab);
        std::string target = line.substr(tab + 1);
        auto idx = dict.index_of(target);
        if (!idx)
          throw std::runtime_error("dictionary: alias to unknown canonical '" + target +
                                   "' at line " + std::to_string(lineno));
        dict.aliases[variant] = *idx;
        break;
      }
      case location:
        dict.location_nouns.insert(line);
        break;
      case none:
        throw std::runtime_error("dictionary: content before any section header at line " +
                                 std::to_string(lineno));
    }
  }
  return dict;
}

std::string DropStats::to_json() const {
  json j;
  j["invalid_flag"] = invalid_flag;
  j["missing_dept"] = missing_dept;
  j["unmapped"] = unmapped;
  return j.dump();
}

RecordFormat parse_record_format(const std::string& name) {
  if (name == "jsonl") return RecordFormat::jsonl;
  if (name == "csv") return RecordFormat::csv;
  throw std::invalid_argument("unknown record format: " + name);
}

namespace {

RawRecord record_from_json(const json& j, size_t row) {
  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end())
      throw std::runtime_error("row " + std::to_string(row) + ": missing field '" + key + "'");
    return *it;
  };
  RawRecord r;
  r.id = require("id").get<std::string>();
  if (r.id.empty())
    throw std::runtime_error("row " + std::to_string(row) + ": empty id");
  r.timestamp = require("ts").get<std::string>();
  const char* cats[4] = {"cat1", "cat2", "cat3", "cat4"};
  for (int c = 0; c < 4; ++c) {
    const json& v = require(cats[c]);
    r.categories[static_cast<size_t>(c)] = v.is_null() ? "" : v.get<std::string>();
  }
  r.request_text = require("request").get<std::string>();
  const json& dept = require("department");
  if (!dept.is_null()) r.department_text = dept.get<std::string>();
  r.invalid_flag = require("invalid").get<bool>();
  return r;
}

std::vector<RawRecord> load_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<RawRecord> out;
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("row " + std::to_string(row) + ": bad JSON: " + e.what());
    }
    out.push_back(record_from_json(j, row));
  }
  return out;
}

// RFC 4180: fields separated by commas, quoted fields may contain commas,
// quotes (doubled) and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_data = false;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') { field += '"'; i += 2; continue; }
        in_quotes = false;
        ++i;
      } else {
        field += c;
        ++i;
      }
    } else if (c == '"') {
      in_quotes = true;
      row_has_data = true;
      ++i;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      row_has_data = true;
      ++i;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
      ++i;
      if (row_has_data || !field.empty()) {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        row_has_data = false;
      }
    } else {
      field += c;
      row_has_data = true;
      ++i;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (row_has_data || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawRecord> load_csv(const std::string& path) {
  auto rows = parse_csv(read_file(path));
  if (rows.empty()) return {};
  const std::vector<std::string>& header = rows[0];
  auto col = [&](const char* name) -> int {
    for (size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    return -1;
  };
  const char* required[] = {"id", "ts", "cat1", "cat2", "cat3", "cat4",
                            "request", "department", "invalid"};
  int idx[9];
  for (int k = 0; k < 9; ++k) {
    idx[k] = col(required[k]);
    if (idx[k] < 0)
      throw std::runtime_error(std::string("csv: header missing column '") + required[k] + "'");
  }
  std::vector<RawRecord> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    auto cell = [&](int c) -> const std::string& {
      static const std::string empty;
      return c >= 0 && static_cast<size_t>(c) < cells.size() ? cells[static_cast<size_t>(c)]
                                                             : empty;
    };
    RawRecord rec;
    rec.id = cell(idx[0]);
    if (rec.id.empty())
      throw std::runtime_error("row " + std::to_string(r + 1) + ": empty id");
    rec.timestamp = cell(idx[1]);
    for (int c = 0; c < 4; ++c) rec.categories[static_cast<size_t>(c)] = cell(idx[2 + c]);
    if (static_cast<size_t>(idx[6]) >= cells.size())
      throw std::runtime_error("row " + std::to_string(r + 1) + ": missing field 'request'");
    rec.request_text = cell(idx[6]);
    std::string dept = cell(idx[7]);
    if (!dept.empty()) rec.department_text = dept;
    std::string inv = cell(idx[8]);
    rec.invalid_flag = (inv == "1" || inv == "true" || inv == "TRUE");
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<RawRecord> load_records(const std::string& path, RecordFormat format) {
  switch (format) {
    case RecordFormat::jsonl: return load_jsonl(path);
    case RecordFormat::csv: return load_csv(path);
  }
  throw std::invalid_argument("unknown record format");
}

namespace {

json record_to_json(const RawRecord& r) {
  json j;
  j["id"] = r.id;
  j["ts"] = r.timestamp;
  const char* cats[4] = {"cat1", "cat2", "cat3", "cat4"};
  for (int c = 0; c < 4; ++c) {
    const std::string& v = r.categories[static_cast<size_t>(c)];
    if (v.empty()) j[cats[c]] = nullptr; else j[cats[c]] = v;
  }
  j["request"] = r.request_text;
  if (r.department_text) j["department"] = *r.department_text; else j["department"] = nullptr;
  j["invalid"] = r.invalid_flag;
  return j;
}

}  // namespace

void save_records_jsonl(const std::string& path, const std::vector<RawRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
  write_file(path, out.str());
}

void save_valid_jsonl(const std::string& path, const std::vector<ValidRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["ts"] = r.timestamp;
    const char* cats[4] = {"cat1", "cat2", "cat3", "cat4"};
    for (int c = 0; c < 4; ++c) {
      const std::string& v = r.categories[static_cast<size_t>(c)];
      if (v.empty()) j[cats[c]] = nullptr; else j[cats[c]] = v;
    }
    j["request"] = r.request_text;
    j["department"] = r.department_text;
    j["label"] = r.canonical_label;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<ValidRecord> load_valid_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<ValidRecord> out;
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j = json::parse(line);
    ValidRecord r;
    r.id = j.at("id").get<std::string>();
    r.timestamp = j.at("ts").get<std::string>();
    const char* cats[4] = {"cat1", "cat2", "cat3", "cat4"};
    for (int c = 0; c < 4; ++c) {
      const json& v = j.at(cats[c]);
      r.categories[static_cast<size_t>(c)] = v.is_null() ? "" : v.get<std::string>();
    }
    r.request_text = j.at("request").get<std::string>();
    r.department_text = j.at("department").get<std::string>();
    r.canonical_label = j.at("label").get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& toks, size_t lo, size_t hi) {
  std::string out;
  for (size_t i = lo; i < hi; ++i) {
    if (!out.empty()) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

std::optional<int> normalize_label(const std::string& department_text,
                                   const LabelDictionary& dict) {
  auto toks = split_ws(department_text);
  size_t lo = 0, hi = toks.size();
  while (lo < hi && dict.location_nouns.count(toks[lo])) ++lo;
  while (hi > lo && dict.location_nouns.count(toks[hi - 1])) --hi;
  std::string name = join(toks, lo, hi);
  if (auto it = dict.aliases.find(name); it != dict.aliases.end()) return it->second;
  return dict.index_of(name);
}

std::pair<std::vector<ValidRecord>, DropStats> filter_valid(
    const std::vector<RawRecord>& records, const LabelDictionary& dict) {
  std::vector<ValidRecord> valid;
  DropStats stats;
  for (const auto& r : records) {
    if (r.invalid_flag) { ++stats.invalid_flag; continue; }
    if (!r.department_text || r.department_text->empty()) { ++stats.missing_dept; continue; }
    auto label = normalize_label(*r.department_text, dict);
    if (!label) { ++stats.unmapped; continue; }
    ValidRecord v;
    v.id = r.id;
    v.timestamp = r.timestamp;
    v.categories = r.categories;
    v.request_text = r.request_text;
    v.department_text = *r.department_text;
    v.canonical_label = *label;
    valid.push_back(std::move(v));
  }
  return {std::move(valid), stats};
}

std::string ShardPlan::to_json() const {
  json j;
  j["train_shards"] = train_shards;
  j["test_shards"] = test_shards;
  j["shard_size_train"] = shard_size_train;
  j["shard_size_test"] = shard_size_test;
  j["split_ratio"] = split_ratio;
  j["partial_train"] = partial_train;
  j["partial_test"] = partial_test;
  return j.dump(2);
}

ShardPlan ShardPlan::from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  ShardPlan p;
  p.train_shards = j.at("train_shards").get<std::vector<std::vector<size_t>>>();
  p.test_shards = j.at("test_shards").get<std::vector<std::vector<size_t>>>();
  p.shard_size_train = j.at("shard_size_train").get<size_t>();
  p.shard_size_test = j.at("shard_size_test").get<size_t>();
  p.split_ratio = j.at("split_ratio").get<double>();
  p.partial_train = j.at("partial_train").get<bool>();
  p.partial_test = j.at("partial_test").get<bool>();
  return p;
}

ShardPlan split_shards(size_t n_records, double ratio, size_t train_shard,
                       size_t test_shard, uint64_t seed) {
  if (n_records == 0) throw std::invalid_argument("split_shards: no records");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split_shards: ratio must be in (0,1)");
  if (train_shard == 0 || test_shard == 0)
    throw std::invalid_argument("split_shards: shard sizes must be positive");

  std::vector<size_t> order(n_records);
  for (size_t i = 0; i < n_records; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  size_t n_train = static_cast<size_t>(std::llround(ratio * static_cast<double>(n_records)));
  n_train = std::min(n_train, n_records);

  ShardPlan plan;
  plan.shard_size_train = train_shard;
  plan.shard_size_test = test_shard;
  plan.split_ratio = ratio;

  auto chop = [](std::vector<size_t>::const_iterator lo, std::vector<size_t>::const_iterator hi,
                 size_t shard, std::vector<std::vector<size_t>>& out, bool& partial) {
    for (auto it = lo; it < hi; it += static_cast<std::ptrdiff_t>(
             std::min(shard, static_cast<size_t>(hi - it)))) {
      size_t len = std::min(shard, static_cast<size_t>(hi - it));
      out.emplace_back(it, it + static_cast<std::ptrdiff_t>(len));
      if (len < shard) partial = true;
    }
  };
  chop(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train), train_shard,
       plan.train_shards, plan.partial_train);
  chop(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end(), test_shard,
       plan.test_shards, plan.partial_test);
  return plan;
}

std::vector<size_t> synthetic_class_sizes(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("synthetic: n_classes must be >= 2");
  if (spec.n_samples < static_cast<size_t>(spec.n_classes))
    throw std::invalid_argument("synthetic: n_samples smaller than n_classes");
  const int k = spec.n_classes;
  std::vector<double> w(static_cast<size_t>(k));
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    w[static_cast<size_t>(c)] = std::pow(static_cast<double>(c + 1), -spec.imbalance_exponent);
    total += w[static_cast<size_t>(c)];
  }
  // largest-remainder rounding so sizes sum exactly to n_samples
  std::vector<size_t> sizes(static_cast<size_t>(k));
  std::vector<std::pair<double, int>> rem;
  size_t assigned = 0;
  for (int c = 0; c < k; ++c) {
    double exact = static_cast<double>(spec.n_samples) * w[static_cast<size_t>(c)] / total;
    sizes[static_cast<size_t>(c)] = static_cast<size_t>(std::floor(exact));
    assigned += sizes[static_cast<size_t>(c)];
    rem.emplace_back(exact - std::floor(exact), c);
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t i = 0; assigned < spec.n_samples; ++i, ++assigned)
    ++sizes[static_cast<size_t>(rem[i % rem.size()].second)];
  for (auto& s : sizes)
    if (s == 0) throw std::invalid_argument("synthetic: imbalance leaves an empty class");
  return sizes;
}

std::pair<std::vector<ValidRecord>, LabelDictionary> generate_synthetic(
    const SyntheticSpec& spec) {
  if (spec.doc_length_range.first > spec.doc_length_range.second ||
      spec.doc_length_range.first < 1)
    throw std::invalid_argument("synthetic: bad doc_length_range");
  if (spec.vocab_per_class < 2)
    throw std::invalid_argument("synthetic: vocab_per_class must be >= 2");
  auto sizes = synthetic_class_sizes(spec);

  const int k = spec.n_classes;
  std::vector<std::vector<std::string>> class_vocab(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c)
    for (int v = 0; v < spec.vocab_per_class; ++v)
      class_vocab[static_cast<size_t>(c)].push_back("w" + std::to_string(c) + "_" +
                                                    std::to_string(v));
  std::vector<std::string> shared;
  for (int v = 0; v < spec.shared_vocab; ++v) shared.push_back("shared_" + std::to_string(v));

  LabelDictionary dict;
  for (int c = 0; c < k; ++c)
    dict.add_canonical(class_vocab[static_cast<size_t>(c)][0] + " " +
                       class_vocab[static_cast<size_t>(c)][1]);

  const double p_shared =
      spec.shared_vocab > 0
          ? static_cast<double>(spec.shared_vocab) /
                static_cast<double>(spec.shared_vocab + spec.vocab_per_class)
          : 0.0;

  Rng rng(spec.seed);
  std::vector<ValidRecord> records;
  records.reserve(spec.n_samples);
  size_t serial = 0;
  for (int c = 0; c < k; ++c) {
    for (size_t s = 0; s < sizes[static_cast<size_t>(c)]; ++s, ++serial) {
      ValidRecord r;
      r.id = "r" + std::to_string(serial);
      r.timestamp = "2024-01-01T00:00:00Z";
      r.categories[0] = "g" + std::to_string(c % 3);
      r.categories[1] = "s" + std::to_string(c);
      int len = spec.doc_length_range.first +
                static_cast<int>(rng.index(static_cast<size_t>(
                    spec.doc_length_range.second - spec.doc_length_range.first + 1)));
      std::string text;
      for (int t = 0; t < len; ++t) {
        const auto& pool = (p_shared > 0.0 && rng.uniform() < p_shared)
                               ? shared
                               : class_vocab[static_cast<size_t>(c)];
        if (t) text += ' ';
        text += pool[rng.index(pool.size())];
      }
      r.request_text = std::move(text);
      r.department_text = dict.canonical_names[static_cast<size_t>(c)];
      r.canonical_label = c;
      records.push_back(std::move(r));
    }
  }
  return {std::move(records), std::move(dict)};
}

}  // namespace htc
