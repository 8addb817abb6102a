#include "htc/config.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>

#include "htc/util.hpp"

namespace htc {
namespace {

enum class Kind { int_, uint_, double_, bool_, string_, ints_ };

struct Binding {
  const char* section;
  const char* key;
  Kind kind;
  void* ptr;
};

std::vector<Binding> bindings(RunConfig& c) {
  return {
      {"run", "seed", Kind::uint_, &c.seed},
      {"run", "out", Kind::string_, &c.out},
      {"corpus", "ingest", Kind::string_, &c.corpus.ingest},
      {"corpus", "format", Kind::string_, &c.corpus.format},
      {"corpus", "labels", Kind::string_, &c.corpus.labels},
      {"corpus", "synthetic_classes", Kind::int_, &c.corpus.synthetic_classes},
      {"corpus", "synthetic_samples", Kind::int_, &c.corpus.synthetic_samples},
      {"corpus", "synthetic_vocab_per_class", Kind::int_, &c.corpus.synthetic_vocab_per_class},
      {"corpus", "synthetic_shared_vocab", Kind::int_, &c.corpus.synthetic_shared_vocab},
      {"corpus", "synthetic_imbalance", Kind::double_, &c.corpus.synthetic_imbalance},
      {"corpus", "doc_len_lo", Kind::int_, &c.corpus.doc_len_lo},
      {"corpus", "doc_len_hi", Kind::int_, &c.corpus.doc_len_hi},
      {"corpus", "min_df", Kind::int_, &c.corpus.min_df},
      {"corpus", "split", Kind::double_, &c.corpus.split},
      {"features", "woe_epsilon", Kind::double_, &c.features.woe_epsilon},
      {"features", "raw_count_woe", Kind::bool_, &c.features.raw_count_woe},
      {"embedding", "dim", Kind::int_, &c.embedding.dim},
      {"embedding", "window", Kind::int_, &c.embedding.window},
      {"embedding", "negatives", Kind::int_, &c.embedding.negatives},
      {"embedding", "epochs", Kind::int_, &c.embedding.epochs},
      {"embedding", "lr", Kind::double_, &c.embedding.lr},
      {"embedding", "max_len", Kind::int_, &c.embedding.max_len},
      {"cluster", "method", Kind::string_, &c.cluster.method},
      {"cluster", "k_lo", Kind::int_, &c.cluster.k_lo},
      {"cluster", "k_hi", Kind::int_, &c.cluster.k_hi},
      {"cluster", "topics", Kind::int_, &c.cluster.topics},
      {"cluster", "optics_min_samples", Kind::int_, &c.cluster.optics_min_samples},
      {"cluster", "optics_xi", Kind::double_, &c.cluster.optics_xi},
      {"cluster", "lda_alpha", Kind::double_, &c.cluster.lda_alpha},
      {"cluster", "lda_beta", Kind::double_, &c.cluster.lda_beta},
      {"cluster", "lda_iterations", Kind::int_, &c.cluster.lda_iterations},
      {"cluster", "top_l", Kind::int_, &c.cluster.top_l},
      {"cluster", "assign", Kind::string_, &c.cluster.assign},
      {"cluster", "spherical", Kind::bool_, &c.cluster.spherical},
      {"train", "models", Kind::string_, &c.train.models},
      {"train", "nb_alpha", Kind::double_, &c.train.nb_alpha},
      {"train", "nb_mode", Kind::string_, &c.train.nb_mode},
      {"train", "nb_presence_only", Kind::bool_, &c.train.nb_presence_only},
      {"train", "mlp_h1", Kind::int_, &c.train.mlp_h1},
      {"train", "mlp_h2", Kind::int_, &c.train.mlp_h2},
      {"train", "mlp_epochs", Kind::int_, &c.train.mlp_epochs},
      {"train", "mlp_lr", Kind::double_, &c.train.mlp_lr},
      {"train", "mlp_batch", Kind::int_, &c.train.mlp_batch},
      {"train", "cnn_epochs", Kind::int_, &c.train.cnn_epochs},
      {"train", "cnn_lr", Kind::double_, &c.train.cnn_lr},
      {"train", "cnn_batch", Kind::int_, &c.train.cnn_batch},
      {"train", "cnn_channels", Kind::ints_, &c.train.cnn_channels},
      {"train", "cnn_blocks", Kind::ints_, &c.train.cnn_blocks},
      {"train", "cnn_strides", Kind::ints_, &c.train.cnn_strides},
      {"train", "cnn_flatten_head", Kind::bool_, &c.train.cnn_flatten_head},
      {"train", "subsample", Kind::int_, &c.train.subsample},
      {"train", "use_predicted_meta", Kind::bool_, &c.train.use_predicted_meta},
      {"evaluate", "repeats", Kind::int_, &c.evaluate.repeats},
      {"evaluate", "clip", Kind::double_, &c.evaluate.clip},
  };
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void assign_value(const Binding& b, const std::string& raw) {
  const std::string where = std::string(b.section) + "." + b.key;
  try {
    switch (b.kind) {
      case Kind::int_: {
        size_t used = 0;
        int v = std::stoi(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("trailing characters");
        *static_cast<int*>(b.ptr) = v;
        break;
      }
      case Kind::uint_: {
        size_t used = 0;
        uint64_t v = std::stoull(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("trailing characters");
        *static_cast<uint64_t*>(b.ptr) = v;
        break;
      }
      case Kind::double_: {
        size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("trailing characters");
        *static_cast<double*>(b.ptr) = v;
        break;
      }
      case Kind::bool_: {
        std::string v = raw;
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (v == "true" || v == "1" || v == "yes" || v == "on")
          *static_cast<bool*>(b.ptr) = true;
        else if (v == "false" || v == "0" || v == "no" || v == "off")
          *static_cast<bool*>(b.ptr) = false;
        else
          throw std::invalid_argument("not a boolean");
        break;
      }
      case Kind::string_:
        *static_cast<std::string*>(b.ptr) = raw;
        break;
      case Kind::ints_: {
        std::vector<int> values;
        std::stringstream ss(raw);
        std::string part;
        while (std::getline(ss, part, ',')) {
          part = trim(part);
          if (part.empty()) throw std::invalid_argument("empty list entry");
          size_t used = 0;
          values.push_back(std::stoi(part, &used));
          if (used != part.size()) throw std::invalid_argument("trailing characters");
        }
        if (values.empty()) throw std::invalid_argument("empty list");
        *static_cast<std::vector<int>*>(b.ptr) = values;
        break;
      }
    }
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: bad value '" + raw + "' for " + where + " (" + e.what() +
                                ")");
  }
}

std::string value_string(const Binding& b) {
  switch (b.kind) {
    case Kind::int_:
      return std::to_string(*static_cast<int*>(b.ptr));
    case Kind::uint_:
      return std::to_string(*static_cast<uint64_t*>(b.ptr));
    case Kind::double_:
      return format_double(*static_cast<double*>(b.ptr));
    case Kind::bool_:
      return *static_cast<bool*>(b.ptr) ? "true" : "false";
    case Kind::string_:
      return *static_cast<std::string*>(b.ptr);
    case Kind::ints_: {
      const auto& v = *static_cast<std::vector<int>*>(b.ptr);
      std::string out;
      for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
      }
      return out;
    }
  }
  return "";
}

void apply(RunConfig& c, const std::string& section, const std::string& key,
           const std::string& value) {
  for (const Binding& b : bindings(c)) {
    if (section == b.section && key == b.key) {
      assign_value(b, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section + "]");
}

void check(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument("config: " + message);
}

}  // namespace

std::vector<std::string> split_csv_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

RunConfig RunConfig::from_ini_text(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  std::string line;
  std::string section = "run";
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                    ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const Binding& b : bindings(c))
        if (section == b.section) known = true;
      if (!known)
        throw std::invalid_argument("config: unknown section [" + section + "] at line " +
                                    std::to_string(lineno));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  ": expected key = value");
    apply(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::from_ini_file(const std::string& path) {
  return from_ini_text(read_file(path));
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  auto dot = dotted_key.find('.');
  if (dot == std::string::npos)
    apply(*this, "run", dotted_key, value);
  else
    apply(*this, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
}

std::string RunConfig::to_ini() const {
  auto& self = const_cast<RunConfig&>(*this);  // bindings are read here
  std::string out;
  std::string section;
  for (const Binding& b : bindings(self)) {
    if (section != b.section) {
      if (!out.empty()) out += "\n";
      section = b.section;
      out += "[" + section + "]\n";
    }
    out += std::string(b.key) + " = " + value_string(b) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  check(!out.empty(), "run.out must not be empty");
  check(corpus.format == "jsonl" || corpus.format == "csv",
        "corpus.format must be jsonl or csv");
  if (!corpus.ingest.empty())
    check(!corpus.labels.empty(), "corpus.labels is required when ingesting records");
  if (corpus.ingest.empty()) {
    check(corpus.synthetic_classes >= 2, "corpus.synthetic_classes must be >= 2");
    check(corpus.synthetic_samples > 0, "corpus.synthetic_samples must be positive");
    check(corpus.synthetic_vocab_per_class >= 2,
          "corpus.synthetic_vocab_per_class must be >= 2");
    check(corpus.synthetic_shared_vocab >= 0, "corpus.synthetic_shared_vocab must be >= 0");
    check(corpus.synthetic_imbalance >= 0.0, "corpus.synthetic_imbalance must be >= 0");
  }
  check(corpus.doc_len_lo >= 1 && corpus.doc_len_lo <= corpus.doc_len_hi,
        "corpus doc length range is invalid");
  check(corpus.min_df >= 1, "corpus.min_df must be >= 1");
  check(corpus.split > 0.0 && corpus.split < 1.0, "corpus.split must be in (0, 1)");
  check(features.woe_epsilon > 0.0, "features.woe_epsilon must be positive");
  check(embedding.dim > 0, "embedding.dim must be positive");
  check(embedding.window >= 3, "embedding.window must be >= 3 (centre token plus at least one neighbour)");
  check(embedding.negatives >= 1, "embedding.negatives must be >= 1");
  check(embedding.epochs >= 1, "embedding.epochs must be >= 1");
  check(embedding.lr > 0.0, "embedding.lr must be positive");
  check(embedding.max_len > 0, "embedding.max_len must be positive");
  check(cluster.method == "kmeans_gmm" || cluster.method == "topic_entropy",
        "cluster.method must be kmeans_gmm or topic_entropy");
  check(cluster.k_lo >= 2 && cluster.k_lo <= cluster.k_hi, "cluster k range is invalid");
  check(cluster.topics >= 0, "cluster.topics must be >= 0");
  check(cluster.optics_min_samples >= 2, "cluster.optics_min_samples must be >= 2");
  check(cluster.optics_xi > 0.0 && cluster.optics_xi < 1.0,
        "cluster.optics_xi must be in (0, 1)");
  check(cluster.lda_beta > 0.0, "cluster.lda_beta must be positive");
  check(cluster.lda_iterations >= 1, "cluster.lda_iterations must be >= 1");
  check(cluster.top_l >= 1, "cluster.top_l must be >= 1");
  check(cluster.assign == "entropy" || cluster.assign == "max_prob",
        "cluster.assign must be entropy or max_prob");
  auto names = split_csv_names(train.models);
  check(!names.empty(), "train.models must name at least one model");
  const std::set<std::string> known = {"nb_cascade", "nb_max_prob", "mlp_cascade",
                                      "mlp_max_prob", "rescnn"};
  for (const auto& n : names)
    check(known.count(n) == 1, "train.models: unknown model '" + n + "'");
  check(train.nb_alpha > 0.0, "train.nb_alpha must be positive");
  check(train.nb_mode == "onehot" || train.nb_mode == "tfidf",
        "train.nb_mode must be onehot or tfidf");
  check(train.mlp_h1 > 0 && train.mlp_h2 > 0, "train mlp widths must be positive");
  check(train.mlp_epochs >= 1 && train.cnn_epochs >= 1, "train epochs must be >= 1");
  check(train.mlp_lr > 0.0 && train.cnn_lr > 0.0, "train learning rates must be positive");
  check(train.mlp_batch >= 1 && train.cnn_batch >= 1, "train batch sizes must be >= 1");
  check(!train.cnn_channels.empty() &&
            train.cnn_channels.size() == train.cnn_blocks.size() &&
            train.cnn_channels.size() == train.cnn_strides.size(),
        "train cnn stage lists must be non-empty and equally long");
  for (size_t i = 0; i < train.cnn_channels.size(); ++i)
    check(train.cnn_channels[i] > 0 && train.cnn_blocks[i] > 0 && train.cnn_strides[i] > 0,
          "train cnn stage entries must be positive");
  check(train.subsample >= 0, "train.subsample must be >= 0");
  check(evaluate.repeats >= 1, "evaluate.repeats must be >= 1");
  check(evaluate.clip > 0.0 && evaluate.clip < 0.5, "evaluate.clip must be in (0, 0.5)");
}

}  // namespace htc
