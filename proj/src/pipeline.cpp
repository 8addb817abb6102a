#include "htc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "htc/clustering.hpp"
#include "htc/corpus.hpp"
#include "htc/embedding.hpp"
#include "htc/features.hpp"
#include "htc/hierarchy.hpp"
#include "htc/manifest.hpp"
#include "htc/metaclass.hpp"
#include "htc/metrics.hpp"
#include "htc/model_io.hpp"
#include "htc/naive_bayes.hpp"
#include "htc/nn.hpp"
#include "htc/optics.hpp"
#include "htc/text.hpp"
#include "htc/topics.hpp"
#include "htc/util.hpp"

namespace htc {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int log_level() {
  static int level = [] {
    const char* env = std::getenv("HTC_LOG");
    if (!env) return 1;
    std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string config_digest(const RunConfig& cfg) { return hex64(fnv1a64(cfg.to_ini())); }

ArtifactRecord out_artifact(const std::string& run_dir, const std::string& name,
                            const std::string& rel_path) {
  return {name, rel_path, hash_file((fs::path(run_dir) / rel_path).string())};
}

void write_artifact(const std::string& run_dir, const std::string& rel_path,
                    const std::string& content) {
  fs::path p = fs::path(run_dir) / rel_path;
  fs::create_directories(p.parent_path());
  write_file(p.string(), content);
}

StageRecord make_stage(const RunConfig& cfg, const std::string& name,
                       std::vector<ArtifactRecord> inputs, std::vector<ArtifactRecord> outputs,
                       double seconds) {
  StageRecord s;
  s.stage = name;
  s.config_digest = config_digest(cfg);
  s.seed = cfg.seed;
  s.inputs = std::move(inputs);
  s.outputs = std::move(outputs);
  s.seconds = seconds;
  s.hardware = hardware_summary();
  return s;
}

std::vector<TokenStream> tokenize_requests(const std::vector<ValidRecord>& records) {
  WhitespaceTokenizer tok;
  std::vector<TokenStream> docs;
  docs.reserve(records.size());
  for (const auto& r : records) docs.push_back(tok.tokenize(r.request_text));
  return docs;
}

std::string rel(const std::string& run_dir, const ArtifactRecord& a) {
  return (fs::path(run_dir) / a.path).string();
}

// Flattened embedding sequences, one row per document.
Mat<float> build_features(const std::vector<TokenStream>& docs, const EmbeddingMatrix& emb,
                          int max_len) {
  Mat<float> x(static_cast<Eigen::Index>(docs.size()),
               static_cast<Eigen::Index>(max_len) * emb.dim);
  for (size_t i = 0; i < docs.size(); ++i) {
    SequenceTensor st = embed_sequence(docs[i], emb, max_len);
    Eigen::Map<const Eigen::VectorXd> flat(st.rows.data(), st.rows.size());
    x.row(static_cast<Eigen::Index>(i)) = flat.cast<float>().transpose();
  }
  return x;
}

// Proportional per-class pick (largest remainder), keeping at least one
// sample of every class present in `labels`.
std::vector<size_t> stratified_subsample(const std::vector<int>& labels, int n_labels,
                                         size_t keep, uint64_t seed) {
  if (keep >= labels.size()) {
    std::vector<size_t> all(labels.size());
    std::iota(all.begin(), all.end(), size_t{0});
    return all;
  }
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(n_labels));
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<size_t>(labels[i])].push_back(i);
  size_t present = 0;
  for (const auto& rows : by_class)
    if (!rows.empty()) ++present;
  if (keep < present)
    throw std::invalid_argument("train.subsample is smaller than the number of classes");

  Rng rng(seed);
  std::vector<size_t> quota(static_cast<size_t>(n_labels), 0);
  std::vector<std::pair<double, int>> remainder;
  size_t assigned = 0;
  for (int c = 0; c < n_labels; ++c) {
    const auto& rows = by_class[static_cast<size_t>(c)];
    if (rows.empty()) continue;
    double exact = double(keep) * double(rows.size()) / double(labels.size());
    size_t q = std::max<size_t>(1, static_cast<size_t>(exact));
    q = std::min(q, rows.size());
    quota[static_cast<size_t>(c)] = q;
    assigned += q;
    remainder.push_back({exact - double(q), c});
  }
  std::sort(remainder.begin(), remainder.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, c] : remainder) {
    if (assigned >= keep) break;
    if (quota[static_cast<size_t>(c)] < by_class[static_cast<size_t>(c)].size()) {
      ++quota[static_cast<size_t>(c)];
      ++assigned;
    }
  }
  std::vector<size_t> picked;
  for (int c = 0; c < n_labels; ++c) {
    auto rows = by_class[static_cast<size_t>(c)];
    rng.shuffle(rows);
    for (size_t i = 0; i < quota[static_cast<size_t>(c)] && i < rows.size(); ++i)
      picked.push_back(rows[i]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

HierDataset subset_dataset(const HierDataset& data, const std::vector<size_t>& rows) {
  HierDataset sub;
  sub.n_labels = data.n_labels;
  sub.docs.reserve(rows.size());
  sub.labels.reserve(rows.size());
  for (size_t r : rows) {
    sub.docs.push_back(data.docs[r]);
    sub.labels.push_back(data.labels[r]);
  }
  if (data.features.rows() > 0) {
    sub.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    for (size_t i = 0; i < rows.size(); ++i)
      sub.features.row(static_cast<Eigen::Index>(i)) =
          data.features.row(static_cast<Eigen::Index>(rows[i]));
  }
  return sub;
}

struct ModelEntry {
  std::string id;
  std::string kind;  // nb_hierarchy | mlp_hierarchy | rescnn
  std::string rule;  // cascade | max_prob | flat
  std::string path;
};

struct ModelsIndex {
  int n_labels = 0;
  uint64_t vocab_hash = 0;
  uint64_t embedding_hash = 0;
  uint64_t metamap_hash = 0;
  int max_len = 0;
  int emb_dim = 0;
  std::vector<double> priors;
  std::vector<ModelEntry> models;
};

ModelsIndex parse_models_index(const std::string& text) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("models.json is malformed");
  ModelsIndex idx;
  idx.n_labels = j.at("n_labels").get<int>();
  idx.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
  idx.embedding_hash = std::stoull(j.at("embedding_hash").get<std::string>(), nullptr, 16);
  idx.metamap_hash = std::stoull(j.at("metamap_hash").get<std::string>(), nullptr, 16);
  idx.max_len = j.at("max_len").get<int>();
  idx.emb_dim = j.at("emb_dim").get<int>();
  idx.priors = j.at("priors").get<std::vector<double>>();
  for (const auto& e : j.at("models")) {
    idx.models.push_back({e.at("id").get<std::string>(), e.at("kind").get<std::string>(),
                          e.at("rule").get<std::string>(), e.at("path").get<std::string>()});
  }
  return idx;
}

struct ModelHandle {
  ModelEntry entry;
  std::shared_ptr<Hierarchy<NbAdapter>> nb;
  std::shared_ptr<Hierarchy<MlpAdapter>> mlp;
  std::shared_ptr<ResCnn<float>> cnn;
  bool needs_features() const { return entry.kind != "nb_hierarchy"; }
};

ModelHandle load_model(const std::string& run_dir, const ModelsIndex& idx,
                       const ModelEntry& entry) {
  ModelHandle h;
  h.entry = entry;
  std::string path = (fs::path(run_dir) / entry.path).string();
  if (entry.kind == "nb_hierarchy") {
    h.nb = std::make_shared<Hierarchy<NbAdapter>>(load_nb_hierarchy(path, idx.vocab_hash));
    if (h.nb->map.content_hash() != idx.metamap_hash)
      throw std::runtime_error("model '" + entry.id + "' was trained on a different meta-class map");
  } else if (entry.kind == "mlp_hierarchy") {
    h.mlp = std::make_shared<Hierarchy<MlpAdapter>>(load_mlp_hierarchy(path, idx.embedding_hash));
    if (h.mlp->map.content_hash() != idx.metamap_hash)
      throw std::runtime_error("model '" + entry.id + "' was trained on a different meta-class map");
  } else if (entry.kind == "rescnn") {
    h.cnn = std::make_shared<ResCnn<float>>(load_rescnn_model(path, idx.embedding_hash));
  } else {
    throw std::runtime_error("models.json: unknown model kind '" + entry.kind + "'");
  }
  return h;
}

MatrixRM cnn_distributions(ResCnn<float>& cnn, const Mat<float>& features) {
  const Eigen::Index n = features.rows();
  MatrixRM dist(n, cnn.spec().classes);
  const Eigen::Index chunk = 32;
  for (Eigen::Index at = 0; at < n; at += chunk) {
    Eigen::Index count = std::min(chunk, n - at);
    Mat<float> p = softmax_rows(cnn.forward_logits(features.middleRows(at, count), false));
    dist.middleRows(at, count) = p.cast<double>();
  }
  return dist;
}

// Full probability table for one model over the dataset rows.
MatrixRM model_distributions(const ModelHandle& h, const HierDataset& data) {
  const size_t n = data.size();
  if (h.cnn) return cnn_distributions(*h.cnn, data.features);
  MatrixRM dist(static_cast<Eigen::Index>(n), 0);
  for (size_t i = 0; i < n; ++i) {
    Eigen::VectorXd row;
    if (h.nb)
      row = h.entry.rule == "cascade" ? cascade_distribution(*h.nb, data, i)
                                      : max_prob_distribution(*h.nb, data, i);
    else
      row = h.entry.rule == "cascade" ? cascade_distribution(*h.mlp, data, i)
                                      : max_prob_distribution(*h.mlp, data, i);
    if (dist.cols() == 0) dist.resize(static_cast<Eigen::Index>(n), row.size());
    dist.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return dist;
}

// Decision-rule labels (cascade and max_prob are not joint argmax in general).
std::vector<int> model_decisions(const ModelHandle& h, const HierDataset& data,
                                 const MatrixRM* dist) {
  const size_t n = data.size();
  std::vector<int> out(n);
  if (h.cnn) {
    if (!dist) throw std::logic_error("model_decisions: rescnn needs precomputed distributions");
    for (Eigen::Index r = 0; r < dist->rows(); ++r) {
      int best = 0;
      for (Eigen::Index c = 1; c < dist->cols(); ++c)
        if ((*dist)(r, c) > (*dist)(r, best)) best = static_cast<int>(c);
      out[static_cast<size_t>(r)] = best;
    }
    return out;
  }
  for (size_t i = 0; i < n; ++i) {
    HierPrediction p;
    if (h.nb)
      p = h.entry.rule == "cascade" ? cascade_predict(*h.nb, data, i)
                                    : max_prob_predict(*h.nb, data, i);
    else
      p = h.entry.rule == "cascade" ? cascade_predict(*h.mlp, data, i)
                                    : max_prob_predict(*h.mlp, data, i);
    out[i] = p.label;
  }
  return out;
}

}  // namespace

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[htc] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[htc] " << msg << "\n";
}

void cmd_prepare(const RunConfig& cfg) {
  cfg.validate();
  Timer timer;
  const std::string& dir = cfg.out;
  fs::create_directories(dir);

  std::vector<ArtifactRecord> inputs;
  std::vector<ValidRecord> records;
  LabelDictionary dict;
  DropStats drops;
  size_t n_raw = 0;
  if (cfg.corpus.ingest.empty()) {
    SyntheticSpec spec;
    spec.n_classes = cfg.corpus.synthetic_classes;
    spec.n_samples = static_cast<size_t>(cfg.corpus.synthetic_samples);
    spec.vocab_per_class = cfg.corpus.synthetic_vocab_per_class;
    spec.shared_vocab = cfg.corpus.synthetic_shared_vocab;
    spec.imbalance_exponent = cfg.corpus.synthetic_imbalance;
    spec.doc_length_range = {cfg.corpus.doc_len_lo, cfg.corpus.doc_len_hi};
    spec.seed = cfg.seed;
    std::tie(records, dict) = generate_synthetic(spec);
    n_raw = records.size();
    log_info("prepare: generated " + std::to_string(records.size()) + " synthetic records, " +
             std::to_string(dict.size()) + " labels");
  } else {
    auto raw = load_records(cfg.corpus.ingest, parse_record_format(cfg.corpus.format));
    n_raw = raw.size();
    dict = LabelDictionary::load(cfg.corpus.labels);
    std::tie(records, drops) = filter_valid(raw, dict);
    inputs.push_back({"raw_records", cfg.corpus.ingest, hash_file(cfg.corpus.ingest)});
    inputs.push_back({"label_dictionary", cfg.corpus.labels, hash_file(cfg.corpus.labels)});
    log_info("prepare: " + std::to_string(records.size()) + " valid of " +
             std::to_string(raw.size()) + " raw records (" + std::to_string(drops.total()) +
             " dropped)");
  }
  if (records.size() < 2) throw std::runtime_error("prepare: need at least 2 valid records");

  ShardPlan plan = split_shards(records.size(), 1.0 - cfg.corpus.split, records.size(),
                                records.size(), cfg.seed);
  std::vector<ValidRecord> train_records, test_records;
  for (const auto& shard : plan.train_shards)
    for (size_t i : shard) train_records.push_back(records[i]);
  for (const auto& shard : plan.test_shards)
    for (size_t i : shard) test_records.push_back(records[i]);
  if (train_records.empty() || test_records.empty())
    throw std::runtime_error("prepare: split produced an empty train or holdout set; adjust corpus.split");

  auto docs_train = tokenize_requests(train_records);
  Vocabulary vocab = build_vocabulary(docs_train, static_cast<size_t>(cfg.corpus.min_df));
  if (vocab.size() == 0) throw std::runtime_error("prepare: vocabulary is empty");

  TagComboTable combos = build_tag_combo_table(train_records, dict.size());
  IvReport iv = compute_woe_iv(combos, cfg.features.woe_epsilon, cfg.features.raw_count_woe);

  std::vector<size_t> class_hist(dict.size(), 0);
  for (const auto& r : train_records) ++class_hist[static_cast<size_t>(r.canonical_label)];

  save_valid_jsonl((fs::path(dir) / "corpus_train.jsonl").string(), train_records);
  save_valid_jsonl((fs::path(dir) / "corpus_test.jsonl").string(), test_records);
  dict.save((fs::path(dir) / "labels.tsv").string());
  write_artifact(dir, "vocab.json", vocabulary_to_json(vocab));
  write_artifact(dir, "woe_iv.json", iv.to_json(combos));

  ordered_json rep;
  rep["n_raw"] = n_raw;
  rep["n_valid"] = records.size();
  rep["drops"] = ordered_json::parse(drops.to_json());
  rep["n_train"] = train_records.size();
  rep["n_test"] = test_records.size();
  rep["n_labels"] = dict.size();
  rep["train_class_histogram"] = class_hist;
  rep["vocab_size"] = vocab.size();
  write_artifact(dir, "prep_report.json", rep.dump(2));

  RunManifest m = load_manifest(dir);
  m.record(make_stage(cfg, "prepare", inputs,
                      {out_artifact(dir, "corpus_train", "corpus_train.jsonl"),
                       out_artifact(dir, "corpus_test", "corpus_test.jsonl"),
                       out_artifact(dir, "labels", "labels.tsv"),
                       out_artifact(dir, "vocab", "vocab.json"),
                       out_artifact(dir, "woe_iv", "woe_iv.json"),
                       out_artifact(dir, "prep_report", "prep_report.json")},
                      timer.seconds()));
  save_manifest(dir, m);
  log_info("prepare: train=" + std::to_string(train_records.size()) +
           " holdout=" + std::to_string(test_records.size()) +
           " vocab=" + std::to_string(vocab.size()));
}

void cmd_embed(const RunConfig& cfg) {
  cfg.validate();
  Timer timer;
  const std::string& dir = cfg.out;
  RunManifest m = load_manifest(dir);
  ArtifactRecord in_corpus = consume_artifact(dir, m, "prepare", "corpus_train");
  ArtifactRecord in_vocab = consume_artifact(dir, m, "prepare", "vocab");

  auto records = load_valid_jsonl(rel(dir, in_corpus));
  auto docs = tokenize_requests(records);
  Vocabulary vocab = vocabulary_from_json(read_file(rel(dir, in_vocab)));

  CbowParams params;
  params.dim = cfg.embedding.dim;
  params.window_block = cfg.embedding.window;
  params.negatives = cfg.embedding.negatives;
  params.epochs = cfg.embedding.epochs;
  params.lr = cfg.embedding.lr;
  params.seed = cfg.seed;
  EmbeddingMatrix emb = cbow_train(docs, vocab, params);
  emb.save((fs::path(dir) / "embedding.txt").string());

  ordered_json rep;
  rep["dim"] = emb.dim;
  rep["vocab"] = emb.tokens.size();
  rep["epoch_loss"] = emb.epoch_loss;
  write_artifact(dir, "embed_report.json", rep.dump(2));

  m.record(make_stage(cfg, "embed", {in_corpus, in_vocab},
                      {out_artifact(dir, "embedding", "embedding.txt"),
                       out_artifact(dir, "embed_report", "embed_report.json")},
                      timer.seconds()));
  save_manifest(dir, m);
  log_info("embed: dim=" + std::to_string(emb.dim) + " final epoch loss " +
           format_double(emb.epoch_loss.empty() ? 0.0 : emb.epoch_loss.back()));
}

void cmd_cluster(const RunConfig& cfg) {
  cfg.validate();
  Timer timer;
  const std::string& dir = cfg.out;
  RunManifest m = load_manifest(dir);
  ArtifactRecord in_labels = consume_artifact(dir, m, "prepare", "labels");
  ArtifactRecord in_emb = consume_artifact(dir, m, "embed", "embedding");

  LabelDictionary dict = LabelDictionary::load(rel(dir, in_labels));
  EmbeddingMatrix emb = EmbeddingMatrix::load(rel(dir, in_emb));
  if (dict.size() < 2) throw std::runtime_error("cluster: need at least 2 labels");

  WhitespaceTokenizer tok;
  auto label_vecs = label_name_vectors(dict, emb, tok);
  MatrixRM points = stack_vectors(label_vecs);
  const int n_labels = static_cast<int>(dict.size());

  std::vector<ArtifactRecord> inputs = {in_labels, in_emb};
  MetaClassMap map;
  ordered_json report;
  report["method"] = cfg.cluster.method;

  if (cfg.cluster.method == "kmeans_gmm") {
    int k_hi = std::min(cfg.cluster.k_hi, n_labels);
    int k_lo = std::min(cfg.cluster.k_lo, k_hi);
    KSelection sel = select_k(points, k_lo, k_hi, cfg.seed);
    KMeansModel km = kmeans(points, sel.best_k, cfg.seed);
    GmmModel gmm = gmm_em(points, km, 200, 1e-6, 1e-6, cfg.cluster.spherical);
    map = meta_from_gmm(label_vecs, km, gmm);

    ordered_json sil = ordered_json::array();
    for (const auto& [k, s] : sel.silhouettes) sil.push_back({{"k", k}, {"silhouette", s}});
    report["k_selection"] = sil;
    report["best_k"] = sel.best_k;
    report["kmeans_inertia"] = km.inertia;
    report["gmm"] = {{"iterations", gmm.log_likelihood_trace.size()},
                     {"final_log_likelihood",
                      gmm.log_likelihood_trace.empty() ? 0.0 : gmm.log_likelihood_trace.back()},
                     {"floor_hit", gmm.floor_hit},
                     {"spherical", gmm.spherical}};
  } else {
    ArtifactRecord in_corpus = consume_artifact(dir, m, "prepare", "corpus_train");
    inputs.push_back(in_corpus);
    auto records = load_valid_jsonl(rel(dir, in_corpus));
    auto docs = tokenize_requests(records);

    int n_topics = cfg.cluster.topics;
    if (n_topics == 0) {
      int ms = std::min(cfg.cluster.optics_min_samples, n_labels);
      ms = std::max(ms, 2);
      OpticsResult opt = optics(points, ms, cfg.cluster.optics_xi);
      if (opt.n_clusters < 1)
        throw std::runtime_error(
            "cluster: reachability clustering found no clusters; set cluster.topics explicitly");
      n_topics = opt.n_clusters;
      size_t noise = 0;
      for (int l : opt.labels)
        if (l < 0) ++noise;
      report["optics"] = {{"min_samples", ms},
                          {"xi", cfg.cluster.optics_xi},
                          {"n_clusters", opt.n_clusters},
                          {"noise_points", noise}};
    }

    LdaParams lp;
    lp.num_topics = n_topics;
    lp.alpha = cfg.cluster.lda_alpha;
    lp.beta = cfg.cluster.lda_beta;
    lp.iterations = cfg.cluster.lda_iterations;
    lp.top_l = cfg.cluster.top_l;
    lp.seed = cfg.seed;
    TopicModel topics = lda_fit(docs, lp);

    map = cfg.cluster.assign == "entropy" ? entropy_assign(label_vecs, topics, emb)
                                          : max_prob_assign(label_vecs, topics, emb);
    report["n_topics"] = n_topics;
    report["assign"] = cfg.cluster.assign;
    report["lda_warnings"] = topics.warnings;
  }

  map.validate();
  report["k"] = map.k;
  {
    std::vector<size_t> sizes = map.meta_sizes();
    report["meta_sizes"] = sizes;
    report["warnings"] = map.warnings;
  }
  write_artifact(dir, "metamap.json", map.to_json());
  write_artifact(dir, "cluster_report.json", report.dump(2));

  m.record(make_stage(cfg, "cluster", inputs,
                      {out_artifact(dir, "metamap", "metamap.json"),
                       out_artifact(dir, "cluster_report", "cluster_report.json")},
                      timer.seconds()));
  save_manifest(dir, m);
  log_info("cluster: method=" + cfg.cluster.method + " K=" + std::to_string(map.k));
}

void cmd_train(const RunConfig& cfg) {
  cfg.validate();
  Timer timer;
  const std::string& dir = cfg.out;
  RunManifest m = load_manifest(dir);
  ArtifactRecord in_corpus = consume_artifact(dir, m, "prepare", "corpus_train");
  ArtifactRecord in_vocab = consume_artifact(dir, m, "prepare", "vocab");
  ArtifactRecord in_map = consume_artifact(dir, m, "cluster", "metamap");

  auto names = split_csv_names(cfg.train.models);
  auto requested = [&](const std::string& id) {
    return std::find(names.begin(), names.end(), id) != names.end();
  };
  const bool want_nb = requested("nb_cascade") || requested("nb_max_prob");
  const bool want_mlp = requested("mlp_cascade") || requested("mlp_max_prob");
  const bool want_cnn = requested("rescnn");

  auto records = load_valid_jsonl(rel(dir, in_corpus));
  Vocabulary vocab = vocabulary_from_json(read_file(rel(dir, in_vocab)));
  MetaClassMap map = MetaClassMap::from_json(read_file(rel(dir, in_map)));

  HierDataset data;
  data.docs = tokenize_requests(records);
  data.n_labels = static_cast<int>(map.assignment.size());
  data.labels.reserve(records.size());
  for (const auto& r : records) {
    if (r.canonical_label < 0 || r.canonical_label >= data.n_labels)
      throw std::runtime_error("train: record label outside the meta-class map");
    data.labels.push_back(r.canonical_label);
  }

  std::vector<ArtifactRecord> inputs = {in_corpus, in_vocab, in_map};
  EmbeddingMatrix emb;
  uint64_t emb_hash = 0;
  if (want_mlp || want_cnn) {
    ArtifactRecord in_emb = consume_artifact(dir, m, "embed", "embedding");
    inputs.push_back(in_emb);
    emb = EmbeddingMatrix::load(rel(dir, in_emb));
    emb_hash = emb.content_hash();
    data.features = build_features(data.docs, emb, cfg.embedding.max_len);
  }

  std::vector<size_t> neural_rows;
  if (want_mlp || want_cnn) {
    size_t keep = cfg.train.subsample == 0 ? data.size()
                                           : static_cast<size_t>(cfg.train.subsample);
    neural_rows = stratified_subsample(data.labels, data.n_labels, keep, cfg.seed ^ 0x5eedu);
  }

  const uint64_t vocab_hash = vocab.content_hash();
  const uint64_t map_hash = map.content_hash();
  HierOptions hopt;
  hopt.use_predicted_meta = cfg.train.use_predicted_meta;

  ordered_json train_report;
  ordered_json model_list = ordered_json::array();
  std::vector<ArtifactRecord> outputs;
  fs::path models_dir = fs::path(dir) / "models";

  auto add_model_files = [&](const std::string& stem, int k, const std::vector<char>& constant,
                             bool constant_meta) {
    outputs.push_back(out_artifact(dir, stem + "_hierarchy", "models/" + stem + ".hierarchy.json"));
    outputs.push_back(out_artifact(dir, stem + "_map", "models/" + stem + ".map.json"));
    if (!constant_meta)
      outputs.push_back(out_artifact(dir, stem + "_meta", "models/" + stem + ".meta.htcm"));
    for (int i = 0; i < k; ++i)
      if (!constant[static_cast<size_t>(i)])
        outputs.push_back(out_artifact(dir, stem + "_leaf" + std::to_string(i),
                                       "models/" + stem + ".leaf" + std::to_string(i) + ".htcm"));
  };

  if (want_nb) {
    NbAdapterOptions opt;
    opt.nb.alpha = cfg.train.nb_alpha;
    opt.nb.mode = cfg.train.nb_mode == "tfidf" ? NbFeatureMode::tfidf : NbFeatureMode::onehot;
    opt.nb.presence_only = cfg.train.nb_presence_only;
    opt.vocab = &vocab;
    auto h = train_hierarchy<NbAdapter>(data, map, opt, opt, hopt);
    save_hierarchy(models_dir.string(), "nb", h, vocab_hash);
    add_model_files("nb", h.k(), h.constant_leaf, h.constant_meta);
    train_report["nb"] = {{"warnings", h.warnings}};
    if (requested("nb_cascade"))
      model_list.push_back({{"id", "nb_cascade"}, {"kind", "nb_hierarchy"},
                            {"rule", "cascade"}, {"path", "models/nb.hierarchy.json"}});
    if (requested("nb_max_prob"))
      model_list.push_back({{"id", "nb_max_prob"}, {"kind", "nb_hierarchy"},
                            {"rule", "max_prob"}, {"path", "models/nb.hierarchy.json"}});
    log_info("train: nb hierarchy ready (K=" + std::to_string(h.k()) + ")");
  }

  if (want_mlp) {
    MlpAdapterOptions opt;
    opt.train.epochs = cfg.train.mlp_epochs;
    opt.train.lr = cfg.train.mlp_lr;
    opt.train.batch = cfg.train.mlp_batch;
    opt.train.seed = cfg.seed;
    opt.h1 = cfg.train.mlp_h1;
    opt.h2 = cfg.train.mlp_h2;
    HierDataset sub = subset_dataset(data, neural_rows);
    auto h = train_hierarchy<MlpAdapter>(sub, map, opt, opt, hopt);
    save_hierarchy(models_dir.string(), "mlp", h, emb_hash);
    add_model_files("mlp", h.k(), h.constant_leaf, h.constant_meta);
    train_report["mlp"] = {{"warnings", h.warnings},
                           {"train_rows", neural_rows.size()}};
    if (requested("mlp_cascade"))
      model_list.push_back({{"id", "mlp_cascade"}, {"kind", "mlp_hierarchy"},
                            {"rule", "cascade"}, {"path", "models/mlp.hierarchy.json"}});
    if (requested("mlp_max_prob"))
      model_list.push_back({{"id", "mlp_max_prob"}, {"kind", "mlp_hierarchy"},
                            {"rule", "max_prob"}, {"path", "models/mlp.hierarchy.json"}});
    log_info("train: mlp hierarchy ready (K=" + std::to_string(h.k()) + ", rows=" +
             std::to_string(neural_rows.size()) + ")");
  }

  if (want_cnn) {
    if (emb.dim != cfg.embedding.max_len)
      throw std::invalid_argument(
          "train: rescnn needs a square input (embedding.dim == embedding.max_len)");
    ResCnnSpec spec;
    spec.in_side = cfg.embedding.max_len;
    spec.stem_channels = cfg.train.cnn_channels.front();
    spec.stage_channels = cfg.train.cnn_channels;
    spec.stage_blocks = cfg.train.cnn_blocks;
    spec.stage_strides = cfg.train.cnn_strides;
    spec.classes = data.n_labels;
    spec.flatten_head = cfg.train.cnn_flatten_head;
    ResCnn<float> cnn(spec, cfg.seed);

    TrainConfig tc;
    tc.epochs = cfg.train.cnn_epochs;
    tc.lr = cfg.train.cnn_lr;
    tc.batch = cfg.train.cnn_batch;
    tc.seed = cfg.seed + 1;
    HierDataset sub = subset_dataset(data, neural_rows);
    FitResult fit = fit_rescnn(cnn, sub.features, sub.labels, tc);
    save_rescnn_model((models_dir / "rescnn.htcm").string(), cnn, emb_hash);
    outputs.push_back(out_artifact(dir, "rescnn_model", "models/rescnn.htcm"));
    train_report["rescnn"] = {{"epoch_loss", fit.epoch_loss},
                              {"parameters", cnn.params().size()},
                              {"train_rows", neural_rows.size()},
                              {"spatial_trace", cnn.spatial_trace()}};
    model_list.push_back({{"id", "rescnn"}, {"kind", "rescnn"}, {"rule", "flat"},
                          {"path", "models/rescnn.htcm"}});
    log_info("train: rescnn ready (final epoch loss " +
             format_double(fit.epoch_loss.back()) + ")");
  }

  std::vector<double> priors(static_cast<size_t>(data.n_labels), 0.0);
  for (int l : data.labels) priors[static_cast<size_t>(l)] += 1.0;
  for (double& p : priors) p /= double(data.size());

  ordered_json index;
  index["n_labels"] = data.n_labels;
  index["vocab_hash"] = hex64(vocab_hash);
  index["embedding_hash"] = hex64(emb_hash);
  index["metamap_hash"] = hex64(map_hash);
  index["max_len"] = cfg.embedding.max_len;
  index["emb_dim"] = cfg.embedding.dim;
  index["priors"] = priors;
  index["models"] = model_list;
  write_artifact(dir, "models.json", index.dump(2));
  outputs.push_back(out_artifact(dir, "models_index", "models.json"));

  write_artifact(dir, "train_report.json", train_report.dump(2));
  outputs.push_back(out_artifact(dir, "train_report", "train_report.json"));

  m.record(make_stage(cfg, "train", inputs, outputs, timer.seconds()));
  save_manifest(dir, m);
  log_info("train: " + std::to_string(model_list.size()) + " candidate models saved");
}

void cmd_evaluate(const RunConfig& cfg) {
  cfg.validate();
  Timer timer;
  const std::string& dir = cfg.out;
  RunManifest m = load_manifest(dir);
  ArtifactRecord in_corpus = consume_artifact(dir, m, "prepare", "corpus_test");
  ArtifactRecord in_map = consume_artifact(dir, m, "cluster", "metamap");
  ArtifactRecord in_index = consume_artifact(dir, m, "train", "models_index");

  ModelsIndex idx = parse_models_index(read_file(rel(dir, in_index)));
  if (idx.metamap_hash != 0 && idx.metamap_hash !=
      MetaClassMap::from_json(read_file(rel(dir, in_map))).content_hash())
    throw std::runtime_error(
        "evaluate: models were trained against a different meta-class map; re-run train");

  auto records = load_valid_jsonl(rel(dir, in_corpus));
  if (records.empty()) throw std::runtime_error("evaluate: holdout set is empty");
  HierDataset data;
  data.docs = tokenize_requests(records);
  data.n_labels = idx.n_labels;
  for (const auto& r : records) {
    if (r.canonical_label < 0 || r.canonical_label >= idx.n_labels)
      throw std::runtime_error("evaluate: record label outside the trained label space");
    data.labels.push_back(r.canonical_label);
  }

  std::vector<ArtifactRecord> inputs = {in_corpus, in_map, in_index};
  bool any_neural = false;
  for (const auto& e : idx.models)
    if (e.kind != "nb_hierarchy") any_neural = true;
  if (any_neural) {
    ArtifactRecord in_emb = consume_artifact(dir, m, "embed", "embedding");
    inputs.push_back(in_emb);
    EmbeddingMatrix emb = EmbeddingMatrix::load(rel(dir, in_emb));
    if (emb.content_hash() != idx.embedding_hash)
      throw std::runtime_error("evaluate: embedding changed since training; re-run train");
    data.features = build_features(data.docs, emb, idx.max_len);
  }

  std::vector<EvalReport> reports;
  ordered_json timing;
  std::vector<ArtifactRecord> outputs;
  for (const auto& entry : idx.models) {
    ModelHandle h = load_model(dir, idx, entry);
    MatrixRM dist = model_distributions(h, data);
    std::vector<int> decided = model_decisions(h, data, &dist);

    EvalReport rep = compute_metrics(data.labels, decided, idx.n_labels);
    rep.model_id = entry.id;
    rep.log_loss = log_loss(data.labels, dist, cfg.evaluate.clip);
    rep.dataset_hash = in_corpus.hash;
    write_artifact(dir, "eval_" + entry.id + ".json", rep.to_json());
    write_artifact(dir, "confusion_" + entry.id + ".csv", rep.confusion_csv());
    outputs.push_back(out_artifact(dir, "eval_" + entry.id, "eval_" + entry.id + ".json"));
    outputs.push_back(
        out_artifact(dir, "confusion_" + entry.id, "confusion_" + entry.id + ".csv"));

    double seconds = time_inference(
        [&] {
          if (h.cnn)
            cnn_distributions(*h.cnn, data.features);  // a real forward pass
          else
            model_decisions(h, data, nullptr);
        },
        cfg.evaluate.repeats);
    timing[entry.id] = {{"median_seconds_full_pass", seconds},
                        {"repeats", cfg.evaluate.repeats},
                        {"per_sample_seconds", seconds / double(data.size())}};
    log_info("evaluate: " + entry.id + " micro_p=" + format_double(rep.micro_precision) +
             " log_loss=" + format_double(rep.log_loss));
    reports.push_back(std::move(rep));
  }

  ordered_json summary;
  summary["n_samples"] = data.size();
  ordered_json rows = ordered_json::array();
  for (const auto& r : reports)
    rows.push_back({{"id", r.model_id},
                    {"micro_precision", r.micro_precision},
                    {"micro_recall", r.micro_recall},
                    {"macro_precision", r.macro_precision},
                    {"macro_recall", r.macro_recall},
                    {"log_loss", r.log_loss}});
  summary["models"] = rows;

  if (reports.size() >= 2) {
    EnsembleDecision best = select_best(reports);
    write_artifact(dir, "ensemble.json", best.to_json());
    outputs.push_back(out_artifact(dir, "ensemble", "ensemble.json"));
    summary["winner"] = best.candidates[best.winner];
    log_info("evaluate: winner " + best.candidates[best.winner]);
  } else if (!reports.empty()) {
    summary["winner"] = reports[0].model_id;
  }
  write_artifact(dir, "eval_summary.json", summary.dump(2));
  outputs.push_back(out_artifact(dir, "eval_summary", "eval_summary.json"));

  // Timing is machine-dependent by nature; it lives outside the manifest's
  // output list so reruns stay hash-comparable.
  timing["hardware"] = hardware_summary();
  write_artifact(dir, "timing.json", timing.dump(2));

  m.record(make_stage(cfg, "evaluate", inputs, outputs, timer.seconds()));
  save_manifest(dir, m);
}

std::vector<Prediction> cmd_predict(const RunConfig& cfg, const PredictRequest& req) {
  cfg.validate();
  const std::string& dir = cfg.out;
  RunManifest m = load_manifest(dir);
  ArtifactRecord in_index = consume_artifact(dir, m, "train", "models_index");
  ArtifactRecord in_labels = consume_artifact(dir, m, "prepare", "labels");
  ModelsIndex idx = parse_models_index(read_file(rel(dir, in_index)));
  LabelDictionary dict = LabelDictionary::load(rel(dir, in_labels));

  std::string model_id = req.model_id;
  if (model_id.empty()) {
    const StageRecord* ev = m.find_stage("evaluate");
    if (!ev)
      throw std::runtime_error(
          "predict: no model selected; pass --model or run evaluate to pick a winner");
    ArtifactRecord in_ens = consume_artifact(dir, m, "evaluate", "ensemble");
    ordered_json ens = ordered_json::parse(read_file(rel(dir, in_ens)));
    model_id = ens.at("winner").get<std::string>();
  }
  const ModelEntry* entry = nullptr;
  for (const auto& e : idx.models)
    if (e.id == model_id) entry = &e;
  if (!entry) throw std::runtime_error("predict: unknown model '" + model_id + "'");

  ModelHandle handle = load_model(dir, idx, *entry);
  Vocabulary vocab =
      vocabulary_from_json(read_file(rel(dir, consume_artifact(dir, m, "prepare", "vocab"))));

  WhitespaceTokenizer tok;
  HierDataset data;
  data.n_labels = idx.n_labels;
  std::vector<bool> usable;
  for (const auto& text : req.texts) {
    TokenStream ts = tok.tokenize(text);
    bool any = false;
    for (const auto& t : ts.tokens)
      if (vocab.id(t) >= 0) any = true;
    usable.push_back(any);
    data.docs.push_back(std::move(ts));
    data.labels.push_back(0);  // unused at inference
  }
  if (handle.needs_features()) {
    EmbeddingMatrix emb =
        EmbeddingMatrix::load(rel(dir, consume_artifact(dir, m, "embed", "embedding")));
    if (emb.content_hash() != idx.embedding_hash)
      throw std::runtime_error("predict: embedding changed since training; re-run train");
    data.features = build_features(data.docs, emb, idx.max_len);
  }

  int prior_best = 0;
  for (size_t c = 1; c < idx.priors.size(); ++c)
    if (idx.priors[c] > idx.priors[static_cast<size_t>(prior_best)])
      prior_best = static_cast<int>(c);

  std::vector<Prediction> out;
  MatrixRM dist;
  std::vector<int> decided;
  if (!req.texts.empty()) {
    dist = model_distributions(handle, data);
    decided = model_decisions(handle, data, &dist);
  }
  for (size_t i = 0; i < req.texts.size(); ++i) {
    Prediction p;
    if (!usable[i]) {
      p.label = prior_best;
      p.prob = idx.priors[static_cast<size_t>(prior_best)];
      p.no_features = true;
    } else {
      p.label = decided[i];
      p.prob = dist(static_cast<Eigen::Index>(i), p.label);
    }
    p.label_name = dict.canonical_names[static_cast<size_t>(p.label)];
    out.push_back(std::move(p));
  }

  ordered_json j;
  j["model"] = model_id;
  ordered_json preds = ordered_json::array();
  for (size_t i = 0; i < out.size(); ++i)
    preds.push_back({{"index", i},
                     {"label", out[i].label},
                     {"label_name", out[i].label_name},
                     {"prob", out[i].prob},
                     {"no_features", out[i].no_features}});
  j["predictions"] = preds;
  write_artifact(dir, "predictions.json", j.dump(2));
  return out;
}

}  // namespace htc
