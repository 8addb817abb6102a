#include "htc/model_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {
namespace {

using nlohmann::ordered_json;

constexpr char kMagic[4] = {'H', 'T', 'C', 'M'};
constexpr int kVersion = 1;

struct Container {
  ordered_json header;
  std::vector<MatrixRM> blobs;  // parallel to header["blobs"]
};

// Parameter payload is raw doubles; this code assumes a little-endian host.
void write_container(const std::string& path, Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("model write: cannot open " + path);
  std::string header = c.header.dump();
  uint32_t len = static_cast<uint32_t>(header.size());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const MatrixRM& m : c.blobs)
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!out) throw std::runtime_error("model write: short write to " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("model read: cannot open " + path);
  char magic[4];
  uint32_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("model read: " + path + " is not a model container");
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw std::runtime_error("model read: truncated header in " + path);

  Container c;
  c.header = ordered_json::parse(header, nullptr, false);
  if (c.header.is_discarded())
    throw std::runtime_error("model read: malformed header in " + path);
  for (const auto& b : c.header.at("blobs")) {
    Eigen::Index rows = b.at("rows").get<Eigen::Index>();
    Eigen::Index cols = b.at("cols").get<Eigen::Index>();
    MatrixRM m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw std::runtime_error("model read: truncated payload in " + path);
    c.blobs.push_back(std::move(m));
  }
  if (in.peek() != std::ifstream::traits_type::eof())
    throw std::runtime_error("model read: trailing bytes in " + path);
  return c;
}

void add_blob(Container& c, const std::string& name, const MatrixRM& m) {
  c.header["blobs"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  c.blobs.push_back(m);
}

void add_blob(Container& c, const std::string& name, const Mat<float>& m) {
  add_blob(c, name, MatrixRM(m.cast<double>()));
}

uint64_t parse_hex(const ordered_json& j, const char* key) {
  return std::stoull(j.at(key).get<std::string>(), nullptr, 16);
}

void check_hash(const std::string& path, const char* what, uint64_t expected, uint64_t stored) {
  if (expected != 0 && expected != stored)
    throw std::runtime_error("model read: " + path + ": " + what + " hash mismatch (expected " +
                             hex64(expected) + ", stored " + hex64(stored) + ")");
}

Container open_checked(const std::string& path, const std::string& kind,
                       uint64_t expect_vocab, uint64_t expect_metamap) {
  Container c = read_container(path);
  if (c.header.at("kind").get<std::string>() != kind)
    throw std::runtime_error("model read: " + path + " holds a '" +
                             c.header.at("kind").get<std::string>() + "' model, expected '" +
                             kind + "'");
  if (c.header.at("version").get<int>() != kVersion)
    throw std::runtime_error("model read: unsupported version in " + path);
  check_hash(path, "vocabulary", expect_vocab, parse_hex(c.header, "vocab_hash"));
  check_hash(path, "meta-class map", expect_metamap, parse_hex(c.header, "metamap_hash"));
  return c;
}

ordered_json base_header(const std::string& kind, uint64_t vocab_hash, uint64_t metamap_hash) {
  ordered_json h;
  h["kind"] = kind;
  h["version"] = kVersion;
  h["vocab_hash"] = hex64(vocab_hash);
  h["metamap_hash"] = hex64(metamap_hash);
  h["blobs"] = ordered_json::array();
  return h;
}

// Copy stored blobs into live parameter/state refs, insisting that names and
// shapes line up with the freshly constructed model.
template <typename Ref>
size_t restore_refs(const std::string& path, const Container& c, size_t at,
                    std::vector<Ref> refs) {
  for (auto& r : refs) {
    if (at >= c.blobs.size())
      throw std::runtime_error("model read: " + path + ": missing blob for " + r.name);
    const auto& desc = c.header.at("blobs").at(at);
    if (desc.at("name").get<std::string>() != r.name)
      throw std::runtime_error("model read: " + path + ": blob order mismatch at " + r.name);
    const MatrixRM& src = c.blobs[at];
    if (src.rows() != r.value->rows() || src.cols() != r.value->cols())
      throw std::runtime_error("model read: " + path + ": shape mismatch for " + r.name);
    *r.value = src.cast<typename std::remove_reference_t<decltype(*r.value)>::Scalar>();
    ++at;
  }
  return at;
}

}  // namespace

ModelInfo peek_model(const std::string& path) {
  Container c = read_container(path);
  ModelInfo info;
  info.kind = c.header.at("kind").get<std::string>();
  info.version = c.header.at("version").get<int>();
  info.vocab_hash = parse_hex(c.header, "vocab_hash");
  info.metamap_hash = parse_hex(c.header, "metamap_hash");
  return info;
}

void save_nb_model(const std::string& path, const NbModel& model, uint64_t metamap_hash) {
  Container c;
  c.header = base_header("nb", model.vocab.content_hash(), metamap_hash);
  ordered_json meta;
  meta["mode"] = model.config.mode == NbFeatureMode::onehot ? "onehot" : "tfidf";
  meta["alpha"] = model.config.alpha;
  meta["presence_only"] = model.config.presence_only;
  meta["n_classes"] = model.n_classes;
  meta["vocab"] = {{"tokens", model.vocab.tokens},
                   {"df", model.vocab.df},
                   {"cf", model.vocab.cf},
                   {"n_docs", model.vocab.n_docs}};
  c.header["meta"] = meta;
  add_blob(c, "priors", MatrixRM(model.priors.transpose()));
  add_blob(c, "cond", model.cond);
  write_container(path, c);
}

NbModel load_nb_model(const std::string& path, uint64_t expect_vocab_hash,
                      uint64_t expect_metamap_hash) {
  Container c = open_checked(path, "nb", expect_vocab_hash, expect_metamap_hash);
  const auto& meta = c.header.at("meta");
  NbModel m;
  std::string mode = meta.at("mode").get<std::string>();
  m.config.mode = mode == "tfidf" ? NbFeatureMode::tfidf : NbFeatureMode::onehot;
  m.config.alpha = meta.at("alpha").get<double>();
  m.config.presence_only = meta.at("presence_only").get<bool>();
  m.n_classes = meta.at("n_classes").get<int>();
  const auto& v = meta.at("vocab");
  m.vocab.tokens = v.at("tokens").get<std::vector<std::string>>();
  m.vocab.df = v.at("df").get<std::vector<size_t>>();
  m.vocab.cf = v.at("cf").get<std::vector<size_t>>();
  m.vocab.n_docs = v.at("n_docs").get<size_t>();
  for (size_t i = 0; i < m.vocab.tokens.size(); ++i)
    m.vocab.id_of[m.vocab.tokens[i]] = static_cast<int>(i);
  check_hash(path, "vocabulary snapshot", parse_hex(c.header, "vocab_hash"),
             m.vocab.content_hash());
  if (c.blobs.size() != 2)
    throw std::runtime_error("model read: " + path + ": expected 2 blobs");
  m.priors = c.blobs[0].row(0).transpose();
  m.cond = c.blobs[1];
  if (m.priors.size() != m.n_classes || m.cond.rows() != m.n_classes ||
      m.cond.cols() != static_cast<Eigen::Index>(m.vocab.size()))
    throw std::runtime_error("model read: " + path + ": blob shapes disagree with meta");
  return m;
}

void save_mlp_model(const std::string& path, Mlp<float>& model, uint64_t vocab_hash,
                    uint64_t metamap_hash) {
  Container c;
  c.header = base_header("mlp", vocab_hash, metamap_hash);
  auto params = model.params();
  // fc1.w is in x h1, fc2.w is h1 x h2, fc3.w is h2 x out
  c.header["meta"] = {{"in_dim", model.in_dim()},
                      {"out_dim", model.out_dim()},
                      {"h1", params[0].value->cols()},
                      {"h2", params[2].value->cols()}};
  for (auto& p : params) add_blob(c, p.name, *p.value);
  write_container(path, c);
}

Mlp<float> load_mlp_model(const std::string& path, uint64_t expect_vocab_hash,
                          uint64_t expect_metamap_hash) {
  Container c = open_checked(path, "mlp", expect_vocab_hash, expect_metamap_hash);
  const auto& meta = c.header.at("meta");
  Mlp<float> m(meta.at("in_dim").get<int>(), meta.at("out_dim").get<int>(), 0,
               meta.at("h1").get<int>(), meta.at("h2").get<int>());
  size_t at = restore_refs(path, c, 0, m.params());
  if (at != c.blobs.size())
    throw std::runtime_error("model read: " + path + ": unused blobs");
  return m;
}

void save_rescnn_model(const std::string& path, ResCnn<float>& model, uint64_t vocab_hash,
                       uint64_t metamap_hash) {
  Container c;
  c.header = base_header("rescnn", vocab_hash, metamap_hash);
  const ResCnnSpec& s = model.spec();
  c.header["meta"] = {{"in_side", s.in_side},
                      {"stem_channels", s.stem_channels},
                      {"stage_channels", s.stage_channels},
                      {"stage_blocks", s.stage_blocks},
                      {"stage_strides", s.stage_strides},
                      {"classes", s.classes},
                      {"flatten_head", s.flatten_head}};
  for (auto& p : model.params()) add_blob(c, p.name, *p.value);
  for (auto& st : model.state()) add_blob(c, st.name, *st.value);
  write_container(path, c);
}

ResCnn<float> load_rescnn_model(const std::string& path, uint64_t expect_vocab_hash,
                                uint64_t expect_metamap_hash) {
  Container c = open_checked(path, "rescnn", expect_vocab_hash, expect_metamap_hash);
  const auto& meta = c.header.at("meta");
  ResCnnSpec s;
  s.in_side = meta.at("in_side").get<int>();
  s.stem_channels = meta.at("stem_channels").get<int>();
  s.stage_channels = meta.at("stage_channels").get<std::vector<int>>();
  s.stage_blocks = meta.at("stage_blocks").get<std::vector<int>>();
  s.stage_strides = meta.at("stage_strides").get<std::vector<int>>();
  s.classes = meta.at("classes").get<int>();
  s.flatten_head = meta.at("flatten_head").get<bool>();
  ResCnn<float> m(s, 0);
  size_t at = restore_refs(path, c, 0, m.params());
  at = restore_refs(path, c, at, m.state());
  if (at != c.blobs.size())
    throw std::runtime_error("model read: " + path + ": unused blobs");
  return m;
}

namespace {

namespace fs = std::filesystem;

template <typename C, typename SaveUnit>
std::string save_hierarchy_impl(const std::string& dir, const std::string& stem,
                                const Hierarchy<C>& h, const char* classifier,
                                uint64_t vocab_hash, SaveUnit&& save_unit) {
  fs::create_directories(dir);
  uint64_t map_hash = h.map.content_hash();
  std::string map_file = stem + ".map.json";
  write_file((fs::path(dir) / map_file).string(), h.map.to_json());

  ordered_json manifest;
  manifest["kind"] = "hierarchy";
  manifest["classifier"] = classifier;
  manifest["version"] = kVersion;
  manifest["vocab_hash"] = hex64(vocab_hash);
  manifest["metamap_hash"] = hex64(map_hash);
  manifest["map_file"] = map_file;
  if (h.constant_meta) {
    manifest["meta_file"] = nullptr;
  } else {
    std::string meta_file = stem + ".meta.htcm";
    save_unit((fs::path(dir) / meta_file).string(), h.meta, map_hash);
    manifest["meta_file"] = meta_file;
  }
  ordered_json leaf_files = ordered_json::array();
  for (int m = 0; m < h.k(); ++m) {
    if (h.constant_leaf[m]) {
      leaf_files.push_back(nullptr);
      continue;
    }
    std::string leaf_file = stem + ".leaf" + std::to_string(m) + ".htcm";
    save_unit((fs::path(dir) / leaf_file).string(), h.leaves[m], map_hash);
    leaf_files.push_back(leaf_file);
  }
  manifest["leaf_files"] = leaf_files;
  manifest["warnings"] = h.warnings;

  std::string manifest_path = (fs::path(dir) / (stem + ".hierarchy.json")).string();
  write_file(manifest_path, manifest.dump(2));
  return manifest_path;
}

template <typename C, typename LoadUnit>
Hierarchy<C> load_hierarchy_impl(const std::string& manifest_path, const char* classifier,
                                 uint64_t expect_vocab_hash, LoadUnit&& load_unit) {
  ordered_json manifest = ordered_json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded())
    throw std::runtime_error("model read: malformed manifest " + manifest_path);
  if (manifest.at("kind").get<std::string>() != "hierarchy" ||
      manifest.at("classifier").get<std::string>() != classifier)
    throw std::runtime_error("model read: " + manifest_path + " is not a " +
                             std::string(classifier) + " hierarchy manifest");
  uint64_t vocab_hash = parse_hex(manifest, "vocab_hash");
  check_hash(manifest_path, "vocabulary", expect_vocab_hash, vocab_hash);

  fs::path dir = fs::path(manifest_path).parent_path();
  Hierarchy<C> h;
  h.map = MetaClassMap::from_json(read_file((dir / manifest.at("map_file").get<std::string>()).string()));
  uint64_t map_hash = h.map.content_hash();
  check_hash(manifest_path, "meta-class map", parse_hex(manifest, "metamap_hash"), map_hash);

  h.leaf_labels.assign(static_cast<size_t>(h.map.k), {});
  for (size_t l = 0; l < h.map.assignment.size(); ++l)
    h.leaf_labels[static_cast<size_t>(h.map.assignment[l])].push_back(static_cast<int>(l));

  if (manifest.at("meta_file").is_null()) {
    if (h.map.k != 1)
      throw std::runtime_error("model read: " + manifest_path + ": missing meta model");
    h.constant_meta = true;
  } else {
    h.meta = load_unit((dir / manifest.at("meta_file").get<std::string>()).string(), vocab_hash,
                       map_hash);
  }
  const auto& leaf_files = manifest.at("leaf_files");
  if (static_cast<int>(leaf_files.size()) != h.map.k)
    throw std::runtime_error("model read: " + manifest_path + ": leaf count disagrees with map");
  h.leaves.resize(static_cast<size_t>(h.map.k));
  h.constant_leaf.assign(static_cast<size_t>(h.map.k), 0);
  for (int m = 0; m < h.map.k; ++m) {
    if (leaf_files.at(m).is_null()) {
      if (h.leaf_labels[static_cast<size_t>(m)].size() >= 2)
        throw std::runtime_error("model read: " + manifest_path + ": leaf " + std::to_string(m) +
                                 " has multiple labels but no model file");
      h.constant_leaf[static_cast<size_t>(m)] = 1;
    } else {
      h.leaves[static_cast<size_t>(m)] =
          load_unit((dir / leaf_files.at(m).get<std::string>()).string(), vocab_hash, map_hash);
    }
  }
  h.warnings = manifest.at("warnings").get<std::vector<std::string>>();
  return h;
}

}  // namespace

std::string save_hierarchy(const std::string& dir, const std::string& stem,
                           const Hierarchy<NbAdapter>& h, uint64_t vocab_hash) {
  return save_hierarchy_impl(dir, stem, h, "nb", vocab_hash,
                             [](const std::string& path, const NbAdapter& unit, uint64_t mh) {
                               save_nb_model(path, unit.model, mh);
                             });
}

std::string save_hierarchy(const std::string& dir, const std::string& stem,
                           const Hierarchy<MlpAdapter>& h, uint64_t vocab_hash) {
  return save_hierarchy_impl(dir, stem, h, "mlp", vocab_hash,
                             [&](const std::string& path, const MlpAdapter& unit, uint64_t mh) {
                               save_mlp_model(path, unit.model, vocab_hash, mh);
                             });
}

Hierarchy<NbAdapter> load_nb_hierarchy(const std::string& manifest_path,
                                       uint64_t expect_vocab_hash) {
  return load_hierarchy_impl<NbAdapter>(
      manifest_path, "nb", expect_vocab_hash,
      [](const std::string& path, uint64_t vh, uint64_t mh) {
        NbAdapter unit;
        unit.model = load_nb_model(path, vh, mh);
        return unit;
      });
}

Hierarchy<MlpAdapter> load_mlp_hierarchy(const std::string& manifest_path,
                                         uint64_t expect_vocab_hash) {
  return load_hierarchy_impl<MlpAdapter>(
      manifest_path, "mlp", expect_vocab_hash,
      [](const std::string& path, uint64_t vh, uint64_t mh) {
        MlpAdapter unit;
        unit.model = load_mlp_model(path, vh, mh);
        return unit;
      });
}

}  // namespace htc
