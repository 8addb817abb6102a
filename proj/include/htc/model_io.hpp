#pragma once

#include <cstdint>
#include <string>

#include "htc/hierarchy.hpp"
#include "htc/naive_bayes.hpp"
#include "htc/nn.hpp"

namespace htc {

// Binary model container: "HTCM" magic, little-endian u32 header length, a
// JSON header (kind, version, vocab/meta-map hashes, shapes, blob table),
// then the parameter blobs as little-endian f64 in header order.

struct ModelInfo {
  std::string kind;
  int version = 0;
  uint64_t vocab_hash = 0;
  uint64_t metamap_hash = 0;
};

ModelInfo peek_model(const std::string& path);

// Loaders refuse the file when a nonzero expected hash disagrees with the
// stored one; 0 skips that check.

void save_nb_model(const std::string& path, const NbModel& model, uint64_t metamap_hash = 0);
NbModel load_nb_model(const std::string& path, uint64_t expect_vocab_hash = 0,
                      uint64_t expect_metamap_hash = 0);

void save_mlp_model(const std::string& path, Mlp<float>& model, uint64_t vocab_hash,
                    uint64_t metamap_hash = 0);
Mlp<float> load_mlp_model(const std::string& path, uint64_t expect_vocab_hash = 0,
                          uint64_t expect_metamap_hash = 0);

void save_rescnn_model(const std::string& path, ResCnn<float>& model, uint64_t vocab_hash,
                       uint64_t metamap_hash = 0);
ResCnn<float> load_rescnn_model(const std::string& path, uint64_t expect_vocab_hash = 0,
                                uint64_t expect_metamap_hash = 0);

// A hierarchy persists as <stem>.hierarchy.json plus the meta-class map, the
// meta model, and one file per non-constant leaf. Returns the manifest path.
// `vocab_hash` is the hash of the feature source the hierarchy was trained
// on (vocabulary for nb, embedding for mlp).
std::string save_hierarchy(const std::string& dir, const std::string& stem,
                           const Hierarchy<NbAdapter>& h, uint64_t vocab_hash);
std::string save_hierarchy(const std::string& dir, const std::string& stem,
                           const Hierarchy<MlpAdapter>& h, uint64_t vocab_hash);
Hierarchy<NbAdapter> load_nb_hierarchy(const std::string& manifest_path,
                                       uint64_t expect_vocab_hash = 0);
Hierarchy<MlpAdapter> load_mlp_hierarchy(const std::string& manifest_path,
                                         uint64_t expect_vocab_hash = 0);

}  // namespace htc
