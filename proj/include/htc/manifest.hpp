#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace htc {

struct ArtifactRecord {
  std::string name;
  std::string path;  // relative to the run directory
  uint64_t hash = 0;
};

struct StageRecord {
  std::string stage;
  std::string config_digest;  // hash of the canonical config printout
  uint64_t seed = 0;
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  double seconds = 0.0;   // informational; never part of comparisons
  std::string hardware;   // informational
};

// Per-run ledger of what each stage consumed and produced. Stages chain by
// artifact hash: a consumer records the exact input hashes it saw, and
// re-verifies files on disk before trusting them.
struct RunManifest {
  std::vector<StageRecord> stages;

  const StageRecord* find_stage(const std::string& name) const;
  void record(StageRecord rec);  // replaces a previous run of the same stage

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  // Same stages, seeds, config digests, and artifact hashes; timing and
  // hardware fields are ignored.
  static bool equivalent(const RunManifest& a, const RunManifest& b);
};

RunManifest load_manifest(const std::string& run_dir);  // missing file -> empty
void save_manifest(const std::string& run_dir, const RunManifest& m);

// Finds `artifact` among the outputs of `stage`, re-hashes the file on disk,
// and errors out if the stage never ran or the file changed since.
ArtifactRecord consume_artifact(const std::string& run_dir, const RunManifest& m,
                                const std::string& stage, const std::string& artifact);

}  // namespace htc
