#include "htc/manifest.hpp"

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {
namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json artifact_json(const ArtifactRecord& a) {
  return {{"name", a.name}, {"path", a.path}, {"hash", hex64(a.hash)}};
}

ArtifactRecord artifact_from(const ordered_json& j) {
  ArtifactRecord a;
  a.name = j.at("name").get<std::string>();
  a.path = j.at("path").get<std::string>();
  a.hash = std::stoull(j.at("hash").get<std::string>(), nullptr, 16);
  return a;
}

bool artifacts_equal(const std::vector<ArtifactRecord>& a, const std::vector<ArtifactRecord>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].path != b[i].path || a[i].hash != b[i].hash) return false;
  return true;
}

}  // namespace

const StageRecord* RunManifest::find_stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.stage == name) return &s;
  return nullptr;
}

void RunManifest::record(StageRecord rec) {
  for (auto& s : stages) {
    if (s.stage == rec.stage) {
      s = std::move(rec);
      return;
    }
  }
  stages.push_back(std::move(rec));
}

std::string RunManifest::to_json() const {
  ordered_json j;
  ordered_json list = ordered_json::array();
  for (const auto& s : stages) {
    ordered_json e;
    e["stage"] = s.stage;
    e["config_digest"] = s.config_digest;
    e["seed"] = s.seed;
    ordered_json in = ordered_json::array();
    for (const auto& a : s.inputs) in.push_back(artifact_json(a));
    e["inputs"] = in;
    ordered_json out = ordered_json::array();
    for (const auto& a : s.outputs) out.push_back(artifact_json(a));
    e["outputs"] = out;
    e["seconds"] = s.seconds;
    e["hardware"] = s.hardware;
    list.push_back(e);
  }
  j["stages"] = list;
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("manifest: malformed JSON");
  RunManifest m;
  for (const auto& e : j.at("stages")) {
    StageRecord s;
    s.stage = e.at("stage").get<std::string>();
    s.config_digest = e.at("config_digest").get<std::string>();
    s.seed = e.at("seed").get<uint64_t>();
    for (const auto& a : e.at("inputs")) s.inputs.push_back(artifact_from(a));
    for (const auto& a : e.at("outputs")) s.outputs.push_back(artifact_from(a));
    s.seconds = e.at("seconds").get<double>();
    s.hardware = e.at("hardware").get<std::string>();
    m.stages.push_back(std::move(s));
  }
  return m;
}

bool RunManifest::equivalent(const RunManifest& a, const RunManifest& b) {
  if (a.stages.size() != b.stages.size()) return false;
  for (size_t i = 0; i < a.stages.size(); ++i) {
    const StageRecord& x = a.stages[i];
    const StageRecord& y = b.stages[i];
    if (x.stage != y.stage || x.config_digest != y.config_digest || x.seed != y.seed) return false;
    if (!artifacts_equal(x.inputs, y.inputs) || !artifacts_equal(x.outputs, y.outputs))
      return false;
  }
  return true;
}

RunManifest load_manifest(const std::string& run_dir) {
  fs::path p = fs::path(run_dir) / "manifest.json";
  if (!fs::exists(p)) return {};
  return RunManifest::from_json(read_file(p.string()));
}

void save_manifest(const std::string& run_dir, const RunManifest& m) {
  fs::create_directories(run_dir);
  write_file((fs::path(run_dir) / "manifest.json").string(), m.to_json());
}

ArtifactRecord consume_artifact(const std::string& run_dir, const RunManifest& m,
                                const std::string& stage, const std::string& artifact) {
  const StageRecord* s = m.find_stage(stage);
  if (!s)
    throw std::runtime_error("manifest: stage '" + stage + "' has not run in " + run_dir +
                             "; run it first");
  for (const auto& a : s->outputs) {
    if (a.name != artifact) continue;
    fs::path p = fs::path(run_dir) / a.path;
    if (!fs::exists(p))
      throw std::runtime_error("manifest: artifact '" + artifact + "' (" + p.string() +
                               ") is missing; re-run '" + stage + "'");
    uint64_t now = hash_file(p.string());
    if (now != a.hash)
      throw std::runtime_error("manifest: artifact '" + artifact + "' produced by '" + stage +
                               "' changed on disk (recorded " + hex64(a.hash) + ", found " +
                               hex64(now) + "); re-run '" + stage + "'");
    return a;
  }
  throw std::runtime_error("manifest: stage '" + stage + "' has no artifact named '" + artifact +
                           "'");
}

}  // namespace htc
