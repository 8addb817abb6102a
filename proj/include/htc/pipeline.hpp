#pragma once

#include <string>
#include <vector>

#include "htc/config.hpp"

namespace htc {

// Stage entry points behind the command line tool. Each stage reads its
// inputs from the run directory (`cfg.out`), verifies upstream artifact
// hashes against the run manifest, writes its own artifacts, and records
// itself in the manifest. Failures throw; the caller renders them.
void cmd_prepare(const RunConfig& cfg);
void cmd_embed(const RunConfig& cfg);
void cmd_cluster(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);

struct PredictRequest {
  std::string model_id;            // empty -> winner recorded by evaluate
  std::vector<std::string> texts;
};

struct Prediction {
  int label = -1;
  std::string label_name;
  double prob = 0.0;
  bool no_features = false;  // no usable token; fell back to the class prior
};

// Also writes predictions.json into the run directory.
std::vector<Prediction> cmd_predict(const RunConfig& cfg, const PredictRequest& req);

// Log level comes from HTC_LOG (quiet|info|debug, default info); messages go
// to stderr so stdout stays parseable.
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace htc
