#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "htc/embedding.hpp"

namespace htc {

struct ClassCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;
};

double precision_of(const ClassCounts& c);  // 0/0 -> 0
double recall_of(const ClassCounts& c);

struct EvalReport {
  std::string model_id;
  size_t n_samples = 0;
  int n_labels = 0;
  std::vector<ClassCounts> per_class;
  std::vector<std::vector<int64_t>> confusion;  // [truth][predicted]
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::vector<int> absent_labels;  // never in truth; contribute 0 to macros
  double log_loss = std::numeric_limits<double>::quiet_NaN();
  double inference_seconds = std::numeric_limits<double>::quiet_NaN();
  std::string hardware;
  uint64_t dataset_hash = 0;

  std::string to_json() const;
  std::string confusion_csv() const;
};

EvalReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int n_labels);

// Mean over samples of -sum_i [y_i ln p_i + (1 - y_i) ln(1 - p_i)] with each
// probability clipped to [clip, 1-clip] before the log. `literal_signed`
// returns the un-negated per-sample sum instead (a negative number), for
// auditing the sign convention.
double log_loss(const std::vector<int>& truth, const MatrixRM& proba, double clip = 1e-7,
                bool literal_signed = false);

// Median wall-clock seconds over `repeats` executions of `pass`.
double time_inference(const std::function<void()>& pass, int repeats = 5);

// CPU model plus logical core count, recorded next to timings.
std::string hardware_summary();

struct EnsembleDecision {
  std::vector<std::string> candidates;
  std::vector<double> losses;
  size_t winner = 0;
  std::string to_json() const;
};

// Lowest log loss wins; ties keep the earliest candidate. All reports must
// carry the same dataset hash and a finite log loss.
EnsembleDecision select_best(const std::vector<EvalReport>& reports);

}  // namespace htc
