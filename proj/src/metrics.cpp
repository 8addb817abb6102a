#include "htc/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "htc/util.hpp"

namespace htc {

double precision_of(const ClassCounts& c) {
  int64_t denom = c.tp + c.fp;
  return denom == 0 ? 0.0 : double(c.tp) / double(denom);
}

double recall_of(const ClassCounts& c) {
  int64_t denom = c.tp + c.fn;
  return denom == 0 ? 0.0 : double(c.tp) / double(denom);
}

EvalReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int n_labels) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("compute_metrics: truth/predicted size mismatch");
  if (truth.empty()) throw std::invalid_argument("compute_metrics: empty evaluation set");
  if (n_labels < 1) throw std::invalid_argument("compute_metrics: need at least one label");

  EvalReport rep;
  rep.n_samples = truth.size();
  rep.n_labels = n_labels;
  rep.confusion.assign(n_labels, std::vector<int64_t>(n_labels, 0));
  for (size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i], p = predicted[i];
    if (t < 0 || t >= n_labels || p < 0 || p >= n_labels)
      throw std::invalid_argument("compute_metrics: label out of range");
    ++rep.confusion[t][p];
  }

  rep.per_class.assign(n_labels, {});
  const int64_t n = static_cast<int64_t>(truth.size());
  int64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
  double macro_p = 0.0, macro_r = 0.0;
  for (int c = 0; c < n_labels; ++c) {
    ClassCounts& cc = rep.per_class[c];
    cc.tp = rep.confusion[c][c];
    for (int o = 0; o < n_labels; ++o) {
      if (o == c) continue;
      cc.fp += rep.confusion[o][c];
      cc.fn += rep.confusion[c][o];
    }
    cc.tn = n - cc.tp - cc.fp - cc.fn;
    tp_sum += cc.tp;
    fp_sum += cc.fp;
    fn_sum += cc.fn;
    macro_p += precision_of(cc);
    macro_r += recall_of(cc);
    if (cc.tp + cc.fn == 0) rep.absent_labels.push_back(c);
  }
  rep.micro_precision = tp_sum + fp_sum == 0 ? 0.0 : double(tp_sum) / double(tp_sum + fp_sum);
  rep.micro_recall = tp_sum + fn_sum == 0 ? 0.0 : double(tp_sum) / double(tp_sum + fn_sum);
  rep.macro_precision = macro_p / n_labels;
  rep.macro_recall = macro_r / n_labels;
  return rep;
}

double log_loss(const std::vector<int>& truth, const MatrixRM& proba, double clip,
                bool literal_signed) {
  if (static_cast<Eigen::Index>(truth.size()) != proba.rows())
    throw std::invalid_argument("log_loss: truth/proba size mismatch");
  if (truth.empty()) throw std::invalid_argument("log_loss: empty evaluation set");
  if (!(clip > 0.0 && clip < 0.5)) throw std::invalid_argument("log_loss: clip must be in (0, 0.5)");
  const Eigen::Index l = proba.cols();

  double total = 0.0;
  for (Eigen::Index r = 0; r < proba.rows(); ++r) {
    int t = truth[static_cast<size_t>(r)];
    if (t < 0 || t >= l) throw std::invalid_argument("log_loss: label out of range");
    double row_sum = 0.0;
    double s = 0.0;
    for (Eigen::Index c = 0; c < l; ++c) {
      double p = proba(r, c);
      if (!(p >= 0.0)) throw std::invalid_argument("log_loss: negative or NaN probability");
      row_sum += p;
      p = std::min(1.0 - clip, std::max(clip, p));
      s += c == t ? std::log(p) : std::log1p(-p);
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw std::invalid_argument("log_loss: probability row does not sum to 1");
    total += s;
  }
  double mean = total / double(truth.size());
  return literal_signed ? mean : -mean;
}

double time_inference(const std::function<void()>& pass, int repeats) {
  if (repeats < 1) throw std::invalid_argument("time_inference: repeats must be positive");
  std::vector<double> seconds;
  seconds.reserve(static_cast<size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    pass();
    auto t1 = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(seconds.begin(), seconds.end());
  size_t mid = seconds.size() / 2;
  if (seconds.size() % 2 == 1) return seconds[mid];
  return 0.5 * (seconds[mid - 1] + seconds[mid]);
}

std::string hardware_summary() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.find("model name");
    if (pos == std::string::npos) continue;
    auto colon = line.find(':');
    if (colon != std::string::npos) {
      model = line.substr(colon + 1);
      size_t first = model.find_first_not_of(" \t");
      model = first == std::string::npos ? "unknown cpu" : model.substr(first);
    }
    break;
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " logical cores";
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["model_id"] = model_id;
  j["n_samples"] = n_samples;
  j["n_labels"] = n_labels;
  j["micro"] = {{"precision", micro_precision}, {"recall", micro_recall}};
  j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}};
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (int c = 0; c < n_labels; ++c) {
    const ClassCounts& cc = per_class[static_cast<size_t>(c)];
    classes.push_back({{"label", c},
                       {"tp", cc.tp},
                       {"fp", cc.fp},
                       {"fn", cc.fn},
                       {"tn", cc.tn},
                       {"precision", precision_of(cc)},
                       {"recall", recall_of(cc)}});
  }
  j["per_class"] = classes;
  j["absent_labels"] = absent_labels;
  if (std::isfinite(log_loss)) j["log_loss"] = log_loss;
  if (std::isfinite(inference_seconds)) j["inference_seconds"] = inference_seconds;
  if (!hardware.empty()) j["hardware"] = hardware;
  j["dataset_hash"] = hex64(dataset_hash);
  return j.dump(2);
}

std::string EvalReport::confusion_csv() const {
  std::ostringstream out;
  out << "truth";
  for (int c = 0; c < n_labels; ++c) out << ",pred_" << c;
  out << "\n";
  for (int t = 0; t < n_labels; ++t) {
    out << t;
    for (int p = 0; p < n_labels; ++p) out << "," << confusion[t][p];
    out << "\n";
  }
  return out.str();
}

std::string EnsembleDecision::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (size_t i = 0; i < candidates.size(); ++i)
    list.push_back({{"model_id", candidates[i]}, {"log_loss", losses[i]}});
  j["candidates"] = list;
  j["winner"] = candidates[winner];
  return j.dump(2);
}

EnsembleDecision select_best(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2)
    throw std::invalid_argument("select_best: need at least two candidate models");
  EnsembleDecision d;
  for (size_t i = 0; i < reports.size(); ++i) {
    if (!std::isfinite(reports[i].log_loss))
      throw std::invalid_argument("select_best: candidate '" + reports[i].model_id +
                                  "' has no log loss");
    if (reports[i].dataset_hash != reports[0].dataset_hash)
      throw std::invalid_argument("select_best: candidates evaluated on different datasets");
    d.candidates.push_back(reports[i].model_id);
    d.losses.push_back(reports[i].log_loss);
    if (reports[i].log_loss < d.losses[d.winner]) d.winner = i;
  }
  return d;
}

}  // namespace htc
