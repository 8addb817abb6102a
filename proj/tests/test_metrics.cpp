#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "htc/metrics.hpp"

using namespace htc;

namespace {

EvalReport candidate(const std::string& id, double loss, uint64_t dataset_hash) {
  EvalReport r;
  r.model_id = id;
  r.log_loss = loss;
  r.dataset_hash = dataset_hash;
  return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion counts and averages match the hand-checked fixture") {
  std::vector<int> truth{0, 0, 1, 1, 2};
  std::vector<int> pred{0, 0, 0, 1, 2};
  EvalReport rep = compute_metrics(truth, pred, 3);

  CHECK(rep.n_samples == 5);
  CHECK(rep.n_labels == 3);
  CHECK(rep.confusion == std::vector<std::vector<int64_t>>{{2, 0, 0}, {1, 1, 0}, {0, 0, 1}});

  CHECK(rep.per_class[0].tp == 2);
  CHECK(rep.per_class[0].fp == 1);
  CHECK(rep.per_class[0].fn == 0);
  CHECK(rep.per_class[0].tn == 2);
  CHECK(rep.per_class[1].tp == 1);
  CHECK(rep.per_class[1].fn == 1);

  CHECK(precision_of(rep.per_class[0]) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(recall_of(rep.per_class[0]) == 1.0);
  CHECK(recall_of(rep.per_class[1]) == 0.5);

  CHECK(rep.micro_precision == 0.8);
  CHECK(rep.micro_recall == 0.8);
  CHECK(rep.macro_recall == 0.8333333333333334);
  CHECK(rep.macro_precision == 0.8888888888888888);
  CHECK(rep.absent_labels.empty());
}

TEST_CASE("micro precision equals micro recall on single-label predictions") {
  // every false positive for one class is a false negative for another
  std::vector<int> truth, pred;
  uint64_t s = 99;
  auto draw = [&s] {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<int>((s >> 33) % 4);
  };
  for (int i = 0; i < 200; ++i) {
    truth.push_back(draw());
    pred.push_back(draw());
  }
  EvalReport rep = compute_metrics(truth, pred, 4);
  CHECK(rep.micro_precision == rep.micro_recall);
}

TEST_CASE("labels missing from the truth are reported absent and score zero") {
  std::vector<int> truth{0, 0, 1};
  std::vector<int> pred{0, 2, 1};
  EvalReport rep = compute_metrics(truth, pred, 4);

  CHECK(rep.absent_labels == std::vector<int>{2, 3});
  CHECK(precision_of(rep.per_class[2]) == 0.0);  // predicted once, never right
  CHECK(recall_of(rep.per_class[2]) == 0.0);     // no positives: defined as zero
  CHECK(precision_of(rep.per_class[3]) == 0.0);
  CHECK(recall_of(rep.per_class[3]) == 0.0);

  // absent classes still divide the macro averages
  CHECK(rep.macro_recall == 0.375);  // (0.5 + 1 + 0 + 0) / 4
}

TEST_CASE("metric computation rejects inconsistent inputs") {
  CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({}, {}, 2), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0}, {0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0, -1}, {0, 0}, 2), std::invalid_argument);
}

TEST_CASE("log loss reproduces the uniform-distribution hand value") {
  MatrixRM proba(3, 4);
  proba.setConstant(0.25);
  std::vector<int> truth{0, 1, 3};
  CHECK(log_loss(truth, proba) == doctest::Approx(2.249340578475233).epsilon(1e-12));

  // signed audit form is the exact negation
  CHECK(log_loss(truth, proba, 1e-7, true) == -log_loss(truth, proba));

  // confident correct predictions bottom out at the clip instead of zero
  MatrixRM hot(2, 2);
  hot << 1.0, 0.0, 0.0, 1.0;
  std::vector<int> t2{0, 1};
  double tiny = log_loss(t2, hot);
  CHECK(tiny > 0.0);
  CHECK(tiny == doctest::Approx(-2.0 * std::log1p(-1e-7)).epsilon(1e-6));
}

TEST_CASE("log loss rejects malformed probability rows") {
  MatrixRM not_normalized(1, 2);
  not_normalized << 0.6, 0.6;
  CHECK_THROWS_AS(log_loss({0}, not_normalized), std::invalid_argument);

  MatrixRM negative(1, 2);
  negative << 1.2, -0.2;
  CHECK_THROWS_AS(log_loss({0}, negative), std::invalid_argument);

  MatrixRM with_nan(1, 2);
  with_nan << std::numeric_limits<double>::quiet_NaN(), 1.0;
  CHECK_THROWS_AS(log_loss({0}, with_nan), std::invalid_argument);

  MatrixRM ok(1, 2);
  ok << 0.5, 0.5;
  CHECK_THROWS_AS(log_loss({2}, ok), std::invalid_argument);      // label out of range
  CHECK_THROWS_AS(log_loss({0, 1}, ok), std::invalid_argument);   // size mismatch
  CHECK_THROWS_AS(log_loss({}, MatrixRM(0, 2)), std::invalid_argument);
  CHECK_THROWS_AS(log_loss({0}, ok, 0.0), std::invalid_argument);  // clip outside (0, 0.5)
  CHECK_THROWS_AS(log_loss({0}, ok, 0.5), std::invalid_argument);
}

TEST_CASE("ensemble selection takes the lowest loss with ties to the earliest candidate") {
  std::vector<EvalReport> cands{candidate("nb_cascade", 1.5, 7), candidate("mlp_cascade", 1.2, 7),
                                candidate("cnn_flat", 2.0, 7)};
  EnsembleDecision d = select_best(cands);
  CHECK(d.winner == 1);
  CHECK(d.candidates == std::vector<std::string>{"nb_cascade", "mlp_cascade", "cnn_flat"});
  CHECK(d.losses == std::vector<double>{1.5, 1.2, 2.0});

  auto j = nlohmann::json::parse(d.to_json());
  CHECK(j["winner"] == "mlp_cascade");
  REQUIRE(j["candidates"].size() == 3);
  CHECK(j["candidates"][1]["model_id"] == "mlp_cascade");
  CHECK(j["candidates"][1]["log_loss"] == 1.2);

  CHECK(select_best({candidate("first", 1.0, 3), candidate("second", 1.0, 3)}).winner == 0);

  CHECK_THROWS_WITH_AS(select_best({candidate("a", 1.0, 1), candidate("b", 2.0, 2)}),
                       "select_best: candidates evaluated on different datasets",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      select_best({candidate("a", 1.0, 1),
                   candidate("b", std::numeric_limits<double>::quiet_NaN(), 1)}),
      "select_best: candidate 'b' has no log loss", std::invalid_argument);
  CHECK_THROWS_AS(select_best({candidate("a", 1.0, 1)}), std::invalid_argument);
}

TEST_CASE("evaluation reports serialize optional fields only when present") {
  EvalReport rep = compute_metrics({0, 1}, {0, 1}, 2);
  rep.model_id = "nb_cascade";
  rep.dataset_hash = 0xabcULL;

  auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["model_id"] == "nb_cascade");
  CHECK(j["n_samples"] == 2);
  CHECK(j["n_labels"] == 2);
  CHECK(j["micro"]["precision"] == 1.0);
  CHECK(j["macro"]["recall"] == 1.0);
  REQUIRE(j["per_class"].size() == 2);
  CHECK(j["per_class"][0]["label"] == 0);
  CHECK(j["per_class"][0]["tp"] == 1);
  CHECK(j["per_class"][1]["precision"] == 1.0);
  CHECK(j["dataset_hash"] == "0000000000000abc");
  CHECK_FALSE(j.contains("log_loss"));
  CHECK_FALSE(j.contains("inference_seconds"));
  CHECK_FALSE(j.contains("hardware"));

  rep.log_loss = 0.25;
  rep.inference_seconds = 0.5;
  rep.hardware = "test rig";
  j = nlohmann::json::parse(rep.to_json());
  CHECK(j["log_loss"] == 0.25);
  CHECK(j["inference_seconds"] == 0.5);
  CHECK(j["hardware"] == "test rig");
}

TEST_CASE("the confusion matrix exports as a labeled csv grid") {
  EvalReport rep = compute_metrics({0, 0, 1, 1, 2}, {0, 0, 0, 1, 2}, 3);
  CHECK(rep.confusion_csv() == "truth,pred_0,pred_1,pred_2\n0,2,0,0\n1,1,1,0\n2,0,0,1\n");
}

TEST_CASE("inference timing runs the pass the requested number of times") {
  int calls = 0;
  double median = time_inference([&] { ++calls; }, 5);
  CHECK(calls == 5);
  CHECK(median >= 0.0);
  CHECK(std::isfinite(median));
  CHECK_THROWS_AS(time_inference([] {}, 0), std::invalid_argument);

  std::string hw = hardware_summary();
  CHECK(hw.find("logical cores") != std::string::npos);
}

}  // TEST_SUITE("metrics")
