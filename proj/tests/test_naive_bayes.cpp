#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "htc/naive_bayes.hpp"
#include "htc/text.hpp"
#include "test_support.hpp"

using namespace htc;
using htc::test::stream;

namespace {

// two weather documents against one money document; vocabulary order is
// first-appearance: rain, pipe, tax
std::vector<TokenStream> weather_docs() {
  return {stream({"rain"}), stream({"rain", "pipe"}), stream({"tax"})};
}

std::vector<int> weather_labels() { return {0, 0, 1}; }

}  // namespace

TEST_SUITE("naive_bayes") {

TEST_CASE("bernoulli fitting smooths present and absent document counts") {
  auto docs = weather_docs();
  Vocabulary vocab = build_vocabulary(docs);
  REQUIRE(vocab.size() == 3);

  NbModel m = nb_fit(docs, weather_labels(), 2, vocab, {0.2, NbFeatureMode::onehot, false});
  CHECK(m.n_classes == 2);
  CHECK(m.priors(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.priors(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // class 0 saw two documents: (count + 0.2) / (2 + 0.4)
  CHECK(m.cond(0, 0) == doctest::Approx(0.9166666666666667).epsilon(1e-15));
  CHECK(m.cond(0, 1) == doctest::Approx(1.2 / 2.4).epsilon(1e-15));
  CHECK(m.cond(0, 2) == doctest::Approx(0.2 / 2.4).epsilon(1e-15));
  // class 1 saw one document: (count + 0.2) / (1 + 0.4)
  CHECK(m.cond(1, 0) == doctest::Approx(0.2 / 1.4).epsilon(1e-15));
  CHECK(m.cond(1, 1) == doctest::Approx(0.2 / 1.4).epsilon(1e-15));
  CHECK(m.cond(1, 2) == doctest::Approx(1.2 / 1.4).epsilon(1e-15));
}

TEST_CASE("the posterior for a marker token matches the frozen hand computation") {
  auto docs = weather_docs();
  Vocabulary vocab = build_vocabulary(docs);
  NbModel m = nb_fit(docs, weather_labels(), 2, vocab, {0.2, NbFeatureMode::onehot, false});

  Eigen::VectorXd p = nb_predict_proba(m, stream({"rain"}));
  REQUIRE(p.size() == 2);
  CHECK(p(0) == doctest::Approx(0.9796067694195953).epsilon(1e-9));
  CHECK(p(1) == doctest::Approx(0.020393230580404653).epsilon(1e-9));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(1) > 0.0);  // smoothing keeps every class strictly positive

  CHECK(nb_predict(m, stream({"rain"})) == 0);
  CHECK(nb_predict(m, stream({"tax"})) == 1);
}

TEST_CASE("presence-only scoring drops the absence evidence") {
  auto docs = weather_docs();
  Vocabulary vocab = build_vocabulary(docs);

  NbModel po = nb_fit(docs, weather_labels(), 2, vocab, {0.2, NbFeatureMode::onehot, true});
  Eigen::VectorXd p = nb_predict_proba(po, TokenStream{});
  CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // a document of unknown tokens scores like the empty one
  Eigen::VectorXd q = nb_predict_proba(po, stream({"unseen", "words"}));
  CHECK((p - q).cwiseAbs().maxCoeff() == 0.0);
  CHECK(nb_predict(po, TokenStream{}) == 0);

  // full Bernoulli treats the missing "rain" marker as evidence against class 0
  NbModel full = nb_fit(docs, weather_labels(), 2, vocab, {0.2, NbFeatureMode::onehot, false});
  CHECK(nb_predict(full, TokenStream{}) == 1);
}

TEST_CASE("tfidf mode accumulates weighted mass with vocabulary smoothing") {
  std::vector<TokenStream> docs{stream({"a", "a", "b"}), stream({"b"}), stream({"c"})};
  std::vector<int> labels{0, 0, 1};
  Vocabulary vocab = build_vocabulary(docs);
  NbModel m = nb_fit(docs, labels, 2, vocab, {0.5, NbFeatureMode::tfidf, false});

  // class 0 mass: a carries 2*ln(3), b carries ln(3/2) from each document
  double wa = 2.0 * std::log(3.0);
  double wb = 2.0 * std::log(1.5);
  double total0 = wa + wb;
  CHECK(m.cond(0, 0) == doctest::Approx((wa + 0.5) / (total0 + 1.5)).epsilon(1e-12));
  CHECK(m.cond(0, 1) == doctest::Approx((wb + 0.5) / (total0 + 1.5)).epsilon(1e-12));
  CHECK(m.cond(0, 2) == doctest::Approx(0.5 / (total0 + 1.5)).epsilon(1e-12));
  double wc = std::log(3.0);
  CHECK(m.cond(1, 2) == doctest::Approx((wc + 0.5) / (wc + 1.5)).epsilon(1e-12));

  // multinomial rows are proper distributions
  CHECK(m.cond.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.cond.row(1).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // scoring weighs each log-probability by the query's tfidf weight
  double sa = std::log(2.0 / 3.0) + std::log(3.0) * std::log(m.cond(0, 0)) +
              std::log(3.0) * std::log(m.cond(0, 2));
  double sb = std::log(1.0 / 3.0) + std::log(3.0) * std::log(m.cond(1, 0)) +
              std::log(3.0) * std::log(m.cond(1, 2));
  Eigen::VectorXd p = nb_predict_proba(m, stream({"a", "c"}));
  CHECK(p(0) == doctest::Approx(1.0 / (1.0 + std::exp(sb - sa))).epsilon(1e-12));
}

TEST_CASE("repeated tokens count once per document in bernoulli mode") {
  std::vector<TokenStream> docs{stream({"x", "x", "x"}), stream({"y"})};
  Vocabulary vocab = build_vocabulary(docs);
  NbModel m = nb_fit(docs, {0, 1}, 2, vocab, {1.0, NbFeatureMode::onehot, false});
  CHECK(m.cond(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));  // (1+1)/(1+2)

  // unknown tokens at prediction time are ignored entirely
  Eigen::VectorXd with_oov = nb_predict_proba(m, stream({"x", "zzz"}));
  Eigen::VectorXd without = nb_predict_proba(m, stream({"x"}));
  CHECK((with_oov - without).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("document order does not change the fitted model") {
  auto docs = weather_docs();
  Vocabulary vocab = build_vocabulary(docs);
  NbConfig cfg{0.2, NbFeatureMode::onehot, false};
  NbModel m1 = nb_fit(docs, weather_labels(), 2, vocab, cfg);

  std::vector<TokenStream> shuffled{docs[2], docs[0], docs[1]};
  NbModel m2 = nb_fit(shuffled, {1, 0, 0}, 2, vocab, cfg);
  CHECK((m1.priors - m2.priors).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m1.cond - m2.cond).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fitting rejects malformed inputs") {
  auto docs = weather_docs();
  auto labels = weather_labels();
  Vocabulary vocab = build_vocabulary(docs);

  CHECK_THROWS_AS(nb_fit(docs, {0, 0}, 2, vocab), std::invalid_argument);
  CHECK_THROWS_AS(nb_fit({}, {}, 2, vocab), std::invalid_argument);
  CHECK_THROWS_AS(nb_fit(docs, labels, 1, vocab), std::invalid_argument);

  NbConfig bad_alpha;
  bad_alpha.alpha = 0.0;
  CHECK_THROWS_AS(nb_fit(docs, labels, 2, vocab, bad_alpha), std::invalid_argument);
  CHECK_THROWS_WITH_AS(nb_fit(docs, labels, 2, Vocabulary{}), "nb_fit: empty vocabulary",
                       std::invalid_argument);
  CHECK_THROWS_AS(nb_fit(docs, {0, 0, 2}, 2, vocab), std::invalid_argument);
  CHECK_THROWS_WITH_AS(nb_fit(docs, {0, 0, 0}, 2, vocab),
                       "nb_fit: class 1 has no training documents", std::invalid_argument);
}

TEST_CASE("prediction ties break toward the lowest class id") {
  std::vector<TokenStream> docs{stream({"x"}), stream({"y"})};
  Vocabulary vocab = build_vocabulary(docs);

  NbModel po = nb_fit(docs, {0, 1}, 2, vocab, {0.2, NbFeatureMode::onehot, true});
  Eigen::VectorXd p = nb_predict_proba(po, TokenStream{});
  CHECK(p(0) == p(1));
  CHECK(nb_predict(po, TokenStream{}) == 0);

  // a document holding both markers is symmetric under the full model too
  NbModel full = nb_fit(docs, {0, 1}, 2, vocab, {0.2, NbFeatureMode::onehot, false});
  Eigen::VectorXd q = nb_predict_proba(full, stream({"x", "y"}));
  CHECK(q(0) == q(1));
  CHECK(nb_predict(full, stream({"x", "y"})) == 0);
}

TEST_CASE("prediction rejects a malformed model") {
  auto docs = weather_docs();
  Vocabulary vocab = build_vocabulary(docs);
  NbModel m = nb_fit(docs, weather_labels(), 2, vocab);

  NbModel wrong_width = m;
  wrong_width.cond = MatrixRM::Zero(2, 1);
  CHECK_THROWS_AS(nb_predict_proba(wrong_width, stream({"rain"})), std::invalid_argument);

  NbModel wrong_classes = m;
  wrong_classes.n_classes = 1;
  CHECK_THROWS_AS(nb_predict_proba(wrong_classes, stream({"rain"})), std::invalid_argument);
}

}  // TEST_SUITE("naive_bayes")
