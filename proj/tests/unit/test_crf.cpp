#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecr/crf.hpp"
#include "ecr/error.hpp"
#include "ecr/eval.hpp"
#include "oracles.hpp"

using namespace ecr;
using ecr::testing::sequence;
using ecr::testing::token;

namespace {

bool has(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

IoLabels random_labels(Rng& rng, std::size_t n) {
  IoLabels y(n);
  for (auto& l : y) l = rng.bernoulli(0.5) ? IoLabel::kI : IoLabel::kO;
  return y;
}

}  // namespace

TEST_CASE("feature extraction") {
  SentimentLexicon lex;
  lex.add("glücklich", 0.8);
  lex.add("traurig", -0.6);

  const Sequence one = sequence({token("Haus", "OOOO", "", "NN")});
  const auto f = crf::extract_features(one, 0, lex);
  CHECK(has(f, "w[0]=haus"));
  CHECK(has(f, "suf1[0]=s"));
  CHECK(has(f, "suf3[0]=aus"));
  CHECK(has(f, "pos[0]=NN"));
  CHECK(has(f, "posp[0]=NN"));
  CHECK(has(f, "sentiment[0]=ZERO"));
  int boundary = 0;
  for (const auto& name : f) {
    boundary += name.rfind("BOS", 0) == 0 || name.rfind("EOS", 0) == 0;
    // Nothing but the boundary markers outside offset 0.
    if (name.find("[0]") == std::string::npos) {
      CHECK((name.rfind("BOS", 0) == 0 || name.rfind("EOS", 0) == 0));
    }
  }
  CHECK(boundary == 6);

  const Sequence s = sequence({token("ich", "OOOO", "", "PPER"),
                               token("bin", "OOOO", "", "VAFIN"),
                               token("glücklich", "IIII", "", "ADJD"),
                               token("traurig", "OOOO", "", "ADJD")});
  const auto g = crf::extract_features(s, 2, lex);
  CHECK(has(g, "sentiment[0]=POS"));
  CHECK(has(g, "sentiment[1]=NEG"));
  CHECK(has(g, "w[-2]=ich"));
  CHECK(has(g, "posp[-1]=VA"));
  CHECK(has(g, "BOS[-3]"));
  CHECK(has(g, "EOS[2]"));
  CHECK(has(g, "suf2[0]=ch"));
  CHECK(crf::extract_features(s, 1, lex) == crf::extract_features(s, 1, lex));

  // POS-less tokens produce no POS features.
  const Sequence bare = sequence({token("x", "OOOO")});
  for (const auto& name : crf::extract_features(bare, 0, lex)) {
    CHECK(name.rfind("pos", 0) != 0);
  }
}

TEST_CASE("dictionary freezing") {
  crf::FeatureDictionary d;
  CHECK(*d.id("a") == 0);
  CHECK(*d.id("b") == 1);
  CHECK(*d.id("a") == 0);
  d.freeze();
  CHECK_FALSE(d.id("c").has_value());
  CHECK(d.size() == 2);
}

TEST_CASE("uniform model") {
  auto [model, seq] = ecr::testing::random_crf(1, 5);
  std::fill(model.weights().begin(), model.weights().end(), 0.0);
  const IoLabels gold(5, IoLabel::kI);
  const auto ll = crf::crf_log_likelihood(model, seq, gold);
  CHECK(ll.value == doctest::Approx(-5.0 * std::log(2.0)).epsilon(1e-12));
  for (double p : crf::crf_marginals(model, seq)) {
    CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(crf::viterbi_decode(model, seq) == IoLabels(5, IoLabel::kO));
}

TEST_CASE("enumeration oracle") {
  Rng rng(5);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const std::size_t n = 1 + seed % 8;
    const auto [model, seq] = ecr::testing::random_crf(seed, n);
    const auto e = ecr::testing::enumerate(model, seq);
    CHECK(std::abs(crf::log_partition(model, seq) - e.log_z) < 1e-8);
    const auto m = crf::crf_marginals(model, seq);
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(std::abs(m[t] - e.marginal_i[t]) < 1e-8);
    }
    CHECK(crf::viterbi_decode(model, seq) == e.best);
    const IoLabels gold = random_labels(rng, n);
    const auto ll = crf::crf_log_likelihood(model, seq, gold);
    CHECK(ll.value <= 0.0);
    CHECK(std::abs(ll.value - (crf::path_score(model, seq, gold) - e.log_z)) <
          1e-8);
  }
}

TEST_CASE("log-likelihood gradient matches finite differences") {
  Rng rng(77);
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    const std::size_t n = 1 + seed % 7;
    auto [model, seq] = ecr::testing::random_crf(seed, n, 5, 1.0);
    const IoLabels gold = random_labels(rng, n);
    const auto ll = crf::crf_log_likelihood(model, seq, gold);
    std::vector<double> analytic(model.weights().size(), 0.0);
    for (const auto& [i, g] : ll.gradient) analytic[i] = g;
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double saved = model.weights()[i];
      model.weights()[i] = saved + h;
      const double up = crf::crf_log_likelihood(model, seq, gold).value;
      model.weights()[i] = saved - h;
      const double down = crf::crf_log_likelihood(model, seq, gold).value;
      model.weights()[i] = saved;
      worst = std::max(worst, ecr::testing::relative_error(
                                  analytic[i], (up - down) / (2 * h), 1e-6));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("viterbi beats sampled paths and honours strong emissions") {
  Rng rng(3);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [model, seq] = ecr::testing::random_crf(seed, 12);
    const IoLabels best = crf::viterbi_decode(model, seq);
    const double best_score = crf::path_score(model, seq, best);
    for (int k = 0; k < 50; ++k) {
      CHECK(crf::path_score(model, seq, random_labels(rng, 12)) <=
            best_score + 1e-12);
    }
  }
  auto [model, seq] = ecr::testing::random_crf(9, 6);
  std::fill(model.weights().begin(), model.weights().end(), 0.0);
  seq.positions[3] = {0};
  model.set_emission(0, 1, 10.0);
  const IoLabels path = crf::viterbi_decode(model, seq);
  CHECK(path[3] == IoLabel::kI);
  CHECK(path[0] == IoLabel::kO);
}

TEST_CASE("long sequences stay finite in log space") {
  auto [model, seq] = ecr::testing::random_crf(4, 4096, 6, 50.0);
  const double log_z = crf::log_partition(model, seq);
  CHECK(std::isfinite(log_z));
  const auto m = crf::crf_marginals(model, seq);
  for (std::size_t t = 0; t < m.size(); t += 97) {
    CHECK(m[t] >= 0.0);
    CHECK(m[t] <= 1.0);
  }
  const IoLabels gold = crf::viterbi_decode(model, seq);
  CHECK(std::isfinite(crf::crf_log_likelihood(model, seq, gold).value));
}

TEST_CASE("training") {
  // Separable toy data: "gut" and "froh" are always inside.
  std::vector<Sequence> data;
  const std::vector<std::vector<std::string>> sentences = {
      {"das", "ist", "gut"}, {"ich", "bin", "froh"}, {"gut", "und", "froh"},
      {"das", "haus"},       {"froh", "ist", "ich"}, {"ist", "das", "gut"}};
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::vector<AnnotatedToken> tokens;
    for (const auto& w : sentences[i]) {
      tokens.push_back(token(w, w == "gut" || w == "froh" ? "IOOO" : "OOOO"));
    }
    data.push_back(sequence(tokens, "N" + std::to_string(i)));
  }
  const SentimentLexicon lex;
  crf::CrfConfig config;
  config.iterations = 200;
  config.learning_rate = 0.05;
  const auto result = crf::crf_train(data, lex, config);

  IoLabels pred, ref;
  for (const Sequence& s : data) {
    const auto y = crf::viterbi_decode(result.model, result.model.encode(s, lex));
    pred.insert(pred.end(), y.begin(), y.end());
    const auto r = reference_labels(s);
    ref.insert(ref.end(), r.begin(), r.end());
  }
  CHECK(token_prf(pred, ref).f1_class_i == 1.0);

  REQUIRE(result.objective.size() == 200);
  CHECK(result.objective.back() > result.objective.front());

  SUBCASE("same seed, same weights") {
    const auto again = crf::crf_train(data, lex, config);
    CHECK(again.model.weights() == result.model.weights());
  }
  SUBCASE("stronger L2 shrinks the weights") {
    double previous = std::numeric_limits<double>::infinity();
    for (double l2 : {0.01, 1.0, 10.0, 100.0}) {
      crf::CrfConfig c = config;
      c.l2 = l2;
      const auto r = crf::crf_train(data, lex, c);
      double norm = 0.0;
      for (double w : r.model.weights()) norm += w * w;
      CHECK(norm < previous);
      previous = norm;
    }
  }
  SUBCASE("objective matches the direct computation") {
    std::vector<crf::EncodedSequence> enc;
    std::vector<IoLabels> gold;
    for (const Sequence& s : data) {
      enc.push_back(result.model.encode(s, lex));
      gold.push_back(reference_labels(s));
    }
    crf::CrfModel copy = result.model;
    const double obj = crf::regularized_objective(copy, enc, gold, config.l2);
    CHECK(std::isfinite(obj));
    CHECK(obj <= 0.0);
  }
  SUBCASE("checkpoint round trip") {
    std::stringstream buf;
    result.model.save(buf);
    const crf::CrfModel back = crf::CrfModel::load(buf);
    CHECK(back.weights() == result.model.weights());
    CHECK(back.dictionary().names() == result.model.dictionary().names());
    CHECK(back.options().window == 3);
    std::istringstream junk("ecr-crf 2\n");
    CHECK_THROWS_AS(crf::CrfModel::load(junk), ParseError);
  }
  SUBCASE("misaligned gold labels") {
    CHECK_THROWS_AS(
        crf::crf_train(data, std::vector<IoLabels>(data.size()), lex, config),
        InputError);
  }
}
