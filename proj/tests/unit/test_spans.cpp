#include <doctest.h>

#include <sstream>

#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/spans.hpp"
#include "oracles.hpp"

using namespace ecr;
using ecr::testing::sequence;
using ecr::testing::token;

namespace {

IoLabels labels(const std::string& pattern) {
  IoLabels out;
  for (char c : pattern) out.push_back(c == 'I' ? IoLabel::kI : IoLabel::kO);
  return out;
}

Sequence plain(std::size_t n) {
  std::vector<AnnotatedToken> tokens;
  for (std::size_t i = 0; i < n; ++i) {
    tokens.push_back(token("w" + std::to_string(i), "OOOO"));
  }
  return sequence(tokens);
}

}  // namespace

TEST_CASE("threshold uses >=") {
  const std::vector<double> p = {0.75};
  CHECK(threshold_labels(p, 0.25) == labels("I"));
  CHECK(threshold_labels(std::vector<double>{0.0, 0.0}) == labels("OO"));
  CHECK(threshold_labels(std::vector<double>{0.25, 0.2499}) == labels("IO"));
  CHECK(threshold_labels(std::vector<double>{0.25, 0.25 - 1e-9}) ==
        labels("IO"));
  CHECK_THROWS_AS(threshold_labels(p, 0.0), InputError);
  CHECK_THROWS_AS(threshold_labels(p, 1.5), InputError);
  CHECK(threshold_labels(std::vector<double>{1.0}, 1.0) == labels("I"));
}

TEST_CASE("extract_spans finds maximal runs") {
  const Sequence s = plain(5);
  auto spans = extract_spans(labels("OIIOI"), s);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].start_index == 1);
  CHECK(spans[0].end_index == 2);
  CHECK(spans[0].tokens == std::vector<std::string>{"w1", "w2"});
  CHECK(spans[1].start_index == 4);
  CHECK(spans[1].end_index == 4);
  CHECK(extract_spans(labels("OOOOO"), s).empty());
  spans = extract_spans(labels("IIIII"), s);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start_index == 0);
  CHECK(spans[0].end_index == 4);
  CHECK_THROWS_AS(extract_spans(labels("OI"), s), InputError);
}

TEST_CASE("reference spans use the any-annotator rule") {
  // Mein Papa freut und glücklich ist sich
  const Sequence s = sequence({token("Mein", "OOOO"), token("Papa", "IOOO"),
                               token("freut", "IIOO"), token("und", "OIOO"),
                               token("glücklich", "IOOI"), token("ist", "OOIO"),
                               token("heute", "OOOO")});
  const auto spans = reference_spans(s);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].tokens ==
        std::vector<std::string>{"Papa", "freut", "und", "glücklich", "ist"});

  SUBCASE("disjoint adjacent marks merge") {
    const Sequence t = sequence(
        {token("a", "IOOO"), token("b", "OIOO"), token("c", "OOOO")});
    const auto merged = reference_spans(t);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].length() == 2);
  }
  SUBCASE("annotator view") {
    CHECK(annotator_labels(s, 3) == labels("OOOOIOO"));
  }
}

TEST_CASE("span properties over random label sequences") {
  Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const Sequence s = plain(n);
    IoLabels y(n);
    for (auto& l : y) l = rng.bernoulli(0.4) ? IoLabel::kI : IoLabel::kO;
    const auto spans = extract_spans(y, s);
    // extract then paint back is the identity
    CHECK(labels_from_spans(spans, s) == y);
    CHECK(spans.size() <= (n + 1) / 2 + 1);
    for (const auto& sp : spans) {
      CHECK(sp.start_index <= sp.end_index);
      CHECK(sp.length() ==
            static_cast<std::size_t>(sp.end_index - sp.start_index + 1));
    }
  }
}

TEST_CASE("adding an annotator's marks never removes reference tokens") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<AnnotatedToken> tokens;
    for (std::size_t i = 0; i < n; ++i) {
      std::string io;
      for (int a = 0; a < 4; ++a) io += rng.bernoulli(0.15) ? 'I' : 'O';
      tokens.push_back(token("t", io));
    }
    Sequence before = sequence(tokens);
    Sequence after = before;
    for (auto& t : after.tokens) {
      if (rng.bernoulli(0.3)) t.annotations[rng.below(4)] = 1;
    }
    const IoLabels a = reference_labels(before);
    const IoLabels b = reference_labels(after);
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == IoLabel::kI) CHECK(b[i] == IoLabel::kI);
    }
  }
}

TEST_CASE("span dump format") {
  const Sequence s = sequence({token("mit", "OOOO"), token("dem", "OOOO"),
                               token("Drucker", "OOOO")},
                              "N7", 3, 10);
  std::ostringstream out;
  write_span_dump(out, extract_spans(labels("III"), s));
  CHECK(out.str() == "N7\t3\t10\t12\tmit dem Drucker\n");
}
