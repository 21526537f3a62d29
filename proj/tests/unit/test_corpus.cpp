#include <doctest.h>

#include <sstream>

#include "ecr/corpus.hpp"
#include "ecr/error.hpp"
#include "ecr/kv_config.hpp"
#include "ecr/utf8.hpp"

using namespace ecr;

namespace {

Corpus parse(const std::string& text, std::optional<int> k = std::nullopt) {
  std::istringstream in(text);
  return parse_corpus(in, k, "test.tsv");
}

// Two narratives, three sentences each; sentences 1 of N1 and 2 of N2 have
// no I labels.
const char* kTwoNarratives =
    "#annotators=4\n"
    "N1\tP1\t0\t0\tIch\t_\tPPER\tO\tO\tO\tO\n"
    "N1\tP1\t0\t1\tFamilie\tfamilie\tNN\tI\tI\tI\tO\n"
    "N1\tP1\t1\t2\tund\t_\tKON\tO\tO\tO\tO\n"
    "N1\tP1\t1\t3\tdann\t_\tADV\tO\tO\tO\tO\n"
    "N1\tP1\t2\t4\tglücklich\t_\tADJD\tI\tO\tO\tI\n"
    "\n"
    "N2\tP2\t0\t0\tArbeit\t_\tNN\tO\tO\tO\tI\n"
    "N2\tP2\t1\t1\tDrucker\t_\tNN\tI\tI\tO\tO\n"
    "N2\tP2\t1\t2\tkaputt\t_\tADJD\tO\tI\tO\tO\n"
    "N2\tP2\t2\t3\tnichts\t_\tPIS\tO\tO\tO\tO\n";

void check_throws_at_line(const std::string& text, std::size_t line) {
  try {
    parse(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == line);
  }
}

}  // namespace

TEST_CASE("utf8 helpers") {
  CHECK(utf8::to_lower("ÄÖÜ Straße") == "äöü straße");
  CHECK(utf8::to_lower("ÉCOLE") == "école");
  CHECK(utf8::suffix("glücklich", 3) == "ich");
  CHECK(utf8::suffix("für", 2) == "ür");
  CHECK(utf8::suffix("ab", 3) == "ab");
  CHECK(utf8::prefix("ADJD", 2) == "AD");
  CHECK(utf8::length("äö") == 2);
  CHECK(utf8::split("a\tb\t", '\t') == std::vector<std::string>{"a", "b", ""});
  CHECK(utf8::trim("  x y \n") == "x y");
}

TEST_CASE("kv config") {
  const KvConfig kv = KvConfig::parse(
      "# comment\nmodel = crf\nfolds=3\nrate = 0.5 # trailing\nlist = a, b,,c\n"
      "flag = true\n");
  CHECK(kv.get_string("model", "") == "crf");
  CHECK(kv.get_int("folds", 0) == 3);
  CHECK(kv.get_double("rate", 0) == doctest::Approx(0.5));
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_list("list") == std::vector<std::string>{"a", "b", "c"});
  CHECK(kv.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(kv.reject_unknown({"model", "folds"}), InputError);
  CHECK_THROWS_AS(KvConfig::parse("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(kv.get_int("model", 0), InputError);
}

TEST_CASE("parse: table row labels become annotation vectors") {
  const Corpus c = parse(kTwoNarratives);
  REQUIRE(c.annotators == 4);
  REQUIRE(c.narratives.size() == 2);
  const AnnotatedToken& familie = c.narratives[0].sentences[0].tokens[1];
  CHECK(familie.surface == "Familie");
  CHECK(familie.annotations == std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK(familie.lemma == "familie");
  CHECK(familie.pos == "NN");
  const AnnotatedToken& ich = c.narratives[0].sentences[0].tokens[0];
  CHECK(ich.lemma == "ich");
  CHECK_FALSE(ich.lemma_explicit);
  CHECK(c.narratives[1].narrator_id == "P2");
  CHECK(c.narratives[0].sentences.size() == 3);
}

TEST_CASE("parse: empty input gives an empty corpus") {
  CHECK(parse("").narratives.empty());
  CHECK(parse("#annotators=4\n").narratives.empty());
}

TEST_CASE("parse: rejections name the line") {
  check_throws_at_line("#annotators=4\nN1\tP1\t0\t0\tx\t_\t_\tO\tX\tO\tO\n", 2);
  check_throws_at_line("#annotators=4\nN1\tP1\t0\t0\tx\t_\t_\tO\tO\tO\n", 2);
  check_throws_at_line(
      "#annotators=4\nN1\tP1\t0\t0\tx\t_\t_\tO\tO\tO\tO\n"
      "N1\tP1\t0\t0\ty\t_\t_\tO\tO\tO\tO\n",
      3);
  check_throws_at_line(
      "#annotators=4\nN1\tP1\t0\t3\tx\t_\t_\tO\tO\tO\tO\n"
      "N1\tP1\t0\t1\ty\t_\t_\tO\tO\tO\tO\n",
      3);
  check_throws_at_line(
      "#annotators=4\nN1\tP1\t0\t0\tx\t_\t_\tO\tO\tO\tO\n"
      "N1\tP9\t0\t1\ty\t_\t_\tO\tO\tO\tO\n",
      3);
  // Header and expected annotator count disagree.
  CHECK_THROWS_AS(parse("#annotators=3\n", 4), ParseError);
}

TEST_CASE("parse: annotator count from the header or the default") {
  const Corpus two = parse("#annotators=2\nN\tP\t0\t0\tx\t_\t_\tI\tO\n");
  CHECK(two.annotators == 2);
  CHECK(two.narratives[0].sentences[0].tokens[0].annotations.size() == 2);
  const Corpus dflt = parse("N\tP\t0\t0\tx\t_\t_\tI\tO\tO\tO\n");
  CHECK(dflt.annotators == kDefaultAnnotators);
}

TEST_CASE("write then parse round-trips") {
  const Corpus c = parse(kTwoNarratives);
  std::ostringstream once;
  write_corpus(once, c);
  const Corpus again = parse(once.str());
  std::ostringstream twice;
  write_corpus(twice, again);
  CHECK(once.str() == twice.str());
  CHECK(again.token_count() == c.token_count());
}

TEST_CASE("punctuation rule") {
  const PunctuationRule rule;
  CHECK(rule.is_punct("!"));
  CHECK(rule.is_punct("„"));
  CHECK(rule.is_punct("..."));
  CHECK(rule.is_punct("–"));
  CHECK_FALSE(rule.is_punct("Hallo"));
  CHECK_FALSE(rule.is_punct("3"));
  CHECK_FALSE(rule.is_punct("z.B."));
}

TEST_CASE("preprocess") {
  const Corpus c = parse(
      "#annotators=4\n"
      "N1\tP1\t0\t0\t„\t_\t$(\tO\tO\tO\tO\n"
      "N1\tP1\t0\t1\tHallo\t_\tITJ\tI\tO\tO\tO\n"
      "N1\tP1\t0\t2\t!\t_\t$.\tO\tO\tO\tO\n"
      "N1\tP1\t1\t3\t.\t_\t$.\tO\tO\tO\tO\n"
      "N1\tP1\t2\t4\tja\t_\tPTKANT\tO\tO\tO\tO\n");
  const Corpus p = preprocess(c);
  REQUIRE(p.narratives.size() == 1);
  const auto& sentences = p.narratives[0].sentences;
  REQUIRE(sentences.size() == 2);
  REQUIRE(sentences[0].tokens.size() == 1);
  CHECK(sentences[0].tokens[0].surface == "Hallo");
  CHECK(sentences[0].tokens[0].index_in_narrative == 0);
  CHECK(sentences[1].tokens[0].surface == "ja");
  CHECK(sentences[1].tokens[0].index_in_narrative == 1);

  SUBCASE("idempotent") {
    std::ostringstream a, b;
    write_corpus(a, p);
    write_corpus(b, preprocess(p));
    CHECK(a.str() == b.str());
  }
  SUBCASE("no punctuation means no change") {
    const Corpus clean = parse(kTwoNarratives);
    std::ostringstream a, b;
    write_corpus(a, clean);
    write_corpus(b, preprocess(clean));
    CHECK(a.str() == b.str());
  }
  SUBCASE("strip_punct off keeps tokens") {
    CHECK(preprocess(c, false).token_count() == 5);
  }
}

TEST_CASE("build_distribution") {
  AnnotatedToken t;
  t.annotations = {1, 1, 1, 0};
  CHECK(build_distribution(t).p_i == 0.75);
  CHECK(build_distribution(t).p_i + build_distribution(t).p_o == 1.0);
  t.annotations = {0, 0, 0, 0};
  CHECK(build_distribution(t).p_i == 0.0);
  t.annotations = {1, 0, 0, 1};
  CHECK(build_distribution(t).p_i == 0.5);
  t.annotations = {};
  CHECK_THROWS_AS(build_distribution(t), InputError);
}

TEST_CASE("segmentation") {
  const Corpus c = parse(kTwoNarratives);
  const auto all = segment(c, SegmentationStrategy::kSentAll);
  const auto carr = segment(c, SegmentationStrategy::kSentCarr);
  const auto narr = segment(c, SegmentationStrategy::kNarrativeLevel);
  CHECK(all.size() == 6);
  CHECK(carr.size() == 4);
  REQUIRE(narr.size() == 2);
  CHECK(narr[0].size() == 5);
  CHECK(narr[1].size() == 4);

  std::size_t all_tokens = 0, narr_tokens = 0;
  for (const auto& s : all) all_tokens += s.size();
  for (const auto& s : narr) narr_tokens += s.size();
  CHECK(all_tokens == narr_tokens);

  for (const auto& s : carr) {
    bool any = false;
    for (const auto& t : s.tokens) any = any || t.any_inside();
    CHECK(any);
  }
  CHECK(all[2].narrative_id == "N1");
  CHECK(all[2].sentence_id == 2);
  CHECK(all[3].narrator_id == "P2");
  CHECK(narr[0].token_sentence_ids ==
        std::vector<std::int64_t>{0, 0, 1, 1, 2});

  const auto targets = target_distributions(all[0]);
  REQUIRE(targets.size() == 2);
  CHECK(targets[1].p_i == 0.75);

  CHECK(parse_segmentation("SentCarr") == SegmentationStrategy::kSentCarr);
  CHECK_THROWS_AS(parse_segmentation("paragraph"), InputError);
}

TEST_CASE("corpus statistics") {
  SUBCASE("hand counts") {
    const Corpus c = parse(kTwoNarratives);
    const CorpusStats s = corpus_stats(c);
    CHECK(s.narratives == 2);
    CHECK(s.sentences == 6);
    CHECK(s.tokens == 9);
    CHECK(s.frac_tokens_any_i == doctest::Approx(5.0 / 9.0));
    CHECK(s.frac_sentences_with_carrier == doctest::Approx(4.0 / 6.0));
    CHECK(s.mean_tokens_per_sentence == doctest::Approx(1.5));
    CHECK(s.mean_tokens_per_narrative == doctest::Approx(4.5));
    // Annotator 2 marks Familie and the run Drucker kaputt.
    REQUIRE(s.mean_carrier_len_per_annotator.size() == 4);
    CHECK(s.mean_carrier_len_per_annotator[1] == doctest::Approx(1.5));
  }
  SUBCASE("ten tokens, two inside") {
    std::string text = "#annotators=4\n";
    for (int i = 0; i < 10; ++i) {
      text += "N\tP\t0\t" + std::to_string(i) + "\tw\t_\t_\t" +
              (i < 2 ? "I" : "O") + "\tO\tO\tO\n";
    }
    CHECK(corpus_stats(parse(text)).frac_tokens_any_i == doctest::Approx(0.2));
  }
  SUBCASE("one run of length three") {
    std::string text = "#annotators=1\n";
    for (int i = 0; i < 5; ++i) {
      text += "N\tP\t0\t" + std::to_string(i) + "\tw\t_\t_\t" +
              (i >= 1 && i <= 3 ? "I" : "O") + "\n";
    }
    const CorpusStats s = corpus_stats(parse(text));
    CHECK(s.mean_carrier_len_per_annotator[0] == doctest::Approx(3.0));
  }
  SUBCASE("no I labels") {
    const CorpusStats s =
        corpus_stats(parse("N\tP\t0\t0\tw\t_\t_\tO\tO\tO\tO\n"));
    CHECK(s.frac_sentences_with_carrier == 0.0);
  }
  SUBCASE("empty corpus is an error") {
    CHECK_THROWS_AS(corpus_stats(Corpus{}), InputError);
  }
}
