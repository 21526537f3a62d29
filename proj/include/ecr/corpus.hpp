#ifndef ECR_CORPUS_HPP_
#define ECR_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecr {

inline constexpr int kDefaultAnnotators = 4;

struct AnnotatedToken {
  std::string surface;
  std::string lemma;  // lowercased surface when the corpus gives `_`
  std::string pos;    // empty when the corpus gives `_`
  bool lemma_explicit = false;
  bool is_punct = false;
  std::vector<std::uint8_t> annotations;  // one 0/1 label per annotator
  std::int64_t index_in_narrative = 0;

  bool any_inside() const;
  int inside_count() const;
};

// Vote fractions over {I, O}.
struct LabelDistribution {
  double p_i = 0.0;
  double p_o = 1.0;

  static LabelDistribution from_inside(double p_i) { return {p_i, 1.0 - p_i}; }
};

struct Sentence {
  std::int64_t sentence_id = 0;
  std::vector<AnnotatedToken> tokens;
};

struct Narrative {
  std::string narrative_id;
  std::string narrator_id;
  std::vector<Sentence> sentences;

  std::size_t token_count() const;
};

struct Corpus {
  int annotators = kDefaultAnnotators;
  std::vector<Narrative> narratives;

  std::size_t token_count() const;
};

enum class SegmentationStrategy { kNarrativeLevel, kSentAll, kSentCarr };

SegmentationStrategy parse_segmentation(std::string_view name);
std::string_view segmentation_name(SegmentationStrategy strategy);

// Training/evaluation unit. Sentence ids are kept per token because a
// narrative-level sequence spans many sentences.
struct Sequence {
  std::string narrative_id;
  std::string narrator_id;
  std::int64_t sentence_id = 0;  // first sentence covered
  std::vector<AnnotatedToken> tokens;
  std::vector<std::int64_t> token_sentence_ids;

  std::size_t size() const { return tokens.size(); }
};

struct CorpusStats {
  std::size_t narratives = 0;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  double frac_tokens_any_i = 0.0;
  double frac_sentences_with_carrier = 0.0;
  double mean_tokens_per_narrative = 0.0;
  double mean_tokens_per_sentence = 0.0;
  // Mean over annotators and narratives of the annotator's carrier count.
  double mean_carriers_per_narrative = 0.0;
  std::vector<double> mean_carrier_len_per_annotator;
};

// Punctuation membership: a token is punctuation when every code point is
// in one of the enabled classes or in `extra`.
struct PunctuationRule {
  bool ascii_punct = true;       // ASCII punctuation and symbols
  bool unicode_punct = true;     // Latin-1 / general punctuation, quotes, dashes
  bool unicode_symbols = true;   // currency, math, arrows, misc symbols
  std::u32string extra;

  bool is_punct(std::string_view token) const;
};

// Throws ParseError (with line number) on malformed rows, non-IO labels,
// annotator-count mismatches, and duplicate or decreasing token indices.
Corpus parse_corpus(std::istream& in, std::optional<int> expected_annotators,
                    const std::string& source = "<corpus>",
                    const PunctuationRule& punct = {});
Corpus parse_corpus(const std::filesystem::path& path,
                    std::optional<int> expected_annotators = std::nullopt,
                    const PunctuationRule& punct = {});

void write_corpus(std::ostream& out, const Corpus& corpus);

Corpus preprocess(const Corpus& corpus, bool strip_punct = true);

LabelDistribution build_distribution(const AnnotatedToken& token);

std::vector<Sequence> segment(const Corpus& corpus,
                              SegmentationStrategy strategy);
std::vector<Sequence> segment(const std::vector<Narrative>& narratives,
                              SegmentationStrategy strategy);

std::vector<LabelDistribution> target_distributions(const Sequence& sequence);

CorpusStats corpus_stats(const Corpus& corpus);

void print_stats(std::ostream& out, const CorpusStats& stats);

}  // namespace ecr

#endif  // ECR_CORPUS_HPP_
