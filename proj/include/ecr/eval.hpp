#ifndef ECR_EVAL_HPP_
#define ECR_EVAL_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecr/corpus.hpp"
#include "ecr/lexicon.hpp"
#include "ecr/spans.hpp"

namespace ecr {

// ---------------------------------------------------------------------------
// Token level

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static Prf from_counts(std::size_t matched_predicted, std::size_t predicted,
                         std::size_t matched_reference, std::size_t reference);
};

double harmonic_mean(double precision, double recall);

struct TokenMetrics {
  double precision_class_i = 0.0;
  double recall_class_i = 0.0;
  double f1_class_i = 0.0;
  // Micro average over both classes; for single-label tokens this is the
  // token accuracy.
  double f1_micro = 0.0;
};

TokenMetrics token_prf(const IoLabels& predicted, const IoLabels& reference);

// ---------------------------------------------------------------------------
// Span agreement

enum class MatchMode { kExact, kPartial };
enum class PositionMode { kConsidered, kAgnostic };
enum class LexicalLevel { kToken, kLemma };

struct MatchConfig {
  MatchMode mode = MatchMode::kExact;
  PositionMode position = PositionMode::kAgnostic;
  LexicalLevel lexical = LexicalLevel::kToken;
  bool strip_stopwords = true;

  bool operator==(const MatchConfig&) const = default;
};

// Named configurations a..e: (Exact, agnostic, token, with stopwords),
// (Exact, agnostic, token), (Partial, considered, token),
// (Partial, agnostic, token), (Partial, agnostic, lemma).
MatchConfig named_match_config(char id);
std::string_view named_match_ids();
// "partial:agnostic:lemma:strip" style, fields in that order; the fourth
// field is `strip` or `keep`.
MatchConfig parse_match_config(std::string_view text);
std::string describe(const MatchConfig& config);

// Lowercased surface or lemma forms with their narrative-level indices.
struct NormalizedSpan {
  std::string narrative_id;
  std::vector<std::string> forms;
  std::vector<std::int64_t> indices;

  bool empty() const { return forms.empty(); }
};

// A token is dropped as a stopword when its lowercased surface or lemma is
// listed.
NormalizedSpan normalize_span(const CarrierSpan& span,
                              const MatchConfig& config,
                              const StopwordList& stopwords);

// Spans from different narratives never match.
bool span_match(const NormalizedSpan& a, const NormalizedSpan& b,
                const MatchConfig& config);

// Many-to-many existence matching over pooled spans; spans normalized to
// nothing are left out of both counts. Both sides empty gives (1, 1, 1).
Prf carrier_prf(const std::vector<CarrierSpan>& predicted,
                const std::vector<CarrierSpan>& reference,
                const MatchConfig& config, const StopwordList& stopwords);

double positive_agreement(const std::vector<CarrierSpan>& a,
                          const std::vector<CarrierSpan>& b,
                          const MatchConfig& config,
                          const StopwordList& stopwords);

// Mean positive agreement over all annotator pairs.
double inter_annotator_agreement(const std::vector<Sequence>& sequences,
                                 int annotators, const MatchConfig& config,
                                 const StopwordList& stopwords);

// ---------------------------------------------------------------------------
// Fold aggregation

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd aggregate_folds(std::span<const double> values);
// "34.9(3.4)" for fractions with scale 100.
std::string format_mean_std(const MeanStd& value, double scale = 100.0,
                            int decimals = 1);

// ---------------------------------------------------------------------------
// Heatmaps

enum class HeatmapFormat { kAnsi, kHtml };

struct HeatmapRow {
  std::string label;
  std::vector<std::string> tokens;
  std::vector<double> predicted;
  std::vector<double> reference;
};

// Reference probabilities snap to k/4 buckets; predictions use a
// continuous scale. Zero probability is never highlighted.
int reference_bucket(double p);
std::string heatmap_export(std::span<const HeatmapRow> rows,
                           HeatmapFormat format);
std::string heatmap_export(const HeatmapRow& row, HeatmapFormat format);

// ---------------------------------------------------------------------------
// Sentiment vs content carriers

struct SentimentSplit {
  std::vector<CarrierSpan> content;
  std::vector<CarrierSpan> sentiment;
  // Mean over narratives (with at least one span) of the content share.
  std::optional<double> mean_content_fraction;
};

double span_polarity(const CarrierSpan& span, const SentimentLexicon& lexicon);
SentimentSplit sentiment_content_split(const std::vector<CarrierSpan>& spans,
                                       const SentimentLexicon& lexicon);

}  // namespace ecr

#endif  // ECR_EVAL_HPP_
