#ifndef ECR_SPANS_HPP_
#define ECR_SPANS_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecr/corpus.hpp"

namespace ecr {

enum class IoLabel : std::uint8_t { kO = 0, kI = 1 };

using IoLabels = std::vector<IoLabel>;

inline constexpr double kDefaultThreshold = 0.25;

// Contiguous run of I labels. Indices are narrative-level token indices
// of the preprocessed narrative, end inclusive.
struct CarrierSpan {
  std::string narrative_id;
  std::int64_t sentence_id = 0;
  std::int64_t start_index = 0;
  std::int64_t end_index = 0;
  std::vector<std::string> tokens;
  std::vector<std::string> lemmas;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const CarrierSpan&) const = default;
};

// I where p >= theta. Throws InputError unless 0 < theta <= 1.
IoLabels threshold_labels(std::span<const double> p_inside,
                          double theta = kDefaultThreshold);

// Maximal I runs, in order. Throws InputError on length mismatch.
std::vector<CarrierSpan> extract_spans(const IoLabels& labels,
                                       const Sequence& sequence);

// I where at least one annotator marked the token.
IoLabels reference_labels(const Sequence& sequence);
IoLabels annotator_labels(const Sequence& sequence, std::size_t annotator);

std::vector<CarrierSpan> reference_spans(const Sequence& sequence);
std::vector<CarrierSpan> reference_spans(const Narrative& narrative);

// Positions of `sequence` covered by `spans`, as labels.
IoLabels labels_from_spans(const std::vector<CarrierSpan>& spans,
                           const Sequence& sequence);

// `narrative_id sentence_id start end surface_joined`, tab separated.
void write_span_dump(std::ostream& out, const std::vector<CarrierSpan>& spans);

}  // namespace ecr

#endif  // ECR_SPANS_HPP_
