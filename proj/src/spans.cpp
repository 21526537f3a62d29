#include "ecr/spans.hpp"

#include <ostream>

#include "ecr/error.hpp"

namespace ecr {

IoLabels threshold_labels(std::span<const double> p_inside, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw InputError("threshold must lie in (0, 1]");
  }
  IoLabels labels;
  labels.reserve(p_inside.size());
  for (double p : p_inside) {
    labels.push_back(p >= theta ? IoLabel::kI : IoLabel::kO);
  }
  return labels;
}

std::vector<CarrierSpan> extract_spans(const IoLabels& labels,
                                       const Sequence& sequence) {
  if (labels.size() != sequence.size()) {
    throw InputError("label count " + std::to_string(labels.size()) +
                     " does not match sequence length " +
                     std::to_string(sequence.size()));
  }
  std::vector<CarrierSpan> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != IoLabel::kI) {
      ++i;
      continue;
    }
    CarrierSpan span;
    span.narrative_id = sequence.narrative_id;
    span.sentence_id = sequence.token_sentence_ids.empty()
                           ? sequence.sentence_id
                           : sequence.token_sentence_ids[i];
    span.start_index = sequence.tokens[i].index_in_narrative;
    while (i < labels.size() && labels[i] == IoLabel::kI) {
      span.tokens.push_back(sequence.tokens[i].surface);
      span.lemmas.push_back(sequence.tokens[i].lemma);
      span.end_index = sequence.tokens[i].index_in_narrative;
      ++i;
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

IoLabels reference_labels(const Sequence& sequence) {
  IoLabels labels;
  labels.reserve(sequence.size());
  for (const AnnotatedToken& token : sequence.tokens) {
    labels.push_back(token.any_inside() ? IoLabel::kI : IoLabel::kO);
  }
  return labels;
}

IoLabels annotator_labels(const Sequence& sequence, std::size_t annotator) {
  IoLabels labels;
  labels.reserve(sequence.size());
  for (const AnnotatedToken& token : sequence.tokens) {
    const bool inside = annotator < token.annotations.size() &&
                        token.annotations[annotator] != 0;
    labels.push_back(inside ? IoLabel::kI : IoLabel::kO);
  }
  return labels;
}

std::vector<CarrierSpan> reference_spans(const Sequence& sequence) {
  return extract_spans(reference_labels(sequence), sequence);
}

std::vector<CarrierSpan> reference_spans(const Narrative& narrative) {
  const auto sequences =
      segment(std::vector<Narrative>{narrative},
              SegmentationStrategy::kNarrativeLevel);
  if (sequences.empty()) return {};
  return reference_spans(sequences.front());
}

IoLabels labels_from_spans(const std::vector<CarrierSpan>& spans,
                           const Sequence& sequence) {
  IoLabels labels(sequence.size(), IoLabel::kO);
  for (const CarrierSpan& span : spans) {
    if (span.narrative_id != sequence.narrative_id) continue;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
      const std::int64_t index = sequence.tokens[i].index_in_narrative;
      if (index >= span.start_index && index <= span.end_index) {
        labels[i] = IoLabel::kI;
      }
    }
  }
  return labels;
}

void write_span_dump(std::ostream& out, const std::vector<CarrierSpan>& spans) {
  for (const CarrierSpan& span : spans) {
    out << span.narrative_id << '\t' << span.sentence_id << '\t'
        << span.start_index << '\t' << span.end_index << '\t';
    for (std::size_t i = 0; i < span.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << span.tokens[i];
    }
    out << '\n';
  }
}

}  // namespace ecr
