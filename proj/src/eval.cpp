#include "ecr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "ecr/error.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

double harmonic_mean(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Prf Prf::from_counts(std::size_t matched_predicted, std::size_t predicted,
                     std::size_t matched_reference, std::size_t reference) {
  Prf prf;
  if (predicted == 0 && reference == 0) return {1.0, 1.0, 1.0};
  prf.precision = predicted == 0 ? 0.0
                                 : static_cast<double>(matched_predicted) /
                                       static_cast<double>(predicted);
  prf.recall = reference == 0 ? 0.0
                              : static_cast<double>(matched_reference) /
                                    static_cast<double>(reference);
  prf.f1 = harmonic_mean(prf.precision, prf.recall);
  return prf;
}

TokenMetrics token_prf(const IoLabels& predicted, const IoLabels& reference) {
  if (predicted.size() != reference.size()) {
    throw InputError("token_prf: " + std::to_string(predicted.size()) +
                     " predictions for " + std::to_string(reference.size()) +
                     " references");
  }
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == IoLabel::kI;
    const bool r = reference[i] == IoLabel::kI;
    if (p && r) ++tp;
    if (p && !r) ++fp;
    if (!p && r) ++fn;
    if (p == r) ++correct;
  }
  TokenMetrics m;
  m.precision_class_i = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  m.recall_class_i = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  m.f1_class_i = harmonic_mean(m.precision_class_i, m.recall_class_i);
  if (predicted.empty()) {
    m.f1_micro = 0.0;
  } else {
    // Pooled over both classes each token contributes one TP or one
    // FP/FN pair, so micro P = R = F1 = accuracy.
    m.f1_micro = static_cast<double>(correct) /
                 static_cast<double>(predicted.size());
  }
  return m;
}

MatchConfig named_match_config(char id) {
  switch (id) {
    case 'a':
      return {MatchMode::kExact, PositionMode::kAgnostic, LexicalLevel::kToken,
              false};
    case 'b':
      return {MatchMode::kExact, PositionMode::kAgnostic, LexicalLevel::kToken,
              true};
    case 'c':
      return {MatchMode::kPartial, PositionMode::kConsidered,
              LexicalLevel::kToken, true};
    case 'd':
      return {MatchMode::kPartial, PositionMode::kAgnostic,
              LexicalLevel::kToken, true};
    case 'e':
      return {MatchMode::kPartial, PositionMode::kAgnostic,
              LexicalLevel::kLemma, true};
    default:
      throw InputError(std::string("unknown match configuration '") + id +
                       "' (expected a-e)");
  }
}

std::string_view named_match_ids() { return "abcde"; }

MatchConfig parse_match_config(std::string_view text) {
  const auto fields = utf8::split(utf8::to_lower(text), ':');
  if (fields.size() != 4) {
    throw InputError("custom match config needs mode:position:lexical:"
                     "stopwords, got '" +
                     std::string(text) + "'");
  }
  MatchConfig c;
  if (fields[0] == "exact") {
    c.mode = MatchMode::kExact;
  } else if (fields[0] == "partial") {
    c.mode = MatchMode::kPartial;
  } else {
    throw InputError("match mode must be exact or partial");
  }
  if (fields[1] == "considered") {
    c.position = PositionMode::kConsidered;
  } else if (fields[1] == "agnostic") {
    c.position = PositionMode::kAgnostic;
  } else {
    throw InputError("position must be considered or agnostic");
  }
  if (fields[2] == "token") {
    c.lexical = LexicalLevel::kToken;
  } else if (fields[2] == "lemma") {
    c.lexical = LexicalLevel::kLemma;
  } else {
    throw InputError("lexical level must be token or lemma");
  }
  if (fields[3] == "strip") {
    c.strip_stopwords = true;
  } else if (fields[3] == "keep") {
    c.strip_stopwords = false;
  } else {
    throw InputError("stopword field must be strip or keep");
  }
  return c;
}

std::string describe(const MatchConfig& config) {
  std::string out = config.mode == MatchMode::kExact ? "Exact" : "Partial";
  out += config.position == PositionMode::kConsidered ? ", T" : ", F";
  out += config.lexical == LexicalLevel::kToken ? ", token" : ", lemma";
  if (!config.strip_stopwords) out += " (w/ stopwords)";
  return out;
}

NormalizedSpan normalize_span(const CarrierSpan& span,
                              const MatchConfig& config,
                              const StopwordList& stopwords) {
  NormalizedSpan out;
  out.narrative_id = span.narrative_id;
  for (std::size_t i = 0; i < span.tokens.size(); ++i) {
    const std::string& lemma =
        i < span.lemmas.size() ? span.lemmas[i] : span.tokens[i];
    if (config.strip_stopwords &&
        (stopwords.contains(span.tokens[i]) || stopwords.contains(lemma))) {
      continue;
    }
    out.forms.push_back(utf8::to_lower(
        config.lexical == LexicalLevel::kToken ? span.tokens[i] : lemma));
    out.indices.push_back(span.start_index + static_cast<std::int64_t>(i));
  }
  return out;
}

bool span_match(const NormalizedSpan& a, const NormalizedSpan& b,
                const MatchConfig& config) {
  if (a.narrative_id != b.narrative_id || a.empty() || b.empty()) return false;
  const bool considered = config.position == PositionMode::kConsidered;
  if (config.mode == MatchMode::kExact) {
    if (a.forms != b.forms) return false;
    return !considered || (a.indices.front() == b.indices.front() &&
                           a.indices.back() == b.indices.back());
  }
  if (considered && (a.indices.back() < b.indices.front() ||
                     b.indices.back() < a.indices.front())) {
    return false;
  }
  for (const std::string& form : a.forms) {
    if (std::find(b.forms.begin(), b.forms.end(), form) != b.forms.end()) {
      return true;
    }
  }
  return false;
}

namespace {

using SpanIndex = std::map<std::string, std::vector<NormalizedSpan>>;

SpanIndex normalize_all(const std::vector<CarrierSpan>& spans,
                        const MatchConfig& config,
                        const StopwordList& stopwords, std::size_t& count) {
  SpanIndex index;
  count = 0;
  for (const CarrierSpan& span : spans) {
    NormalizedSpan n = normalize_span(span, config, stopwords);
    if (n.empty()) continue;
    ++count;
    index[n.narrative_id].push_back(std::move(n));
  }
  return index;
}

std::size_t count_matched(const SpanIndex& from, const SpanIndex& against,
                          const MatchConfig& config) {
  std::size_t matched = 0;
  for (const auto& [narrative, spans] : from) {
    const auto it = against.find(narrative);
    if (it == against.end()) continue;
    for (const NormalizedSpan& s : spans) {
      for (const NormalizedSpan& t : it->second) {
        if (span_match(s, t, config)) {
          ++matched;
          break;
        }
      }
    }
  }
  return matched;
}

}  // namespace

Prf carrier_prf(const std::vector<CarrierSpan>& predicted,
                const std::vector<CarrierSpan>& reference,
                const MatchConfig& config, const StopwordList& stopwords) {
  std::size_t n_pred = 0, n_ref = 0;
  const SpanIndex pred = normalize_all(predicted, config, stopwords, n_pred);
  const SpanIndex ref = normalize_all(reference, config, stopwords, n_ref);
  return Prf::from_counts(count_matched(pred, ref, config), n_pred,
                          count_matched(ref, pred, config), n_ref);
}

double positive_agreement(const std::vector<CarrierSpan>& a,
                          const std::vector<CarrierSpan>& b,
                          const MatchConfig& config,
                          const StopwordList& stopwords) {
  return carrier_prf(a, b, config, stopwords).f1;
}

double inter_annotator_agreement(const std::vector<Sequence>& sequences,
                                 int annotators, const MatchConfig& config,
                                 const StopwordList& stopwords) {
  if (annotators < 2) {
    throw InputError("inter-annotator agreement needs at least 2 annotators");
  }
  std::vector<std::vector<CarrierSpan>> per_annotator(annotators);
  for (const Sequence& seq : sequences) {
    for (int a = 0; a < annotators; ++a) {
      auto spans = extract_spans(annotator_labels(seq, a), seq);
      per_annotator[a].insert(per_annotator[a].end(),
                              std::make_move_iterator(spans.begin()),
                              std::make_move_iterator(spans.end()));
    }
  }
  double total = 0.0;
  int pairs = 0;
  for (int a = 0; a < annotators; ++a) {
    for (int b = a + 1; b < annotators; ++b) {
      total += positive_agreement(per_annotator[a], per_annotator[b], config,
                                  stopwords);
      ++pairs;
    }
  }
  return total / pairs;
}

MeanStd aggregate_folds(std::span<const double> values) {
  if (values.empty()) throw InputError("aggregate_folds: no fold values");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

std::string format_mean_std(const MeanStd& value, double scale, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f(%.*f)", decimals, value.mean * scale,
                decimals, value.std * scale);
  return buf;
}

int reference_bucket(double p) {
  return std::clamp(static_cast<int>(std::lround(p * 4.0)), 0, 4);
}

namespace {

std::string html_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// White-to-red ramp.
void ansi_token(std::ostringstream& out, const std::string& token,
                double intensity) {
  if (intensity <= 0.0) {
    out << token;
    return;
  }
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - intensity)));
  const char* fg = intensity > 0.5 ? "97" : "30";
  out << "\x1b[48;2;255;" << fade << ';' << fade << "m\x1b[" << fg << 'm'
      << token << "\x1b[0m";
}

void html_token(std::ostringstream& out, const std::string& token,
                double intensity, int bucket) {
  if (intensity <= 0.0) {
    out << "<span>" << html_escape(token) << "</span>";
    return;
  }
  char alpha[16];
  std::snprintf(alpha, sizeof alpha, "%.3f", intensity);
  out << "<span";
  if (bucket >= 0) out << " data-bucket=\"" << bucket << '"';
  out << " style=\"background:rgba(220,0,0," << alpha << ")\">"
      << html_escape(token) << "</span>";
}

void check_row(const HeatmapRow& row) {
  if (row.predicted.size() != row.tokens.size() ||
      row.reference.size() != row.tokens.size()) {
    throw InputError("heatmap row '" + row.label +
                     "': tokens and probabilities are not aligned");
  }
}

}  // namespace

std::string heatmap_export(std::span<const HeatmapRow> rows,
                           HeatmapFormat format) {
  std::ostringstream out;
  if (format == HeatmapFormat::kHtml) {
    out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
           "<title>carrier heatmap</title></head><body>\n"
           "<table>\n";
    for (const HeatmapRow& row : rows) {
      check_row(row);
      out << "<tr><th colspan=\"2\">" << html_escape(row.label)
          << "</th></tr>\n<tr><td>model</td><td>";
      for (std::size_t i = 0; i < row.tokens.size(); ++i) {
        if (i > 0) out << ' ';
        html_token(out, row.tokens[i], std::clamp(row.predicted[i], 0.0, 1.0),
                   -1);
      }
      out << "</td></tr>\n<tr><td>reference</td><td>";
      for (std::size_t i = 0; i < row.tokens.size(); ++i) {
        if (i > 0) out << ' ';
        const int bucket = reference_bucket(row.reference[i]);
        html_token(out, row.tokens[i], bucket / 4.0, bucket);
      }
      out << "</td></tr>\n";
    }
    out << "</table>\n</body></html>\n";
    return out.str();
  }
  for (const HeatmapRow& row : rows) {
    check_row(row);
    out << "# " << row.label << '\n' << "model     ";
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      ansi_token(out, row.tokens[i], std::clamp(row.predicted[i], 0.0, 1.0));
    }
    out << '\n' << "reference ";
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      ansi_token(out, row.tokens[i], reference_bucket(row.reference[i]) / 4.0);
    }
    out << '\n';
  }
  return out.str();
}

std::string heatmap_export(const HeatmapRow& row, HeatmapFormat format) {
  return heatmap_export(std::span<const HeatmapRow>(&row, 1), format);
}

double span_polarity(const CarrierSpan& span, const SentimentLexicon& lexicon) {
  double total = 0.0;
  for (std::size_t i = 0; i < span.tokens.size(); ++i) {
    double p = lexicon.polarity(span.tokens[i]);
    if (p == 0.0 && i < span.lemmas.size()) p = lexicon.polarity(span.lemmas[i]);
    total += p;
  }
  return total;
}

SentimentSplit sentiment_content_split(const std::vector<CarrierSpan>& spans,
                                       const SentimentLexicon& lexicon) {
  SentimentSplit split;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_narrative;
  for (const CarrierSpan& span : spans) {
    auto& [content, total] = per_narrative[span.narrative_id];
    ++total;
    if (span_polarity(span, lexicon) == 0.0) {
      ++content;
      split.content.push_back(span);
    } else {
      split.sentiment.push_back(span);
    }
  }
  if (!per_narrative.empty()) {
    double sum = 0.0;
    for (const auto& [id, counts] : per_narrative) {
      sum += static_cast<double>(counts.first) /
             static_cast<double>(counts.second);
    }
    split.mean_content_fraction =
        sum / static_cast<double>(per_narrative.size());
  }
  return split;
}

}  // namespace ecr
