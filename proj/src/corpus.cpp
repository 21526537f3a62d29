#include "ecr/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "ecr/error.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

bool AnnotatedToken::any_inside() const {
  return std::any_of(annotations.begin(), annotations.end(),
                     [](std::uint8_t a) { return a != 0; });
}

int AnnotatedToken::inside_count() const {
  return static_cast<int>(
      std::count_if(annotations.begin(), annotations.end(),
                    [](std::uint8_t a) { return a != 0; }));
}

std::size_t Narrative::token_count() const {
  std::size_t n = 0;
  for (const Sentence& s : sentences) n += s.tokens.size();
  return n;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const Narrative& narrative : narratives) n += narrative.token_count();
  return n;
}

SegmentationStrategy parse_segmentation(std::string_view name) {
  const std::string lower = utf8::to_lower(name);
  if (lower == "narrative") return SegmentationStrategy::kNarrativeLevel;
  if (lower == "sentall") return SegmentationStrategy::kSentAll;
  if (lower == "sentcarr") return SegmentationStrategy::kSentCarr;
  throw InputError("unknown segmentation '" + std::string(name) +
                   "' (expected narrative, sentall or sentcarr)");
}

std::string_view segmentation_name(SegmentationStrategy strategy) {
  switch (strategy) {
    case SegmentationStrategy::kNarrativeLevel:
      return "narrative";
    case SegmentationStrategy::kSentAll:
      return "sentall";
    case SegmentationStrategy::kSentCarr:
      return "sentcarr";
  }
  return "?";
}

namespace {

bool is_unicode_punct(char32_t c) {
  if (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB2 && c != 0xB3 &&
      c != 0xB5 && c != 0xB9 && c != 0xBA && c != 0xBC && c != 0xBD &&
      c != 0xBE) {
    return true;
  }
  if (c == 0xD7 || c == 0xF7) return true;
  if (c >= 0x2010 && c <= 0x205E) return true;  // dashes, quotes, ellipsis
  if (c >= 0x3000 && c <= 0x3003) return true;
  if (c >= 0x3008 && c <= 0x3011) return true;
  if (c >= 0xFF01 && c <= 0xFF0F) return true;
  return false;
}

bool is_unicode_symbol(char32_t c) {
  if (c >= 0x20A0 && c <= 0x20CF) return true;  // currency
  if (c >= 0x2100 && c <= 0x21FF) return true;  // letterlike, arrows
  if (c >= 0x2200 && c <= 0x22FF) return true;  // math operators
  if (c >= 0x2500 && c <= 0x27BF) return true;  // box drawing .. dingbats
  return false;
}

}  // namespace

bool PunctuationRule::is_punct(std::string_view token) const {
  const std::u32string cps = utf8::decode(token);
  if (cps.empty()) return false;
  for (char32_t c : cps) {
    const bool ascii = c < 0x80 && c > 0x20 &&
                       !(c >= '0' && c <= '9') && !(c >= 'a' && c <= 'z') &&
                       !(c >= 'A' && c <= 'Z');
    if (ascii_punct && ascii) continue;
    if (unicode_punct && is_unicode_punct(c)) continue;
    if (unicode_symbols && is_unicode_symbol(c)) continue;
    if (extra.find(c) != std::u32string::npos) continue;
    return false;
  }
  return true;
}

namespace {

constexpr std::size_t kFixedColumns = 7;

std::int64_t parse_index(const std::string& field, const std::string& what,
                         const std::string& source, std::size_t line) {
  std::int64_t value = 0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || value < 0) {
    throw ParseError(source, line,
                     what + " must be a non-negative integer, got '" + field +
                         "'");
  }
  return value;
}

int parse_header(std::string_view line, const std::string& source,
                 std::size_t line_no) {
  const std::string_view key = "#annotators=";
  const std::string_view value = utf8::trim(line.substr(key.size()));
  int k = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), k);
  if (ec != std::errc() || ptr != value.data() + value.size() || k < 1) {
    throw ParseError(source, line_no, "invalid annotator header");
  }
  return k;
}

}  // namespace

Corpus parse_corpus(std::istream& in, std::optional<int> expected_annotators,
                    const std::string& source, const PunctuationRule& punct) {
  Corpus corpus;
  corpus.annotators = expected_annotators.value_or(kDefaultAnnotators);
  bool header_seen = false;
  bool data_seen = false;

  std::unordered_map<std::string, std::size_t> narrative_slot;
  // Per narrative: last token index and sentence ids already closed.
  std::vector<std::int64_t> last_index;
  std::vector<std::set<std::int64_t>> closed_sentences;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty()) continue;
    if (line.starts_with("#annotators=")) {
      if (header_seen || data_seen) {
        throw ParseError(source, line_no,
                         "annotator header must precede all data rows");
      }
      const int k = parse_header(line, source, line_no);
      if (expected_annotators && *expected_annotators != k) {
        throw ParseError(source, line_no,
                         "header declares " + std::to_string(k) +
                             " annotators, expected " +
                             std::to_string(*expected_annotators));
      }
      corpus.annotators = k;
      header_seen = true;
      continue;
    }
    if (line.front() == '#') continue;
    data_seen = true;

    const std::vector<std::string> fields = utf8::split(line, '\t');
    const std::size_t k = static_cast<std::size_t>(corpus.annotators);
    if (fields.size() != kFixedColumns + k) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(kFixedColumns + k) +
                           " tab-separated columns, got " +
                           std::to_string(fields.size()));
    }
    const std::string& narrative_id = fields[0];
    const std::string& narrator_id = fields[1];
    if (narrative_id.empty()) {
      throw ParseError(source, line_no, "empty narrative_id");
    }
    if (narrator_id.empty()) {
      throw ParseError(source, line_no, "empty narrator_id");
    }
    const std::int64_t sentence_id =
        parse_index(fields[2], "sentence_id", source, line_no);
    const std::int64_t token_index =
        parse_index(fields[3], "token_index", source, line_no);
    if (fields[4].empty()) throw ParseError(source, line_no, "empty surface");

    AnnotatedToken token;
    token.surface = fields[4];
    token.lemma_explicit = fields[5] != "_";
    token.lemma = token.lemma_explicit ? fields[5] : utf8::to_lower(fields[4]);
    token.pos = fields[6] == "_" ? std::string() : fields[6];
    token.is_punct = punct.is_punct(token.surface);
    token.index_in_narrative = token_index;
    token.annotations.reserve(k);
    for (std::size_t a = 0; a < k; ++a) {
      const std::string& label = fields[kFixedColumns + a];
      if (label == "I") {
        token.annotations.push_back(1);
      } else if (label == "O") {
        token.annotations.push_back(0);
      } else {
        throw ParseError(source, line_no,
                         "annotator " + std::to_string(a + 1) +
                             " label must be I or O, got '" + label + "'");
      }
    }

    auto [it, inserted] =
        narrative_slot.try_emplace(narrative_id, corpus.narratives.size());
    if (inserted) {
      corpus.narratives.push_back({narrative_id, narrator_id, {}});
      last_index.push_back(-1);
      closed_sentences.emplace_back();
    }
    const std::size_t slot = it->second;
    Narrative& narrative = corpus.narratives[slot];
    if (narrative.narrator_id != narrator_id) {
      throw ParseError(source, line_no,
                       "narrative '" + narrative_id +
                           "' has conflicting narrator ids");
    }
    if (token_index == last_index[slot]) {
      throw ParseError(source, line_no,
                       "duplicate token_index " + std::to_string(token_index) +
                           " in narrative '" + narrative_id + "'");
    }
    if (token_index < last_index[slot]) {
      throw ParseError(source, line_no,
                       "token_index " + std::to_string(token_index) +
                           " is not increasing in narrative '" +
                           narrative_id + "'");
    }
    last_index[slot] = token_index;

    if (narrative.sentences.empty() ||
        narrative.sentences.back().sentence_id != sentence_id) {
      if (closed_sentences[slot].contains(sentence_id)) {
        throw ParseError(source, line_no,
                         "sentence " + std::to_string(sentence_id) +
                             " is not contiguous in narrative '" +
                             narrative_id + "'");
      }
      if (!narrative.sentences.empty()) {
        closed_sentences[slot].insert(narrative.sentences.back().sentence_id);
      }
      narrative.sentences.push_back({sentence_id, {}});
    }
    narrative.sentences.back().tokens.push_back(std::move(token));
  }
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path,
                    std::optional<int> expected_annotators,
                    const PunctuationRule& punct) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file: " + path.string());
  return parse_corpus(in, expected_annotators, path.string(), punct);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  out << "#annotators=" << corpus.annotators << '\n';
  bool first = true;
  for (const Narrative& narrative : corpus.narratives) {
    if (!first) out << '\n';
    first = false;
    for (const Sentence& sentence : narrative.sentences) {
      for (const AnnotatedToken& token : sentence.tokens) {
        out << narrative.narrative_id << '\t' << narrative.narrator_id << '\t'
            << sentence.sentence_id << '\t' << token.index_in_narrative << '\t'
            << token.surface << '\t'
            << (token.lemma_explicit ? token.lemma : "_") << '\t'
            << (token.pos.empty() ? "_" : token.pos);
        for (std::uint8_t a : token.annotations) out << '\t' << (a ? 'I' : 'O');
        out << '\n';
      }
    }
  }
}

Corpus preprocess(const Corpus& corpus, bool strip_punct) {
  Corpus out;
  out.annotators = corpus.annotators;
  out.narratives.reserve(corpus.narratives.size());
  for (const Narrative& narrative : corpus.narratives) {
    Narrative cleaned{narrative.narrative_id, narrative.narrator_id, {}};
    std::int64_t next_index = 0;
    for (const Sentence& sentence : narrative.sentences) {
      Sentence kept{sentence.sentence_id, {}};
      for (const AnnotatedToken& token : sentence.tokens) {
        if (strip_punct && token.is_punct) continue;
        AnnotatedToken copy = token;
        copy.index_in_narrative = next_index++;
        kept.tokens.push_back(std::move(copy));
      }
      if (!kept.tokens.empty()) cleaned.sentences.push_back(std::move(kept));
    }
    out.narratives.push_back(std::move(cleaned));
  }
  return out;
}

LabelDistribution build_distribution(const AnnotatedToken& token) {
  if (token.annotations.empty()) {
    throw InputError("label distribution needs at least one annotator");
  }
  const double k = static_cast<double>(token.annotations.size());
  return LabelDistribution::from_inside(token.inside_count() / k);
}

std::vector<Sequence> segment(const std::vector<Narrative>& narratives,
                              SegmentationStrategy strategy) {
  std::vector<Sequence> sequences;
  for (const Narrative& narrative : narratives) {
    if (strategy == SegmentationStrategy::kNarrativeLevel) {
      if (narrative.sentences.empty()) continue;
      Sequence seq{narrative.narrative_id, narrative.narrator_id,
                   narrative.sentences.front().sentence_id, {}, {}};
      for (const Sentence& sentence : narrative.sentences) {
        for (const AnnotatedToken& token : sentence.tokens) {
          seq.tokens.push_back(token);
          seq.token_sentence_ids.push_back(sentence.sentence_id);
        }
      }
      sequences.push_back(std::move(seq));
      continue;
    }
    for (const Sentence& sentence : narrative.sentences) {
      if (sentence.tokens.empty()) continue;
      if (strategy == SegmentationStrategy::kSentCarr &&
          std::none_of(sentence.tokens.begin(), sentence.tokens.end(),
                       [](const AnnotatedToken& t) { return t.any_inside(); })) {
        continue;
      }
      Sequence seq{narrative.narrative_id, narrative.narrator_id,
                   sentence.sentence_id, sentence.tokens,
                   std::vector<std::int64_t>(sentence.tokens.size(),
                                             sentence.sentence_id)};
      sequences.push_back(std::move(seq));
    }
  }
  return sequences;
}

std::vector<Sequence> segment(const Corpus& corpus,
                              SegmentationStrategy strategy) {
  return segment(corpus.narratives, strategy);
}

std::vector<LabelDistribution> target_distributions(const Sequence& sequence) {
  std::vector<LabelDistribution> targets;
  targets.reserve(sequence.size());
  for (const AnnotatedToken& token : sequence.tokens) {
    targets.push_back(build_distribution(token));
  }
  return targets;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.narratives = corpus.narratives.size();
  const std::size_t k = static_cast<std::size_t>(corpus.annotators);
  std::size_t any_i_tokens = 0;
  std::size_t carrier_sentences = 0;
  std::vector<std::size_t> run_count(k, 0);
  std::vector<std::size_t> run_tokens(k, 0);

  for (const Narrative& narrative : corpus.narratives) {
    for (const Sentence& sentence : narrative.sentences) {
      ++stats.sentences;
      stats.tokens += sentence.tokens.size();
      bool has_carrier = false;
      std::vector<bool> inside(k, false);
      for (const AnnotatedToken& token : sentence.tokens) {
        if (token.any_inside()) {
          ++any_i_tokens;
          has_carrier = true;
        }
        for (std::size_t a = 0; a < k && a < token.annotations.size(); ++a) {
          const bool now = token.annotations[a] != 0;
          if (now) {
            ++run_tokens[a];
            if (!inside[a]) ++run_count[a];
          }
          inside[a] = now;
        }
      }
      if (has_carrier) ++carrier_sentences;
    }
  }
  if (stats.tokens == 0) {
    throw InputError("corpus statistics need a non-empty corpus");
  }
  stats.frac_tokens_any_i =
      static_cast<double>(any_i_tokens) / static_cast<double>(stats.tokens);
  stats.frac_sentences_with_carrier = static_cast<double>(carrier_sentences) /
                                      static_cast<double>(stats.sentences);
  stats.mean_tokens_per_narrative = static_cast<double>(stats.tokens) /
                                    static_cast<double>(stats.narratives);
  stats.mean_tokens_per_sentence = static_cast<double>(stats.tokens) /
                                   static_cast<double>(stats.sentences);
  std::size_t total_runs = 0;
  stats.mean_carrier_len_per_annotator.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    total_runs += run_count[a];
    if (run_count[a] > 0) {
      stats.mean_carrier_len_per_annotator[a] =
          static_cast<double>(run_tokens[a]) /
          static_cast<double>(run_count[a]);
    }
  }
  stats.mean_carriers_per_narrative =
      static_cast<double>(total_runs) /
      static_cast<double>(k * stats.narratives);
  return stats;
}

void print_stats(std::ostream& out, const CorpusStats& stats) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(4);
  out << "narratives\t" << stats.narratives << '\n'
      << "sentences\t" << stats.sentences << '\n'
      << "tokens\t" << stats.tokens << '\n'
      << "frac_tokens_any_i\t" << stats.frac_tokens_any_i << '\n'
      << "frac_sentences_with_carrier\t" << stats.frac_sentences_with_carrier
      << '\n'
      << "mean_tokens_per_narrative\t" << stats.mean_tokens_per_narrative
      << '\n'
      << "mean_tokens_per_sentence\t" << stats.mean_tokens_per_sentence << '\n'
      << "mean_carriers_per_narrative\t" << stats.mean_carriers_per_narrative
      << '\n';
  for (std::size_t a = 0; a < stats.mean_carrier_len_per_annotator.size();
       ++a) {
    out << "mean_carrier_len_annotator_" << (a + 1) << '\t'
        << stats.mean_carrier_len_per_annotator[a] << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace ecr
