#include "ecr/lexicon.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include "ecr/error.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

StopwordList::StopwordList(std::unordered_set<std::string> words) {
  for (const std::string& w : words) words_.insert(utf8::to_lower(w));
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open stopword file: " + path.string());
  return parse(in);
}

StopwordList StopwordList::parse(std::istream& in) {
  StopwordList list;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view word = utf8::trim(line);
    if (!word.empty()) list.words_.insert(utf8::to_lower(word));
  }
  return list;
}

bool StopwordList::contains(std::string_view token) const {
  return words_.contains(utf8::to_lower(token));
}

std::string_view bucket_name(SentimentBucket bucket) {
  switch (bucket) {
    case SentimentBucket::kNeg:
      return "NEG";
    case SentimentBucket::kZero:
      return "ZERO";
    case SentimentBucket::kPos:
      return "POS";
  }
  return "ZERO";
}

SentimentLexicon SentimentLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon file: " + path.string());
  return parse(in, path.string());
}

SentimentLexicon SentimentLexicon::parse(std::istream& in,
                                         const std::string& source) {
  SentimentLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty() || line.front() == '#') continue;
    const auto fields = utf8::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty()) {
      throw ParseError(source, line_no, "expected token<TAB>polarity");
    }
    const std::string_view value = utf8::trim(fields[1]);
    double polarity = 0.0;
    const auto [ptr, ec] = std::from_chars(
        value.data(), value.data() + value.size(), polarity);
    if (ec != std::errc() || ptr != value.data() + value.size() ||
        !std::isfinite(polarity)) {
      throw ParseError(source, line_no, "unparsable polarity");
    }
    if (polarity < -1.0 || polarity > 1.0) {
      throw ParseError(source, line_no, "polarity outside [-1, 1]");
    }
    lexicon.add(fields[0], polarity);
  }
  return lexicon;
}

void SentimentLexicon::add(std::string_view token, double polarity) {
  polarity_[utf8::to_lower(token)] = polarity;
}

double SentimentLexicon::polarity(std::string_view token) const {
  const auto it = polarity_.find(utf8::to_lower(token));
  return it == polarity_.end() ? 0.0 : it->second;
}

SentimentBucket SentimentLexicon::bucket(std::string_view token) const {
  const double p = polarity(token);
  if (p > 0.0) return SentimentBucket::kPos;
  if (p < 0.0) return SentimentBucket::kNeg;
  return SentimentBucket::kZero;
}

}  // namespace ecr
