#ifndef ECR_LEXICON_HPP_
#define ECR_LEXICON_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace ecr {

// Lowercased stopwords, one per line in the source file.
class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::unordered_set<std::string> words);

  static StopwordList load(const std::filesystem::path& path);
  static StopwordList parse(std::istream& in);

  bool contains(std::string_view token) const;
  bool empty() const { return words_.empty(); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

enum class SentimentBucket { kNeg, kZero, kPos };

std::string_view bucket_name(SentimentBucket bucket);

// `token<TAB>polarity` with polarity in [-1, 1]; tokens stored lowercased.
class SentimentLexicon {
 public:
  SentimentLexicon() = default;

  static SentimentLexicon load(const std::filesystem::path& path);
  static SentimentLexicon parse(std::istream& in,
                                const std::string& source = "<lexicon>");

  void add(std::string_view token, double polarity);
  // 0 for tokens absent from the lexicon.
  double polarity(std::string_view token) const;
  SentimentBucket bucket(std::string_view token) const;
  bool empty() const { return polarity_.empty(); }
  std::size_t size() const { return polarity_.size(); }

 private:
  std::unordered_map<std::string, double> polarity_;
};

}  // namespace ecr

#endif  // ECR_LEXICON_HPP_
