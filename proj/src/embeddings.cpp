#include "ecr/embeddings.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

EmbeddingTable::EmbeddingTable(std::vector<std::string> words,
                               Eigen::MatrixXd vectors)
    : words_(std::move(words)) {
  if (static_cast<std::size_t>(vectors.rows()) != words_.size()) {
    throw InputError("embedding table: word count and row count differ");
  }
  vectors_.resize(vectors.rows() + 1, vectors.cols());
  vectors_.topRows(vectors.rows()) = vectors;
  if (vectors.rows() > 0) {
    vectors_.row(vectors.rows()) = vectors.colwise().mean();
  } else {
    vectors_.row(0).setZero();
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    index_.try_emplace(words_[i], static_cast<int>(i));
  }
}

EmbeddingTable EmbeddingTable::with_unknown(std::vector<std::string> words,
                                            Eigen::MatrixXd vectors_with_unk) {
  if (static_cast<std::size_t>(vectors_with_unk.rows()) != words.size() + 1) {
    throw InputError("embedding table: expected one extra unknown row");
  }
  EmbeddingTable table;
  table.words_ = std::move(words);
  table.vectors_ = std::move(vectors_with_unk);
  for (std::size_t i = 0; i < table.words_.size(); ++i) {
    table.index_.try_emplace(table.words_[i], static_cast<int>(i));
  }
  return table;
}

int EmbeddingTable::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  it = index_.find(utf8::to_lower(token));
  if (it != index_.end()) return it->second;
  return unknown_index();
}

bool EmbeddingTable::contains(std::string_view token) const {
  return lookup(token) != unknown_index();
}

Eigen::VectorXd EmbeddingTable::vector(std::string_view token) const {
  return vectors_.row(lookup(token)).transpose();
}

Eigen::VectorXd EmbeddingTable::unknown_vector() const {
  return vectors_.row(unknown_index()).transpose();
}

EmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
  std::vector<std::string> words;
  std::vector<double> values;
  int dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<std::string> numbers;
    std::string number;
    while (fields >> number) numbers.push_back(number);
    const auto all_digits = [](const std::string& s) {
      return !s.empty() &&
             s.find_first_not_of("0123456789") == std::string::npos;
    };
    if (line_no == 1 && numbers.size() == 1 && all_digits(word) &&
        all_digits(numbers[0])) {
      // word2vec-style "count dim" header.
      continue;
    }
    if (numbers.empty()) {
      throw ParseError(source, line_no, "token without vector values");
    }
    if (dim < 0) dim = static_cast<int>(numbers.size());
    if (static_cast<int>(numbers.size()) != dim) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " values, got " +
                           std::to_string(numbers.size()));
    }
    for (const std::string& n : numbers) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
      if (ec != std::errc() || ptr != n.data() + n.size()) {
        throw ParseError(source, line_no, "unparsable float '" + n + "'");
      }
      values.push_back(v);
    }
    words.push_back(word);
  }
  if (words.empty()) throw InputError(source + ": no embedding vectors");
  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(words.size()), dim);
  for (std::size_t r = 0; r < words.size(); ++r) {
    for (int c = 0; c < dim; ++c) {
      vectors(static_cast<Eigen::Index>(r), c) = values[r * dim + c];
    }
  }
  return EmbeddingTable(std::move(words), std::move(vectors));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding file: " + path.string());
  return parse_embeddings(in, path.string());
}

EmbeddingTable random_embeddings(const std::vector<std::string>& tokens,
                                 int dim, std::uint64_t seed) {
  if (dim < 1) throw InputError("embedding dimension must be positive");
  std::set<std::string> distinct;
  for (const std::string& t : tokens) distinct.insert(utf8::to_lower(t));
  std::vector<std::string> words(distinct.begin(), distinct.end());
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(words.size()), dim);
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    for (int c = 0; c < dim; ++c) vectors(r, c) = scale * rng.normal();
  }
  return EmbeddingTable(std::move(words), std::move(vectors));
}

}  // namespace ecr
