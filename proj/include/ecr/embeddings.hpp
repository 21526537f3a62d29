#ifndef ECR_EMBEDDINGS_HPP_
#define ECR_EMBEDDINGS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ecr {

// Word vectors with a total lookup: the unknown vector sits in the last
// row of `vectors`.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // `vectors` has one row per word; the unknown vector is appended as the
  // elementwise mean.
  EmbeddingTable(std::vector<std::string> words, Eigen::MatrixXd vectors);
  // Explicit unknown vector (already the last row of `vectors_with_unk`).
  static EmbeddingTable with_unknown(std::vector<std::string> words,
                                     Eigen::MatrixXd vectors_with_unk);

  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::size_t size() const { return words_.size(); }
  int unknown_index() const { return static_cast<int>(words_.size()); }

  // Exact match first, then the lowercased form, then the unknown row.
  int lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  Eigen::VectorXd vector(std::string_view token) const;
  Eigen::VectorXd unknown_vector() const;

  const std::vector<std::string>& words() const { return words_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  Eigen::MatrixXd vectors_;  // (size + 1) x dim
};

// Whitespace-separated `token v1 .. vD` lines. A leading `count dim`
// header line (word2vec text format) is skipped.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable parse_embeddings(std::istream& in,
                                const std::string& source = "<embeddings>");

// Gaussian vectors scaled by 1/sqrt(dim) for every distinct lowercased
// surface of `tokens`; used when no pre-trained file is supplied.
EmbeddingTable random_embeddings(const std::vector<std::string>& tokens,
                                 int dim, std::uint64_t seed);

}  // namespace ecr

#endif  // ECR_EMBEDDINGS_HPP_
