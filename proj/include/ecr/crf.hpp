#ifndef ECR_CRF_HPP_
#define ECR_CRF_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecr/corpus.hpp"
#include "ecr/lexicon.hpp"
#include "ecr/spans.hpp"

namespace ecr::crf {

// Label index 0 = O, 1 = I (matches IoLabel).
inline constexpr int kLabels = 2;

struct FeatureOptions {
  int window = 3;
  int max_suffix = 3;
  int pos_prefix = 2;
};

// Window features around `position`: lowercased token, suffixes 1..max,
// POS tag and its prefix, sentiment[o]=NEG/ZERO/POS; BOS[o]/EOS[o] for offsets
// outside the sequence.
std::vector<std::string> extract_features(const Sequence& sequence,
                                          std::size_t position,
                                          const SentimentLexicon& lexicon,
                                          const FeatureOptions& options = {});

class FeatureDictionary {
 public:
  // Adds unseen names until frozen; returns nullopt for unseen names after.
  std::optional<int> id(const std::string& name);
  std::optional<int> find(const std::string& name) const;
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
  bool frozen_ = false;
};

// Sorted, duplicate-free feature ids for each position.
using FeatureVector = std::vector<int>;

struct EncodedSequence {
  std::vector<FeatureVector> positions;
  std::size_t size() const { return positions.size(); }
};

EncodedSequence encode(const Sequence& sequence,
                       const SentimentLexicon& lexicon,
                       FeatureDictionary& dictionary,
                       const FeatureOptions& options = {});

// Weights are laid out as [feature * 2 + label] followed by the 2x2
// transition matrix [prev * 2 + cur].
class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(FeatureDictionary dictionary, FeatureOptions options, double l2);

  double emission(int feature, int label) const {
    return weights_[static_cast<std::size_t>(feature) * kLabels + label];
  }
  double transition(int prev, int cur) const {
    return weights_[transition_offset() + prev * kLabels + cur];
  }
  void set_emission(int feature, int label, double w) {
    weights_[static_cast<std::size_t>(feature) * kLabels + label] = w;
  }
  void set_transition(int prev, int cur, double w) {
    weights_[transition_offset() + prev * kLabels + cur] = w;
  }

  std::size_t feature_count() const { return dictionary_.size(); }
  std::size_t transition_offset() const {
    return feature_count() * kLabels;
  }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  double l2() const { return l2_; }
  const FeatureOptions& options() const { return options_; }
  FeatureDictionary& dictionary() { return dictionary_; }
  const FeatureDictionary& dictionary() const { return dictionary_; }

  // Frozen-dictionary encoding: unseen features are dropped.
  EncodedSequence encode(const Sequence& sequence,
                         const SentimentLexicon& lexicon) const;

  // Text: header, then `feature<TAB>w_O<TAB>w_I` one per line. Weights are
  // written in shortest round-trip form.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static CrfModel load(std::istream& in, const std::string& source = "<crf>");
  static CrfModel load(const std::filesystem::path& path);

 private:
  FeatureDictionary dictionary_;
  FeatureOptions options_;
  double l2_ = 0.1;
  std::vector<double> weights_ = std::vector<double>(kLabels * kLabels, 0.0);
};

// Per-position label scores.
std::vector<std::array<double, kLabels>> emission_scores(
    const CrfModel& model, const EncodedSequence& sequence);

double path_score(const CrfModel& model, const EncodedSequence& sequence,
                  const IoLabels& labels);

// log Z(x) via the forward algorithm in log space.
double log_partition(const CrfModel& model, const EncodedSequence& sequence);

struct LogLikelihood {
  double value = 0.0;  // log p(y | x) <= 0
  // Observed minus expected feature counts, sorted by weight index.
  std::vector<std::pair<std::size_t, double>> gradient;
};

// Gradient of the unregularized log-likelihood; the L2 term belongs to the
// training objective.
LogLikelihood crf_log_likelihood(const CrfModel& model,
                                 const EncodedSequence& sequence,
                                 const IoLabels& gold);

// Adds the log-likelihood gradient into `gradient` (dense, weight-sized)
// and returns the log-likelihood.
double accumulate_log_likelihood(const CrfModel& model,
                                 const EncodedSequence& sequence,
                                 const IoLabels& gold,
                                 std::span<double> gradient);

// P(y_t = I | x) by forward-backward.
std::vector<double> crf_marginals(const CrfModel& model,
                                  const EncodedSequence& sequence);

// Highest-scoring path; ties resolve toward O.
IoLabels viterbi_decode(const CrfModel& model, const EncodedSequence& sequence);

struct CrfConfig {
  double l2 = 0.1;
  double learning_rate = 0.01;
  int iterations = 150;
  std::uint64_t seed = 1;
  FeatureOptions features;
};

struct CrfTrainResult {
  CrfModel model;
  // sum log-likelihood - (l2 / 2) ||w||^2 before each update.
  std::vector<double> objective;
  int non_monotone_steps = 0;
};

// Full-batch Adam ascent on the L2-regularized log-likelihood.
CrfTrainResult crf_train(const std::vector<Sequence>& sequences,
                         const std::vector<IoLabels>& gold,
                         const SentimentLexicon& lexicon,
                         const CrfConfig& config);
// Gold labels from the >=1-annotator rule.
CrfTrainResult crf_train(const std::vector<Sequence>& sequences,
                         const SentimentLexicon& lexicon,
                         const CrfConfig& config);

double regularized_objective(const CrfModel& model,
                             const std::vector<EncodedSequence>& sequences,
                             const std::vector<IoLabels>& gold, double l2);

}  // namespace ecr::crf

#endif  // ECR_CRF_HPP_
