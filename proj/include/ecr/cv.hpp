#ifndef ECR_CV_HPP_
#define ECR_CV_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecr/corpus.hpp"
#include "ecr/crf.hpp"
#include "ecr/embeddings.hpp"
#include "ecr/eval.hpp"
#include "ecr/kv_config.hpp"
#include "ecr/lexicon.hpp"
#include "ecr/tagger_nn.hpp"

namespace ecr {

struct FoldSplit {
  int fold_id = 0;
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

// Distinct narrator ids in first-seen order.
std::vector<std::string> corpus_narrators(const Corpus& corpus);

// Shuffled narrators cut into k groups whose sizes differ by at most one.
// Fold i tests on group i, selects on group (i + 1) mod k, trains on the
// rest.
std::vector<FoldSplit> logo_splits(const std::vector<std::string>& narrators,
                                   int k = 5, std::uint64_t seed = 1);

enum class ModelKind { kNeural, kCrf };

struct NamedMatch {
  std::string id;
  MatchConfig config;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::kNeural;
  SegmentationStrategy train_segmentation = SegmentationStrategy::kSentCarr;
  SegmentationStrategy test_segmentation = SegmentationStrategy::kSentAll;
  int folds = 5;
  std::uint64_t seed = 1;
  double threshold = kDefaultThreshold;
  std::vector<NamedMatch> matches;  // empty selects a..e
  nn::HyperParams nn;
  crf::CrfConfig crf;
  int jobs = 1;

  void validate() const;
  std::vector<NamedMatch> effective_matches() const;

  // Keys: model, train_segmentation, test_segmentation, folds, seed,
  // threshold, match (comma list of a..e or mode:position:lexical:strip
  // entries), jobs, nn.*, crf.l2, crf.lr, crf.iterations, crf.window,
  // crf.max_suffix, crf.pos_prefix. Unknown keys are rejected.
  static ExperimentConfig from_kv(const KvConfig& kv);
};

struct ExperimentResources {
  std::optional<EmbeddingTable> embeddings;  // random vectors when absent
  StopwordList stopwords;
  SentimentLexicon lexicon;
};

struct FoldResult {
  FoldSplit split;
  std::size_t train_sequences = 0;
  std::size_t dev_sequences = 0;
  std::size_t test_sequences = 0;
  std::size_t test_tokens = 0;
  TokenMetrics token;
  std::vector<Prf> carrier;    // aligned with the match list
  std::vector<double> agreement;  // IAA on the test sequences, same order
  // Expected class-I F1 of guessing I independently with the training
  // narrators' I rate.
  double random_prior_f1 = 0.0;
  int best_epoch = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<NamedMatch> matches;
  std::vector<FoldResult> folds;
};

ExperimentReport run_experiment(const Corpus& corpus,
                                const ExperimentConfig& config,
                                const ExperimentResources& resources);

std::vector<double> fold_values(const ExperimentReport& report,
                                double (*get)(const FoldResult&));

// Renderers; all output is byte-deterministic for a given report.
std::string render_token_tsv(const ExperimentReport& report);
std::string render_agreement_tsv(const ExperimentReport& report);
std::string render_folds_tsv(const ExperimentReport& report);
std::string render_report_kv(const ExperimentReport& report);
std::string render_report_text(const ExperimentReport& report);

// token.tsv, agreement.tsv, folds.tsv, report.kv, report.txt
void write_report(const ExperimentReport& report,
                  const std::filesystem::path& directory);

}  // namespace ecr

#endif  // ECR_CV_HPP_
