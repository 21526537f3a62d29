#ifndef ECR_TAGGER_NN_HPP_
#define ECR_TAGGER_NN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ecr/adam.hpp"
#include "ecr/corpus.hpp"
#include "ecr/embeddings.hpp"
#include "ecr/kv_config.hpp"

namespace ecr::nn {

inline constexpr double kProbabilityFloor = 1e-8;

struct HyperParams {
  int emb_dim = 100;  // must match the embedding table
  int lstm_layers = 2;
  int lstm_hidden = 32;
  int attention_dim = 0;  // 0 selects 2 * lstm_hidden
  int fc_units = 50;
  int fc_layers = 2;
  double dropout_rate = 0.5;
  double learning_rate = 0.001;
  int epochs = 20;
  std::uint64_t seed = 1;
  bool fine_tune_embeddings = false;
  std::size_t max_sequence_length = 4096;
  double dev_threshold = 0.25;

  int effective_attention_dim() const {
    return attention_dim > 0 ? attention_dim : 2 * lstm_hidden;
  }
  void validate() const;

  // Keys prefixed with `prefix` (e.g. "nn."); unknown keys are ignored.
  static HyperParams from_kv(const KvConfig& kv, const std::string& prefix,
                             HyperParams base);
  static HyperParams from_kv(const KvConfig& kv, const std::string& prefix);
  KvConfig to_kv() const;
};

struct TokenPrediction {
  double p_i = 0.0;
  double p_o = 1.0;
  double attention_weight = 0.0;
};

struct ParameterBlock {
  std::string name;
  Eigen::MatrixXd value;
  bool trainable = true;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<TokenPrediction> predictions;
  // One matrix per parameter block; frozen blocks get an empty matrix.
  std::vector<Eigen::MatrixXd> gradients;
};

// Embedding -> stacked biLSTM -> layer norm -> dropout -> position-wise
// attention (z_t = a_t * h_t) -> tanh inference layers (dropout after the
// first) -> 2-way softmax over {I, O}.
class TaggerModel {
 public:
  TaggerModel(const HyperParams& hp, const EmbeddingTable& embeddings,
              std::uint64_t init_seed);

  const HyperParams& hyperparams() const { return hp_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  std::vector<int> encode(const Sequence& sequence) const;
  int lookup(std::string_view token) const;

  std::vector<TokenPrediction> forward(std::span<const int> ids, bool training,
                                       std::uint64_t dropout_seed) const;
  std::vector<TokenPrediction> forward(const Sequence& sequence, bool training,
                                       std::uint64_t dropout_seed) const;

  LossAndGradient loss_and_gradient(std::span<const int> ids,
                                    std::span<const LabelDistribution> targets,
                                    bool training,
                                    std::uint64_t dropout_seed) const;

  // Layer-norm input after normalization, before gain and offset:
  // (2 * lstm_hidden) x n.
  Eigen::MatrixXd normalized_states(std::span<const int> ids) const;

  std::vector<ParameterBlock>& blocks() { return blocks_; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  std::size_t parameter_count() const;

  void set_fine_tune_embeddings(bool enabled);

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static TaggerModel load(std::istream& in);
  static TaggerModel load(const std::filesystem::path& path);

 private:
  struct LstmIndex {
    int w, u, b;
  };
  struct Cache;

  TaggerModel() = default;
  void build_layout();
  void initialize(std::uint64_t seed);
  void check_length(std::size_t n) const;
  void run_forward(std::span<const int> ids, bool training,
                   std::uint64_t dropout_seed, Cache& cache) const;

  HyperParams hp_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> vocab_index_;
  std::vector<ParameterBlock> blocks_;
  std::vector<Eigen::Index> fan_in_;  // 0: not randomly initialized

  int embedding_ = 0;
  std::vector<std::array<LstmIndex, 2>> lstm_;
  int ln_gain_ = 0, ln_bias_ = 0;
  int attn_w_ = 0, attn_b_ = 0, attn_v_ = 0;
  std::vector<std::pair<int, int>> fc_;
  int out_w_ = 0, out_b_ = 0;
};

// Mean over tokens of KL(target || prediction) with predictions floored at
// kProbabilityFloor and 0 * ln 0 = 0.
double kl_loss(std::span<const TokenPrediction> predictions,
               std::span<const LabelDistribution> targets);

// Moments cover the trainable blocks only, in block order.
AdamState make_adam_state(const TaggerModel& model);

struct StepResult {
  double loss = 0.0;  // before the update
};

// One sequence, one Adam update. Throws NumericalError naming the block on
// a non-finite loss, gradient, or updated parameter.
StepResult train_step(TaggerModel& model, AdamState& state,
                      const AdamConfig& adam, std::span<const int> ids,
                      std::span<const LabelDistribution> targets,
                      std::uint64_t dropout_seed);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainResult {
  TaggerModel model;
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 when no epoch ran
};

// Per-epoch seeded shuffling; after every epoch the dev class-I F1 is
// measured and the best epoch's parameters are returned (ties favour the
// later epoch).
TrainResult train(const std::vector<Sequence>& train_set,
                  const std::vector<Sequence>& dev_set, const HyperParams& hp,
                  const EmbeddingTable& embeddings);

std::vector<double> predict(const TaggerModel& model, const Sequence& sequence);
std::vector<std::vector<double>> predict(const TaggerModel& model,
                                         const std::vector<Sequence>& seqs);

// Class-I token F1 of thresholded predictions against the >=1-annotator
// reference, pooled over all sequences.
double class_i_f1(const std::vector<std::vector<double>>& p_inside,
                  const std::vector<Sequence>& sequences, double threshold);

}  // namespace ecr::nn

#endif  // ECR_TAGGER_NN_HPP_
