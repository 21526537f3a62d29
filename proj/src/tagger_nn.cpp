#include "ecr/tagger_nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/spans.hpp"
#include "ecr/eval.hpp"
#include "ecr/utf8.hpp"

namespace ecr::nn {

namespace {

constexpr double kLayerNormEpsilon = 1e-10;
constexpr char kCheckpointMagic[8] = {'E', 'C', 'R', 'N', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = rng.uniform(-bound, bound);
    }
  }
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                             Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
  }
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------
// HyperParams

void HyperParams::validate() const {
  if (emb_dim < 1 || lstm_layers < 1 || lstm_hidden < 1 || fc_units < 1 ||
      fc_layers < 1 || attention_dim < 0) {
    throw InputError("hyperparameters: dimensions and layer counts must be "
                     "positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InputError("hyperparameters: dropout_rate must lie in [0, 1)");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("hyperparameters: learning_rate must be >= 0");
  }
  if (epochs < 0) throw InputError("hyperparameters: epochs must be >= 0");
  if (max_sequence_length < 1) {
    throw InputError("hyperparameters: max_sequence_length must be >= 1");
  }
  if (!(dev_threshold > 0.0 && dev_threshold <= 1.0)) {
    throw InputError("hyperparameters: dev_threshold must lie in (0, 1]");
  }
}

HyperParams HyperParams::from_kv(const KvConfig& kv,
                                 const std::string& prefix) {
  return from_kv(kv, prefix, HyperParams());
}

HyperParams HyperParams::from_kv(const KvConfig& kv, const std::string& prefix,
                                 HyperParams base) {
  HyperParams hp = base;
  const auto key = [&](const char* name) { return prefix + name; };
  hp.emb_dim = static_cast<int>(kv.get_int(key("emb_dim"), hp.emb_dim));
  hp.lstm_layers =
      static_cast<int>(kv.get_int(key("lstm_layers"), hp.lstm_layers));
  hp.lstm_hidden =
      static_cast<int>(kv.get_int(key("lstm_hidden"), hp.lstm_hidden));
  hp.attention_dim =
      static_cast<int>(kv.get_int(key("attention_dim"), hp.attention_dim));
  hp.fc_units = static_cast<int>(kv.get_int(key("fc_units"), hp.fc_units));
  hp.fc_layers = static_cast<int>(kv.get_int(key("fc_layers"), hp.fc_layers));
  hp.dropout_rate = kv.get_double(key("dropout_rate"), hp.dropout_rate);
  hp.learning_rate = kv.get_double(key("learning_rate"), hp.learning_rate);
  hp.epochs = static_cast<int>(kv.get_int(key("epochs"), hp.epochs));
  hp.seed = static_cast<std::uint64_t>(
      kv.get_int(key("seed"), static_cast<std::int64_t>(hp.seed)));
  hp.fine_tune_embeddings =
      kv.get_bool(key("fine_tune_embeddings"), hp.fine_tune_embeddings);
  hp.max_sequence_length = static_cast<std::size_t>(
      kv.get_int(key("max_sequence_length"),
                 static_cast<std::int64_t>(hp.max_sequence_length)));
  hp.dev_threshold = kv.get_double(key("dev_threshold"), hp.dev_threshold);
  hp.validate();
  return hp;
}

KvConfig HyperParams::to_kv() const {
  KvConfig kv;
  const auto put = [&](const char* k, const auto& v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    kv.set(k, s.str());
  };
  put("emb_dim", emb_dim);
  put("lstm_layers", lstm_layers);
  put("lstm_hidden", lstm_hidden);
  put("attention_dim", attention_dim);
  put("fc_units", fc_units);
  put("fc_layers", fc_layers);
  put("dropout_rate", dropout_rate);
  put("learning_rate", learning_rate);
  put("epochs", epochs);
  put("seed", seed);
  put("fine_tune_embeddings", fine_tune_embeddings ? "true" : "false");
  put("max_sequence_length", max_sequence_length);
  put("dev_threshold", dev_threshold);
  return kv;
}

// ---------------------------------------------------------------------------
// Model layout

struct TaggerModel::Cache {
  struct Direction {
    Eigen::MatrixXd gates;   // 4H x n post-activation (i, f, g, o)
    Eigen::MatrixXd cell;    // H x n
    Eigen::MatrixXd hidden;  // H x n
    Eigen::MatrixXd tanh_cell;
  };
  std::vector<int> ids;
  std::vector<Eigen::MatrixXd> layer_inputs;
  std::vector<std::array<Direction, 2>> lstm;
  Eigen::MatrixXd ln_hat;
  Eigen::VectorXd ln_inv_std;
  Eigen::MatrixXd drop_seq;   // empty unless training with dropout
  Eigen::MatrixXd seq_out;    // attention input
  Eigen::MatrixXd attn_u;     // A x n
  Eigen::VectorXd attn_a;     // n
  std::vector<Eigen::MatrixXd> fc_inputs;
  std::vector<Eigen::MatrixXd> fc_outputs;  // post-tanh, pre-dropout
  Eigen::MatrixXd drop_fc;
  Eigen::MatrixXd probs;  // 2 x n, row 0 = I
};

TaggerModel::TaggerModel(const HyperParams& hp,
                         const EmbeddingTable& embeddings,
                         std::uint64_t init_seed)
    : hp_(hp) {
  hp_.validate();
  if (embeddings.dim() != hp_.emb_dim) {
    throw InputError("embedding dimension " +
                     std::to_string(embeddings.dim()) +
                     " does not match emb_dim " + std::to_string(hp_.emb_dim));
  }
  vocab_ = embeddings.words();
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    vocab_index_.try_emplace(vocab_[i], static_cast<int>(i));
  }
  build_layout();
  blocks_[embedding_].value = embeddings.vectors();
  initialize(init_seed);
}

void TaggerModel::build_layout() {
  blocks_.clear();
  lstm_.clear();
  fc_.clear();
  const int h = hp_.lstm_hidden;
  const int a = hp_.effective_attention_dim();
  fan_in_.clear();
  const auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols,
                       Eigen::Index fan_in) {
    blocks_.push_back({std::move(name), Eigen::MatrixXd::Zero(rows, cols), true});
    fan_in_.push_back(fan_in);
    return static_cast<int>(blocks_.size() - 1);
  };
  embedding_ = add("embedding", static_cast<Eigen::Index>(vocab_.size()) + 1,
                   hp_.emb_dim, 0);
  blocks_[embedding_].trainable = hp_.fine_tune_embeddings;
  for (int layer = 0; layer < hp_.lstm_layers; ++layer) {
    const int in = layer == 0 ? hp_.emb_dim : 2 * h;
    std::array<LstmIndex, 2> dirs{};
    for (int d = 0; d < 2; ++d) {
      const std::string tag = "lstm" + std::to_string(layer) +
                              (d == 0 ? ".fwd" : ".bwd");
      dirs[d].w = add(tag + ".W", 4 * h, in, in);
      dirs[d].u = add(tag + ".U", 4 * h, h, h);
      dirs[d].b = add(tag + ".b", 4 * h, 1, h);
    }
    lstm_.push_back(dirs);
  }
  ln_gain_ = add("layernorm.gain", 2 * h, 1, 0);
  ln_bias_ = add("layernorm.offset", 2 * h, 1, 0);
  attn_w_ = add("attention.W_h", a, 2 * h, 2 * h);
  attn_b_ = add("attention.b_h", a, 1, 2 * h);
  attn_v_ = add("attention.v", a, 1, a);
  for (int l = 0; l < hp_.fc_layers; ++l) {
    const int in = l == 0 ? 2 * h : hp_.fc_units;
    const std::string tag = "inference" + std::to_string(l);
    const int w = add(tag + ".W", hp_.fc_units, in, in);
    const int b = add(tag + ".b", hp_.fc_units, 1, in);
    fc_.emplace_back(w, b);
  }
  out_w_ = add("output.W", 2, hp_.fc_units, hp_.fc_units);
  out_b_ = add("output.b", 2, 1, hp_.fc_units);
}

void TaggerModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const int h = hp_.lstm_hidden;
  blocks_[ln_gain_].value.setOnes();
  // Blocks with zero fan-in keep their value (embeddings, layer norm).
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (fan_in_[i] == 0) continue;
    fill_uniform(blocks_[i].value,
                 1.0 / std::sqrt(static_cast<double>(fan_in_[i])), rng);
  }
  for (const auto& dirs : lstm_) {
    for (const LstmIndex& d : dirs) {
      blocks_[d.b].value.block(h, 0, h, 1).setOnes();
    }
  }
}

void TaggerModel::set_fine_tune_embeddings(bool enabled) {
  hp_.fine_tune_embeddings = enabled;
  blocks_[embedding_].trainable = enabled;
}

std::size_t TaggerModel::parameter_count() const {
  std::size_t n = 0;
  for (const ParameterBlock& b : blocks_) n += b.value.size();
  return n;
}

int TaggerModel::lookup(std::string_view token) const {
  auto it = vocab_index_.find(std::string(token));
  if (it != vocab_index_.end()) return it->second;
  it = vocab_index_.find(utf8::to_lower(token));
  if (it != vocab_index_.end()) return it->second;
  return static_cast<int>(vocab_.size());
}

std::vector<int> TaggerModel::encode(const Sequence& sequence) const {
  std::vector<int> ids;
  ids.reserve(sequence.size());
  for (const AnnotatedToken& token : sequence.tokens) {
    ids.push_back(lookup(token.surface));
  }
  return ids;
}

void TaggerModel::check_length(std::size_t n) const {
  if (n == 0) throw InputError("tagger: empty token sequence");
  if (n > hp_.max_sequence_length) {
    throw InputError("tagger: sequence of " + std::to_string(n) +
                     " tokens exceeds the cap of " +
                     std::to_string(hp_.max_sequence_length));
  }
}

// ---------------------------------------------------------------------------
// Forward

void TaggerModel::run_forward(std::span<const int> ids, bool training,
                              std::uint64_t dropout_seed, Cache& cache) const {
  check_length(ids.size());
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  const int h = hp_.lstm_hidden;
  const Eigen::MatrixXd& table = blocks_[embedding_].value;
  cache.ids.assign(ids.begin(), ids.end());

  Eigen::MatrixXd x(hp_.emb_dim, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int id = ids[t];
    if (id < 0 || id >= table.rows()) {
      throw InputError("tagger: token id out of range");
    }
    x.col(t) = table.row(id).transpose();
  }

  cache.layer_inputs.clear();
  cache.lstm.assign(hp_.lstm_layers, {});
  for (int layer = 0; layer < hp_.lstm_layers; ++layer) {
    cache.layer_inputs.push_back(x);
    Eigen::MatrixXd next(2 * h, n);
    for (int d = 0; d < 2; ++d) {
      const LstmIndex& idx = lstm_[layer][d];
      const Eigen::MatrixXd& w = blocks_[idx.w].value;
      const Eigen::MatrixXd& u = blocks_[idx.u].value;
      const Eigen::VectorXd b = blocks_[idx.b].value.col(0);
      Cache::Direction& dir = cache.lstm[layer][d];
      dir.gates = (w * x).colwise() + b;
      dir.cell.resize(h, n);
      dir.hidden.resize(h, n);
      dir.tanh_cell.resize(h, n);
      Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
      Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
      for (Eigen::Index step = 0; step < n; ++step) {
        const Eigen::Index t = d == 0 ? step : n - 1 - step;
        Eigen::VectorXd g = dir.gates.col(t) + u * h_prev;
        for (int k = 0; k < h; ++k) {
          g(k) = sigmoid(g(k));
          g(h + k) = sigmoid(g(h + k));
          g(2 * h + k) = std::tanh(g(2 * h + k));
          g(3 * h + k) = sigmoid(g(3 * h + k));
        }
        dir.gates.col(t) = g;
        const Eigen::VectorXd c =
            g.segment(h, h).cwiseProduct(c_prev) +
            g.segment(0, h).cwiseProduct(g.segment(2 * h, h));
        const Eigen::VectorXd tc = c.array().tanh().matrix();
        dir.cell.col(t) = c;
        dir.tanh_cell.col(t) = tc;
        dir.hidden.col(t) = g.segment(3 * h, h).cwiseProduct(tc);
        h_prev = dir.hidden.col(t);
        c_prev = c;
      }
      next.block(d * h, 0, h, n) = dir.hidden;
    }
    x = std::move(next);
  }

  // Layer norm over each token's concatenated state.
  const double width = static_cast<double>(2 * h);
  cache.ln_hat.resize(2 * h, n);
  cache.ln_inv_std.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double mean = x.col(t).mean();
    const Eigen::VectorXd centered = x.col(t).array() - mean;
    const double var = centered.squaredNorm() / width;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    cache.ln_inv_std(t) = inv_std;
    cache.ln_hat.col(t) = centered * inv_std;
  }
  const Eigen::VectorXd gain = blocks_[ln_gain_].value.col(0);
  const Eigen::VectorXd offset = blocks_[ln_bias_].value.col(0);
  Eigen::MatrixXd seq =
      (cache.ln_hat.array().colwise() * gain.array()).matrix().colwise() +
      offset;

  Rng rng(dropout_seed);
  const bool use_dropout = training && hp_.dropout_rate > 0.0;
  if (use_dropout) {
    cache.drop_seq = dropout_mask(2 * h, n, hp_.dropout_rate, rng);
    seq = seq.cwiseProduct(cache.drop_seq);
  } else {
    cache.drop_seq.resize(0, 0);
  }
  cache.seq_out = seq;

  // Attention scores normalized over positions.
  const Eigen::VectorXd attn_b = blocks_[attn_b_].value.col(0);
  const Eigen::VectorXd attn_v = blocks_[attn_v_].value.col(0);
  cache.attn_u =
      ((blocks_[attn_w_].value * seq).colwise() + attn_b).array().tanh();
  Eigen::VectorXd scores = (attn_v.transpose() * cache.attn_u).transpose();
  const double top = scores.maxCoeff();
  Eigen::VectorXd weights = (scores.array() - top).exp();
  weights /= weights.sum();
  cache.attn_a = weights;
  Eigen::MatrixXd z = seq * weights.asDiagonal();

  cache.fc_inputs.clear();
  cache.fc_outputs.clear();
  for (int l = 0; l < hp_.fc_layers; ++l) {
    cache.fc_inputs.push_back(z);
    const auto [w, b] = fc_[l];
    Eigen::MatrixXd out =
        ((blocks_[w].value * z).colwise() + blocks_[b].value.col(0))
            .array()
            .tanh();
    cache.fc_outputs.push_back(out);
    if (l == 0 && use_dropout) {
      cache.drop_fc = dropout_mask(out.rows(), n, hp_.dropout_rate, rng);
      out = out.cwiseProduct(cache.drop_fc);
    } else if (l == 0) {
      cache.drop_fc.resize(0, 0);
    }
    z = std::move(out);
  }
  const Eigen::MatrixXd logits =
      (blocks_[out_w_].value * z).colwise() + blocks_[out_b_].value.col(0);
  cache.probs.resize(2, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double m = std::max(logits(0, t), logits(1, t));
    const double e0 = std::exp(logits(0, t) - m);
    const double e1 = std::exp(logits(1, t) - m);
    cache.probs(0, t) = e0 / (e0 + e1);
    cache.probs(1, t) = e1 / (e0 + e1);
  }
}

std::vector<TokenPrediction> TaggerModel::forward(
    std::span<const int> ids, bool training, std::uint64_t dropout_seed) const {
  Cache cache;
  run_forward(ids, training, dropout_seed, cache);
  std::vector<TokenPrediction> out(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    out[t] = {cache.probs(0, i), cache.probs(1, i), cache.attn_a(i)};
  }
  return out;
}

std::vector<TokenPrediction> TaggerModel::forward(
    const Sequence& sequence, bool training, std::uint64_t dropout_seed) const {
  const std::vector<int> ids = encode(sequence);
  return forward(ids, training, dropout_seed);
}

Eigen::MatrixXd TaggerModel::normalized_states(std::span<const int> ids) const {
  Cache cache;
  run_forward(ids, false, 0, cache);
  return cache.ln_hat;
}

// ---------------------------------------------------------------------------
// Loss and backward pass

double kl_loss(std::span<const TokenPrediction> predictions,
               std::span<const LabelDistribution> targets) {
  if (predictions.size() != targets.size()) {
    throw InputError("kl_loss: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(targets.size()) +
                     " targets");
  }
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const double target[2] = {targets[t].p_i, targets[t].p_o};
    const double pred[2] = {predictions[t].p_i, predictions[t].p_o};
    for (int c = 0; c < 2; ++c) {
      if (target[c] <= 0.0) continue;
      total += target[c] *
               std::log(target[c] / std::max(pred[c], kProbabilityFloor));
    }
  }
  return total / static_cast<double>(predictions.size());
}

LossAndGradient TaggerModel::loss_and_gradient(
    std::span<const int> ids, std::span<const LabelDistribution> targets,
    bool training, std::uint64_t dropout_seed) const {
  if (targets.size() != ids.size()) {
    throw InputError("tagger: target count does not match sequence length");
  }
  Cache cache;
  run_forward(ids, training, dropout_seed, cache);
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  const int h = hp_.lstm_hidden;

  LossAndGradient result;
  result.predictions.resize(ids.size());
  for (Eigen::Index t = 0; t < n; ++t) {
    result.predictions[t] = {cache.probs(0, t), cache.probs(1, t),
                             cache.attn_a(t)};
  }
  result.loss = kl_loss(result.predictions, targets);

  std::vector<Eigen::MatrixXd>& grads = result.gradients;
  grads.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (static_cast<int>(i) == embedding_ && !blocks_[i].trainable) continue;
    grads[i] = Eigen::MatrixXd::Zero(blocks_[i].value.rows(),
                                     blocks_[i].value.cols());
  }

  // d loss / d logits through the floored KL and the softmax.
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd d_logits(2, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double target[2] = {targets[t].p_i, targets[t].p_o};
    double g[2];
    for (int c = 0; c < 2; ++c) {
      const double p = cache.probs(c, t);
      g[c] = (target[c] > 0.0 && p > kProbabilityFloor)
                 ? -inv_n * target[c] / p
                 : 0.0;
    }
    const double dot = cache.probs(0, t) * g[0] + cache.probs(1, t) * g[1];
    d_logits(0, t) = cache.probs(0, t) * (g[0] - dot);
    d_logits(1, t) = cache.probs(1, t) * (g[1] - dot);
  }

  // Output layer input is the last inference output (dropped out if it is
  // the first layer).
  Eigen::MatrixXd last = cache.fc_outputs.back();
  if (hp_.fc_layers == 1 && cache.drop_fc.size() > 0) {
    last = last.cwiseProduct(cache.drop_fc);
  }
  grads[out_w_] += d_logits * last.transpose();
  grads[out_b_] += d_logits.rowwise().sum();
  Eigen::MatrixXd d_act = blocks_[out_w_].value.transpose() * d_logits;

  for (int l = hp_.fc_layers - 1; l >= 0; --l) {
    if (l == 0 && cache.drop_fc.size() > 0) {
      d_act = d_act.cwiseProduct(cache.drop_fc);
    }
    const Eigen::MatrixXd& out = cache.fc_outputs[l];
    const Eigen::MatrixXd d_pre =
        d_act.cwiseProduct((1.0 - out.array().square()).matrix());
    const auto [w, b] = fc_[l];
    grads[w] += d_pre * cache.fc_inputs[l].transpose();
    grads[b] += d_pre.rowwise().sum();
    d_act = blocks_[w].value.transpose() * d_pre;
  }

  // Attention: z_t = a_t * s_t with a = softmax(v . tanh(W s_t + b)).
  const Eigen::MatrixXd& seq = cache.seq_out;
  const Eigen::VectorXd& a = cache.attn_a;
  Eigen::MatrixXd d_seq = d_act * a.asDiagonal();
  Eigen::VectorXd d_a(n);
  for (Eigen::Index t = 0; t < n; ++t) d_a(t) = d_act.col(t).dot(seq.col(t));
  const double weighted = a.dot(d_a);
  const Eigen::VectorXd d_score = a.cwiseProduct(
      (d_a.array() - weighted).matrix());
  const Eigen::VectorXd attn_v = blocks_[attn_v_].value.col(0);
  grads[attn_v_] += cache.attn_u * d_score;
  const Eigen::MatrixXd d_u = attn_v * d_score.transpose();
  const Eigen::MatrixXd d_upre =
      d_u.cwiseProduct((1.0 - cache.attn_u.array().square()).matrix());
  grads[attn_w_] += d_upre * seq.transpose();
  grads[attn_b_] += d_upre.rowwise().sum();
  d_seq += blocks_[attn_w_].value.transpose() * d_upre;

  if (cache.drop_seq.size() > 0) d_seq = d_seq.cwiseProduct(cache.drop_seq);

  // Layer norm.
  const Eigen::VectorXd gain = blocks_[ln_gain_].value.col(0);
  grads[ln_gain_] += (d_seq.cwiseProduct(cache.ln_hat)).rowwise().sum();
  grads[ln_bias_] += d_seq.rowwise().sum();
  const double width = static_cast<double>(2 * h);
  Eigen::MatrixXd d_x(2 * h, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::VectorXd d_hat = d_seq.col(t).cwiseProduct(gain);
    const Eigen::VectorXd hat = cache.ln_hat.col(t);
    d_x.col(t) = cache.ln_inv_std(t) / width *
                 (width * d_hat.array() - d_hat.sum() -
                  hat.array() * d_hat.dot(hat))
                     .matrix();
  }

  // Stacked biLSTM, top layer first.
  for (int layer = hp_.lstm_layers - 1; layer >= 0; --layer) {
    const Eigen::MatrixXd& input = cache.layer_inputs[layer];
    Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(input.rows(), n);
    for (int d = 0; d < 2; ++d) {
      const LstmIndex& idx = lstm_[layer][d];
      const Cache::Direction& dir = cache.lstm[layer][d];
      const Eigen::MatrixXd& u = blocks_[idx.u].value;
      const Eigen::MatrixXd d_hidden = d_x.block(d * h, 0, h, n);
      Eigen::MatrixXd d_gates(4 * h, n);
      Eigen::VectorXd d_h_carry = Eigen::VectorXd::Zero(h);
      Eigen::VectorXd d_c_carry = Eigen::VectorXd::Zero(h);
      for (Eigen::Index step = n - 1; step >= 0; --step) {
        const Eigen::Index t = d == 0 ? step : n - 1 - step;
        const bool has_prev = step > 0;
        const Eigen::Index prev = d == 0 ? t - 1 : t + 1;
        const auto g = dir.gates.col(t);
        const Eigen::VectorXd dh = d_hidden.col(t) + d_h_carry;
        Eigen::VectorXd dc(h);
        Eigen::VectorXd dg(4 * h);
        for (int k = 0; k < h; ++k) {
          const double gi = g(k), gf = g(h + k), gg = g(2 * h + k),
                       go = g(3 * h + k);
          const double tc = dir.tanh_cell(k, t);
          const double c_prev = has_prev ? dir.cell(k, prev) : 0.0;
          const double d_o = dh(k) * tc;
          dc(k) = dh(k) * go * (1.0 - tc * tc) + d_c_carry(k);
          dg(k) = dc(k) * gg * gi * (1.0 - gi);
          dg(h + k) = dc(k) * c_prev * gf * (1.0 - gf);
          dg(2 * h + k) = dc(k) * gi * (1.0 - gg * gg);
          dg(3 * h + k) = d_o * go * (1.0 - go);
          d_c_carry(k) = dc(k) * gf;
        }
        d_gates.col(t) = dg;
        if (has_prev) {
          grads[idx.u] += dg * dir.hidden.col(prev).transpose();
        }
        d_h_carry = u.transpose() * dg;
      }
      grads[idx.w] += d_gates * input.transpose();
      grads[idx.b] += d_gates.rowwise().sum();
      d_input += blocks_[idx.w].value.transpose() * d_gates;
    }
    d_x = std::move(d_input);
  }

  if (blocks_[embedding_].trainable) {
    for (Eigen::Index t = 0; t < n; ++t) {
      grads[embedding_].row(cache.ids[t]) += d_x.col(t).transpose();
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw InputError("checkpoint: unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1ULL << 32)) throw InputError("checkpoint: corrupt string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw InputError("checkpoint: unexpected end of file");
  return s;
}

void write_double(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  write_u64(out, bits);
}

double read_double(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void TaggerModel::save(std::ostream& out) const {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u64(out, kCheckpointVersion);
  std::ostringstream hp_text;
  const KvConfig hp_kv = hp_.to_kv();
  for (const auto& [k, v] : hp_kv.entries()) {
    hp_text << k << " = " << v << '\n';
  }
  write_string(out, hp_text.str());
  write_u64(out, vocab_.size());
  for (const std::string& w : vocab_) write_string(out, w);
  write_u64(out, blocks_.size());
  for (const ParameterBlock& block : blocks_) {
    write_string(out, block.name);
    write_u64(out, static_cast<std::uint64_t>(block.value.rows()));
    write_u64(out, static_cast<std::uint64_t>(block.value.cols()));
    for (Eigen::Index c = 0; c < block.value.cols(); ++c) {
      for (Eigen::Index r = 0; r < block.value.rows(); ++r) {
        write_double(out, block.value(r, c));
      }
    }
  }
  if (!out) throw InputError("checkpoint: write failed");
}

void TaggerModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file: " + path.string());
  save(out);
}

TaggerModel TaggerModel::load(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw InputError("checkpoint: not a neural tagger model");
  }
  const std::uint64_t version = read_u64(in);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " +
                     std::to_string(version));
  }
  TaggerModel model;
  model.hp_ = HyperParams::from_kv(KvConfig::parse(read_string(in)), "");
  const std::uint64_t vocab_size = read_u64(in);
  model.vocab_.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    model.vocab_.push_back(read_string(in));
    model.vocab_index_.try_emplace(model.vocab_.back(), static_cast<int>(i));
  }
  model.build_layout();
  const std::uint64_t count = read_u64(in);
  if (count != model.blocks_.size()) {
    throw InputError("checkpoint: block count does not match hyperparameters");
  }
  for (ParameterBlock& block : model.blocks_) {
    const std::string name = read_string(in);
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    if (name != block.name || rows != block.value.rows() ||
        cols != block.value.cols()) {
      throw InputError("checkpoint: unexpected block '" + name + "'");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) block.value(r, c) = read_double(in);
    }
  }
  return model;
}

TaggerModel TaggerModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file: " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------
// Training

AdamState make_adam_state(const TaggerModel& model) {
  std::vector<std::size_t> sizes;
  for (const ParameterBlock& block : model.blocks()) {
    if (block.trainable) sizes.push_back(block.value.size());
  }
  return Adam().init(sizes);
}

StepResult train_step(TaggerModel& model, AdamState& state,
                      const AdamConfig& adam, std::span<const int> ids,
                      std::span<const LabelDistribution> targets,
                      std::uint64_t dropout_seed) {
  const LossAndGradient lg =
      model.loss_and_gradient(ids, targets, true, dropout_seed);
  if (!std::isfinite(lg.loss)) throw NumericalError("non-finite training loss");
  std::vector<ParamView> views;
  auto& blocks = model.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!blocks[i].trainable) continue;
    const Eigen::MatrixXd& g = lg.gradients[i];
    if (!g.allFinite()) {
      throw NumericalError("non-finite gradient in block '" + blocks[i].name +
                           "'");
    }
    views.push_back({std::span<double>(blocks[i].value.data(),
                                       static_cast<std::size_t>(
                                           blocks[i].value.size())),
                     std::span<const double>(
                         g.data(), static_cast<std::size_t>(g.size()))});
  }
  Adam(adam).update(state, views);
  for (const ParameterBlock& block : blocks) {
    if (block.trainable && !block.value.allFinite()) {
      throw NumericalError("non-finite parameter in block '" + block.name +
                           "' after update");
    }
  }
  return {lg.loss};
}

std::vector<double> predict(const TaggerModel& model, const Sequence& sequence) {
  std::vector<double> p;
  for (const TokenPrediction& tp : model.forward(sequence, false, 0)) {
    p.push_back(tp.p_i);
  }
  return p;
}

std::vector<std::vector<double>> predict(const TaggerModel& model,
                                         const std::vector<Sequence>& seqs) {
  std::vector<std::vector<double>> out;
  out.reserve(seqs.size());
  for (const Sequence& s : seqs) out.push_back(predict(model, s));
  return out;
}

double class_i_f1(const std::vector<std::vector<double>>& p_inside,
                  const std::vector<Sequence>& sequences, double threshold) {
  IoLabels predicted, reference;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const IoLabels p = threshold_labels(p_inside[i], threshold);
    const IoLabels r = reference_labels(sequences[i]);
    predicted.insert(predicted.end(), p.begin(), p.end());
    reference.insert(reference.end(), r.begin(), r.end());
  }
  return token_prf(predicted, reference).f1_class_i;
}

TrainResult train(const std::vector<Sequence>& train_set,
                  const std::vector<Sequence>& dev_set, const HyperParams& hp,
                  const EmbeddingTable& embeddings) {
  if (train_set.empty()) throw InputError("train: empty training set");
  if (dev_set.empty()) throw InputError("train: empty dev set");
  TaggerModel model(hp, embeddings, derive_seed(hp.seed, 0));
  TrainResult result{model, {}, 0};
  if (hp.epochs == 0) return result;

  std::vector<std::vector<int>> ids;
  std::vector<std::vector<LabelDistribution>> targets;
  for (const Sequence& s : train_set) {
    ids.push_back(model.encode(s));
    targets.push_back(target_distributions(s));
  }
  AdamState state = make_adam_state(model);
  AdamConfig adam;
  adam.learning_rate = hp.learning_rate;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_f1 = -1.0;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(hp.seed, 1000 + epoch));
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      total += train_step(model, state, adam, ids[i], targets[i],
                          derive_seed(hp.seed, 1'000'000 + step++))
                   .loss;
    }
    const double dev_f1 =
        class_i_f1(predict(model, dev_set), dev_set, hp.dev_threshold);
    result.log.push_back(
        {epoch, total / static_cast<double>(order.size()), dev_f1});
    if (dev_f1 >= best_f1) {
      best_f1 = dev_f1;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace ecr::nn
