#include "ecr/crf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ecr/adam.hpp"
#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/utf8.hpp"

namespace ecr::crf {

namespace {

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::string offset_tag(int offset) {
  return "[" + std::to_string(offset) + "]";
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, const std::string& source,
                    std::size_t line) {
  text = utf8::trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(source, line, "unparsable number '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::vector<std::string> extract_features(const Sequence& sequence,
                                          std::size_t position,
                                          const SentimentLexicon& lexicon,
                                          const FeatureOptions& options) {
  std::vector<std::string> features;
  const auto n = static_cast<std::int64_t>(sequence.size());
  for (int offset = -options.window; offset <= options.window; ++offset) {
    const std::int64_t at = static_cast<std::int64_t>(position) + offset;
    const std::string tag = offset_tag(offset);
    if (at < 0) {
      features.push_back("BOS" + tag);
      continue;
    }
    if (at >= n) {
      features.push_back("EOS" + tag);
      continue;
    }
    const AnnotatedToken& token = sequence.tokens[static_cast<std::size_t>(at)];
    const std::string lower = utf8::to_lower(token.surface);
    features.push_back("w" + tag + "=" + lower);
    for (int k = 1; k <= options.max_suffix; ++k) {
      features.push_back("suf" + std::to_string(k) + tag + "=" +
                         utf8::suffix(lower, static_cast<std::size_t>(k)));
    }
    if (!token.pos.empty()) {
      features.push_back("pos" + tag + "=" + token.pos);
      features.push_back(
          "posp" + tag + "=" +
          utf8::prefix(token.pos, static_cast<std::size_t>(options.pos_prefix)));
    }
    SentimentBucket bucket = lexicon.bucket(token.surface);
    if (bucket == SentimentBucket::kZero) bucket = lexicon.bucket(token.lemma);
    features.push_back("sentiment" + tag + "=" + std::string(bucket_name(bucket)));
  }
  return features;
}

std::optional<int> FeatureDictionary::id(const std::string& name) {
  if (const auto found = find(name)) return found;
  if (frozen_) return std::nullopt;
  const int next = static_cast<int>(names_.size());
  names_.push_back(name);
  ids_.emplace(name, next);
  return next;
}

std::optional<int> FeatureDictionary::find(const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

namespace {

template <typename Resolve>
EncodedSequence encode_with(const Sequence& sequence,
                            const SentimentLexicon& lexicon,
                            const FeatureOptions& options, Resolve resolve) {
  EncodedSequence encoded;
  encoded.positions.reserve(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    FeatureVector ids;
    for (const std::string& f : extract_features(sequence, t, lexicon, options)) {
      if (const auto id = resolve(f)) ids.push_back(*id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    encoded.positions.push_back(std::move(ids));
  }
  return encoded;
}

}  // namespace

EncodedSequence encode(const Sequence& sequence,
                       const SentimentLexicon& lexicon,
                       FeatureDictionary& dictionary,
                       const FeatureOptions& options) {
  return encode_with(sequence, lexicon, options,
                     [&](const std::string& f) { return dictionary.id(f); });
}

CrfModel::CrfModel(FeatureDictionary dictionary, FeatureOptions options,
                   double l2)
    : dictionary_(std::move(dictionary)), options_(options), l2_(l2) {
  dictionary_.freeze();
  weights_.assign(dictionary_.size() * kLabels + kLabels * kLabels, 0.0);
}

EncodedSequence CrfModel::encode(const Sequence& sequence,
                                 const SentimentLexicon& lexicon) const {
  return encode_with(sequence, lexicon, options_, [&](const std::string& f) {
    return dictionary_.find(f);
  });
}

void CrfModel::save(std::ostream& out) const {
  out << "ecr-crf 1\n"
      << "l2\t" << format_double(l2_) << '\n'
      << "window\t" << options_.window << '\n'
      << "max_suffix\t" << options_.max_suffix << '\n'
      << "pos_prefix\t" << options_.pos_prefix << '\n'
      << "transitions";
  for (int i = 0; i < kLabels * kLabels; ++i) {
    out << '\t' << format_double(weights_[transition_offset() + i]);
  }
  out << "\nfeatures\t" << feature_count() << '\n';
  for (std::size_t f = 0; f < feature_count(); ++f) {
    out << dictionary_.names()[f] << '\t' << format_double(weights_[f * 2])
        << '\t' << format_double(weights_[f * 2 + 1]) << '\n';
  }
  if (!out) throw InputError("crf model: write failed");
}

void CrfModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file: " + path.string());
  save(out);
}

CrfModel CrfModel::load(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  const auto next_fields = [&](const char* key, std::size_t count) {
    if (!std::getline(in, line)) {
      throw ParseError(source, line_no + 1, std::string("missing ") + key);
    }
    ++line_no;
    auto fields = utf8::split(line, '\t');
    if (fields.size() != count || fields[0] != key) {
      throw ParseError(source, line_no, std::string("expected ") + key);
    }
    return fields;
  };
  if (!std::getline(in, line) || line != "ecr-crf 1") {
    throw ParseError(source, 1, "not a CRF model (bad header)");
  }
  ++line_no;
  const double l2 = parse_double(next_fields("l2", 2)[1], source, line_no);
  FeatureOptions options;
  options.window = static_cast<int>(
      parse_double(next_fields("window", 2)[1], source, line_no));
  options.max_suffix = static_cast<int>(
      parse_double(next_fields("max_suffix", 2)[1], source, line_no));
  options.pos_prefix = static_cast<int>(
      parse_double(next_fields("pos_prefix", 2)[1], source, line_no));
  const auto transitions = next_fields("transitions", 1 + kLabels * kLabels);
  const auto count_fields = next_fields("features", 2);
  const auto count = static_cast<std::size_t>(
      parse_double(count_fields[1], source, line_no));

  FeatureDictionary dictionary;
  std::vector<double> emissions;
  emissions.reserve(count * kLabels);
  for (std::size_t f = 0; f < count; ++f) {
    if (!std::getline(in, line)) {
      throw ParseError(source, line_no + 1, "truncated feature list");
    }
    ++line_no;
    const auto fields = utf8::split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(source, line_no, "expected feature<TAB>w_O<TAB>w_I");
    }
    if (dictionary.find(fields[0])) {
      throw ParseError(source, line_no, "duplicate feature '" + fields[0] + "'");
    }
    dictionary.id(fields[0]);
    emissions.push_back(parse_double(fields[1], source, line_no));
    emissions.push_back(parse_double(fields[2], source, line_no));
  }
  CrfModel model(std::move(dictionary), options, l2);
  std::copy(emissions.begin(), emissions.end(), model.weights_.begin());
  for (int i = 0; i < kLabels * kLabels; ++i) {
    model.weights_[model.transition_offset() + i] =
        parse_double(transitions[1 + i], source, line_no);
  }
  return model;
}

CrfModel CrfModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file: " + path.string());
  return load(in, path.string());
}

std::vector<std::array<double, kLabels>> emission_scores(
    const CrfModel& model, const EncodedSequence& sequence) {
  std::vector<std::array<double, kLabels>> scores(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    scores[t] = {0.0, 0.0};
    for (int f : sequence.positions[t]) {
      for (int y = 0; y < kLabels; ++y) scores[t][y] += model.emission(f, y);
    }
  }
  return scores;
}

double path_score(const CrfModel& model, const EncodedSequence& sequence,
                  const IoLabels& labels) {
  if (labels.size() != sequence.size()) {
    throw InputError("crf: label count does not match sequence length");
  }
  const auto scores = emission_scores(model, sequence);
  double total = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int y = static_cast<int>(labels[t]);
    total += scores[t][y];
    if (t > 0) total += model.transition(static_cast<int>(labels[t - 1]), y);
  }
  return total;
}

namespace {

struct Lattice {
  std::vector<std::array<double, kLabels>> emit;
  std::vector<std::array<double, kLabels>> alpha;
  std::vector<std::array<double, kLabels>> beta;
  double log_z = 0.0;
};

Lattice forward_backward(const CrfModel& model, const EncodedSequence& seq) {
  Lattice lat;
  const std::size_t n = seq.size();
  lat.emit = emission_scores(model, seq);
  lat.alpha.resize(n);
  lat.beta.resize(n);
  if (n == 0) return lat;
  lat.alpha[0] = lat.emit[0];
  for (std::size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < kLabels; ++p) {
        acc = log_sum_exp(acc, lat.alpha[t - 1][p] + model.transition(p, y));
      }
      lat.alpha[t][y] = acc + lat.emit[t][y];
    }
  }
  lat.beta[n - 1] = {0.0, 0.0};
  for (std::size_t t = n - 1; t-- > 0;) {
    for (int y = 0; y < kLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int q = 0; q < kLabels; ++q) {
        acc = log_sum_exp(acc, model.transition(y, q) + lat.emit[t + 1][q] +
                                   lat.beta[t + 1][q]);
      }
      lat.beta[t][y] = acc;
    }
  }
  lat.log_z = log_sum_exp(lat.alpha[n - 1][0], lat.alpha[n - 1][1]);
  return lat;
}

}  // namespace

double log_partition(const CrfModel& model, const EncodedSequence& sequence) {
  return forward_backward(model, sequence).log_z;
}

double accumulate_log_likelihood(const CrfModel& model,
                                 const EncodedSequence& sequence,
                                 const IoLabels& gold,
                                 std::span<double> gradient) {
  if (gold.size() != sequence.size()) {
    throw InputError("crf: gold label count does not match sequence length");
  }
  if (gradient.size() != model.weights().size()) {
    throw InputError("crf: gradient buffer has the wrong size");
  }
  const std::size_t n = sequence.size();
  if (n == 0) return 0.0;
  const Lattice lat = forward_backward(model, sequence);
  const std::size_t trans = model.transition_offset();

  double score = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const int y = static_cast<int>(gold[t]);
    score += lat.emit[t][y];
    for (int f : sequence.positions[t]) {
      gradient[static_cast<std::size_t>(f) * kLabels + y] += 1.0;
    }
    if (t > 0) {
      const int p = static_cast<int>(gold[t - 1]);
      score += model.transition(p, y);
      gradient[trans + p * kLabels + y] += 1.0;
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    for (int y = 0; y < kLabels; ++y) {
      const double marginal =
          std::exp(lat.alpha[t][y] + lat.beta[t][y] - lat.log_z);
      for (int f : sequence.positions[t]) {
        gradient[static_cast<std::size_t>(f) * kLabels + y] -= marginal;
      }
    }
    if (t == 0) continue;
    for (int p = 0; p < kLabels; ++p) {
      for (int y = 0; y < kLabels; ++y) {
        const double pair =
            std::exp(lat.alpha[t - 1][p] + model.transition(p, y) +
                     lat.emit[t][y] + lat.beta[t][y] - lat.log_z);
        gradient[trans + p * kLabels + y] -= pair;
      }
    }
  }
  return score - lat.log_z;
}

LogLikelihood crf_log_likelihood(const CrfModel& model,
                                 const EncodedSequence& sequence,
                                 const IoLabels& gold) {
  std::vector<double> dense(model.weights().size(), 0.0);
  LogLikelihood out;
  out.value = accumulate_log_likelihood(model, sequence, gold, dense);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) out.gradient.emplace_back(i, dense[i]);
  }
  return out;
}

std::vector<double> crf_marginals(const CrfModel& model,
                                  const EncodedSequence& sequence) {
  const Lattice lat = forward_backward(model, sequence);
  std::vector<double> p_inside(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const double p = std::exp(lat.alpha[t][1] + lat.beta[t][1] - lat.log_z);
    p_inside[t] = std::clamp(p, 0.0, 1.0);
  }
  return p_inside;
}

IoLabels viterbi_decode(const CrfModel& model,
                        const EncodedSequence& sequence) {
  const std::size_t n = sequence.size();
  if (n == 0) return {};
  const auto emit = emission_scores(model, sequence);
  std::vector<std::array<double, kLabels>> delta(n);
  std::vector<std::array<int, kLabels>> back(n);
  delta[0] = emit[0];
  for (std::size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kLabels; ++y) {
      int best = 0;
      double best_score = delta[t - 1][0] + model.transition(0, y);
      for (int p = 1; p < kLabels; ++p) {
        const double s = delta[t - 1][p] + model.transition(p, y);
        if (s > best_score) {
          best_score = s;
          best = p;
        }
      }
      delta[t][y] = best_score + emit[t][y];
      back[t][y] = best;
    }
  }
  int y = delta[n - 1][1] > delta[n - 1][0] ? 1 : 0;
  IoLabels labels(n);
  for (std::size_t t = n; t-- > 0;) {
    labels[t] = static_cast<IoLabel>(y);
    if (t > 0) y = back[t][y];
  }
  return labels;
}

double regularized_objective(const CrfModel& model,
                             const std::vector<EncodedSequence>& sequences,
                             const std::vector<IoLabels>& gold, double l2) {
  double total = 0.0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const EncodedSequence& seq = sequences[s];
    if (seq.size() == 0) continue;
    total += path_score(model, seq, gold[s]) - log_partition(model, seq);
  }
  double sq = 0.0;
  for (double w : model.weights()) sq += w * w;
  return total - 0.5 * l2 * sq;
}

CrfTrainResult crf_train(const std::vector<Sequence>& sequences,
                         const std::vector<IoLabels>& gold,
                         const SentimentLexicon& lexicon,
                         const CrfConfig& config) {
  if (sequences.size() != gold.size()) {
    throw InputError("crf_train: one gold label list per sequence required");
  }
  if (!(config.l2 >= 0.0) || !(config.learning_rate >= 0.0) ||
      config.iterations < 0) {
    throw InputError("crf_train: invalid configuration");
  }
  FeatureDictionary dictionary;
  std::vector<EncodedSequence> encoded;
  encoded.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (gold[s].size() != sequences[s].size()) {
      throw InputError("crf_train: gold labels misaligned with sequence");
    }
    encoded.push_back(encode(sequences[s], lexicon, dictionary, config.features));
  }
  CrfTrainResult result{CrfModel(std::move(dictionary), config.features,
                                 config.l2),
                        {},
                        0};
  CrfModel& model = result.model;
  std::vector<double>& w = model.weights();
  Rng rng(config.seed);
  for (double& x : w) x = rng.uniform(-0.01, 0.01);

  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  const Adam adam(adam_config);
  const std::size_t sizes[] = {w.size()};
  AdamState state = adam.init(sizes);
  std::vector<double> grad(w.size());

  for (int it = 0; it < config.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double ll = 0.0;
    for (std::size_t s = 0; s < encoded.size(); ++s) {
      ll += accumulate_log_likelihood(model, encoded[s], gold[s], grad);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      sq += w[i] * w[i];
      // Adam minimizes: negate the ascent direction.
      grad[i] = -(grad[i] - config.l2 * w[i]);
    }
    const double objective = ll - 0.5 * config.l2 * sq;
    if (!std::isfinite(objective)) {
      throw NumericalError("crf_train: non-finite objective at iteration " +
                           std::to_string(it));
    }
    if (!result.objective.empty() && objective < result.objective.back()) {
      ++result.non_monotone_steps;
    }
    result.objective.push_back(objective);
    const ParamView view{std::span<double>(w), std::span<const double>(grad)};
    adam.update(state, std::span<const ParamView>(&view, 1));
  }
  return result;
}

CrfTrainResult crf_train(const std::vector<Sequence>& sequences,
                         const SentimentLexicon& lexicon,
                         const CrfConfig& config) {
  std::vector<IoLabels> gold;
  gold.reserve(sequences.size());
  for (const Sequence& s : sequences) gold.push_back(reference_labels(s));
  return crf_train(sequences, gold, lexicon, config);
}

}  // namespace ecr::crf
