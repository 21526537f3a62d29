#include "ecr/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <span>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

namespace {

constexpr std::array<const char*, 4> kContentSuffixes = {"", "e", "en", "s"};
constexpr std::array<const char*, 4> kSentimentSuffixes = {"", "e", "en",
                                                           "er"};
constexpr int kMonteCarloSamples = 20000;

void check_rate(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw InputError(std::string("gen_config: ") + name +
                     " must lie in [0, 1]");
  }
}

std::string capitalize(const std::string& word) {
  std::u32string cps = utf8::decode(word);
  if (!cps.empty() && cps[0] >= U'a' && cps[0] <= U'z') cps[0] -= 32;
  return utf8::encode(cps);
}

std::vector<std::string> invent_words(Rng& rng, int count, int min_syllables,
                                      int max_syllables,
                                      std::set<std::string>& used) {
  static constexpr std::array<const char*, 24> kOnsets = {
      "b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s",
      "t", "w", "z", "sch", "st", "br", "gr", "kl", "pf", "tr", "fl", "sp"};
  static constexpr std::array<const char*, 10> kNuclei = {
      "a", "e", "i", "o", "u", "ei", "au", "ä", "ö", "ü"};
  static constexpr std::array<const char*, 10> kCodas = {
      "", "n", "r", "l", "t", "ch", "st", "ng", "m", "s"};
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < count) {
    const int syllables =
        min_syllables +
        static_cast<int>(rng.below(max_syllables - min_syllables + 1));
    std::string word;
    for (int s = 0; s < syllables; ++s) {
      word += kOnsets[rng.below(kOnsets.size())];
      word += kNuclei[rng.below(kNuclei.size())];
      word += kCodas[rng.below(kCodas.size())];
    }
    if (used.insert(word).second) words.push_back(word);
  }
  return words;
}

// Geometric failures-before-success with the given mean.
std::uint64_t draw_extension(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return rng.geometric(1.0 / (1.0 + mean));
}

struct LexToken {
  std::string surface;
  std::string lemma;
  std::string pos;
};

constexpr std::array<const char*, 4> kFillerTags = {"VVFIN", "ADV", "NN",
                                                    "ADJA"};

}  // namespace

void GenConfig::validate() const {
  if (narrators < 1) throw InputError("gen_config: narrators must be >= 1");
  if (narratives_per_narrator < 1) {
    throw InputError("gen_config: narratives_per_narrator must be >= 1");
  }
  if (sentences_min < 1 || sentences_max < sentences_min) {
    throw InputError("gen_config: need 1 <= sentences_min <= sentences_max");
  }
  if (!(sentence_length_mean > 0.0) || sentence_length_sd < 0.0) {
    throw InputError("gen_config: invalid sentence length distribution");
  }
  if (sentence_length_min < 1 || sentence_length_max < sentence_length_min) {
    throw InputError(
        "gen_config: need 1 <= sentence_length_min <= sentence_length_max");
  }
  check_rate(carrier_sentence_rate, "carrier_sentence_rate");
  check_rate(carrier_rate, "carrier_rate");
  check_rate(overlap_prob, "overlap_prob");
  check_rate(noise_rate, "noise_rate");
  check_rate(distractor_rate, "distractor_rate");
  check_rate(sentiment_share, "sentiment_share");
  check_rate(stopword_share, "stopword_share");
  check_rate(comma_rate, "comma_rate");
  if (carrier_rate > 0.0 && carrier_sentence_rate <= 0.0) {
    throw InputError(
        "gen_config: carrier_rate > 0 needs carrier_sentence_rate > 0");
  }
  if (annotators < 1) throw InputError("gen_config: annotators must be >= 1");
  if (static_cast<int>(span_length_means.size()) != annotators) {
    throw InputError("gen_config: span_length_means needs one entry per "
                     "annotator");
  }
  for (double m : span_length_means) {
    if (!(m >= 1.0)) {
      throw InputError("gen_config: span length means must be >= 1");
    }
  }
  const auto check_vocab = [](const std::vector<std::string>& words, int size,
                              const char* name) {
    if (words.empty() && size < 1) {
      throw InputError(std::string("gen_config: empty ") + name +
                       " vocabulary");
    }
  };
  check_vocab(content_words, content_vocab, "content");
  check_vocab(sentiment_words, sentiment_vocab, "sentiment");
  check_vocab(stop_words, stop_vocab, "stopword");
  check_vocab(filler_words, filler_vocab, "filler");
}

GenConfig GenConfig::from_kv(const KvConfig& kv) {
  kv.reject_unknown({"narrators", "narratives_per_narrator", "sentences_min",
                     "sentences_max", "sentence_length_mean",
                     "sentence_length_sd", "sentence_length_min",
                     "sentence_length_max", "carrier_sentence_rate",
                     "carrier_rate", "annotators", "span_length_means",
                     "overlap_prob", "noise_rate", "distractor_rate",
                     "sentiment_share", "stopword_share", "comma_rate",
                     "content_words", "sentiment_words", "stop_words",
                     "filler_words", "content_vocab", "sentiment_vocab",
                     "stop_vocab", "filler_vocab", "vocab_seed", "inflect"});
  GenConfig c;
  c.narrators = static_cast<int>(kv.get_int("narrators", c.narrators));
  c.narratives_per_narrator = static_cast<int>(
      kv.get_int("narratives_per_narrator", c.narratives_per_narrator));
  c.sentences_min =
      static_cast<int>(kv.get_int("sentences_min", c.sentences_min));
  c.sentences_max =
      static_cast<int>(kv.get_int("sentences_max", c.sentences_max));
  c.sentence_length_mean =
      kv.get_double("sentence_length_mean", c.sentence_length_mean);
  c.sentence_length_sd =
      kv.get_double("sentence_length_sd", c.sentence_length_sd);
  c.sentence_length_min = static_cast<int>(
      kv.get_int("sentence_length_min", c.sentence_length_min));
  c.sentence_length_max = static_cast<int>(
      kv.get_int("sentence_length_max", c.sentence_length_max));
  c.carrier_sentence_rate =
      kv.get_double("carrier_sentence_rate", c.carrier_sentence_rate);
  c.carrier_rate = kv.get_double("carrier_rate", c.carrier_rate);
  c.annotators = static_cast<int>(kv.get_int("annotators", c.annotators));
  if (kv.has("span_length_means")) {
    c.span_length_means = kv.get_double_list("span_length_means");
  } else if (c.annotators != static_cast<int>(c.span_length_means.size())) {
    c.span_length_means.assign(c.annotators, 1.1);
  }
  c.overlap_prob = kv.get_double("overlap_prob", c.overlap_prob);
  c.noise_rate = kv.get_double("noise_rate", c.noise_rate);
  c.distractor_rate = kv.get_double("distractor_rate", c.distractor_rate);
  c.sentiment_share = kv.get_double("sentiment_share", c.sentiment_share);
  c.stopword_share = kv.get_double("stopword_share", c.stopword_share);
  c.comma_rate = kv.get_double("comma_rate", c.comma_rate);
  c.content_words = kv.get_list("content_words");
  c.sentiment_words = kv.get_list("sentiment_words");
  c.stop_words = kv.get_list("stop_words");
  c.filler_words = kv.get_list("filler_words");
  c.content_vocab =
      static_cast<int>(kv.get_int("content_vocab", c.content_vocab));
  c.sentiment_vocab =
      static_cast<int>(kv.get_int("sentiment_vocab", c.sentiment_vocab));
  c.stop_vocab = static_cast<int>(kv.get_int("stop_vocab", c.stop_vocab));
  c.filler_vocab =
      static_cast<int>(kv.get_int("filler_vocab", c.filler_vocab));
  c.vocab_seed =
      static_cast<std::uint64_t>(kv.get_int("vocab_seed", 17));
  c.inflect = kv.get_bool("inflect", c.inflect);
  c.validate();
  return c;
}

SyntheticVocabulary build_vocabulary(const GenConfig& config) {
  config.validate();
  SyntheticVocabulary vocab;
  Rng rng(config.vocab_seed);
  std::set<std::string> used;
  for (const auto* list : {&config.content_words, &config.sentiment_words,
                           &config.stop_words, &config.filler_words}) {
    for (const std::string& w : *list) used.insert(utf8::to_lower(w));
  }
  const auto fill = [&](const std::vector<std::string>& given, int size,
                        int min_syl, int max_syl) {
    if (!given.empty()) return given;
    return invent_words(rng, size, min_syl, max_syl, used);
  };
  vocab.stop = fill(config.stop_words, config.stop_vocab, 1, 1);
  vocab.content = fill(config.content_words, config.content_vocab, 2, 3);
  vocab.sentiment = fill(config.sentiment_words, config.sentiment_vocab, 2, 3);
  vocab.filler = fill(config.filler_words, config.filler_vocab, 1, 3);
  for (std::size_t i = 0; i < vocab.sentiment.size(); ++i) {
    const double magnitude = 0.2 + 0.8 * rng.uniform();
    vocab.sentiment_polarity.push_back(i % 2 == 0 ? magnitude : -magnitude);
  }
  return vocab;
}

Corpus generate_synthetic(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  const SyntheticVocabulary vocab = build_vocabulary(config);
  const int k = config.annotators;
  Rng rng(seed);

  // Expected union length of one latent carrier, by simulation on a
  // separate stream so the main stream stays independent of K.
  double mean_union = 1.0;
  {
    Rng sim(derive_seed(seed, 0xCA11B));
    double total = 0.0;
    for (int s = 0; s < kMonteCarloSamples; ++s) {
      std::uint64_t widest = 0;
      bool any = false;
      for (int a = 0; a < k; ++a) {
        if (!sim.bernoulli(config.overlap_prob)) continue;
        any = true;
        widest = std::max(
            widest, draw_extension(sim, config.span_length_means[a] - 1.0));
      }
      if (!any) {
        const auto a = sim.below(k);
        widest = draw_extension(sim, config.span_length_means[a] - 1.0);
      }
      total += 1.0 + static_cast<double>(widest);
    }
    mean_union = total / kMonteCarloSamples;
  }
  const double union_per_token =
      config.carrier_sentence_rate > 0.0
          ? config.carrier_rate / config.carrier_sentence_rate
          : 0.0;

  const auto content_token = [&]() {
    const std::string lemma =
        capitalize(vocab.content[rng.below(vocab.content.size())]);
    std::string surface = lemma;
    if (config.inflect) surface += kContentSuffixes[rng.below(4)];
    return LexToken{surface, lemma, "NN"};
  };
  const auto sentiment_token = [&]() {
    const std::string lemma = vocab.sentiment[rng.below(vocab.sentiment.size())];
    std::string surface = lemma;
    if (config.inflect) surface += kSentimentSuffixes[rng.below(4)];
    return LexToken{surface, lemma, "ADJD"};
  };
  const auto stop_token = [&]() {
    const std::string& w = vocab.stop[rng.below(vocab.stop.size())];
    return LexToken{w, w, "ART"};
  };
  const auto filler_token = [&]() {
    const std::size_t i = rng.below(vocab.filler.size());
    return LexToken{vocab.filler[i], vocab.filler[i], kFillerTags[i % 4]};
  };
  const auto background_token = [&]() {
    if (rng.bernoulli(config.distractor_rate)) return content_token();
    if (rng.bernoulli(config.stopword_share)) return stop_token();
    return filler_token();
  };

  Corpus corpus;
  corpus.annotators = k;
  for (int person = 0; person < config.narrators; ++person) {
    char narrator_buf[32];
    std::snprintf(narrator_buf, sizeof narrator_buf, "P%03d", person + 1);
    const std::string narrator_id = narrator_buf;
    for (int story = 0; story < config.narratives_per_narrator; ++story) {
      Narrative narrative{narrator_id + "_N" + std::to_string(story + 1),
                          narrator_id,
                          {}};
      const int sentence_count =
          config.sentences_min +
          static_cast<int>(rng.below(config.sentences_max -
                                     config.sentences_min + 1));
      std::int64_t raw_index = 0;
      for (int s = 0; s < sentence_count; ++s) {
        const double drawn = config.sentence_length_mean +
                             config.sentence_length_sd * rng.normal();
        const int length = std::clamp(static_cast<int>(std::lround(drawn)),
                                      config.sentence_length_min,
                                      config.sentence_length_max);
        std::vector<LexToken> words(length);
        std::vector<std::vector<std::uint8_t>> labels(
            length, std::vector<std::uint8_t>(k, 0));
        std::vector<bool> reserved(length, false);

        const bool carrier_sentence =
            config.carrier_rate > 0.0 &&
            rng.bernoulli(config.carrier_sentence_rate);
        if (carrier_sentence) {
          const double expected = union_per_token * length / mean_union;
          int carriers = static_cast<int>(std::floor(expected));
          if (rng.bernoulli(expected - carriers)) ++carriers;
          carriers = std::clamp(carriers, 1, std::max(1, length / 2));

          std::vector<int> heads(length);
          for (int i = 0; i < length; ++i) heads[i] = i;
          rng.shuffle(heads);
          heads.resize(carriers);
          std::sort(heads.begin(), heads.end());

          int previous_head = -1;
          for (int head : heads) {
            const int room = head - previous_head - 1;
            std::vector<int> extension(k, -1);
            bool any = false;
            for (int a = 0; a < k; ++a) {
              if (!rng.bernoulli(config.overlap_prob)) continue;
              any = true;
              extension[a] = static_cast<int>(
                  draw_extension(rng, config.span_length_means[a] - 1.0));
            }
            if (!any) {
              const auto a = rng.below(k);
              extension[a] = static_cast<int>(
                  draw_extension(rng, config.span_length_means[a] - 1.0));
            }
            int widest = 0;
            for (int a = 0; a < k; ++a) {
              if (extension[a] < 0) continue;
              extension[a] = std::min(extension[a], room);
              widest = std::max(widest, extension[a]);
              for (int p = head - extension[a]; p <= head; ++p) {
                labels[p][a] = 1;
              }
            }
            words[head] = rng.bernoulli(config.sentiment_share)
                              ? sentiment_token()
                              : content_token();
            for (int p = head - widest; p < head; ++p) {
              words[p] = rng.bernoulli(0.7) ? stop_token() : filler_token();
            }
            for (int p = head - widest; p <= head; ++p) reserved[p] = true;
            previous_head = head;
          }
          for (int p = 0; p < length; ++p) {
            if (reserved[p]) continue;
            for (int a = 0; a < k; ++a) {
              if (rng.bernoulli(config.noise_rate)) labels[p][a] = 1;
            }
          }
        }
        for (int p = 0; p < length; ++p) {
          if (!reserved[p]) words[p] = background_token();
        }

        Sentence sentence{s, {}};
        const auto emit = [&](const LexToken& word,
                              std::vector<std::uint8_t> annotation,
                              bool punct) {
          AnnotatedToken token;
          token.surface = word.surface;
          token.lemma = word.lemma;
          token.lemma_explicit = true;
          token.pos = word.pos;
          token.is_punct = punct;
          token.annotations = std::move(annotation);
          token.index_in_narrative = raw_index++;
          sentence.tokens.push_back(std::move(token));
        };
        const std::vector<std::uint8_t> outside(k, 0);
        for (int p = 0; p < length; ++p) {
          emit(words[p], labels[p], false);
          const bool inside_next =
              p + 1 < length &&
              std::any_of(labels[p + 1].begin(), labels[p + 1].end(),
                          [](std::uint8_t x) { return x != 0; });
          if (p + 1 < length && !inside_next &&
              rng.bernoulli(config.comma_rate)) {
            emit({",", ",", "$,"}, outside, true);
          }
        }
        emit({".", ".", "$."}, outside, true);
        narrative.sentences.push_back(std::move(sentence));
      }
      corpus.narratives.push_back(std::move(narrative));
    }
  }
  return corpus;
}

void write_stopwords(std::ostream& out, const SyntheticVocabulary& vocab) {
  for (const std::string& w : vocab.stop) out << w << '\n';
}

void write_lexicon(std::ostream& out, const SyntheticVocabulary& vocab,
                   bool inflect) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < vocab.sentiment.size(); ++i) {
    if (inflect) {
      for (const char* suffix : kSentimentSuffixes) {
        out << vocab.sentiment[i] << suffix << '\t'
            << vocab.sentiment_polarity[i] << '\n';
      }
    } else {
      out << vocab.sentiment[i] << '\t' << vocab.sentiment_polarity[i]
          << '\n';
    }
  }
  out.flags(flags);
}

void write_synthetic_embeddings(std::ostream& out,
                                const SyntheticVocabulary& vocab, int dim,
                                std::uint64_t seed, bool inflect) {
  if (dim < 1) throw InputError("embedding dimension must be positive");
  Rng rng(seed);
  const auto direction = [&]() {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
  };
  const std::vector<double> content_dir = direction();
  const std::vector<double> sentiment_dir = direction();
  const std::vector<double> stop_dir = direction();
  const std::vector<double> filler_dir = direction();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  char buf[32];
  const auto emit = [&](const std::string& token,
                        const std::vector<double>& v) {
    out << token;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.6f", x);
      out << buf;
    }
    out << '\n';
  };
  const auto emit_family = [&](const std::vector<std::string>& words,
                               const std::vector<double>& dir,
                               std::span<const char* const> suffixes) {
    for (const std::string& w : words) {
      std::vector<double> base(dim);
      for (int d = 0; d < dim; ++d) {
        base[d] = scale * (0.6 * dir[d] + rng.normal());
      }
      const std::string lower = utf8::to_lower(w);
      emit(lower, base);
      for (const char* suffix : suffixes) {
        if (*suffix == '\0') continue;
        std::vector<double> variant = base;
        for (double& x : variant) x += 0.1 * scale * rng.normal();
        emit(lower + suffix, variant);
      }
    }
  };
  const std::span<const char* const> none;
  emit_family(vocab.content, content_dir,
              inflect ? std::span<const char* const>(kContentSuffixes) : none);
  emit_family(vocab.sentiment, sentiment_dir,
              inflect ? std::span<const char* const>(kSentimentSuffixes)
                      : none);
  emit_family(vocab.stop, stop_dir, none);
  emit_family(vocab.filler, filler_dir, none);
}

}  // namespace ecr
