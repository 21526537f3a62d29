#ifndef ECR_SYNTH_HPP_
#define ECR_SYNTH_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ecr/corpus.hpp"
#include "ecr/kv_config.hpp"

namespace ecr {

// Parameters of the synthetic multi-annotator corpus. Defaults are
// calibrated to the statistics of the German personal-narrative corpus:
// ~7.3% of tokens marked by at least one annotator, ~34% carrier
// sentences, ~22 tokens per sentence, carriers of ~1.1 tokens for three
// annotators and ~2.3 tokens for the fourth.
struct GenConfig {
  int narrators = 40;
  int narratives_per_narrator = 2;
  int sentences_min = 24;
  int sentences_max = 40;
  double sentence_length_mean = 22.0;
  double sentence_length_sd = 8.0;
  int sentence_length_min = 3;
  int sentence_length_max = 80;

  double carrier_sentence_rate = 0.34;
  double carrier_rate = 0.073;  // target fraction of any-I tokens
  int annotators = kDefaultAnnotators;
  std::vector<double> span_length_means = {1.1, 1.1, 1.1, 2.3};
  double overlap_prob = 0.55;     // chance an annotator marks a latent carrier
  double noise_rate = 0.004;      // spurious single-token marks per annotator
  double distractor_rate = 0.03;  // content words outside carriers
  double sentiment_share = 0.35;  // sentiment heads among latent carriers
  double stopword_share = 0.45;   // stopwords among background tokens
  double comma_rate = 0.05;

  std::vector<std::string> content_words;
  std::vector<std::string> sentiment_words;
  std::vector<std::string> stop_words;
  std::vector<std::string> filler_words;
  // Used to invent pseudo-words when the explicit lists are empty.
  int content_vocab = 240;
  int sentiment_vocab = 60;
  int stop_vocab = 40;
  int filler_vocab = 400;
  std::uint64_t vocab_seed = 17;
  bool inflect = true;

  // Throws InputError on negative rates, empty vocabulary, or mismatched
  // span length list.
  void validate() const;

  static GenConfig from_kv(const KvConfig& kv);
};

struct SyntheticVocabulary {
  std::vector<std::string> content;
  std::vector<std::string> sentiment;
  std::vector<std::string> stop;
  std::vector<std::string> filler;
  std::vector<double> sentiment_polarity;  // aligned with `sentiment`
};

SyntheticVocabulary build_vocabulary(const GenConfig& config);

Corpus generate_synthetic(const GenConfig& config, std::uint64_t seed);

void write_stopwords(std::ostream& out, const SyntheticVocabulary& vocab);
void write_lexicon(std::ostream& out, const SyntheticVocabulary& vocab,
                   bool inflect);
// Random vectors with a shared per-category direction, covering every
// lowercased surface form the generator can emit.
void write_synthetic_embeddings(std::ostream& out,
                                const SyntheticVocabulary& vocab, int dim,
                                std::uint64_t seed, bool inflect);

}  // namespace ecr

#endif  // ECR_SYNTH_HPP_
