#include "ecr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecr/corpus.hpp"
#include "ecr/crf.hpp"
#include "ecr/cv.hpp"
#include "ecr/embeddings.hpp"
#include "ecr/error.hpp"
#include "ecr/eval.hpp"
#include "ecr/kv_config.hpp"
#include "ecr/lexicon.hpp"
#include "ecr/rng.hpp"
#include "ecr/spans.hpp"
#include "ecr/synth.hpp"
#include "ecr/tagger_nn.hpp"

namespace ecr {

namespace {

struct Options {
  std::string corpus;
  std::string embeddings;
  std::string stopwords;
  std::string lexicon;
  std::string config;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string segmentation;
  double threshold = kDefaultThreshold;
  std::string match = "e";
  std::string custom;
  std::string format = "html";
  std::size_t limit = 0;
  bool keep_punct = false;

  std::string stopwords_out;
  std::string lexicon_out;
  std::string embeddings_out;
  int emb_dim = 100;
};

Corpus load_corpus(const Options& o) {
  if (o.corpus.empty()) throw InputError("--corpus is required");
  return preprocess(parse_corpus(o.corpus), !o.keep_punct);
}

StopwordList load_stopwords(const Options& o) {
  return o.stopwords.empty() ? StopwordList() : StopwordList::load(o.stopwords);
}

SentimentLexicon load_lexicon(const Options& o) {
  return o.lexicon.empty() ? SentimentLexicon()
                           : SentimentLexicon::load(o.lexicon);
}

KvConfig load_config(const Options& o) {
  return o.config.empty() ? KvConfig() : KvConfig::load(o.config);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

// Either a neural checkpoint or a CRF text model, told apart by the header.
class LoadedModel {
 public:
  static LoadedModel load(const std::string& path) {
    if (path.empty()) throw InputError("--model is required");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open model file: " + path);
    char head[7] = {};
    in.read(head, sizeof head);
    in.clear();
    in.seekg(0);
    LoadedModel m;
    if (std::string(head, sizeof head) == "ecr-crf") {
      m.crf_.emplace(crf::CrfModel::load(in, path));
    } else {
      m.nn_.emplace(nn::TaggerModel::load(in));
    }
    return m;
  }

  bool is_crf() const { return crf_.has_value(); }

  // P(I) per token: network output or CRF marginals.
  std::vector<double> probabilities(const Sequence& s,
                                    const SentimentLexicon& lexicon) const {
    if (crf_) return crf::crf_marginals(*crf_, crf_->encode(s, lexicon));
    return nn::predict(*nn_, s);
  }

  // Thresholded network output or the Viterbi path.
  IoLabels labels(const Sequence& s, const std::vector<double>& p_inside,
                  const SentimentLexicon& lexicon, double threshold) const {
    if (crf_) return crf::viterbi_decode(*crf_, crf_->encode(s, lexicon));
    return threshold_labels(p_inside, threshold);
  }

 private:
  std::optional<nn::TaggerModel> nn_;
  std::optional<crf::CrfModel> crf_;
};

SegmentationStrategy segmentation_or(const Options& o,
                                     SegmentationStrategy fallback) {
  return o.segmentation.empty() ? fallback : parse_segmentation(o.segmentation);
}

NamedMatch selected_match(const Options& o) {
  if (o.match == "custom") {
    if (o.custom.empty()) {
      throw InputError("--match custom needs --custom mode:position:lexical:strip");
    }
    return {"custom", parse_match_config(o.custom)};
  }
  if (o.match.size() != 1) throw InputError("unknown --match '" + o.match + "'");
  return {o.match, named_match_config(o.match[0])};
}

void check_threshold(double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw InputError("--threshold must lie in (0, 1]");
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------

int run_synth(const Options& o, std::ostream& out) {
  const KvConfig kv = load_config(o);
  const GenConfig config = GenConfig::from_kv(kv);
  const std::uint64_t seed = o.seed.value_or(1);
  const Corpus corpus = generate_synthetic(config, seed);
  if (o.out.empty()) {
    write_corpus(out, corpus);
  } else {
    auto file = open_output(o.out);
    write_corpus(file, corpus);
  }
  const SyntheticVocabulary vocab = build_vocabulary(config);
  if (!o.stopwords_out.empty()) {
    auto file = open_output(o.stopwords_out);
    write_stopwords(file, vocab);
  }
  if (!o.lexicon_out.empty()) {
    auto file = open_output(o.lexicon_out);
    write_lexicon(file, vocab, config.inflect);
  }
  if (!o.embeddings_out.empty()) {
    if (o.emb_dim < 1) throw InputError("--emb-dim must be positive");
    auto file = open_output(o.embeddings_out);
    write_synthetic_embeddings(file, vocab, o.emb_dim, derive_seed(seed, 3),
                               config.inflect);
  }
  return kExitOk;
}

int run_stats(const Options& o, std::ostream& out) {
  if (o.corpus.empty()) throw InputError("--corpus is required");
  print_stats(out, corpus_stats(parse_corpus(o.corpus)));
  return kExitOk;
}

int run_train(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw InputError("--model is required (output path)");
  const Corpus corpus = load_corpus(o);
  ExperimentConfig config = ExperimentConfig::from_kv(load_config(o));
  if (o.seed) config.seed = *o.seed;
  config.train_segmentation = segmentation_or(o, config.train_segmentation);

  // One narrator group is held out for model selection; the rest trains.
  const auto splits =
      logo_splits(corpus_narrators(corpus), config.folds, config.seed);
  std::vector<Narrative> train_n, dev_n;
  for (const Narrative& n : corpus.narratives) {
    const bool dev = std::find(splits[0].dev.begin(), splits[0].dev.end(),
                               n.narrator_id) != splits[0].dev.end();
    (dev ? dev_n : train_n).push_back(n);
  }
  const auto train = segment(train_n, config.train_segmentation);
  const auto dev = segment(dev_n, config.test_segmentation);

  if (config.model == ModelKind::kCrf) {
    crf::CrfConfig cc = config.crf;
    cc.seed = config.seed;
    const auto result = crf::crf_train(train, load_lexicon(o), cc);
    result.model.save(o.model);
    out << "model\tcrf\ntrain_sequences\t" << train.size() << "\nfeatures\t"
        << result.model.feature_count() << "\nobjective\t"
        << num(result.objective.empty() ? 0.0 : result.objective.back())
        << '\n';
    return kExitOk;
  }
  nn::HyperParams hp = config.nn;
  hp.seed = config.seed;
  EmbeddingTable table;
  if (!o.embeddings.empty()) {
    table = load_embeddings(o.embeddings);
  } else {
    std::vector<std::string> tokens;
    for (const Sequence& s : train) {
      for (const AnnotatedToken& t : s.tokens) tokens.push_back(t.surface);
    }
    table = random_embeddings(tokens, hp.emb_dim, derive_seed(config.seed, 7));
  }
  hp.emb_dim = table.dim();
  const nn::TrainResult result = nn::train(train, dev, hp, table);
  result.model.save(std::filesystem::path(o.model));
  out << "model\tneural\ntrain_sequences\t" << train.size()
      << "\ndev_sequences\t" << dev.size() << "\nbest_epoch\t"
      << result.best_epoch << '\n';
  for (const nn::EpochLog& e : result.log) {
    out << "epoch\t" << e.epoch << "\tloss\t" << num(e.train_loss)
        << "\tdev_f1\t" << num(e.dev_f1) << '\n';
  }
  return kExitOk;
}

int run_predict(const Options& o, std::ostream& out) {
  const Corpus corpus = load_corpus(o);
  const LoadedModel model = LoadedModel::load(o.model);
  const SentimentLexicon lexicon = load_lexicon(o);
  check_threshold(o.threshold);
  const auto seqs =
      segment(corpus, segmentation_or(o, SegmentationStrategy::kSentAll));
  std::ostringstream text;
  text << "narrative_id\tsentence_id\ttoken_index\tsurface\tp_i\tlabel\n";
  for (const Sequence& s : seqs) {
    const auto p = model.probabilities(s, lexicon);
    const auto labels = model.labels(s, p, lexicon, o.threshold);
    for (std::size_t t = 0; t < s.size(); ++t) {
      text << s.narrative_id << '\t' << s.token_sentence_ids[t] << '\t'
           << s.tokens[t].index_in_narrative << '\t' << s.tokens[t].surface
           << '\t' << num(p[t]) << '\t'
           << (labels[t] == IoLabel::kI ? 'I' : 'O') << '\n';
    }
  }
  if (o.out.empty()) {
    out << text.str();
  } else {
    auto file = open_output(o.out);
    file << text.str();
  }
  return kExitOk;
}

int run_eval(const Options& o, std::ostream& out) {
  const Corpus corpus = load_corpus(o);
  const LoadedModel model = LoadedModel::load(o.model);
  const SentimentLexicon lexicon = load_lexicon(o);
  const StopwordList stopwords = load_stopwords(o);
  const NamedMatch match = selected_match(o);
  check_threshold(o.threshold);
  const auto seqs =
      segment(corpus, segmentation_or(o, SegmentationStrategy::kSentAll));

  IoLabels predicted, reference;
  std::vector<CarrierSpan> predicted_spans, reference_spans_all;
  for (const Sequence& s : seqs) {
    const auto labels = model.labels(s, model.probabilities(s, lexicon),
                                     lexicon, o.threshold);
    const IoLabels ref = reference_labels(s);
    predicted.insert(predicted.end(), labels.begin(), labels.end());
    reference.insert(reference.end(), ref.begin(), ref.end());
    for (auto& span : extract_spans(labels, s)) {
      predicted_spans.push_back(std::move(span));
    }
    for (auto& span : reference_spans(s)) {
      reference_spans_all.push_back(std::move(span));
    }
  }
  const TokenMetrics token = token_prf(predicted, reference);
  const Prf carrier =
      carrier_prf(predicted_spans, reference_spans_all, match.config, stopwords);
  const double iaa =
      inter_annotator_agreement(seqs, corpus.annotators, match.config, stopwords);
  out << "sequences\t" << seqs.size() << '\n'
      << "token.precision_i\t" << num(token.precision_class_i) << '\n'
      << "token.recall_i\t" << num(token.recall_class_i) << '\n'
      << "token.f1_i\t" << num(token.f1_class_i) << '\n'
      << "token.f1_micro\t" << num(token.f1_micro) << '\n'
      << "match\t" << match.id << '\t' << describe(match.config) << '\n'
      << "carrier.precision\t" << num(carrier.precision) << '\n'
      << "carrier.recall\t" << num(carrier.recall) << '\n'
      << "carrier.f1\t" << num(carrier.f1) << '\n'
      << "iaa\t" << num(iaa) << '\n';
  if (!lexicon.empty()) {
    const SentimentSplit pred = sentiment_content_split(predicted_spans, lexicon);
    const SentimentSplit ref =
        sentiment_content_split(reference_spans_all, lexicon);
    const auto frac = [](const std::optional<double>& v) {
      return v ? num(*v) : std::string("NA");
    };
    out << "content_fraction.predicted\t" << frac(pred.mean_content_fraction)
        << '\n'
        << "content_fraction.reference\t" << frac(ref.mean_content_fraction)
        << '\n';
  }
  if (!o.out.empty()) {
    auto file = open_output(o.out);
    write_span_dump(file, predicted_spans);
  }
  return kExitOk;
}

int run_crossval(const Options& o, std::ostream& out) {
  const Corpus corpus = load_corpus(o);
  ExperimentConfig config = ExperimentConfig::from_kv(load_config(o));
  if (o.seed) config.seed = *o.seed;
  if (o.jobs > 0) config.jobs = o.jobs;
  if (!o.segmentation.empty()) {
    config.train_segmentation = parse_segmentation(o.segmentation);
  }
  ExperimentResources resources;
  if (!o.embeddings.empty()) resources.embeddings = load_embeddings(o.embeddings);
  resources.stopwords = load_stopwords(o);
  resources.lexicon = load_lexicon(o);
  const ExperimentReport report = run_experiment(corpus, config, resources);
  if (!o.out.empty()) write_report(report, o.out);
  out << render_report_text(report);
  return kExitOk;
}

int run_heatmap(const Options& o, std::ostream& out) {
  const Corpus corpus = load_corpus(o);
  const LoadedModel model = LoadedModel::load(o.model);
  const SentimentLexicon lexicon = load_lexicon(o);
  HeatmapFormat format;
  if (o.format == "html") {
    format = HeatmapFormat::kHtml;
  } else if (o.format == "ansi") {
    format = HeatmapFormat::kAnsi;
  } else {
    throw InputError("--format must be html or ansi");
  }
  const auto seqs =
      segment(corpus, segmentation_or(o, SegmentationStrategy::kSentAll));
  std::vector<HeatmapRow> rows;
  for (const Sequence& s : seqs) {
    if (o.limit > 0 && rows.size() >= o.limit) break;
    HeatmapRow row;
    row.label = s.narrative_id + ":" + std::to_string(s.sentence_id);
    row.predicted = model.probabilities(s, lexicon);
    for (const AnnotatedToken& t : s.tokens) {
      row.tokens.push_back(t.surface);
      row.reference.push_back(build_distribution(t).p_i);
    }
    rows.push_back(std::move(row));
  }
  const std::string text = heatmap_export(rows, format);
  if (o.out.empty()) {
    out << text;
  } else {
    auto file = open_output(o.out);
    file << text;
  }
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Emotion carrier recognition toolkit", "ecr"};
  app.require_subcommand(1, 1);
  Options o;

  const auto corpus_flag = [&](CLI::App* c) {
    c->add_option("--corpus", o.corpus, "Annotated TSV corpus");
    c->add_flag("--keep-punct", o.keep_punct, "Keep punctuation tokens");
  };
  const auto seed_flag = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Seed for every stochastic step");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--config", o.config, "Generator key-value config");
  synth->add_option("--out", o.out, "Corpus output path (stdout if absent)");
  synth->add_option("--stopwords-out", o.stopwords_out);
  synth->add_option("--lexicon-out", o.lexicon_out);
  synth->add_option("--embeddings-out", o.embeddings_out);
  synth->add_option("--emb-dim", o.emb_dim);
  seed_flag(synth);

  CLI::App* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--corpus", o.corpus, "Annotated TSV corpus");

  CLI::App* train = app.add_subcommand("train", "Train a tagger");
  corpus_flag(train);
  train->add_option("--config", o.config, "Experiment key-value config");
  train->add_option("--embeddings", o.embeddings);
  train->add_option("--lexicon", o.lexicon);
  train->add_option("--model", o.model, "Model output path");
  train->add_option("--segmentation", o.segmentation,
                    "narrative, sentall or sentcarr");
  seed_flag(train);

  CLI::App* predict = app.add_subcommand("predict", "Per-token predictions");
  corpus_flag(predict);
  predict->add_option("--model", o.model);
  predict->add_option("--lexicon", o.lexicon);
  predict->add_option("--segmentation", o.segmentation);
  predict->add_option("--threshold", o.threshold);
  predict->add_option("--out", o.out);

  CLI::App* eval = app.add_subcommand("eval", "Score a model on a corpus");
  corpus_flag(eval);
  eval->add_option("--model", o.model);
  eval->add_option("--stopwords", o.stopwords);
  eval->add_option("--lexicon", o.lexicon);
  eval->add_option("--segmentation", o.segmentation);
  eval->add_option("--threshold", o.threshold);
  eval->add_option("--match", o.match, "a, b, c, d, e or custom")
      ->check(CLI::IsMember({"a", "b", "c", "d", "e", "custom"}));
  eval->add_option("--custom", o.custom, "mode:position:lexical:strip|keep");
  eval->add_option("--out", o.out, "Predicted span dump");

  CLI::App* crossval = app.add_subcommand("crossval", "Grouped cross-validation");
  corpus_flag(crossval);
  crossval->add_option("--config", o.config);
  crossval->add_option("--embeddings", o.embeddings);
  crossval->add_option("--stopwords", o.stopwords);
  crossval->add_option("--lexicon", o.lexicon);
  crossval->add_option("--segmentation", o.segmentation,
                       "Training segmentation");
  crossval->add_option("--jobs", o.jobs, "Folds run in parallel");
  crossval->add_option("--out", o.out, "Report directory");
  seed_flag(crossval);

  CLI::App* heatmap = app.add_subcommand("heatmap", "Probability heatmaps");
  corpus_flag(heatmap);
  heatmap->add_option("--model", o.model);
  heatmap->add_option("--lexicon", o.lexicon);
  heatmap->add_option("--segmentation", o.segmentation);
  heatmap->add_option("--format", o.format, "html or ansi");
  heatmap->add_option("--limit", o.limit, "Maximum number of rows");
  heatmap->add_option("--out", o.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitInput;
  }

  try {
    if (synth->parsed()) return run_synth(o, out);
    if (stats->parsed()) return run_stats(o, out);
    if (train->parsed()) return run_train(o, out);
    if (predict->parsed()) return run_predict(o, out);
    if (eval->parsed()) return run_eval(o, out);
    if (crossval->parsed()) return run_crossval(o, out);
    if (heatmap->parsed()) return run_heatmap(o, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace ecr
