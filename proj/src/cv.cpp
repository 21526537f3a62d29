#include "ecr/cv.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "ecr/error.hpp"
#include "ecr/rng.hpp"
#include "ecr/spans.hpp"

namespace ecr {

std::vector<std::string> corpus_narrators(const Corpus& corpus) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const Narrative& n : corpus.narratives) {
    if (seen.insert(n.narrator_id).second) out.push_back(n.narrator_id);
  }
  return out;
}

std::vector<FoldSplit> logo_splits(const std::vector<std::string>& narrators,
                                   int k, std::uint64_t seed) {
  if (k < 2) throw InputError("logo_splits: need at least 2 folds");
  std::vector<std::string> order = narrators;
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw InputError("logo_splits: duplicate narrator id");
  }
  if (static_cast<std::size_t>(k) > order.size()) {
    throw InputError("logo_splits: " + std::to_string(k) + " folds need at least " +
                     std::to_string(k) + " narrators, got " +
                     std::to_string(order.size()));
  }
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(k));
  const std::size_t base = order.size() / k;
  const std::size_t extra = order.size() % k;
  std::size_t at = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    groups[g].assign(order.begin() + at, order.begin() + at + size);
    at += size;
  }

  std::vector<FoldSplit> folds;
  for (int i = 0; i < k; ++i) {
    FoldSplit split;
    split.fold_id = i;
    const int dev = (i + 1) % k;
    split.test = groups[i];
    split.dev = groups[dev];
    for (int g = 0; g < k; ++g) {
      if (g == i || g == dev) continue;
      split.train.insert(split.train.end(), groups[g].begin(), groups[g].end());
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (test_segmentation == SegmentationStrategy::kSentCarr) {
    throw InputError("experiment: sentcarr cannot be used for testing");
  }
  if (folds < 2) throw InputError("experiment: folds must be >= 2");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw InputError("experiment: threshold must lie in (0, 1]");
  }
  if (jobs < 1) throw InputError("experiment: jobs must be >= 1");
  nn.validate();
  if (!(crf.l2 >= 0.0) || !(crf.learning_rate >= 0.0) || crf.iterations < 0 ||
      crf.features.window < 0 || crf.features.max_suffix < 0 ||
      crf.features.pos_prefix < 0) {
    throw InputError("experiment: invalid crf settings");
  }
}

std::vector<NamedMatch> ExperimentConfig::effective_matches() const {
  if (!matches.empty()) return matches;
  std::vector<NamedMatch> out;
  for (char id : named_match_ids()) {
    out.push_back({std::string(1, id), named_match_config(id)});
  }
  return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  std::set<std::string> known = {"model",     "train_segmentation",
                                 "test_segmentation", "folds",
                                 "seed",      "threshold",
                                 "match",     "jobs",
                                 "crf.l2",    "crf.lr",
                                 "crf.iterations", "crf.window",
                                 "crf.max_suffix", "crf.pos_prefix"};
  const KvConfig nn_defaults = nn::HyperParams().to_kv();
  for (const auto& [key, value] : nn_defaults.entries()) {
    if (key != "seed") known.insert("nn." + key);
  }
  kv.reject_unknown(known);

  ExperimentConfig c;
  const std::string model = kv.get_string("model", "neural");
  if (model == "neural") {
    c.model = ModelKind::kNeural;
  } else if (model == "crf") {
    c.model = ModelKind::kCrf;
  } else {
    throw InputError("experiment: model must be neural or crf, got '" + model +
                     "'");
  }
  c.train_segmentation =
      parse_segmentation(kv.get_string("train_segmentation", "sentcarr"));
  c.test_segmentation =
      parse_segmentation(kv.get_string("test_segmentation", "sentall"));
  c.folds = static_cast<int>(kv.get_int("folds", c.folds));
  c.seed = static_cast<std::uint64_t>(
      kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.threshold = kv.get_double("threshold", c.threshold);
  c.jobs = static_cast<int>(kv.get_int("jobs", c.jobs));
  int custom = 0;
  for (const std::string& entry : kv.get_list("match")) {
    if (entry.size() == 1) {
      c.matches.push_back({entry, named_match_config(entry[0])});
    } else {
      ++custom;
      c.matches.push_back(
          {custom == 1 ? "custom" : "custom" + std::to_string(custom),
           parse_match_config(entry)});
    }
  }
  c.nn = nn::HyperParams::from_kv(kv, "nn.");
  c.crf.l2 = kv.get_double("crf.l2", c.crf.l2);
  c.crf.learning_rate = kv.get_double("crf.lr", c.crf.learning_rate);
  c.crf.iterations =
      static_cast<int>(kv.get_int("crf.iterations", c.crf.iterations));
  c.crf.features.window =
      static_cast<int>(kv.get_int("crf.window", c.crf.features.window));
  c.crf.features.max_suffix =
      static_cast<int>(kv.get_int("crf.max_suffix", c.crf.features.max_suffix));
  c.crf.features.pos_prefix =
      static_cast<int>(kv.get_int("crf.pos_prefix", c.crf.features.pos_prefix));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

std::vector<Narrative> select(const Corpus& corpus,
                              const std::vector<std::string>& narrators) {
  const std::unordered_set<std::string> wanted(narrators.begin(),
                                               narrators.end());
  std::vector<Narrative> out;
  for (const Narrative& n : corpus.narratives) {
    if (wanted.count(n.narrator_id)) out.push_back(n);
  }
  return out;
}

double inside_rate(const std::vector<Narrative>& narratives) {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (const Narrative& n : narratives) {
    for (const Sentence& s : n.sentences) {
      for (const AnnotatedToken& t : s.tokens) {
        inside += t.any_inside() ? 1 : 0;
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(inside) / total;
}

IoLabels concat(const std::vector<IoLabels>& parts) {
  IoLabels out;
  for (const IoLabels& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

FoldResult run_fold(const Corpus& corpus, const ExperimentConfig& config,
                    const std::vector<NamedMatch>& matches,
                    const ExperimentResources& resources,
                    const EmbeddingTable& embeddings, const FoldSplit& split) {
  FoldResult result;
  result.split = split;
  const std::vector<Narrative> train_n = select(corpus, split.train);
  const std::vector<Narrative> dev_n = select(corpus, split.dev);
  const std::vector<Narrative> test_n = select(corpus, split.test);
  const auto train = segment(train_n, config.train_segmentation);
  const auto dev = segment(dev_n, config.test_segmentation);
  const auto test = segment(test_n, config.test_segmentation);
  result.train_sequences = train.size();
  result.dev_sequences = dev.size();
  result.test_sequences = test.size();
  const std::uint64_t fold_seed =
      derive_seed(config.seed, 100 + static_cast<std::uint64_t>(split.fold_id));

  std::vector<IoLabels> predicted;
  predicted.reserve(test.size());
  if (config.model == ModelKind::kNeural) {
    nn::HyperParams hp = config.nn;
    hp.seed = fold_seed;
    hp.emb_dim = embeddings.dim();
    nn::TrainResult trained = nn::train(train, dev, hp, embeddings);
    result.best_epoch = trained.best_epoch;
    for (const Sequence& s : test) {
      predicted.push_back(
          threshold_labels(nn::predict(trained.model, s), config.threshold));
    }
  } else {
    crf::CrfConfig cc = config.crf;
    cc.seed = fold_seed;
    crf::CrfTrainResult trained = crf::crf_train(train, resources.lexicon, cc);
    result.best_epoch = cc.iterations;
    for (const Sequence& s : test) {
      predicted.push_back(
          crf::viterbi_decode(trained.model,
                              trained.model.encode(s, resources.lexicon)));
    }
  }

  std::vector<IoLabels> reference;
  std::vector<CarrierSpan> predicted_spans;
  std::vector<CarrierSpan> reference_spans_all;
  for (std::size_t i = 0; i < test.size(); ++i) {
    reference.push_back(reference_labels(test[i]));
    result.test_tokens += test[i].size();
    for (CarrierSpan& s : extract_spans(predicted[i], test[i])) {
      predicted_spans.push_back(std::move(s));
    }
    for (CarrierSpan& s : reference_spans(test[i])) {
      reference_spans_all.push_back(std::move(s));
    }
  }
  result.token = token_prf(concat(predicted), concat(reference));
  for (const NamedMatch& m : matches) {
    result.carrier.push_back(carrier_prf(predicted_spans, reference_spans_all,
                                         m.config, resources.stopwords));
    result.agreement.push_back(inter_annotator_agreement(
        test, corpus.annotators, m.config, resources.stopwords));
  }

  std::vector<Narrative> seen = train_n;
  seen.insert(seen.end(), dev_n.begin(), dev_n.end());
  const double prior = inside_rate(seen);
  const double prevalence = inside_rate(test_n);
  result.random_prior_f1 = prior + prevalence > 0.0
                               ? 2.0 * prior * prevalence / (prior + prevalence)
                               : 0.0;
  return result;
}

}  // namespace

ExperimentReport run_experiment(const Corpus& corpus,
                                const ExperimentConfig& config,
                                const ExperimentResources& resources) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  report.matches = config.effective_matches();
  const auto splits =
      logo_splits(corpus_narrators(corpus), config.folds, config.seed);

  EmbeddingTable random_table;
  const EmbeddingTable* embeddings = nullptr;
  if (config.model == ModelKind::kNeural) {
    if (resources.embeddings) {
      embeddings = &*resources.embeddings;
    } else {
      std::vector<std::string> tokens;
      for (const Narrative& n : corpus.narratives) {
        for (const Sentence& s : n.sentences) {
          for (const AnnotatedToken& t : s.tokens) tokens.push_back(t.surface);
        }
      }
      random_table = random_embeddings(tokens, config.nn.emb_dim,
                                       derive_seed(config.seed, 7));
      embeddings = &random_table;
    }
  } else {
    embeddings = &random_table;
  }

  report.folds.resize(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < splits.size(); i = next++) {
      try {
        report.folds[i] = run_fold(corpus, config, report.matches, resources,
                                   *embeddings, splits[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs =
      std::min<std::size_t>(static_cast<std::size_t>(config.jobs), splits.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

std::vector<double> fold_values(const ExperimentReport& report,
                                double (*get)(const FoldResult&)) {
  std::vector<double> values;
  for (const FoldResult& f : report.folds) values.push_back(get(f));
  return values;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

MeanStd over(const ExperimentReport& report,
             const std::function<double(const FoldResult&)>& get) {
  std::vector<double> values;
  for (const FoldResult& f : report.folds) values.push_back(get(f));
  return aggregate_folds(values);
}

std::string model_name(const ExperimentConfig& c) {
  return std::string(c.model == ModelKind::kNeural ? "neural" : "crf") + "(" +
         std::string(segmentation_name(c.train_segmentation)) + ";" +
         std::string(segmentation_name(c.test_segmentation)) + ")";
}

std::size_t total(const ExperimentReport& report,
                  std::size_t FoldResult::*field) {
  std::size_t sum = 0;
  for (const FoldResult& f : report.folds) sum += f.*field;
  return sum;
}

}  // namespace

std::string render_token_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "model\ttrain_sequences\ttest_sequences\tprecision_i\trecall_i\tf1_i"
         "\tf1_micro\trandom_prior_f1_i\n";
  out << model_name(report.config) << '\t'
      << total(report, &FoldResult::train_sequences) << '\t'
      << total(report, &FoldResult::test_sequences) << '\t'
      << format_mean_std(over(report, [](const FoldResult& f) {
           return f.token.precision_class_i;
         })) << '\t'
      << format_mean_std(over(report, [](const FoldResult& f) {
           return f.token.recall_class_i;
         })) << '\t'
      << format_mean_std(over(report, [](const FoldResult& f) {
           return f.token.f1_class_i;
         })) << '\t'
      << format_mean_std(
             over(report, [](const FoldResult& f) { return f.token.f1_micro; }))
      << '\t'
      << format_mean_std(over(report, [](const FoldResult& f) {
           return f.random_prior_f1;
         }))
      << '\n';
  return out.str();
}

std::string render_agreement_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "config\tdescription\tprecision\trecall\tf1\tiaa\n";
  for (std::size_t m = 0; m < report.matches.size(); ++m) {
    out << report.matches[m].id << '\t' << describe(report.matches[m].config)
        << '\t'
        << format_mean_std(over(report, [m](const FoldResult& f) {
             return f.carrier[m].precision;
           })) << '\t'
        << format_mean_std(over(report, [m](const FoldResult& f) {
             return f.carrier[m].recall;
           })) << '\t'
        << format_mean_std(over(report, [m](const FoldResult& f) {
             return f.carrier[m].f1;
           })) << '\t'
        << format_mean_std(over(report, [m](const FoldResult& f) {
             return f.agreement[m];
           }))
        << '\n';
  }
  return out.str();
}

std::string render_folds_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "fold\ttrain_narrators\tdev_narrators\ttest_narrators\ttrain_sequences"
         "\tdev_sequences\ttest_sequences\ttest_tokens\tbest_epoch\tprecision_i"
         "\trecall_i\tf1_i\tf1_micro\trandom_prior_f1_i\n";
  const auto join = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) s += ',';
      s += ids[i];
    }
    return s;
  };
  for (const FoldResult& f : report.folds) {
    out << f.split.fold_id << '\t' << join(f.split.train) << '\t'
        << join(f.split.dev) << '\t' << join(f.split.test) << '\t'
        << f.train_sequences << '\t' << f.dev_sequences << '\t'
        << f.test_sequences << '\t' << f.test_tokens << '\t' << f.best_epoch
        << '\t' << fixed(f.token.precision_class_i, 6) << '\t'
        << fixed(f.token.recall_class_i, 6) << '\t'
        << fixed(f.token.f1_class_i, 6) << '\t' << fixed(f.token.f1_micro, 6)
        << '\t' << fixed(f.random_prior_f1, 6) << '\n';
  }
  return out.str();
}

std::string render_report_kv(const ExperimentReport& report) {
  std::ostringstream out;
  const ExperimentConfig& c = report.config;
  out << "model = " << (c.model == ModelKind::kNeural ? "neural" : "crf")
      << '\n'
      << "train_segmentation = " << segmentation_name(c.train_segmentation)
      << '\n'
      << "test_segmentation = " << segmentation_name(c.test_segmentation)
      << '\n'
      << "folds = " << report.folds.size() << '\n'
      << "seed = " << c.seed << '\n'
      << "threshold = " << exact(c.threshold) << '\n'
      << "train_sequences = " << total(report, &FoldResult::train_sequences)
      << '\n'
      << "test_sequences = " << total(report, &FoldResult::test_sequences)
      << '\n';
  const auto put = [&](const std::string& key, const MeanStd& v) {
    out << key << ".mean = " << exact(v.mean) << '\n'
        << key << ".std = " << exact(v.std) << '\n';
  };
  put("token.precision_i", over(report, [](const FoldResult& f) {
        return f.token.precision_class_i;
      }));
  put("token.recall_i", over(report, [](const FoldResult& f) {
        return f.token.recall_class_i;
      }));
  put("token.f1_i",
      over(report, [](const FoldResult& f) { return f.token.f1_class_i; }));
  put("token.f1_micro",
      over(report, [](const FoldResult& f) { return f.token.f1_micro; }));
  put("token.random_prior_f1_i",
      over(report, [](const FoldResult& f) { return f.random_prior_f1; }));
  for (std::size_t m = 0; m < report.matches.size(); ++m) {
    const std::string key = "match." + report.matches[m].id;
    out << key << ".description = " << describe(report.matches[m].config)
        << '\n';
    put(key + ".precision", over(report, [m](const FoldResult& f) {
          return f.carrier[m].precision;
        }));
    put(key + ".recall", over(report, [m](const FoldResult& f) {
          return f.carrier[m].recall;
        }));
    put(key + ".f1", over(report, [m](const FoldResult& f) {
          return f.carrier[m].f1;
        }));
    put(key + ".iaa",
        over(report, [m](const FoldResult& f) { return f.agreement[m]; }));
  }
  return out.str();
}

std::string render_report_text(const ExperimentReport& report) {
  std::ostringstream out;
  out << "Experiment " << model_name(report.config) << ", "
      << report.folds.size() << " folds, seed " << report.config.seed << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %8s %8s %12s %12s %12s %12s\n",
                "fold", "#train", "#test", "P(I)", "R(I)", "F1(I)", "F1(micro)");
  out << line;
  for (const FoldResult& f : report.folds) {
    std::snprintf(line, sizeof line, "%-6d %8zu %8zu %12.1f %12.1f %12.1f %12.1f\n",
                  f.split.fold_id, f.train_sequences, f.test_sequences,
                  100 * f.token.precision_class_i, 100 * f.token.recall_class_i,
                  100 * f.token.f1_class_i, 100 * f.token.f1_micro);
    out << line;
  }
  std::snprintf(
      line, sizeof line, "%-6s %8zu %8zu %12s %12s %12s %12s\n\n", "all",
      total(report, &FoldResult::train_sequences),
      total(report, &FoldResult::test_sequences),
      format_mean_std(over(report, [](const FoldResult& f) {
        return f.token.precision_class_i;
      })).c_str(),
      format_mean_std(over(report, [](const FoldResult& f) {
        return f.token.recall_class_i;
      })).c_str(),
      format_mean_std(
          over(report, [](const FoldResult& f) { return f.token.f1_class_i; }))
          .c_str(),
      format_mean_std(
          over(report, [](const FoldResult& f) { return f.token.f1_micro; }))
          .c_str());
  out << line;
  std::snprintf(line, sizeof line, "%-8s %12s %12s %12s %12s  %s\n", "match",
                "P", "R", "F1", "IAA", "criteria");
  out << line;
  for (std::size_t m = 0; m < report.matches.size(); ++m) {
    std::snprintf(
        line, sizeof line, "%-8s %12s %12s %12s %12s  %s\n",
        report.matches[m].id.c_str(),
        format_mean_std(over(report, [m](const FoldResult& f) {
          return f.carrier[m].precision;
        })).c_str(),
        format_mean_std(over(report, [m](const FoldResult& f) {
          return f.carrier[m].recall;
        })).c_str(),
        format_mean_std(over(report, [m](const FoldResult& f) {
          return f.carrier[m].f1;
        })).c_str(),
        format_mean_std(over(report, [m](const FoldResult& f) {
          return f.agreement[m];
        })).c_str(),
        describe(report.matches[m].config).c_str());
    out << line;
  }
  return out.str();
}

void write_report(const ExperimentReport& report,
                  const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) {
    throw InputError("cannot create report directory " + directory.string() +
                     ": " + ec.message());
  }
  const auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(directory / name, std::ios::binary);
    out << text;
    if (!out) throw InputError("cannot write " + (directory / name).string());
  };
  write("token.tsv", render_token_tsv(report));
  write("agreement.tsv", render_agreement_tsv(report));
  write("folds.tsv", render_folds_tsv(report));
  write("report.kv", render_report_kv(report));
  write("report.txt", render_report_text(report));
}

}  // namespace ecr
