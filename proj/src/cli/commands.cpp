#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mlcrf/cli.hpp"
#include "mlcrf/oracle.hpp"

namespace mlcrf::cli {
namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void require(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing key: ") + key);
}

std::vector<TokenSequence> read_labeled(const std::string& path) {
  auto sentences = read_conll(std::filesystem::path(path));
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    if (!sentences[k].labels) throw Error(path + ": sentence " + std::to_string(k) + " has no labels");
  }
  return sentences;
}

void to_bioes(std::vector<TokenSequence>& sentences) {
  for (auto& s : sentences) *s.labels = bio_to_bioes(*s.labels);
}

Dataset make_dataset(const std::vector<TokenSequence>& sentences, const EmbeddingTable& table,
                     const LabelVocab& vocab) {
  Dataset data;
  data.reserve(sentences.size());
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    const auto& s = sentences[k];
    if (s.tokens.empty()) continue;
    try {
      data.push_back({sequence_to_reps(s, table), vocab.encode(*s.labels)});
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (sentence " + std::to_string(k) + ")");
    }
  }
  return data;
}

std::vector<TokenSequence> tag_sentences(const Potential& potential, const LabelVocab& vocab,
                                         const std::vector<TokenSequence>& sentences,
                                         const EmbeddingTable& table) {
  std::vector<TokenSequence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    TokenSequence tagged{s.tokens, std::vector<std::string>{}};
    if (!s.tokens.empty()) tagged.labels = vocab.decode(predict(potential, sequence_to_reps(s, table)));
    out.push_back(std::move(tagged));
  }
  return out;
}

// Keeps decode results observable so the timed loop is not optimized away.
volatile int g_sink = 0;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int cmd_train(const CliConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.train_path, "train_path");
    require(config.embeddings_path, "embeddings_path");
    require(config.model_path, "model_path");
    try {
      config.train.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }

    auto train_sents = read_labeled(config.train_path);
    std::vector<TokenSequence> dev_sents, test_sents;
    if (!config.dev_path.empty()) dev_sents = read_labeled(config.dev_path);
    if (!config.test_path.empty()) test_sents = read_labeled(config.test_path);
    // Only tagged (BIO-style) label sets are converted; plain tag sets such as
    // part-of-speech labels pass through.
    LabelCorpus train_labels;
    for (const auto& t : train_sents) train_labels.push_back(*t.labels);
    if (config.scheme == "bioes" && detect_scheme(train_labels) != TagScheme::kPlain) {
      to_bioes(train_sents);
      to_bioes(dev_sents);
      to_bioes(test_sents);
    }

    // Dev or test labels unseen in training fail in encode() below.
    const LabelVocab vocab = LabelVocab::build(train_sents);

    std::vector<std::string> warnings;
    const EmbeddingTable table = load_embeddings(std::filesystem::path(config.embeddings_path), {}, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';

    const Dataset train_set = make_dataset(train_sents, table, vocab);
    const Dataset dev_set = make_dataset(dev_sents, table, vocab);

    const TrainResult result = train(config.train, train_set, dev_set, vocab, [&](const EpochRecord& r) {
      nlohmann::json j{{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"dev_score", r.dev_score},
                       {"seconds", r.seconds}};
      out << j.dump() << '\n' << std::flush;
    });
    save_model(std::filesystem::path(config.model_path), result.params, vocab);

    const std::string report_path =
        config.report_path.empty() ? config.model_path + ".report.csv" : config.report_path;
    std::ofstream report(report_path);
    if (!report) throw Error("cannot write report: " + report_path);
    report << "epoch,train_loss,dev_score,seconds\n";
    for (const auto& r : result.report.epochs) {
      report << r.epoch << ',' << r.train_loss << ',' << r.dev_score << ',' << r.seconds << '\n';
    }

    nlohmann::json summary{{"best_epoch", result.report.best_epoch},
                           {"best_dev_score", result.report.best_dev_score},
                           {"metric", dev_metric_name(result.report.metric)},
                           {"train_sequences", result.report.train_sequences}};
    out << summary.dump() << '\n';

    if (!test_sents.empty()) {
      const Potential potential(result.params);
      const auto tagged = tag_sentences(potential, vocab, test_sents, table);
      LabelCorpus gold, pred;
      for (std::size_t k = 0; k < test_sents.size(); ++k) {
        gold.push_back(*test_sents[k].labels);
        pred.push_back(*tagged[k].labels);
      }
      out << "test " << format_summary(span_f1(gold, pred, vocab.scheme())) << '\n';
      if (!config.output_path.empty()) write_conll(std::filesystem::path(config.output_path), tagged);
    }
    return kExitOk;
  });
}

int cmd_tag(const TagOptions& options, std::ostream& /*out*/, std::ostream& err) {
  return guarded(err, [&] {
    require(options.model_path, "model_path");
    require(options.input_path, "input_path");
    require(options.output_path, "output_path");
    require(options.embeddings_path, "embeddings_path");
    const SavedModel model = load_model(std::filesystem::path(options.model_path));
    const EmbeddingTable table = load_embeddings(std::filesystem::path(options.embeddings_path));
    if (table.dim() != model.params.d_h) {
      throw Error("representation dimension mismatch: model expects " + std::to_string(model.params.d_h) +
                  ", embeddings have " + std::to_string(table.dim()));
    }
    const auto sentences = read_conll(std::filesystem::path(options.input_path));
    const Potential potential(model.params);
    write_conll(std::filesystem::path(options.output_path),
                tag_sentences(potential, model.vocab, sentences, table));
    return kExitOk;
  });
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    const auto gold = read_labeled(gold_path);
    const auto pred = read_labeled(pred_path);
    auto misaligned = [&](const std::string& what) {
      err << "error: files are not aligned: " << what << '\n';
      return kExitMisaligned;
    };
    if (gold.size() != pred.size()) {
      return misaligned(std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) + " sentences");
    }
    LabelCorpus g, p;
    for (std::size_t k = 0; k < gold.size(); ++k) {
      if (gold[k].tokens != pred[k].tokens) return misaligned("sentence " + std::to_string(k));
      g.push_back(*gold[k].labels);
      p.push_back(*pred[k].labels);
    }
    // Tagging a BIO file with a model trained on converted data yields
    // BIOES; score both sides in BIOES then.
    const TagScheme gs = detect_scheme(g), ps = detect_scheme(p);
    if (gs == TagScheme::kBio && ps == TagScheme::kBioes) {
      for (auto& y : g) y = bio_to_bioes(y);
    } else if (gs == TagScheme::kBioes && ps == TagScheme::kBio) {
      for (auto& y : p) y = bio_to_bioes(y);
    }
    out << format_summary(span_f1(g, p)) << '\n';
    return kExitOk;
  });
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  Dims dims;
  dims.num_labels = options.num_labels;
  dims.d_h = options.d_h;
  dims.d_t = options.d_t;
  dims.d_r = options.d_r;
  dims.mlp_hidden = options.mlp_hidden;
  ModelParams params = init_params(options.family, dims, derive_seed(RngSeed{options.seed}, 0));
  Rng rng(derive_seed(RngSeed{options.seed}, 1));
  // Vectors start at zero; move them off the origin so their gradients and
  // the terms they gate are exercised.
  for (Vec* v : {&params.mlp_b1, &params.boundary_pre, &params.boundary_post}) {
    for (double& x : v->data) x = 0.5 * rng.normal();
  }
  Mat h(options.length, options.d_h);
  for (double& x : h.data) x = rng.normal();
  const RepresentationSequence reps = make_reps(std::move(h));
  std::vector<int> gold(options.length);
  for (int& y : gold) y = static_cast<int>(rng.below(options.num_labels));

  GradcheckReport report;
  const ScoreLattice lat = score_lattice(params, reps);
  const NllResult nll = nll_and_grad(lat, gold);
  ParamGrad analytic = backprop_lattice(params, reps, nll.grad);
  if (!options.corrupt_field.empty()) {
    bool found = false;
    analytic.for_each_field([&](std::string_view name, auto& t) {
      if (name == options.corrupt_field && !t.data.empty()) {
        t.data[0] += 1.0;
        found = true;
      }
    });
    if (!found) throw ConfigError("no such field: " + options.corrupt_field);
  }
  const ParamGrad numeric = oracle::finite_diff_grad(
      [&](const ModelParams& p) { return nll_and_grad(score_lattice(p, reps), gold).loss; }, params);
  report.fields = oracle::relative_errors(analytic, numeric);

  const double z = log_partition(lat);
  const double z_ref = oracle::brute_force_log_partition(lat);
  report.log_partition_error = std::abs(z - z_ref) / std::max(std::abs(z_ref), 1e-300);
  report.viterbi_match = viterbi(lat).labels == oracle::brute_force_best_path(lat).labels;
  const PairwiseMarginals fast = pairwise_marginals(lat);
  const PairwiseMarginals slow = oracle::brute_force_marginals(lat);
  for (std::size_t k = 0; k < fast.values.size(); ++k) {
    report.marginal_error = std::max(report.marginal_error, std::abs(fast.values[k] - slow.values[k]));
  }
  return report;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GradcheckReport report = run_gradcheck(options);
    std::vector<std::string> bad;
    out << "family=" << family_name(options.family) << " seed=" << options.seed << '\n';
    for (const auto& f : report.fields) {
      out << "grad " << f.field << " rel_err=" << f.relative_error << '\n';
      if (!(f.relative_error < options.threshold)) bad.push_back(f.field);
    }
    out << "log_partition rel_err=" << report.log_partition_error << '\n';
    out << "marginals max_abs_err=" << report.marginal_error << '\n';
    out << "viterbi " << (report.viterbi_match ? "match" : "MISMATCH") << '\n';
    if (!(report.log_partition_error < options.threshold)) bad.push_back("log_partition");
    if (!(report.marginal_error < options.threshold)) bad.push_back("marginals");
    if (!report.viterbi_match) bad.push_back("viterbi");
    out << "max_rel_err=" << oracle::max_relative_error(report.fields) << '\n';
    if (!bad.empty()) {
      err << "gradient check failed:";
      for (const auto& b : bad) err << ' ' << b;
      err << '\n';
      return kExitGradcheck;
    }
    return kExitOk;
  });
}

BenchResult run_bench(const BenchOptions& options) {
  if (options.num_labels < 1 || options.d_h < 1 || options.length < 1 || options.batch < 1 || options.reps < 1) {
    throw ConfigError("bench sizes must be positive");
  }
  Dims dims;
  dims.num_labels = options.num_labels;
  dims.d_h = options.d_h;
  dims.d_t = options.d_t;
  dims.d_r = options.d_r;
  dims.mlp_hidden = options.mlp_hidden;
  ModelParams params = init_params(options.family, dims, derive_seed(RngSeed{options.seed}, 0));
  Rng rng(derive_seed(RngSeed{options.seed}, 1));
  Dataset data;
  for (std::size_t b = 0; b < options.batch; ++b) {
    Mat h(options.length, options.d_h);
    for (double& x : h.data) x = rng.normal();
    std::vector<int> labels(options.length);
    for (int& y : labels) y = static_cast<int>(rng.below(options.num_labels));
    data.push_back({make_reps(std::move(h)), std::move(labels)});
  }
  std::vector<std::size_t> batch(data.size());
  for (std::size_t k = 0; k < batch.size(); ++k) batch[k] = k;

  auto step = [&] {
    const BatchGradient bg = batch_gradient(params, data, batch, options.threads);
    sgd_update(params, bg.grad, batch.size(), 1e-3, 1e-8);
  };
  auto decode = [&] {
    const Potential potential(params);
    for (const auto& inst : data) g_sink = predict(potential, inst.reps).front();
  };

  step();
  decode();
  BenchResult result;
  auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < options.reps; ++r) step();
  result.train_step_ms = elapsed_ms(start) / static_cast<double>(options.reps);
  start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < options.reps; ++r) decode();
  result.decode_ms = elapsed_ms(start) / static_cast<double>(options.reps);
  return result;
}

std::string bench_csv_header() { return "family,L,d_h,d_t,d_r,M,batch,reps,train_step_ms,decode_ms"; }

std::string bench_csv_row(const BenchOptions& o, const BenchResult& r) {
  std::ostringstream s;
  s << family_name(o.family) << ',' << o.num_labels << ',' << o.d_h << ',' << o.d_t << ',' << o.d_r << ','
    << o.length << ',' << o.batch << ',' << o.reps << ',' << r.train_step_ms << ',' << r.decode_ms;
  return s.str();
}

int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const BenchResult r = run_bench(options);
    out << bench_csv_row(options, r) << '\n';
    return kExitOk;
  });
}

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(options.output_dir, "output_dir");
    const oracle::SyntheticCorpus corpus = oracle::generate_synthetic(options.spec);
    oracle::write_synthetic(corpus, options.output_dir);
    out << "wrote " << corpus.train.size() << '/' << corpus.dev.size() << '/' << corpus.test.size()
        << " sequences to " << options.output_dir << '\n';
    return kExitOk;
  });
}

}  // namespace mlcrf::cli
