#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlcrf/cli.hpp"

namespace mlcrf::cli {
namespace {

// Config keys that can also be given as --key on the train command line.
const char* const kOverridableKeys[] = {
    "family",      "learning_rate",  "batch_size", "l2",         "max_epochs",    "patience",
    "d_t",         "d_r",            "mlp_hidden", "seed",       "lr_decay",      "max_grad_norm",
    "threads",     "dev_metric",     "scheme",     "train_path", "dev_path",      "test_path",
    "embeddings_path", "model_path", "output_path", "report_path",
};

FamilyTag family_arg(const std::string& name) {
  try {
    return parse_family(name);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear-chain CRF sequence labeler with multilinear potentials", "mlcrf"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file and flags");
  std::string config_path;
  std::map<std::string, std::string> override_values;
  train->add_option("--config", config_path, "key=value config file");
  for (const char* key : kOverridableKeys) {
    train->add_option(std::string("--") + key, override_values[key]);
  }
  train->add_option("--subsample,--subsample_fraction", override_values["subsample_fraction"],
                    "Fraction of training sequences to keep");

  // tag
  auto* tag = app.add_subcommand("tag", "Label a CoNLL file with a trained model");
  TagOptions tag_opts;
  tag->add_option("--model", tag_opts.model_path)->required();
  tag->add_option("--input", tag_opts.input_path)->required();
  tag->add_option("--output", tag_opts.output_path)->required();
  tag->add_option("--embeddings", tag_opts.embeddings_path)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score predicted labels against gold");
  std::string gold_path, pred_path;
  eval->add_option("gold", gold_path)->required();
  eval->add_option("pred", pred_path)->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Check gradients and inference against oracles");
  GradcheckOptions gc;
  std::string gc_family(family_name(gc.family));
  gradcheck->add_option("--family", gc_family);
  gradcheck->add_option("--labels,-L", gc.num_labels);
  gradcheck->add_option("--d_h", gc.d_h);
  gradcheck->add_option("--d_t", gc.d_t);
  gradcheck->add_option("--d_r", gc.d_r);
  gradcheck->add_option("--mlp_hidden", gc.mlp_hidden);
  gradcheck->add_option("--length,-M", gc.length);
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--threshold", gc.threshold);
  gradcheck->add_option("--corrupt-field", gc.corrupt_field)->group("");

  // bench
  auto* bench = app.add_subcommand("bench", "Time training steps and decoding on random data");
  BenchOptions bo;
  std::vector<std::string> bench_families{std::string(family_name(bo.family))};
  bench->add_option("--family", bench_families)->delimiter(',');
  bench->add_option("--labels,-L", bo.num_labels);
  bench->add_option("--d_h", bo.d_h);
  bench->add_option("--d_t", bo.d_t);
  bench->add_option("--d_r", bo.d_r);
  bench->add_option("--mlp_hidden", bo.mlp_hidden);
  bench->add_option("--length,-M", bo.length);
  bench->add_option("--batch", bo.batch);
  bench->add_option("--reps", bo.reps);
  bench->add_option("--seed", bo.seed);
  bench->add_option("--threads", bo.threads);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled corpus and embeddings");
  SynthOptions so;
  std::string order = "first", style = "plain";
  synth->add_option("--output", so.output_dir)->required();
  synth->add_option("--order", order)->check(CLI::IsMember({"first", "second"}));
  synth->add_option("--label-style", style)->check(CLI::IsMember({"plain", "bio"}));
  synth->add_option("--labels,-L", so.spec.num_labels);
  synth->add_option("--vocab", so.spec.vocab_size);
  synth->add_option("--d_h", so.spec.d_h);
  synth->add_option("--min-length", so.spec.min_length);
  synth->add_option("--max-length", so.spec.max_length);
  synth->add_option("--train", so.spec.train_size);
  synth->add_option("--dev", so.spec.dev_size);
  synth->add_option("--test", so.spec.test_size);
  synth->add_option("--seed", so.spec.seed.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*train) {
    CliConfig config;
    try {
      if (!config_path.empty()) config = parse_config_file(config_path);
      // Flags override the file; apply them in the fixed key order.
      for (const auto& [key, value] : override_values) {
        if (train->count(key == "subsample_fraction" ? "--subsample" : "--" + key) > 0) {
          set_config_value(config, key, value);
        }
      }
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    return cmd_train(config, out, err);
  }
  if (*tag) return cmd_tag(tag_opts, out, err);
  if (*eval) return cmd_eval(gold_path, pred_path, out, err);
  try {
    if (*gradcheck) {
      gc.family = family_arg(gc_family);
      return cmd_gradcheck(gc, out, err);
    }
    if (*bench) {
      out << bench_csv_header() << '\n';
      for (const auto& name : bench_families) {
        bo.family = family_arg(name);
        if (const int code = cmd_bench(bo, out, err); code != kExitOk) return code;
      }
      return kExitOk;
    }
    if (*synth) {
      so.spec.order = order == "second" ? oracle::SyntheticOrder::kSecond : oracle::SyntheticOrder::kFirst;
      so.spec.label_style = style == "bio" ? oracle::LabelStyle::kBio : oracle::LabelStyle::kPlain;
      return cmd_synth(so, out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mlcrf::cli
