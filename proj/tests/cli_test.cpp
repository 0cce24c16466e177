#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mlcrf/cli.hpp"

namespace mlcrf::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mlcrf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mlcrf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, ConfigRoundTrip) {
  std::istringstream in(
      "# comment\nfamily=d-trilinear\nlearning_rate=0.05\nbatch_size=16\nseed=7\n"
      "subsample_fraction=0.3\ntrain_path=a.conll\nscheme=keep\n");
  const CliConfig c = parse_config(in);
  EXPECT_EQ(c.train.family, FamilyTag::kDTrilinear);
  EXPECT_EQ(c.train.learning_rate, 0.05);
  EXPECT_EQ(c.train.batch_size, 16u);
  EXPECT_EQ(c.train.seed, RngSeed{7});
  EXPECT_EQ(c.scheme, "keep");
  std::istringstream again(dump_config(c));
  EXPECT_EQ(parse_config(again), c);
}

TEST_F(CliTest, ConfigErrors) {
  std::istringstream unknown("frobnicate=1\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream bad("batch_size=many\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  std::istringstream noeq("family\n");
  EXPECT_THROW(parse_config(noeq), ConfigError);
}

TEST_F(CliTest, TrainRejectsUnknownKey) {
  const auto cfg = write("bad.cfg", "frobnicate=1\n");
  const Outcome o = invoke({"train", "--config", cfg});
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_NE(o.err.find("frobnicate"), std::string::npos);
}

TEST_F(CliTest, TrainNamesMissingKey) {
  const auto cfg = write("c.cfg", "train_path=x.conll\nmodel_path=m.json\n");
  const Outcome o = invoke({"train", "--config", cfg});
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_NE(o.err.find("embeddings_path"), std::string::npos) << o.err;
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"gradcheck", "--family", "nope"}).code, kExitUsage);
}

TEST_F(CliTest, EvalScores) {
  const auto gold = write("gold", "a S-PER\nb O\n\nc S-LOC\n\n");
  const auto half = write("half", "a S-PER\nb O\n\nc O\n\n");
  const auto none = write("none", "a O\nb O\n\nc O\n\n");
  Outcome o = invoke({"eval", gold, gold});
  EXPECT_EQ(o.code, kExitOk);
  EXPECT_NE(o.out.find("f1=1.0000"), std::string::npos) << o.out;
  o = invoke({"eval", gold, none});
  EXPECT_NE(o.out.find("f1=0.0000"), std::string::npos) << o.out;
  o = invoke({"eval", gold, half});
  EXPECT_NE(o.out.find("precision=1.0000 recall=0.5000"), std::string::npos) << o.out;
}

TEST_F(CliTest, EvalAcceptsBioGoldWithBioesPredictions) {
  const auto gold = write("gold", "a B-PER\nb I-PER\nc O\nd B-LOC\n\n");
  const auto pred = write("pred", "a B-PER\nb E-PER\nc O\nd S-LOC\n\n");
  const Outcome o = invoke({"eval", gold, pred});
  EXPECT_EQ(o.code, kExitOk);
  EXPECT_NE(o.out.find("f1=1.0000 acc=1.0000"), std::string::npos) << o.out;
}

TEST_F(CliTest, EvalMisaligned) {
  const auto gold = write("gold", "a S-PER\nb O\n\n");
  const auto pred = write("pred", "a S-PER\n\n");
  const Outcome o = invoke({"eval", gold, pred});
  EXPECT_EQ(o.code, kExitMisaligned);
  EXPECT_NE(o.err.find("aligned"), std::string::npos);
}

class GradcheckCli : public ::testing::TestWithParam<FamilyTag> {};

TEST_P(GradcheckCli, Passes) {
  const Outcome o = invoke({"gradcheck", "--family", std::string(family_name(GetParam())), "--seed", "3"});
  EXPECT_EQ(o.code, kExitOk) << o.out << o.err;
  EXPECT_NE(o.out.find("max_rel_err="), std::string::npos);
}

INSTANTIATE_TEST_SUITE_P(AllFamilies, GradcheckCli, ::testing::ValuesIn(kAllFamilies), [](const auto& info) {
  std::string s(family_name(info.param));
  for (char& c : s) c = c == '-' ? '_' : c;
  return s;
});

TEST(Gradcheck, CorruptedGradientFails) {
  GradcheckOptions opt;
  opt.corrupt_field = "u_t1";
  std::ostringstream out, err;
  EXPECT_EQ(cmd_gradcheck(opt, out, err), kExitGradcheck);
  EXPECT_NE(err.str().find("u_t1"), std::string::npos);
  opt.corrupt_field = "no_such_thing";
  EXPECT_EQ(cmd_gradcheck(opt, out, err), kExitUsage);
}

TEST_F(CliTest, SynthTrainTagEval) {
  ASSERT_EQ(invoke({"synth", "--output", dir_.string(), "--train", "200", "--dev", "40", "--test", "40",
                    "--labels", "3", "--d_h", "40", "--vocab", "30"})
                .code,
            kExitOk);
  const auto cfg = write("run.cfg", "family=vanilla-crf\nmax_epochs=15\nseed=2\ntrain_path=" +
                                        path("train.conll") + "\ndev_path=" + path("dev.conll") +
                                        "\ntest_path=" + path("test.conll") + "\nembeddings_path=" +
                                        path("embeddings.txt") + "\nmodel_path=" + path("model.json") +
                                        "\n");
  Outcome o = invoke({"train", "--config", cfg});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_NE(o.out.find("\"best_epoch\""), std::string::npos);
  EXPECT_TRUE(fs::exists(path("model.json.report.csv")));

  o = invoke({"tag", "--model", path("model.json"), "--input", path("test.conll"), "--output", path("pred.conll"),
              "--embeddings", path("embeddings.txt")});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  // Plain labels: eval falls back to accuracy, and a learnable task is solved.
  o = invoke({"eval", path("test.conll"), path("pred.conll")});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_NE(o.out.find("acc=1.0000"), std::string::npos) << o.out;
}

TEST_F(CliTest, TagHandlesEmptyInput) {
  ASSERT_EQ(invoke({"synth", "--output", dir_.string(), "--train", "20", "--dev", "5", "--test", "5",
                    "--d_h", "8"})
                .code,
            kExitOk);
  const auto cfg = write("run.cfg", "family=softmax\nmax_epochs=1\ntrain_path=" + path("train.conll") +
                                        "\nembeddings_path=" + path("embeddings.txt") +
                                        "\nmodel_path=" + path("model.json") + "\n");
  ASSERT_EQ(invoke({"train", "--config", cfg}).code, kExitOk);
  const auto empty = write("empty.conll", "");
  const Outcome o = invoke({"tag", "--model", path("model.json"), "--input", empty, "--output",
                            path("out.conll"), "--embeddings", path("embeddings.txt")});
  EXPECT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(fs::file_size(path("out.conll")), 0u);
}

TEST_F(CliTest, TagRejectsWrongEmbeddingDimension) {
  ASSERT_EQ(invoke({"synth", "--output", dir_.string(), "--train", "20", "--dev", "5", "--test", "5",
                    "--d_h", "8"})
                .code,
            kExitOk);
  const auto cfg = write("run.cfg", "family=softmax\nmax_epochs=1\ntrain_path=" + path("train.conll") +
                                        "\nembeddings_path=" + path("embeddings.txt") +
                                        "\nmodel_path=" + path("model.json") + "\n");
  ASSERT_EQ(invoke({"train", "--config", cfg}).code, kExitOk);
  const auto emb = write("small.txt", "w0 1 2\n");
  const Outcome o = invoke({"tag", "--model", path("model.json"), "--input", path("test.conll"), "--output",
                            path("out.conll"), "--embeddings", emb});
  EXPECT_NE(o.code, kExitOk);
  EXPECT_NE(o.err.find("dimension"), std::string::npos) << o.err;
}

TEST(Bench, SingleTokenSequences) {
  BenchOptions opt;
  opt.length = 1;
  opt.batch = 2;
  opt.reps = 1;
  opt.num_labels = 3;
  opt.d_h = 4;
  opt.d_t = 3;
  opt.d_r = 3;
  opt.mlp_hidden = 3;
  for (FamilyTag f : kAllFamilies) {
    opt.family = f;
    const BenchResult r = run_bench(opt);
    EXPECT_GE(r.train_step_ms, 0.0);
    EXPECT_GE(r.decode_ms, 0.0);
  }
  EXPECT_EQ(bench_csv_header(), "family,L,d_h,d_t,d_r,M,batch,reps,train_step_ms,decode_ms");
}

}  // namespace
}  // namespace mlcrf::cli
