#ifndef MLCRF_ORACLE_HPP
#define MLCRF_ORACLE_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mlcrf/data_io.hpp"
#include "mlcrf/inference.hpp"
#include "mlcrf/potentials.hpp"

// Reference implementations that share no code with the dynamic programs
// they check: exhaustive enumeration over label paths and central finite
// differences over parameters.
namespace mlcrf::oracle {

inline constexpr double kMaxEnumeratedPaths = 1e7;

double brute_force_log_partition(const ScoreLattice& lat);
// Exhaustive argmax. Among equal scores the path that is smallest when
// compared from the last position backwards wins, which is the order the
// Viterbi backtrace produces.
DecodeResult brute_force_best_path(const ScoreLattice& lat);
PairwiseMarginals brute_force_marginals(const ScoreLattice& lat);

using ParamFunction = std::function<double(const ModelParams&)>;

ParamGrad finite_diff_grad(const ParamFunction& f, const ModelParams& params, double step = 1e-5);

struct FieldError {
  std::string field;
  double relative_error = 0.0;
};

// Per field: ||a - b|| / max(||a||, ||b||), or 0 when both norms are below
// 1e-10.
std::vector<FieldError> relative_errors(const ParamGrad& a, const ParamGrad& b);
double max_relative_error(const std::vector<FieldError>& errors);

enum class SyntheticOrder { kFirst, kSecond };

// kPlain labels are L0..L{L-1}. kBio uses O plus B-/I- pairs for (L-1)/2
// chunk types (L must be odd) and masks transitions so every sequence is
// well-formed BIO.
enum class LabelStyle { kPlain, kBio };

struct SyntheticSpec {
  std::size_t num_labels = 5;
  std::size_t vocab_size = 50;
  std::size_t d_h = 64;
  SyntheticOrder order = SyntheticOrder::kFirst;
  LabelStyle label_style = LabelStyle::kPlain;
  // Row-stochastic L x L label transition matrix; drawn from the seed when
  // left empty.
  Mat transitions;
  std::size_t min_length = 5;
  std::size_t max_length = 15;
  std::size_t train_size = 2000;
  std::size_t dev_size = 200;
  std::size_t test_size = 200;
  RngSeed seed{1};
};

struct SyntheticCorpus {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> dev;
  std::vector<TokenSequence> test;
  EmbeddingTable embeddings;
  Mat transitions;
  std::vector<std::string> label_names;
};

// Label paths follow the transition matrix. Token w<t> belongs to class
// t mod L. First order: the token's class equals its label. Second order:
// label_i = (class_{i-1} + class_i) mod L with class_{-1} = 0, so the label
// is a function of the token bigram. Token vectors are fixed N(0, 1) rows.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Writes train.conll, dev.conll, test.conll and embeddings.txt into dir.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace mlcrf::oracle

#endif  // MLCRF_ORACLE_HPP
