#ifndef MLCRF_EVAL_HPP
#define MLCRF_EVAL_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlcrf/data_io.hpp"

namespace mlcrf {

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double token_accuracy = 0.0;
  std::size_t gold_spans = 0;
  std::size_t predicted_spans = 0;
  std::size_t correct_spans = 0;
  std::size_t tokens = 0;
};

using LabelCorpus = std::vector<std::vector<std::string>>;

// Micro-averaged span scores plus token accuracy. When `scheme` is not given
// it is detected from both corpora together.
EvalResult span_f1(const LabelCorpus& gold, const LabelCorpus& pred,
                   std::optional<TagScheme> scheme = std::nullopt);

double token_accuracy(const LabelCorpus& gold, const LabelCorpus& pred);

// Arithmetic mean and population standard deviation.
std::pair<double, double> mean_and_std(const std::vector<double>& scores);

// "precision=0.5000 recall=0.5000 f1=0.5000 acc=0.9000"
std::string format_summary(const EvalResult& r);
// Single-line JSON record with every EvalResult field.
std::string format_record(const EvalResult& r);

}  // namespace mlcrf

#endif  // MLCRF_EVAL_HPP
