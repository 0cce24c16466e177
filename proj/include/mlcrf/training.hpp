#ifndef MLCRF_TRAINING_HPP
#define MLCRF_TRAINING_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mlcrf/data_io.hpp"
#include "mlcrf/eval.hpp"
#include "mlcrf/inference.hpp"
#include "mlcrf/potentials.hpp"

namespace mlcrf {

enum class DevMetric { kAuto, kSpanF1, kAccuracy };

std::string_view dev_metric_name(DevMetric metric);
DevMetric parse_dev_metric(std::string_view name);

struct TrainConfig {
  FamilyTag family = FamilyTag::kDQuadrilinear;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  double l2 = 1e-8;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::size_t d_t = 100;
  std::size_t d_r = 128;
  std::size_t mlp_hidden = 128;
  RngSeed seed{1};
  double subsample_fraction = 1.0;
  // lr_epoch = learning_rate / (1 + lr_decay * epoch); 0 keeps it constant.
  double lr_decay = 0.0;
  // Rescales the mean minibatch gradient to this L2 norm when larger; 0 is off.
  double max_grad_norm = 0.0;
  std::size_t threads = 1;
  DevMetric dev_metric = DevMetric::kAuto;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Instance {
  RepresentationSequence reps;
  std::vector<int> labels;
};

using Dataset = std::vector<Instance>;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean sequence NLL
  double dev_score = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_score = 0.0;
  DevMetric metric = DevMetric::kAccuracy;
  std::size_t train_sequences = 0;  // after subsampling
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Indices of floor(fraction * n) items drawn without replacement, in
// ascending order. fraction = 1 selects everything.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, RngSeed seed);

template <class T>
std::vector<T> subsample(const std::vector<T>& items, double fraction, RngSeed seed) {
  std::vector<T> out;
  for (std::size_t i : subsample_indices(items.size(), fraction, seed)) out.push_back(items[i]);
  return out;
}

// Decodes with Viterbi, or per-position argmax for the softmax family.
std::vector<int> predict(const Potential& potential, const RepresentationSequence& reps);

EvalResult evaluate(const ModelParams& params, const Dataset& data, const LabelVocab& vocab);
// Span F1 or token accuracy, resolving kAuto from the vocabulary's scheme.
double dev_score(const EvalResult& result, DevMetric metric);
DevMetric resolve_metric(DevMetric metric, const LabelVocab& vocab);

struct BatchGradient {
  double loss_sum = 0.0;
  ParamGrad grad;  // summed over the batch
};

// Summed NLL and parameter gradient over data[indices], reduced in ascending
// position order (per thread chunk, chunks in order).
BatchGradient batch_gradient(const ModelParams& params, const Dataset& data,
                             const std::vector<std::size_t>& indices, std::size_t threads = 1);

// theta <- theta - lr * (grad / count + l2 * theta)
void sgd_update(ModelParams& params, const ParamGrad& grad_sum, std::size_t count, double lr, double l2,
                double max_grad_norm = 0.0);

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& dev_set,
                  const LabelVocab& vocab, const EpochCallback& on_epoch = {});

}  // namespace mlcrf

#endif  // MLCRF_TRAINING_HPP
