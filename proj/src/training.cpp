#include "mlcrf/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace mlcrf {

std::string_view dev_metric_name(DevMetric metric) {
  switch (metric) {
    case DevMetric::kAuto:
      return "auto";
    case DevMetric::kSpanF1:
      return "f1";
    case DevMetric::kAccuracy:
      return "accuracy";
  }
  return "auto";
}

DevMetric parse_dev_metric(std::string_view name) {
  if (name == "auto") return DevMetric::kAuto;
  if (name == "f1") return DevMetric::kSpanF1;
  if (name == "accuracy") return DevMetric::kAccuracy;
  throw Error("unknown dev metric: " + std::string(name));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (batch_size < 1) throw Error("batch_size must be at least 1");
  if (!(l2 >= 0.0)) throw Error("l2 must be non-negative");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw Error("subsample fraction must be in (0, 1]");
  }
  if (threads < 1) throw Error("threads must be at least 1");
  if (!(lr_decay >= 0.0) || !(max_grad_norm >= 0.0)) throw Error("lr_decay and max_grad_norm must be >= 0");
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, RngSeed seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subsample fraction must be in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction == 1.0) return idx;
  // The small epsilon keeps products such as 0.3 * 10 from flooring to 2.
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> predict(const Potential& potential, const RepresentationSequence& reps) {
  const ScoreLattice lat = potential.score(reps);
  if (potential.params().family == FamilyTag::kSoftmax) return decode_softmax(lat).labels;
  return viterbi(lat).labels;
}

DevMetric resolve_metric(DevMetric metric, const LabelVocab& vocab) {
  if (metric != DevMetric::kAuto) return metric;
  return vocab.scheme() == TagScheme::kPlain ? DevMetric::kAccuracy : DevMetric::kSpanF1;
}

EvalResult evaluate(const ModelParams& params, const Dataset& data, const LabelVocab& vocab) {
  const Potential potential(params);
  LabelCorpus gold, pred;
  gold.reserve(data.size());
  pred.reserve(data.size());
  for (const auto& inst : data) {
    gold.push_back(vocab.decode(inst.labels));
    pred.push_back(vocab.decode(predict(potential, inst.reps)));
  }
  return span_f1(gold, pred, vocab.scheme());
}

double dev_score(const EvalResult& result, DevMetric metric) {
  return metric == DevMetric::kSpanF1 ? result.f1 : result.token_accuracy;
}

namespace {

struct ChunkResult {
  double loss = 0.0;
  GradAccumulator acc;
};

void run_chunk(const Potential& potential, const Dataset& data, const std::vector<std::size_t>& indices,
               std::size_t begin, std::size_t end, ChunkResult& out) {
  for (std::size_t k = begin; k < end; ++k) {
    const Instance& inst = data[indices[k]];
    const ScoreLattice lat = potential.score(inst.reps);
    const NllResult nll = nll_and_grad(lat, inst.labels);
    out.loss += nll.loss;
    potential.accumulate(inst.reps, nll.grad, out.acc);
  }
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params, const Dataset& data,
                             const std::vector<std::size_t>& indices, std::size_t threads) {
  const Potential potential(params);
  const std::size_t n = indices.size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<ChunkResult> results(chunks);
  for (auto& r : results) r.acc = potential.make_accumulator();
  if (chunks == 1) {
    run_chunk(potential, data, indices, 0, n, results[0]);
  } else {
    std::vector<std::jthread> workers;
    std::vector<std::exception_ptr> errors(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t begin = n * c / chunks;
      const std::size_t end = n * (c + 1) / chunks;
      workers.emplace_back([&, c, begin, end] {
        try {
          run_chunk(potential, data, indices, begin, end, results[c]);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    workers.clear();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  BatchGradient out;
  for (std::size_t c = 1; c < chunks; ++c) results[0].acc.add(results[c].acc);
  for (const auto& r : results) out.loss_sum += r.loss;
  out.grad = zeros_like(params);
  potential.finish(results[0].acc, out.grad);
  return out;
}

void sgd_update(ModelParams& params, const ParamGrad& grad_sum, std::size_t count, double lr, double l2,
                double max_grad_norm) {
  if (count == 0) return;
  const double inv = 1.0 / static_cast<double>(count);
  double scale = inv;
  if (max_grad_norm > 0.0) {
    double sq = 0.0;
    grad_sum.for_each_field([&](std::string_view, const auto& g) {
      for (double x : g.data) sq += x * inv * x * inv;
    });
    const double norm = std::sqrt(sq);
    if (norm > max_grad_norm) scale *= max_grad_norm / norm;
  }
  std::vector<const std::vector<double>*> grads;
  grad_sum.for_each_field([&](std::string_view, const auto& g) { grads.push_back(&g.data); });
  std::size_t k = 0;
  params.for_each_field([&](std::string_view, auto& t) {
    const auto& g = *grads.at(k++);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      t.data[i] -= lr * (g[i] * scale + l2 * t.data[i]);
    }
  });
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& dev_set,
                  const LabelVocab& vocab, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw Error("empty training data");
  const Dataset data = subsample(train_set, config.subsample_fraction, derive_seed(config.seed, 1));
  if (data.empty()) throw Error("empty training data after subsampling");

  Dims dims;
  dims.num_labels = vocab.size();
  dims.d_h = data.front().reps.dim();
  dims.d_t = config.d_t;
  dims.d_r = config.d_r;
  dims.mlp_hidden = config.mlp_hidden;

  TrainResult result;
  result.params = init_params(config.family, dims, derive_seed(config.seed, 0));
  ModelParams& params = result.params;
  TrainReport& report = result.report;
  report.metric = resolve_metric(config.dev_metric, vocab);
  report.train_sequences = data.size();

  ModelParams best = params;
  bool have_best = false;
  std::size_t stale = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::sort(order.begin(), order.end());
    Rng shuffler(derive_seed(config.seed, 1000 + epoch));
    shuffler.shuffle(order);
    const double lr = config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(epoch - 1));

    double loss_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const BatchGradient bg = batch_gradient(params, data, batch, config.threads);
      if (!std::isfinite(bg.loss_sum)) throw Error("training diverged");
      loss_total += bg.loss_sum;
      sgd_update(params, bg.grad, batch.size(), lr, config.l2, config.max_grad_norm);
      bool finite = true;
      params.for_each_field([&](std::string_view, const auto& t) { finite = finite && all_finite(t.data); });
      if (!finite) throw Error("training diverged");
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_total / static_cast<double>(data.size());
    if (!dev_set.empty()) rec.dev_score = dev_score(evaluate(params, dev_set, vocab), report.metric);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (dev_set.empty()) {
      report.best_epoch = epoch;
      continue;
    }
    if (!have_best || rec.dev_score > report.best_dev_score) {
      have_best = true;
      report.best_dev_score = rec.dev_score;
      report.best_epoch = epoch;
      best = params;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (have_best) params = std::move(best);
  return result;
}

}  // namespace mlcrf
