#include "mlcrf/eval.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace mlcrf {

namespace {

void check_aligned(const LabelCorpus& gold, const LabelCorpus& pred) {
  if (gold.size() != pred.size()) {
    throw Error("corpus size mismatch: " + std::to_string(gold.size()) + " gold vs " +
                std::to_string(pred.size()) + " predicted sequences");
  }
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != pred[k].size()) {
      throw Error("sequence " + std::to_string(k) + ": length mismatch (" +
                  std::to_string(gold[k].size()) + " vs " + std::to_string(pred[k].size()) + ")");
    }
  }
}

}  // namespace

EvalResult span_f1(const LabelCorpus& gold, const LabelCorpus& pred, std::optional<TagScheme> scheme) {
  check_aligned(gold, pred);
  if (!scheme) {
    LabelCorpus both = gold;
    both.insert(both.end(), pred.begin(), pred.end());
    scheme = detect_scheme(both);
  }
  EvalResult r;
  std::size_t matching_tokens = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const auto g = extract_spans(gold[k], *scheme);
    const auto p = extract_spans(pred[k], *scheme);
    r.gold_spans += g.size();
    r.predicted_spans += p.size();
    for (const auto& s : p) r.correct_spans += g.count(s);
    for (std::size_t i = 0; i < gold[k].size(); ++i) matching_tokens += gold[k][i] == pred[k][i];
    r.tokens += gold[k].size();
  }
  r.precision = r.predicted_spans ? static_cast<double>(r.correct_spans) / r.predicted_spans : 0.0;
  r.recall = r.gold_spans ? static_cast<double>(r.correct_spans) / r.gold_spans : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.token_accuracy = r.tokens ? static_cast<double>(matching_tokens) / r.tokens : 0.0;
  return r;
}

double token_accuracy(const LabelCorpus& gold, const LabelCorpus& pred) {
  return span_f1(gold, pred, TagScheme::kPlain).token_accuracy;
}

std::pair<double, double> mean_and_std(const std::vector<double>& scores) {
  if (scores.empty()) throw Error("empty reduction");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return {mean, std::sqrt(var)};
}

std::string format_summary(const EvalResult& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "precision=%.4f recall=%.4f f1=%.4f acc=%.4f", r.precision,
                r.recall, r.f1, r.token_accuracy);
  return buf;
}

std::string format_record(const EvalResult& r) {
  nlohmann::json j{{"precision", r.precision},         {"recall", r.recall},
                   {"f1", r.f1},                       {"token_accuracy", r.token_accuracy},
                   {"gold_spans", r.gold_spans},       {"predicted_spans", r.predicted_spans},
                   {"correct_spans", r.correct_spans}, {"tokens", r.tokens}};
  return j.dump();
}

}  // namespace mlcrf
