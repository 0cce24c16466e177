#include "mlcrf/oracle.hpp"

#include <cmath>
#include <limits>

namespace mlcrf::oracle {

namespace {

void check_enumerable(const ScoreLattice& lat) {
  if (lat.length == 0 || lat.num_labels == 0) throw Error("empty lattice");
  const double paths = std::pow(static_cast<double>(lat.num_labels), static_cast<double>(lat.length));
  if (paths > kMaxEnumeratedPaths) throw Error("instance too large to enumerate");
}

// Calls visit(path, score) for every label path, scores summed left to right.
template <class Visit>
void enumerate_paths(const ScoreLattice& lat, Visit&& visit) {
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  std::vector<int> path(M, 0);
  std::vector<double> prefix(M + 1, 0.0);
  std::size_t depth = 0;
  // Odometer over positions; prefix[i] holds the score of path[0..i).
  while (true) {
    while (depth < M) {
      const std::size_t prev = depth == 0 ? kBosRow : static_cast<std::size_t>(path[depth - 1]);
      prefix[depth + 1] = prefix[depth] + lat(depth, prev, static_cast<std::size_t>(path[depth]));
      ++depth;
    }
    visit(path, prefix[M]);
    std::size_t pos = M;
    while (pos > 0 && static_cast<std::size_t>(path[pos - 1]) + 1 == L) {
      path[pos - 1] = 0;
      --pos;
    }
    if (pos == 0) return;
    ++path[pos - 1];
    depth = pos - 1;
  }
}

bool reverse_lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = a.size(); i-- > 0;) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

double sum_squares(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

double brute_force_log_partition(const ScoreLattice& lat) {
  check_enumerable(lat);
  double running_max = -std::numeric_limits<double>::infinity();
  double scaled_sum = 0.0;
  enumerate_paths(lat, [&](const std::vector<int>&, double score) {
    if (score > running_max) {
      scaled_sum = scaled_sum * std::exp(running_max - score) + 1.0;
      running_max = score;
    } else {
      scaled_sum += std::exp(score - running_max);
    }
  });
  return running_max + std::log(scaled_sum);
}

DecodeResult brute_force_best_path(const ScoreLattice& lat) {
  check_enumerable(lat);
  DecodeResult best;
  best.score = -std::numeric_limits<double>::infinity();
  enumerate_paths(lat, [&](const std::vector<int>& path, double score) {
    if (score > best.score || (score == best.score && reverse_lex_less(path, best.labels))) {
      best.score = score;
      best.labels = path;
    }
  });
  return best;
}

PairwiseMarginals brute_force_marginals(const ScoreLattice& lat) {
  const double log_z = brute_force_log_partition(lat);
  PairwiseMarginals p(lat.length, lat.num_labels);
  enumerate_paths(lat, [&](const std::vector<int>& path, double score) {
    const double w = std::exp(score - log_z);
    for (std::size_t i = 0; i < path.size(); ++i) {
      const std::size_t prev = i == 0 ? kBosRow : static_cast<std::size_t>(path[i - 1]);
      p(i, prev, static_cast<std::size_t>(path[i])) += w;
    }
  });
  return p;
}

ParamGrad finite_diff_grad(const ParamFunction& f, const ModelParams& params, double step) {
  ModelParams work = params;
  ParamGrad grad = zeros_like(params);
  std::vector<std::vector<double>*> targets;
  grad.for_each_field([&](std::string_view, auto& t) { targets.push_back(&t.data); });
  std::size_t field = 0;
  work.for_each_field([&](std::string_view, auto& t) {
    std::vector<double>& out = *targets[field++];
    for (std::size_t k = 0; k < t.data.size(); ++k) {
      const double saved = t.data[k];
      t.data[k] = saved + step;
      const double up = f(work);
      t.data[k] = saved - step;
      const double down = f(work);
      t.data[k] = saved;
      out[k] = (up - down) / (2.0 * step);
    }
  });
  return grad;
}

std::vector<FieldError> relative_errors(const ParamGrad& a, const ParamGrad& b) {
  std::vector<const std::vector<double>*> other;
  std::vector<std::string> names;
  b.for_each_field([&](std::string_view name, const auto& t) {
    other.push_back(&t.data);
    names.emplace_back(name);
  });
  std::vector<FieldError> out;
  std::size_t k = 0;
  a.for_each_field([&](std::string_view name, const auto& t) {
    if (k >= names.size() || names[k] != name || other[k]->size() != t.data.size()) {
      throw Error("gradients have different layouts");
    }
    const auto& u = *other[k++];
    std::vector<double> diff(t.data.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = t.data[i] - u[i];
    const double na = std::sqrt(sum_squares(t.data));
    const double nb = std::sqrt(sum_squares(u));
    const double denom = std::max(na, nb);
    out.push_back({std::string(name), denom < 1e-10 ? 0.0 : std::sqrt(sum_squares(diff)) / denom});
  });
  return out;
}

double max_relative_error(const std::vector<FieldError>& errors) {
  double m = 0.0;
  for (const auto& e : errors) m = std::max(m, e.relative_error);
  return m;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t L = spec.num_labels;
  const std::size_t V = spec.vocab_size;
  if (L == 0 || V < L) throw Error("synthetic spec needs 1 <= L <= V");
  if (spec.min_length == 0 || spec.max_length < spec.min_length) {
    throw Error("synthetic spec has an invalid length range");
  }
  const bool bio = spec.label_style == LabelStyle::kBio;
  if (bio && L % 2 == 0) throw Error("BIO synthetic labels need an odd label count");
  SyntheticCorpus corpus;
  for (std::size_t y = 0; y < L; ++y) {
    if (!bio) {
      corpus.label_names.push_back("L" + std::to_string(y));
    } else if (y == 0) {
      corpus.label_names.push_back("O");
    } else {
      const std::string type(1, static_cast<char>('A' + (y - 1) / 2));
      corpus.label_names.push_back((y % 2 == 1 ? "B-" : "I-") + type);
    }
  }
  // I-X (even index > 0) may only follow B-X or I-X of the same type.
  auto allowed = [&](std::size_t a, std::size_t b) {
    if (!bio || b == 0 || b % 2 == 1) return true;
    return a == b || a == b - 1;
  };
  if (spec.transitions.empty()) {
    Rng rng(derive_seed(spec.seed, 0));
    corpus.transitions = Mat(L, L);
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) corpus.transitions(a, b) = rng.uniform(0.1, 1.0);
    }
  } else {
    if (spec.transitions.rows != L || spec.transitions.cols != L) {
      throw Error("transition matrix must be L x L");
    }
    corpus.transitions = spec.transitions;
  }
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) {
      if (!allowed(a, b)) corpus.transitions(a, b) = 0.0;
    }
  }
  for (std::size_t a = 0; a < L; ++a) {
    double total = 0.0;
    for (double x : corpus.transitions.row(a)) {
      if (!(x >= 0.0)) throw Error("transition probabilities must be non-negative");
      total += x;
    }
    if (total <= 0.0) throw Error("transition row has no mass");
    for (double& x : corpus.transitions.row(a)) x /= total;
  }

  {
    Rng rng(derive_seed(spec.seed, 1));
    corpus.embeddings = EmbeddingTable(spec.d_h);
    for (std::size_t t = 0; t < V; ++t) {
      Vec v(spec.d_h);
      for (double& x : v.data) x = rng.normal();
      corpus.embeddings.insert("w" + std::to_string(t), std::move(v));
    }
    Vec mean(spec.d_h);
    for (const auto& tok : corpus.embeddings.tokens()) {
      axpy(1.0 / static_cast<double>(V), corpus.embeddings.find(tok)->span(), mean.span());
    }
    corpus.embeddings.set_unk(std::move(mean));
  }

  const std::size_t per_class = V / L;
  auto sample_split = [&](std::size_t count, std::uint64_t stream) {
    Rng rng(derive_seed(spec.seed, stream));
    std::vector<TokenSequence> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
      const std::size_t len =
          spec.min_length + static_cast<std::size_t>(rng.below(spec.max_length - spec.min_length + 1));
      TokenSequence seq;
      seq.labels.emplace();
      std::size_t label = static_cast<std::size_t>(rng.below(L));
      while (!allowed(0, label)) label = static_cast<std::size_t>(rng.below(L));
      std::size_t prev_class = 0;
      for (std::size_t i = 0; i < len; ++i) {
        if (i > 0) {
          double u = rng.uniform();
          std::size_t next = L - 1;
          for (std::size_t b = 0; b < L; ++b) {
            u -= corpus.transitions(label, b);
            if (u < 0.0) {
              next = b;
              break;
            }
          }
          label = next;
        }
        const std::size_t cls =
            spec.order == SyntheticOrder::kFirst ? label : (label + L - prev_class) % L;
        // Tokens of class c are c, c + L, c + 2L, ... below V.
        const std::size_t members = per_class + (cls < V % L ? 1 : 0);
        const std::size_t token = cls + L * static_cast<std::size_t>(rng.below(members));
        seq.tokens.push_back("w" + std::to_string(token));
        seq.labels->push_back(corpus.label_names[label]);
        prev_class = cls;
      }
      out.push_back(std::move(seq));
    }
    return out;
  };
  corpus.train = sample_split(spec.train_size, 2);
  corpus.dev = sample_split(spec.dev_size, 3);
  corpus.test = sample_split(spec.test_size, 4);
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_conll(dir / "train.conll", corpus.train);
  write_conll(dir / "dev.conll", corpus.dev);
  write_conll(dir / "test.conll", corpus.test);
  write_embeddings(dir / "embeddings.txt", corpus.embeddings);
}

}  // namespace mlcrf::oracle
