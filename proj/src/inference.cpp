#include "mlcrf/inference.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mlcrf {

namespace {

void check_lattice(const ScoreLattice& lat) {
  if (lat.length == 0 || lat.num_labels == 0) throw Error("empty lattice");
  if (lat.values.size() != lat.length * lat.num_labels * lat.num_labels) {
    throw Error("lattice storage does not match its shape");
  }
}

// alpha(i, b): log-sum of all prefixes ending in label b at position i.
Mat forward(const ScoreLattice& lat) {
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  Mat alpha(M, L);
  for (std::size_t b = 0; b < L; ++b) alpha(0, b) = lat(0, kBosRow, b);
  std::vector<double> terms(L);
  for (std::size_t i = 1; i < M; ++i) {
    for (std::size_t b = 0; b < L; ++b) {
      for (std::size_t a = 0; a < L; ++a) terms[a] = alpha(i - 1, a) + lat(i, a, b);
      alpha(i, b) = log_sum_exp(terms);
    }
  }
  return alpha;
}

// beta(i, a): log-sum of all suffixes after position i given y_i = a.
Mat backward(const ScoreLattice& lat) {
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  Mat beta(M, L);
  std::vector<double> terms(L);
  for (std::size_t i = M - 1; i-- > 0;) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) terms[b] = lat(i + 1, a, b) + beta(i + 1, b);
      beta(i, a) = log_sum_exp(terms);
    }
  }
  return beta;
}

double log_partition_from(const Mat& alpha) { return log_sum_exp(alpha.row(alpha.rows - 1)); }

PairwiseMarginals marginals_from(const ScoreLattice& lat, const Mat& alpha, const Mat& beta,
                                 double log_z) {
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  PairwiseMarginals p(M, L);
  for (std::size_t b = 0; b < L; ++b) {
    p(0, kBosRow, b) = std::exp(lat(0, kBosRow, b) + beta(0, b) - log_z);
  }
  for (std::size_t i = 1; i < M; ++i) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        p(i, a, b) = std::exp(alpha(i - 1, a) + lat(i, a, b) + beta(i, b) - log_z);
      }
    }
  }
  return p;
}

}  // namespace

double path_score(const ScoreLattice& lat, const std::vector<int>& labels) {
  if (labels.size() != lat.length) throw Error("path length does not match lattice");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t prev = i == 0 ? kBosRow : static_cast<std::size_t>(labels[i - 1]);
    s += lat(i, prev, static_cast<std::size_t>(labels[i]));
  }
  return s;
}

double log_partition(const ScoreLattice& lat) {
  check_lattice(lat);
  return log_partition_from(forward(lat));
}

PairwiseMarginals pairwise_marginals(const ScoreLattice& lat) {
  check_lattice(lat);
  const Mat alpha = forward(lat);
  const Mat beta = backward(lat);
  return marginals_from(lat, alpha, beta, log_partition_from(alpha));
}

DecodeResult viterbi(const ScoreLattice& lat) {
  check_lattice(lat);
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  Mat delta(M, L);
  std::vector<int> back(M * L, 0);
  for (std::size_t b = 0; b < L; ++b) delta(0, b) = lat(0, kBosRow, b);
  for (std::size_t i = 1; i < M; ++i) {
    for (std::size_t b = 0; b < L; ++b) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t a = 0; a < L; ++a) {
        const double v = delta(i - 1, a) + lat(i, a, b);
        if (v > best) {
          best = v;
          arg = static_cast<int>(a);
        }
      }
      delta(i, b) = best;
      back[i * L + b] = arg;
    }
  }
  DecodeResult out;
  out.labels.assign(M, 0);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < L; ++b) {
    if (delta(M - 1, b) > best) {
      best = delta(M - 1, b);
      out.labels[M - 1] = static_cast<int>(b);
    }
  }
  for (std::size_t i = M - 1; i > 0; --i) {
    out.labels[i - 1] = back[i * L + static_cast<std::size_t>(out.labels[i])];
  }
  out.score = path_score(lat, out.labels);
  return out;
}

DecodeResult decode_softmax(const ScoreLattice& lat) {
  check_lattice(lat);
  const std::size_t M = lat.length;
  const std::size_t L = lat.num_labels;
  DecodeResult out;
  out.labels.assign(M, 0);
  for (std::size_t i = 0; i < M; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < L; ++b) {
      if (lat(i, kBosRow, b) > best) {
        best = lat(i, kBosRow, b);
        out.labels[i] = static_cast<int>(b);
      }
    }
  }
  out.score = path_score(lat, out.labels);
  return out;
}

NllResult nll_and_grad(const ScoreLattice& lat, const std::vector<int>& gold) {
  check_lattice(lat);
  if (gold.size() != lat.length) {
    throw Error("gold length " + std::to_string(gold.size()) + " does not match lattice length " +
                std::to_string(lat.length));
  }
  for (int y : gold) {
    if (y < 0 || static_cast<std::size_t>(y) >= lat.num_labels) {
      throw Error("invalid label index " + std::to_string(y));
    }
  }
  const Mat alpha = forward(lat);
  const Mat beta = backward(lat);
  const double log_z = log_partition_from(alpha);
  NllResult out;
  out.loss = log_z - path_score(lat, gold);
  out.grad = marginals_from(lat, alpha, beta, log_z);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::size_t prev = i == 0 ? kBosRow : static_cast<std::size_t>(gold[i - 1]);
    out.grad(i, prev, static_cast<std::size_t>(gold[i])) -= 1.0;
  }
  return out;
}

}  // namespace mlcrf
