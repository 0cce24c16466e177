#ifndef MLCRF_INFERENCE_HPP
#define MLCRF_INFERENCE_HPP

#include <cstddef>
#include <utility>
#include <vector>

#include "mlcrf/potentials.hpp"

namespace mlcrf {

// p(i, a, b) = P(y_{i-1} = a, y_i = b | x). At position 0 the mass sits in
// row kBosRow and the other rows are zero.
using PairwiseMarginals = Lattice;

struct DecodeResult {
  std::vector<int> labels;
  double score = 0.0;
};

// Sum of the lattice along a label path (position 0 read from kBosRow).
double path_score(const ScoreLattice& lat, const std::vector<int>& labels);

double log_partition(const ScoreLattice& lat);
PairwiseMarginals pairwise_marginals(const ScoreLattice& lat);
// Ties resolve to the lowest label index.
DecodeResult viterbi(const ScoreLattice& lat);
// Independent per-position argmax, for lattices whose rows do not depend on
// the previous label.
DecodeResult decode_softmax(const ScoreLattice& lat);

struct NllResult {
  double loss = 0.0;
  LatticeGrad grad;
};

// Negative log-likelihood of gold and its gradient with respect to every
// lattice entry.
NllResult nll_and_grad(const ScoreLattice& lat, const std::vector<int>& gold);

}  // namespace mlcrf

#endif  // MLCRF_INFERENCE_HPP
