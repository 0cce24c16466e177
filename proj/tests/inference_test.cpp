#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mlcrf/inference.hpp"
#include "mlcrf/oracle.hpp"
#include "test_support.hpp"

namespace mlcrf {
namespace {

using testing::random_labels;
using testing::random_lattice;

TEST(LogPartition, ZeroLattices) {
  EXPECT_DOUBLE_EQ(log_partition(ScoreLattice(1, 2)), std::log(2.0));
  EXPECT_NEAR(log_partition(ScoreLattice(3, 4)), 3.0 * std::log(4.0), 1e-12);
}

TEST(LogPartition, MatchesEnumeration) {
  const ScoreLattice lat = random_lattice(5, 4, 7);
  const double z = log_partition(lat);
  EXPECT_LT(std::abs(z - oracle::brute_force_log_partition(lat)) / std::abs(z), 1e-10);
}

TEST(LogPartition, ConstantShift) {
  ScoreLattice lat = random_lattice(6, 3, 21);
  const double z = log_partition(lat);
  const auto before = pairwise_marginals(lat);
  const auto path = viterbi(lat);
  for (double& v : lat.values) v += 2.5;
  EXPECT_NEAR(log_partition(lat), z + 6 * 2.5, 1e-9);
  const auto after = pairwise_marginals(lat);
  for (std::size_t k = 0; k < after.values.size(); ++k) EXPECT_NEAR(after.values[k], before.values[k], 1e-9);
  EXPECT_EQ(viterbi(lat).labels, path.labels);
  EXPECT_NEAR(viterbi(lat).score, path.score + 6 * 2.5, 1e-9);
}

TEST(LogPartition, LabelPermutationInvariance) {
  const std::size_t M = 5, L = 4;
  const ScoreLattice lat = random_lattice(M, L, 31);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  ScoreLattice permuted(M, L);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) permuted(i, perm[a], perm[b]) = lat(i, a, b);
    }
  }
  // Position 0 is start-conditioned: keep its rows identical.
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) permuted(0, a, perm[b]) = lat(0, 0, b);
  }
  const double z = log_partition(lat);
  EXPECT_NEAR(std::exp(log_partition(permuted) - z), 1.0, 1e-9);
}

TEST(Marginals, UniformAndNormalized) {
  const auto p = pairwise_marginals(ScoreLattice(2, 2));
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) EXPECT_NEAR(p(1, a, b), 0.25, 1e-15);
  }
  const ScoreLattice lat = random_lattice(6, 5, 3, 3.0);
  const auto q = pairwise_marginals(lat);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (double v : q.block(i)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  // Consecutive positions agree on the shared label.
  for (std::size_t i = 0; i + 1 < 6; ++i) {
    for (std::size_t b = 0; b < 5; ++b) {
      double in = 0.0, out = 0.0;
      for (std::size_t a = 0; a < 5; ++a) in += q(i, a, b);
      for (std::size_t c = 0; c < 5; ++c) out += q(i + 1, b, c);
      EXPECT_NEAR(in, out, 1e-9);
    }
  }
}

TEST(Marginals, StartMassLivesInStartRow) {
  const auto q = pairwise_marginals(random_lattice(3, 3, 8));
  for (std::size_t a = 1; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(q(0, a, b), 0.0);
  }
}

TEST(Marginals, MatchEnumeration) {
  const ScoreLattice lat = random_lattice(4, 3, 11);
  const auto fast = pairwise_marginals(lat);
  const auto slow = oracle::brute_force_marginals(lat);
  for (std::size_t k = 0; k < fast.values.size(); ++k) EXPECT_NEAR(fast.values[k], slow.values[k], 1e-10);
}

TEST(Viterbi, DominantLabelAndTies) {
  ScoreLattice lat(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t a = 0; a < 3; ++a) lat(i, a, 1) = 1.0;
  }
  EXPECT_EQ(viterbi(lat).labels, (std::vector<int>{1, 1, 1, 1}));
  EXPECT_EQ(viterbi(ScoreLattice(4, 3)).labels, (std::vector<int>{0, 0, 0, 0}));
}

TEST(Viterbi, MatchesEnumerationAndBounds) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const ScoreLattice lat = random_lattice(6, 3, seed);
    const auto fast = viterbi(lat);
    const auto slow = oracle::brute_force_best_path(lat);
    EXPECT_EQ(fast.labels, slow.labels);
    EXPECT_EQ(fast.score, slow.score);
    EXPECT_NEAR(path_score(lat, fast.labels), fast.score, 1e-9);
    EXPECT_LT(fast.score, log_partition(lat));
  }
}

TEST(Viterbi, TiedLatticeFollowsSharedTieBreak) {
  // Integer-valued scores make exact ties common.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ScoreLattice lat = random_lattice(5, 3, seed);
    for (double& v : lat.values) v = std::round(v);
    EXPECT_EQ(viterbi(lat).labels, oracle::brute_force_best_path(lat).labels);
  }
}

TEST(DecodeSoftmax, Examples) {
  ScoreLattice lat(3, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t a = 0; a < 4; ++a) lat(i, a, 2) = 1.0;
  }
  EXPECT_EQ(decode_softmax(lat).labels, (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(decode_softmax(ScoreLattice(3, 4)).labels, (std::vector<int>{0, 0, 0}));
}

TEST(DecodeSoftmax, AgreesWithViterbiOnSoftmaxLattices) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dims d = testing::small_dims();
    const ModelParams p = testing::random_params(FamilyTag::kSoftmax, d, seed);
    const ScoreLattice lat = score_lattice(p, testing::random_reps(6, d.d_h, seed));
    EXPECT_EQ(decode_softmax(lat).labels, viterbi(lat).labels);
  }
}

TEST(Nll, UniformModel) {
  const auto r = nll_and_grad(ScoreLattice(2, 3), {0, 2});
  EXPECT_NEAR(r.loss, 2.0 * std::log(3.0), 1e-12);
}

TEST(Nll, SaturatedGoldPath) {
  const std::vector<int> gold{1, 0, 2};
  ScoreLattice lat(3, 3);
  for (std::size_t a = 0; a < 3; ++a) lat(0, a, 1) = 40.0;
  lat(1, 1, 0) = 40.0;
  lat(2, 0, 2) = 40.0;
  const auto r = nll_and_grad(lat, gold);
  EXPECT_LT(r.loss, 1e-10);
  EXPECT_GE(r.loss, 0.0);
  for (double g : r.grad.values) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Nll, GradientMatchesFiniteDifferences) {
  const std::size_t M = 4, L = 3;
  ScoreLattice lat = random_lattice(M, L, 5);
  const auto gold = random_labels(M, L, 6);
  const auto r = nll_and_grad(lat, gold);
  // Position 0 entries are tied across rows; perturb them together.
  const double h = 1e-5;
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        if (i == 0 && a > 0) continue;
        auto bump = [&](double delta) {
          ScoreLattice x = lat;
          if (i == 0) {
            for (std::size_t c = 0; c < L; ++c) x(0, c, b) += delta;
          } else {
            x(i, a, b) += delta;
          }
          return nll_and_grad(x, gold).loss;
        };
        const double numeric = (bump(h) - bump(-h)) / (2 * h);
        double analytic = r.grad(i, a, b);
        if (i == 0) {
          analytic = 0.0;
          for (std::size_t c = 0; c < L; ++c) analytic += r.grad(0, c, b);
        }
        EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
      }
    }
  }
}

TEST(Nll, LossIsNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto lat = random_lattice(5, 4, seed, 4.0);
    EXPECT_GE(nll_and_grad(lat, random_labels(5, 4, seed + 1)).loss, 0.0);
  }
}

TEST(Nll, RejectsBadLabels) {
  EXPECT_THROW(nll_and_grad(ScoreLattice(2, 3), {0, 3}), Error);
  EXPECT_THROW(nll_and_grad(ScoreLattice(2, 3), {0, -1}), Error);
  EXPECT_THROW(nll_and_grad(ScoreLattice(2, 3), {0}), Error);
}

}  // namespace
}  // namespace mlcrf
