#ifndef MLCRF_TESTS_TEST_SUPPORT_HPP
#define MLCRF_TESTS_TEST_SUPPORT_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "mlcrf/core_math.hpp"
#include "mlcrf/potentials.hpp"

namespace mlcrf::testing {

inline Dims small_dims(std::size_t L = 4) {
  Dims d;
  d.num_labels = L;
  d.d_h = 5;
  d.d_t = 4;
  d.d_r = 3;
  d.mlp_hidden = 6;
  return d;
}

// init_params plus non-zero vectors, so every term is exercised.
inline ModelParams random_params(FamilyTag family, const Dims& dims, std::uint64_t seed) {
  ModelParams p = init_params(family, dims, RngSeed{seed});
  Rng rng(derive_seed(RngSeed{seed}, 99));
  for (Vec* v : {&p.mlp_b1, &p.boundary_pre, &p.boundary_post}) {
    for (double& x : v->data) x = 0.5 * rng.normal();
  }
  return p;
}

inline RepresentationSequence random_reps(std::size_t M, std::size_t d_h, std::uint64_t seed) {
  Rng rng(RngSeed{seed});
  Mat h(M, d_h);
  for (double& x : h.data) x = rng.normal();
  return make_reps(std::move(h));
}

inline ScoreLattice random_lattice(std::size_t M, std::size_t L, std::uint64_t seed, double scale = 1.0) {
  Rng rng(RngSeed{seed});
  ScoreLattice lat(M, L);
  for (double& x : lat.values) x = scale * rng.normal();
  // Position 0 carries the same start-conditioned row everywhere.
  for (std::size_t a = 1; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) lat(0, a, b) = lat(0, 0, b);
  }
  return lat;
}

inline std::vector<int> random_labels(std::size_t M, std::size_t L, std::uint64_t seed) {
  Rng rng(RngSeed{seed});
  std::vector<int> y(M);
  for (int& v : y) v = static_cast<int>(rng.below(L));
  return y;
}

// Direct evaluation of one family's formula at position i with previous
// label a (a == L means the start label) and label b. Written from the
// formulas with plain loops and no cached tables.
inline double reference_score(const ModelParams& p, const RepresentationSequence& reps, std::size_t i,
                              std::size_t a, std::size_t b) {
  const std::size_t D = p.d_h;
  const std::size_t M = reps.length();
  auto h = [&](std::size_t pos, std::size_t k) { return reps.h(pos, k); };
  auto prev_h = [&](std::size_t k) {
    return i == 0 ? reps.h_pre[k] + (p.boundary_pre.empty() ? 0.0 : p.boundary_pre[k]) : h(i - 1, k);
  };
  auto next_h = [&](std::size_t k) {
    return i + 1 == M ? reps.h_post[k] + (p.boundary_post.empty() ? 0.0 : p.boundary_post[k]) : h(i + 1, k);
  };
  auto t = [&](std::size_t label, std::size_t q) { return p.label_embeddings(label, q); };
  // x^T W y for a word vector x and label embedding row.
  auto word_label = [&](const Mat& W, auto&& x, std::size_t label) {
    double s = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      for (std::size_t q = 0; q < p.d_t; ++q) s += x(k) * W(k, q) * t(label, q);
    }
    return s;
  };
  auto cur = [&](std::size_t k) { return h(i, k); };
  auto label_label = [&] {
    double s = 0.0;
    for (std::size_t q = 0; q < p.d_t; ++q) {
      for (std::size_t r = 0; r < p.d_t; ++r) s += t(a, q) * p.w_t(q, r) * t(b, r);
    }
    return s;
  };
  auto project = [&](const Mat& U, auto&& x, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < U.rows; ++k) s += x(k) * U(k, j);
    return s;
  };
  auto ta = [&](std::size_t q) { return t(a, q); };
  auto tb = [&](std::size_t q) { return t(b, q); };

  switch (p.family) {
    case FamilyTag::kSoftmax: {
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) s += h(i, k) * p.w_h(k, b);
      return s;
    }
    case FamilyTag::kVanillaCrf: {
      double s = p.transition_table(a, b);
      for (std::size_t k = 0; k < D; ++k) s += h(i, k) * p.w_h(k, b);
      return s;
    }
    case FamilyTag::kTwoBilinear:
      return label_label() + word_label(p.w_h, cur, b);
    case FamilyTag::kThreeBilinear:
      return label_label() + word_label(p.w_h1, cur, b) + word_label(p.w_h2, cur, a);
    case FamilyTag::kTrilinear: {
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        for (std::size_t q = 0; q < p.d_t; ++q) {
          for (std::size_t r = 0; r < p.d_t; ++r) s += h(i, k) * p.u_dense(k, q, r) * t(a, q) * t(b, r);
        }
      }
      return s;
    }
    case FamilyTag::kDTrilinear:
    case FamilyTag::kDQuadrilinear:
    case FamilyTag::kDPentalinear: {
      double s = 0.0;
      for (std::size_t j = 0; j < p.d_r; ++j) {
        double g = project(p.u_t1, ta, j) * project(p.u_t2, tb, j);
        if (p.family == FamilyTag::kDTrilinear) {
          g *= project(p.u_h, cur, j);
        } else {
          g *= project(p.u_h1, prev_h, j) * project(p.u_h2, cur, j);
          if (p.family == FamilyTag::kDPentalinear) g *= project(p.u_h3, next_h, j);
        }
        s += g;
      }
      return s;
    }
    case FamilyTag::kConcatMlp1W2L:
    case FamilyTag::kConcatMlp2W2L: {
      std::vector<double> in;
      if (p.family == FamilyTag::kConcatMlp2W2L) {
        for (std::size_t k = 0; k < D; ++k) in.push_back(prev_h(k));
      }
      for (std::size_t k = 0; k < D; ++k) in.push_back(h(i, k));
      for (std::size_t q = 0; q < p.d_t; ++q) in.push_back(t(a, q));
      for (std::size_t q = 0; q < p.d_t; ++q) in.push_back(t(b, q));
      double s = 0.0;
      for (std::size_t k = 0; k < p.mlp_hidden; ++k) {
        double z = p.mlp_b1[k];
        for (std::size_t c = 0; c < in.size(); ++c) z += p.mlp_w1(k, c) * in[c];
        s += p.mlp_w2(0, k) * std::tanh(z);
      }
      return s;
    }
  }
  return 0.0;
}

}  // namespace mlcrf::testing

#endif  // MLCRF_TESTS_TEST_SUPPORT_HPP
