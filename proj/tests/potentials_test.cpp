#include <cmath>

#include <gtest/gtest.h>

#include "mlcrf/inference.hpp"
#include "mlcrf/oracle.hpp"
#include "mlcrf/potentials.hpp"
#include "test_support.hpp"

namespace mlcrf {
namespace {

using testing::random_params;
using testing::random_reps;
using testing::reference_score;
using testing::small_dims;

class EveryFamily : public ::testing::TestWithParam<FamilyTag> {};

std::string family_test_name(const ::testing::TestParamInfo<FamilyTag>& info) {
  std::string s(family_name(info.param));
  for (char& c : s) {
    if (c == '-') c = '_';
  }
  return s;
}

TEST_P(EveryFamily, LatticeMatchesDirectFormula) {
  const Dims dims = small_dims(3);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ModelParams p = random_params(GetParam(), dims, seed);
    const auto reps = random_reps(4, dims.d_h, seed + 100);
    const ScoreLattice lat = score_lattice(p, reps);
    ASSERT_EQ(lat.length, 4u);
    for (std::size_t b = 0; b < 3; ++b) {
      const double ref = reference_score(p, reps, 0, 3, b);
      for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(lat(0, a, b), ref, 1e-10);
    }
    for (std::size_t i = 1; i < 4; ++i) {
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(lat(i, a, b), reference_score(p, reps, i, a, b), 1e-10);
      }
    }
  }
}

TEST_P(EveryFamily, BackpropMatchesFiniteDifferences) {
  const Dims dims = small_dims();
  const ModelParams p = random_params(GetParam(), dims, 42);
  const auto reps = random_reps(5, dims.d_h, 43);
  const LatticeGrad g = testing::random_lattice(5, dims.num_labels, 44);
  const ParamGrad analytic = backprop_lattice(p, reps, g);
  const ParamGrad numeric = oracle::finite_diff_grad(
      [&](const ModelParams& q) {
        const ScoreLattice lat = score_lattice(q, reps);
        double s = 0.0;
        for (std::size_t k = 0; k < lat.values.size(); ++k) s += g.values[k] * lat.values[k];
        return s;
      },
      p);
  for (const auto& e : oracle::relative_errors(analytic, numeric)) {
    EXPECT_LT(e.relative_error, 1e-4) << e.field;
  }
}

TEST_P(EveryFamily, ZeroLatticeGradGivesZeroParamGrad) {
  const Dims dims = small_dims();
  const ModelParams p = random_params(GetParam(), dims, 1);
  const auto reps = random_reps(3, dims.d_h, 2);
  EXPECT_EQ(backprop_lattice(p, reps, LatticeGrad(3, dims.num_labels)), zeros_like(p));
}

TEST_P(EveryFamily, RequiredFieldsArePopulated) {
  const ModelParams p = init_params(GetParam(), small_dims(), RngSeed{1});
  std::vector<std::string_view> names;
  p.for_each_field([&](std::string_view n, const auto&) { names.push_back(n); });
  EXPECT_EQ(names, required_fields(GetParam()));
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(parse_family(family_name(GetParam())), GetParam());
}

TEST_P(EveryFamily, RejectsMismatchedRepresentations) {
  const ModelParams p = init_params(GetParam(), small_dims(), RngSeed{1});
  EXPECT_THROW(score_lattice(p, random_reps(3, 6, 1)), Error);
}

TEST_P(EveryFamily, RejectsNonFiniteParameters) {
  ModelParams p = init_params(GetParam(), small_dims(), RngSeed{1});
  p.for_each_field([](std::string_view, auto& t) {
    if (!t.data.empty()) t.data[0] = std::nan("");
  });
  EXPECT_THROW(score_lattice(p, random_reps(3, 5, 1)), Error);
}

INSTANTIATE_TEST_SUITE_P(Potentials, EveryFamily, ::testing::ValuesIn(kAllFamilies), family_test_name);

TEST(Potentials, UnknownFamilyName) {
  try {
    parse_family("quintilinear");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "unknown family: quintilinear");
  }
}

TEST(Potentials, VanillaZeroParametersGiveZeroLattice) {
  ModelParams p = init_params(FamilyTag::kVanillaCrf, small_dims(), RngSeed{1});
  std::fill(p.transition_table.data.begin(), p.transition_table.data.end(), 0.0);
  std::fill(p.w_h.data.begin(), p.w_h.data.end(), 0.0);
  const ScoreLattice lat = score_lattice(p, random_reps(4, 5, 3));
  for (double v : lat.values) EXPECT_EQ(v, 0.0);
}

TEST(Potentials, VanillaHandComputedEmission) {
  Dims d;
  d.num_labels = 2;
  d.d_h = 2;
  ModelParams p = init_params(FamilyTag::kVanillaCrf, d, RngSeed{1});
  p.transition_table = Mat(3, 2);
  p.w_h = Mat::from_rows({{1, 2}, {3, 4}});
  Mat h(2, 2);
  h(1, 0) = 1.0;
  const ScoreLattice lat = score_lattice(p, make_reps(h));
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_EQ(lat(1, a, 0), 1.0);
    EXPECT_EQ(lat(1, a, 1), 2.0);
  }
}

TEST(Potentials, VanillaOneHotBackprop) {
  const Dims dims = small_dims(3);
  const ModelParams p = init_params(FamilyTag::kVanillaCrf, dims, RngSeed{4});
  const auto reps = random_reps(3, dims.d_h, 5);
  LatticeGrad g(3, 3);
  g(2, 1, 2) = 1.0;
  const ParamGrad grad = backprop_lattice(p, reps, g);
  for (std::size_t a = 0; a <= 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(grad.transition_table(a, b), (a == 1 && b == 2) ? 1.0 : 0.0);
  }
  for (std::size_t k = 0; k < dims.d_h; ++k) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(grad.w_h(k, b), b == 2 ? reps.h(2, k) : 0.0);
  }
}

TEST(Potentials, DTrilinearAllOnesFactors) {
  Dims d = small_dims(3);
  d.d_r = 2;
  ModelParams p = init_params(FamilyTag::kDTrilinear, d, RngSeed{1});
  // Each projection of the all-ones inputs yields the all-ones vector.
  std::fill(p.label_embeddings.data.begin(), p.label_embeddings.data.end(), 1.0);
  p.u_t1 = Mat(d.d_t, 2, 1.0 / static_cast<double>(d.d_t));
  p.u_t2 = Mat(d.d_t, 2, 1.0 / static_cast<double>(d.d_t));
  p.u_h = Mat(d.d_h, 2, 1.0 / static_cast<double>(d.d_h));
  const ScoreLattice lat = score_lattice(p, make_reps(Mat(4, d.d_h, 1.0)));
  for (double v : lat.values) EXPECT_NEAR(v, 2.0, 1e-15);
}

TEST(Potentials, SoftmaxIgnoresPreviousLabel) {
  const Dims dims = small_dims();
  const ModelParams p = random_params(FamilyTag::kSoftmax, dims, 8);
  const ScoreLattice lat = score_lattice(p, random_reps(5, dims.d_h, 9));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t a = 1; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(lat(i, a, b), lat(i, 0, b));
    }
  }
}

TEST(ReconstructDenseTrilinear, ZeroAndRankOne) {
  const Tensor3 zero = reconstruct_dense_trilinear(Mat(3, 2), Mat(3, 2), Mat(4, 2));
  for (double v : zero.data) EXPECT_EQ(v, 0.0);

  const Mat x = Mat::from_rows({{1}, {2}});
  const Mat y = Mat::from_rows({{3}, {-1}, {0.5}});
  const Mat z = Mat::from_rows({{2}, {7}});
  // Word index first: U[p][q][r] = x_p * y_q * z_r with u_h = x, u_t1 = y, u_t2 = z.
  const Tensor3 u = reconstruct_dense_trilinear(y, z, x);
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t q = 0; q < 3; ++q) {
      for (std::size_t r = 0; r < 2; ++r) EXPECT_EQ(u(p, q, r), x(p, 0) * y(q, 0) * z(r, 0));
    }
  }
  EXPECT_THROW(reconstruct_dense_trilinear(Mat(3, 2), Mat(3, 3), Mat(4, 2)), Error);
}

// (a) one-hot label embeddings turn TwoBilinear into Vanilla CRF.
TEST(Equivalence, VanillaEqualsOneHotTwoBilinear) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t L = 4;
    Dims d = small_dims(L);
    const ModelParams van = random_params(FamilyTag::kVanillaCrf, d, seed);
    d.d_t = L + 1;
    ModelParams two = init_params(FamilyTag::kTwoBilinear, d, RngSeed{seed});
    two.label_embeddings = Mat::identity(L + 1);
    two.w_t = Mat(L + 1, L + 1);
    two.w_h = Mat(d.d_h, L + 1);
    for (std::size_t a = 0; a <= L; ++a) {
      for (std::size_t b = 0; b < L; ++b) two.w_t(a, b) = van.transition_table(a, b);
    }
    for (std::size_t k = 0; k < d.d_h; ++k) {
      for (std::size_t b = 0; b < L; ++b) two.w_h(k, b) = van.w_h(k, b);
    }
    const auto reps = random_reps(6, d.d_h, seed + 50);
    const ScoreLattice x = score_lattice(van, reps);
    const ScoreLattice y = score_lattice(two, reps);
    for (std::size_t k = 0; k < x.values.size(); ++k) EXPECT_NEAR(x.values[k], y.values[k], 1e-12);
  }
}

// (b) ThreeBilinear with w_h2 = 0 is TwoBilinear.
TEST(Equivalence, ThreeBilinearWithoutPreviousEmission) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dims d = small_dims();
    ModelParams three = random_params(FamilyTag::kThreeBilinear, d, seed);
    std::fill(three.w_h2.data.begin(), three.w_h2.data.end(), 0.0);
    ModelParams two = init_params(FamilyTag::kTwoBilinear, d, RngSeed{seed});
    two.label_embeddings = three.label_embeddings;
    two.w_t = three.w_t;
    two.w_h = three.w_h1;
    const auto reps = random_reps(5, d.d_h, seed + 7);
    EXPECT_EQ(score_lattice(three, reps).values, score_lattice(two, reps).values);
  }
}

// (c) D-Trilinear equals Trilinear with the reconstructed dense tensor.
TEST(Equivalence, DTrilinearEqualsDenseReconstruction) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dims d = small_dims();
    const ModelParams dec = random_params(FamilyTag::kDTrilinear, d, seed);
    ModelParams dense = init_params(FamilyTag::kTrilinear, d, RngSeed{seed});
    dense.label_embeddings = dec.label_embeddings;
    dense.u_dense = reconstruct_dense_trilinear(dec.u_t1, dec.u_t2, dec.u_h);
    const auto reps = random_reps(5, d.d_h, seed + 9);
    const ScoreLattice x = score_lattice(dec, reps);
    const ScoreLattice y = score_lattice(dense, reps);
    for (std::size_t k = 0; k < x.values.size(); ++k) EXPECT_NEAR(x.values[k], y.values[k], 1e-9);
  }
}

// (d) D-Quadrilinear whose previous-word factor is constantly one reduces
// to D-Trilinear. A constant-1 coordinate appended to every representation
// (and to the start boundary) drives u_h1 to the all-ones vector.
TEST(Equivalence, DQuadrilinearWithUnitPreviousFactor) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Dims d = small_dims();
    const ModelParams tri = random_params(FamilyTag::kDTrilinear, d, seed);
    const auto base = random_reps(5, d.d_h, seed + 11);

    Dims dq = d;
    dq.d_h = d.d_h + 1;
    ModelParams quad = init_params(FamilyTag::kDQuadrilinear, dq, RngSeed{seed});
    quad.label_embeddings = tri.label_embeddings;
    quad.u_t1 = tri.u_t1;
    quad.u_t2 = tri.u_t2;
    quad.u_h1 = Mat(dq.d_h, d.d_r);
    quad.u_h2 = Mat(dq.d_h, d.d_r);
    for (std::size_t j = 0; j < d.d_r; ++j) {
      quad.u_h1(d.d_h, j) = 1.0;
      for (std::size_t k = 0; k < d.d_h; ++k) quad.u_h2(k, j) = tri.u_h(k, j);
    }
    quad.boundary_pre = Vec(dq.d_h);
    quad.boundary_pre[d.d_h] = 1.0;

    Mat h(5, dq.d_h);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t k = 0; k < d.d_h; ++k) h(i, k) = base.h(i, k);
      h(i, d.d_h) = 1.0;
    }
    const ScoreLattice x = score_lattice(tri, base);
    const ScoreLattice y = score_lattice(quad, make_reps(h));
    for (std::size_t k = 0; k < x.values.size(); ++k) EXPECT_NEAR(x.values[k], y.values[k], 1e-12);
  }
}

TEST(Potentials, ParameterCountMatchesFields) {
  const ModelParams p = init_params(FamilyTag::kDQuadrilinear, small_dims(), RngSeed{1});
  std::size_t n = 0;
  p.for_each_field([&](std::string_view, const auto& t) { n += t.data.size(); });
  EXPECT_EQ(p.parameter_count(), n);
  // (L+1) x d_t + 2 (d_t x d_r) + 2 (d_h x d_r) + d_h
  EXPECT_EQ(n, 5u * 4 + 2 * 4 * 3 + 2 * 5 * 3 + 5);
}

}  // namespace
}  // namespace mlcrf
