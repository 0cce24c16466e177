#include "mlcrf/core_math.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mlcrf {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m;
  m.rows = rows.size();
  m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
  for (const auto& r : rows) {
    if (r.size() != m.cols) throw Error("ragged matrix literal");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Rng::Rng(RngSeed seed) {
  std::uint64_t x = seed.seed;
  for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

RngSeed derive_seed(RngSeed base, std::uint64_t stream) {
  std::uint64_t x = base.seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return RngSeed{splitmix64(x)};
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error("empty reduction");
  const double m = *std::max_element(values.begin(), values.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

Mat init_matrix(std::size_t rows, std::size_t cols, RngSeed seed) {
  if (rows == 0 || cols == 0) throw Error("init_matrix: dimensions must be positive");
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-a, a);
  return m;
}

Tensor3 init_tensor3(std::size_t d1, std::size_t d2, std::size_t d3, RngSeed seed) {
  if (d1 == 0 || d2 == 0 || d3 == 0) throw Error("init_tensor3: dimensions must be positive");
  const double a = std::sqrt(6.0 / static_cast<double>(d1 + d2 + d3));
  Rng rng(seed);
  Tensor3 t(d1, d2, d3);
  for (double& x : t.data) x = rng.uniform(-a, a);
  return t;
}

Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols != v.dim()) {
    throw Error("matvec: dimension mismatch (" + std::to_string(m.rows) + "x" +
                std::to_string(m.cols) + " times " + std::to_string(v.dim()) + ")");
  }
  Vec out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), v.span());
  return out;
}

Vec vecmat(const Vec& v, const Mat& m) {
  if (m.rows != v.dim()) throw Error("vecmat: dimension mismatch");
  Vec out(m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) axpy(v[r], m.row(r), out.span());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four independent partial sums let the compiler keep several multiply-adds
  // in flight; the summation order is still fixed.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), alpha, a,
              static_cast<blasint>(lda), b, static_cast<blasint>(ldb), beta, c, static_cast<blasint>(ldc));
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mlcrf
