#ifndef MLCRF_CORE_MATH_HPP
#define MLCRF_CORE_MATH_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlcrf {

// Every recoverable failure in the library surfaces as this exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec {
  std::vector<double> data;

  Vec() = default;
  explicit Vec(std::size_t dim, double fill = 0.0) : data(dim, fill) {}
  Vec(std::initializer_list<double> values) : data(values) {}

  std::size_t dim() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  friend bool operator==(const Vec&, const Vec&) = default;
};

// Row-major dense matrix. A default-constructed Mat (0x0) marks an absent
// parameter field.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat identity(std::size_t n);

  bool empty() const { return data.empty(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Mat&, const Mat&) = default;
};

// Row-major order-3 tensor indexed [p][q][r].
struct Tensor3 {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t d3 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
      : d1(a), d2(b), d3(c), data(a * b * c, fill) {}

  bool empty() const { return data.empty(); }
  double& operator()(std::size_t p, std::size_t q, std::size_t r) {
    return data[(p * d2 + q) * d3 + r];
  }
  double operator()(std::size_t p, std::size_t q, std::size_t r) const {
    return data[(p * d2 + q) * d3 + r];
  }
  // The d2 x d3 slab for a fixed first index.
  std::span<const double> slab(std::size_t p) const { return {data.data() + p * d2 * d3, d2 * d3}; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

struct RngSeed {
  std::uint64_t seed = 0;
  friend bool operator==(const RngSeed&, const RngSeed&) = default;
};

// xoshiro256** (Blackman & Vigna), state expanded from the seed with
// splitmix64. Uniform and normal draws are derived here rather than through
// <random> distributions so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(RngSeed seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller; the second variate is cached.
  double normal();
  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a stream index.
RngSeed derive_seed(RngSeed base, std::uint64_t stream);

double log_sum_exp(std::span<const double> values);

// Glorot-uniform: entries in [-a, a], a = sqrt(6 / (rows + cols)).
Mat init_matrix(std::size_t rows, std::size_t cols, RngSeed seed);
// Same scheme for an order-3 tensor with a = sqrt(6 / (d1 + d2 + d3)).
Tensor3 init_tensor3(std::size_t d1, std::size_t d2, std::size_t d3, RngSeed seed);

Vec matvec(const Mat& m, const Vec& v);
// v^T m, i.e. the product with the transposed matrix.
Vec vecmat(const Vec& v, const Mat& m);
double dot(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Row-major C = alpha * op(A) * op(B) + beta * C with op(A) m x k and op(B)
// k x n; backed by BLAS.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

bool all_finite(std::span<const double> values);

}  // namespace mlcrf

#endif  // MLCRF_CORE_MATH_HPP
