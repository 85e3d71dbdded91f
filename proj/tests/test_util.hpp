#pragma once

// Shared helpers for the test suites: random data and dense reference
// implementations that do not share code paths with the library.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"
#include "ssdu/rng.hpp"

namespace testutil {

using ssdu::cplx;

inline std::vector<cplx> random_vector(std::size_t n, std::uint64_t seed) {
  ssdu::SplitMix64 g(seed);
  std::vector<cplx> v(n);
  for (auto& x : v) x = {g.uniform(-1, 1), g.uniform(-1, 1)};
  return v;
}

inline ssdu::ComplexImage random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return ssdu::ComplexImage(rows, cols, random_vector(rows * cols, seed));
}

inline ssdu::CoilKSpace random_kspace(std::size_t ncoils, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  ssdu::CoilKSpace y;
  for (std::size_t c = 0; c < ncoils; ++c)
    y.emplace_back(rows, cols, random_vector(rows * cols, seed * 131 + c));
  return y;
}

/// Random smooth-ish maps normalized so sum_c |s_c|^2 = 1 at every pixel.
inline ssdu::CoilSensitivities random_sos_maps(std::size_t ncoils, std::size_t rows, std::size_t cols,
                                               std::uint64_t seed) {
  std::vector<ssdu::ComplexImage> maps;
  for (std::size_t c = 0; c < ncoils; ++c) maps.push_back(random_image(rows, cols, seed * 977 + c));
  for (std::size_t i = 0; i < rows * cols; ++i) {
    double s = 0;
    for (auto& m : maps) s += std::norm(m[i]);
    for (auto& m : maps) m[i] /= std::sqrt(s);
  }
  return ssdu::CoilSensitivities(std::move(maps));
}

inline ssdu::BoolGrid random_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  ssdu::SplitMix64 g(seed);
  ssdu::BoolGrid m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.set(i, g.uniform() < p);
  return m;
}

/// Direct O(N^2) centered unitary DFT: X[k] = sum_n x[n] exp(-+2 pi i (k-c)(n-c)/N) / sqrt(N) per axis.
inline std::vector<cplx> direct_dft2c(const std::vector<cplx>& x, std::size_t R, std::size_t C, bool inverse) {
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<cplx> out(R * C);
  const double cr = static_cast<double>(R / 2), cc = static_cast<double>(C / 2);
  for (std::size_t kr = 0; kr < R; ++kr)
    for (std::size_t kc = 0; kc < C; ++kc) {
      cplx acc{};
      for (std::size_t nr = 0; nr < R; ++nr)
        for (std::size_t nc = 0; nc < C; ++nc) {
          const double ph = sgn * 2.0 * std::numbers::pi *
                            (((double(kr) - cr) * (double(nr) - cr)) / double(R) +
                             ((double(kc) - cc) * (double(nc) - cc)) / double(C));
          acc += x[nr * C + nc] * cplx(std::cos(ph), std::sin(ph));
        }
      out[kr * C + kc] = acc / std::sqrt(double(R * C));
    }
  return out;
}

/// Dense column-major matrix of the SENSE forward operator (ncoils*R*C x R*C),
/// assembled from direct DFT columns.
struct DenseMatrix {
  std::size_t m = 0, n = 0;
  std::vector<cplx> a;  // row-major m x n
  cplx& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  cplx operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

inline DenseMatrix dense_sense(const ssdu::CoilSensitivities& sens, const ssdu::BoolGrid& mask) {
  const std::size_t R = mask.rows(), C = mask.cols(), N = R * C;
  DenseMatrix E{sens.ncoils() * N, N, std::vector<cplx>(sens.ncoils() * N * N)};
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t c = 0; c < sens.ncoils(); ++c) {
      std::vector<cplx> col(N);
      col[j] = sens[c][j];
      const auto k = direct_dft2c(col, R, C, false);
      for (std::size_t i = 0; i < N; ++i) E(c * N + i, j) = mask[i] ? k[i] : cplx{};
    }
  }
  return E;
}

inline DenseMatrix hermitian_product(const DenseMatrix& E) {
  DenseMatrix A{E.n, E.n, std::vector<cplx>(E.n * E.n)};
  for (std::size_t i = 0; i < E.n; ++i)
    for (std::size_t j = 0; j < E.n; ++j) {
      cplx s{};
      for (std::size_t k = 0; k < E.m; ++k) s += std::conj(E(k, i)) * E(k, j);
      A(i, j) = s;
    }
  return A;
}

/// Gaussian elimination with partial pivoting; A is square.
inline std::vector<cplx> dense_solve(DenseMatrix A, std::vector<cplx> b) {
  const std::size_t n = A.n;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A(i, k)) > std::abs(A(piv, k))) piv = i;
    for (std::size_t j = 0; j < n; ++j) std::swap(A(k, j), A(piv, j));
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const cplx f = A(i, k) / A(k, k);
      for (std::size_t j = k; j < n; ++j) A(i, j) -= f * A(k, j);
      b[i] -= f * b[k];
    }
  }
  std::vector<cplx> x(n);
  for (std::size_t k = n; k-- > 0;) {
    cplx s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= A(k, j) * x[j];
    x[k] = s / A(k, k);
  }
  return x;
}

inline double rel_err(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / (den > 0 ? den : 1.0));
}

inline double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
