#include "ssdu/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace ssdu {

namespace {

// Per-length tables: bit-reversal permutation and twiddles for both directions.
struct FftPlan {
  std::vector<std::size_t> bitrev;
  std::vector<cplx> fwd, inv;  // exp(-+2 pi i k / n), k < n/2
};

const FftPlan& plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, FftPlan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  FftPlan p;
  p.bitrev.resize(n);
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    p.bitrev[i] = j;
  }
  p.fwd.resize(n / 2);
  p.inv.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p.fwd[k] = {std::cos(a), std::sin(a)};
    p.inv[k] = std::conj(p.fwd[k]);
  }
  return cache.emplace(n, std::move(p)).first->second;
}

// Unnormalized iterative radix-2 transform along the leading axis of an
// n x m row-major block: every butterfly combines two whole rows with one
// twiddle, so the inner loop runs over m contiguous values.
void fft_axis0(cplx* data, std::size_t n, std::size_t m, bool inverse) {
  if (n == 1) return;
  const FftPlan& p = plan(n);
  const cplx* w = inverse ? p.inv.data() : p.fwd.data();
  for (std::size_t i = 0; i < n; ++i)
    if (i < p.bitrev[i]) std::swap_ranges(data + i * m, data + (i + 1) * m, data + p.bitrev[i] * m);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len)
      for (std::size_t k = 0; k < half; ++k) {
        double* a = reinterpret_cast<double*>(data + (start + k) * m);
        double* b = reinterpret_cast<double*>(data + (start + k + half) * m);
        const double wr = w[k * step].real(), wi = w[k * step].imag();
        for (std::size_t c = 0; c < 2 * m; c += 2) {
          const double vr = b[c] * wr - b[c + 1] * wi;
          const double vi = b[c] * wi + b[c + 1] * wr;
          b[c] = a[c] - vr;
          b[c + 1] = a[c + 1] - vi;
          a[c] += vr;
          a[c + 1] += vi;
        }
      }
  }
}

void transpose(const cplx* in, cplx* out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t T = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += T)
    for (std::size_t c0 = 0; c0 < cols; c0 += T)
      for (std::size_t r = r0; r < std::min(rows, r0 + T); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + T); ++c) out[c * rows + r] = in[r * cols + c];
}

// Swap quadrants; for even sizes fftshift and ifftshift coincide.
void shift2(std::span<cplx> data, std::size_t rows, std::size_t cols) {
  const std::size_t hr = rows / 2;
  const std::size_t hc = cols / 2;
  if (hc > 0)
    for (std::size_t r = 0; r < rows; ++r) {
      cplx* row = data.data() + r * cols;
      std::swap_ranges(row, row + hc, row + hc);
    }
  if (hr > 0) std::swap_ranges(data.begin(), data.begin() + static_cast<long>(hr * cols), data.begin() + static_cast<long>(hr * cols));
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft2c_inplace(std::span<cplx> data, std::size_t rows, std::size_t cols, FftDirection dir) {
  if (!is_power_of_two(rows) || !is_power_of_two(cols))
    throw ShapeError("fft2c requires power-of-two dimensions, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  require_same_length(data.size(), rows * cols);
  const bool inverse = dir == FftDirection::inverse;

  shift2(data, rows, cols);
  fft_axis0(data.data(), rows, cols, inverse);
  if (cols > 1) {
    thread_local std::vector<cplx> tr;
    tr.resize(data.size());
    transpose(data.data(), tr.data(), rows, cols);
    fft_axis0(tr.data(), cols, rows, inverse);
    transpose(tr.data(), data.data(), cols, rows);
  }
  shift2(data, rows, cols);

  const double norm = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (auto& v : data) v *= norm;
}

ComplexImage fft2c(const ComplexImage& img, FftDirection dir) {
  ComplexImage out = img;
  fft2c_inplace(out.span(), out.rows(), out.cols(), dir);
  return out;
}

KSpaceGrid fft2c(const ComplexImage& img) {
  KSpaceGrid out(img.rows(), img.cols(), img.values());
  fft2c_inplace(out.span(), out.rows(), out.cols(), FftDirection::forward);
  return out;
}

ComplexImage ifft2c(const KSpaceGrid& ksp) {
  ComplexImage out(ksp.rows(), ksp.cols(), ksp.values());
  fft2c_inplace(out.span(), out.rows(), out.cols(), FftDirection::inverse);
  return out;
}

cplx vdot(std::span<const cplx> a, std::span<const cplx> b) {
  require_same_length(a.size(), b.size());
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // conj(a) * b, expanded
    re += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    im += a[i].real() * b[i].imag() - a[i].imag() * b[i].real();
  }
  return {re, im};
}

Norms norms(std::span<const cplx> a) {
  if (a.empty()) throw ShapeError("norms of an empty sequence");
  double l1 = 0.0, sq = 0.0;
  for (const auto& v : a) {
    l1 += std::abs(v);
    sq += std::norm(v);
  }
  return {l1, std::sqrt(sq)};
}

double l2_norm(std::span<const cplx> a) noexcept {
  double sq = 0.0;
  for (const auto& v : a) sq += std::norm(v);
  return std::sqrt(sq);
}

bool all_finite(std::span<const cplx> a) noexcept {
  for (const auto& v : a)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

void axpy(cplx alpha, std::span<const cplx> x, std::span<cplx> y) {
  require_same_length(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(cplx alpha, std::span<cplx> x) noexcept {
  for (auto& v : x) v *= alpha;
}

}  // namespace ssdu
