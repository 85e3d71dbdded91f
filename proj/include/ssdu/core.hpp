#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "ssdu/errors.hpp"

namespace ssdu {

using cplx = std::complex<double>;

struct ImageDomain {};
struct KSpaceDomain {};

/// Row-major 2-D complex array. The Domain tag keeps image-space and
/// k-space data from being mixed up at call sites; the storage is identical.
template <typename Domain>
class ComplexGrid {
 public:
  ComplexGrid() = default;
  ComplexGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  ComplexGrid(std::size_t rows, std::size_t cols, std::vector<cplx> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("grid data length does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }

  std::span<cplx> span() noexcept { return data_; }
  std::span<const cplx> span() const noexcept { return data_; }
  std::vector<cplx>& values() noexcept { return data_; }
  const std::vector<cplx>& values() const noexcept { return data_; }

  bool same_shape(std::size_t rows, std::size_t cols) const noexcept {
    return rows_ == rows && cols_ == cols;
  }
  template <typename Other>
  bool same_shape(const ComplexGrid<Other>& o) const noexcept {
    return same_shape(o.rows(), o.cols());
  }

  bool operator==(const ComplexGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

using ComplexImage = ComplexGrid<ImageDomain>;
using KSpaceGrid = ComplexGrid<KSpaceDomain>;
/// One k-space grid per receiver coil.
using CoilKSpace = std::vector<KSpaceGrid>;

enum class FftDirection { forward, inverse };

bool is_power_of_two(std::size_t n) noexcept;

/// Centered, unitary 2-D DFT applied in place to a row-major rows x cols buffer.
/// The zero frequency sits at (rows/2, cols/2).
void fft2c_inplace(std::span<cplx> data, std::size_t rows, std::size_t cols, FftDirection dir);

ComplexImage fft2c(const ComplexImage& img, FftDirection dir);
KSpaceGrid fft2c(const ComplexImage& img);
ComplexImage ifft2c(const KSpaceGrid& ksp);

/// sum_i conj(a_i) * b_i
cplx vdot(std::span<const cplx> a, std::span<const cplx> b);

struct Norms {
  double l1;
  double l2;
};

Norms norms(std::span<const cplx> a);

/// sqrt(sum |a_i|^2), accepting empty input (returns 0).
double l2_norm(std::span<const cplx> a) noexcept;

bool all_finite(std::span<const cplx> a) noexcept;

// Element-wise helpers used by the solvers; all require equal lengths.
void axpy(cplx alpha, std::span<const cplx> x, std::span<cplx> y);
void scale(cplx alpha, std::span<cplx> x) noexcept;

template <typename Domain>
ComplexGrid<Domain> operator+(ComplexGrid<Domain> a, const ComplexGrid<Domain>& b) {
  axpy(1.0, b.span(), a.span());
  return a;
}

template <typename Domain>
ComplexGrid<Domain> operator-(ComplexGrid<Domain> a, const ComplexGrid<Domain>& b) {
  axpy(-1.0, b.span(), a.span());
  return a;
}

template <typename Domain>
ComplexGrid<Domain> operator*(cplx s, ComplexGrid<Domain> a) {
  scale(s, a.span());
  return a;
}

}  // namespace ssdu
