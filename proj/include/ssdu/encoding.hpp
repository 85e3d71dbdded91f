#pragma once

#include <cstddef>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/sampling.hpp"

namespace ssdu {

/// Receiver coil sensitivity maps, SOS-normalized: sum_c |map_c(r)|^2 = 1
/// wherever any map is nonzero.
class CoilSensitivities {
 public:
  CoilSensitivities() = default;
  /// Validates shape agreement, finiteness and SOS normalization (tolerance 1e-9).
  explicit CoilSensitivities(std::vector<ComplexImage> maps);

  std::size_t ncoils() const noexcept { return maps_.size(); }
  std::size_t rows() const noexcept { return maps_.empty() ? 0 : maps_.front().rows(); }
  std::size_t cols() const noexcept { return maps_.empty() ? 0 : maps_.front().cols(); }
  const ComplexImage& operator[](std::size_t c) const { return maps_[c]; }
  const std::vector<ComplexImage>& maps() const noexcept { return maps_; }

 private:
  std::vector<ComplexImage> maps_;
};

/// Multi-coil Cartesian SENSE encoding E = M F S for one sampling pattern.
/// Immutable once built; all applications are const and thread-safe.
class SenseOperator {
 public:
  SenseOperator(CoilSensitivities sens, BoolGrid mask);

  const CoilSensitivities& sens() const noexcept { return sens_; }
  const BoolGrid& mask() const noexcept { return mask_; }
  std::size_t ncoils() const noexcept { return sens_.ncoils(); }
  std::size_t rows() const noexcept { return mask_.rows(); }
  std::size_t cols() const noexcept { return mask_.cols(); }

  /// Same coils, different sampling pattern.
  SenseOperator with_mask(BoolGrid mask) const { return SenseOperator(sens_, std::move(mask)); }

  CoilKSpace forward(const ComplexImage& x) const;
  ComplexImage adjoint(const CoilKSpace& y) const;
  /// E^H E x in a single pass over the coils.
  ComplexImage normal(const ComplexImage& x) const;

  /// Zeroes every entry of y outside the mask (in place).
  void restrict(CoilKSpace& y) const;

 private:
  void check_image(const ComplexImage& x) const;
  void check_kspace(const CoilKSpace& y) const;

  CoilSensitivities sens_;
  BoolGrid mask_;
};

inline CoilKSpace sense_forward(const SenseOperator& op, const ComplexImage& x) { return op.forward(x); }
inline ComplexImage sense_adjoint(const SenseOperator& op, const CoilKSpace& y) { return op.adjoint(y); }
inline ComplexImage sense_normal(const SenseOperator& op, const ComplexImage& x) { return op.normal(x); }

/// Concatenated l2 norm / inner product over all coils of a k-space stack.
double l2_norm(const CoilKSpace& y) noexcept;
cplx vdot(const CoilKSpace& a, const CoilKSpace& b);

}  // namespace ssdu
