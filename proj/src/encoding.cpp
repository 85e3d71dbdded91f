#include "ssdu/encoding.hpp"

#include <cmath>
#include <string>

namespace ssdu {

CoilSensitivities::CoilSensitivities(std::vector<ComplexImage> maps) : maps_(std::move(maps)) {
  if (maps_.empty()) throw ShapeError("coil sensitivities need at least one coil");
  const auto& first = maps_.front();
  for (const auto& m : maps_) {
    if (!m.same_shape(first)) throw ShapeError("coil maps differ in shape");
    if (!all_finite(m.span())) throw NumericError("coil map contains non-finite values");
  }
  for (std::size_t i = 0; i < first.size(); ++i) {
    double sos = 0.0;
    for (const auto& m : maps_) sos += std::norm(m[i]);
    if (sos != 0.0 && std::abs(sos - 1.0) > 1e-9)
      throw NormalizationError("coil maps are not SOS-normalized at pixel " + std::to_string(i) +
                               " (sum |s|^2 = " + std::to_string(sos) + ")");
  }
}

SenseOperator::SenseOperator(CoilSensitivities sens, BoolGrid mask) : sens_(std::move(sens)), mask_(std::move(mask)) {
  if (sens_.rows() != mask_.rows() || sens_.cols() != mask_.cols())
    throw ShapeError("mask shape does not match coil map shape");
}

void SenseOperator::check_image(const ComplexImage& x) const {
  if (!x.same_shape(rows(), cols()))
    throw ShapeError("image is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", operator is " +
                     std::to_string(rows()) + "x" + std::to_string(cols()));
}

void SenseOperator::check_kspace(const CoilKSpace& y) const {
  if (y.size() != ncoils())
    throw ShapeError("expected " + std::to_string(ncoils()) + " coil grids, got " + std::to_string(y.size()));
  for (const auto& g : y)
    if (!g.same_shape(rows(), cols())) throw ShapeError("k-space grid shape does not match operator");
}

CoilKSpace SenseOperator::forward(const ComplexImage& x) const {
  check_image(x);
  CoilKSpace out;
  out.reserve(ncoils());
  for (std::size_t c = 0; c < ncoils(); ++c) {
    KSpaceGrid k(rows(), cols());
    const auto& s = sens_[c];
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = s[i] * x[i];
    fft2c_inplace(k.span(), rows(), cols(), FftDirection::forward);
    for (std::size_t i = 0; i < k.size(); ++i)
      if (!mask_[i]) k[i] = 0.0;
    out.push_back(std::move(k));
  }
  return out;
}

ComplexImage SenseOperator::adjoint(const CoilKSpace& y) const {
  check_kspace(y);
  ComplexImage out(rows(), cols());
  std::vector<cplx> buf(out.size());
  for (std::size_t c = 0; c < ncoils(); ++c) {
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask_[i] ? y[c][i] : cplx{};
    fft2c_inplace(buf, rows(), cols(), FftDirection::inverse);
    const auto& s = sens_[c];
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] += std::conj(s[i]) * buf[i];
  }
  return out;
}

ComplexImage SenseOperator::normal(const ComplexImage& x) const {
  check_image(x);
  ComplexImage out(rows(), cols());
  std::vector<cplx> buf(out.size());
  for (std::size_t c = 0; c < ncoils(); ++c) {
    const auto& s = sens_[c];
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = s[i] * x[i];
    fft2c_inplace(buf, rows(), cols(), FftDirection::forward);
    for (std::size_t i = 0; i < buf.size(); ++i)
      if (!mask_[i]) buf[i] = 0.0;
    fft2c_inplace(buf, rows(), cols(), FftDirection::inverse);
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] += std::conj(s[i]) * buf[i];
  }
  return out;
}

void SenseOperator::restrict(CoilKSpace& y) const {
  check_kspace(y);
  for (auto& g : y)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask_[i]) g[i] = 0.0;
}

double l2_norm(const CoilKSpace& y) noexcept {
  double sq = 0.0;
  for (const auto& g : y)
    for (const auto& v : g.values()) sq += std::norm(v);
  return std::sqrt(sq);
}

cplx vdot(const CoilKSpace& a, const CoilKSpace& b) {
  if (a.size() != b.size()) throw ShapeError("coil count mismatch in vdot");
  cplx acc{};
  for (std::size_t c = 0; c < a.size(); ++c) acc += vdot(a[c].span(), b[c].span());
  return acc;
}

}  // namespace ssdu
