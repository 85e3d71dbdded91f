#include "ssdu/network.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "ssdu/rng.hpp"

namespace ssdu {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t conv_size(std::size_t k, std::size_t cin, std::size_t cout) { return k * k * cin * cout; }

using StridedConst = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;

// Channel planes zero-padded by k/2 on every side. Output pixel (r, c) of tap
// (kh, kw) reads padded index r*wp + c + kh*wp + kw, so every tap is a
// contiguous window of length span() starting at kh*wp + kw. Windows also
// cover the k-1 pad columns of each row; those outputs are discarded.
struct Padded {
  std::size_t channels, rows, cols, k, wp, plane;
  std::vector<double> data;

  Padded(std::size_t ch, std::size_t r, std::size_t c, std::size_t kernel)
      : channels(ch), rows(r), cols(c), k(kernel), wp(c + kernel - 1), plane((r + kernel - 1) * wp),
        data(ch * plane, 0.0) {}
  std::size_t span() const { return (rows - 1) * wp + cols; }
  std::size_t tap_offset(std::size_t kh, std::size_t kw) const { return kh * wp + kw; }
  StridedConst window(std::size_t off) const {
    return StridedConst(data.data() + off, static_cast<long>(channels), static_cast<long>(span()),
                        Eigen::OuterStride<>(static_cast<long>(plane)));
  }
  StridedMut window(std::size_t off) {
    return StridedMut(data.data() + off, static_cast<long>(channels), static_cast<long>(span()),
                      Eigen::OuterStride<>(static_cast<long>(plane)));
  }
};

Padded pad(const FeatureMap& x, std::size_t k) {
  Padded p(x.channels, x.rows, x.cols, k);
  const std::size_t h = k / 2;
  for (std::size_t ch = 0; ch < x.channels; ++ch)
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* src = x.data.data() + (ch * x.rows + r) * x.cols;
      std::copy(src, src + x.cols, p.data.data() + ch * p.plane + (r + h) * p.wp + h);
    }
  return p;
}

// Lays out an unpadded map with row stride wp (span() columns per channel), pad columns zero.
RowMatrix widen(const FeatureMap& y, std::size_t wp) {
  const std::size_t span = (y.rows - 1) * wp + y.cols;
  RowMatrix m = RowMatrix::Zero(static_cast<long>(y.channels), static_cast<long>(span));
  for (std::size_t ch = 0; ch < y.channels; ++ch)
    for (std::size_t r = 0; r < y.rows; ++r) {
      const double* src = y.data.data() + (ch * y.rows + r) * y.cols;
      std::copy(src, src + y.cols, m.row(static_cast<long>(ch)).data() + r * wp);
    }
  return m;
}

FeatureMap narrow(const RowMatrix& m, std::size_t rows, std::size_t cols, std::size_t wp) {
  FeatureMap y(static_cast<std::size_t>(m.rows()), rows, cols);
  for (std::size_t ch = 0; ch < y.channels; ++ch)
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = m.row(static_cast<long>(ch)).data() + r * wp;
      std::copy(src, src + cols, y.data.data() + (ch * rows + r) * cols);
    }
  return y;
}

// Weight block of one tap, [C_in][C_out].
ConstMap tap_weights(std::span<const double> w, std::size_t tap, std::size_t cin, std::size_t cout) {
  return ConstMap(w.data() + tap * cin * cout, static_cast<long>(cin), static_cast<long>(cout));
}

void check_finite(const FeatureMap& f, const std::string& where) {
  for (double v : f.data)
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + where);
}

}  // namespace

// ---------------------------------------------------------------------------

void NetConfig::validate() const {
  if (unrolls < 1) throw ParameterError("unrolls must be >= 1");
  if (channels < 1) throw ParameterError("channels must be >= 1");
  if (kernel % 2 == 0) throw ParameterError("kernel must be odd");
  if (!(initial_mu > 0.0)) throw ParameterError("initial mu must be positive");
  if (!std::isfinite(scale)) throw ParameterError("residual scale must be finite");
}

std::size_t count_params(const NetConfig& cfg) {
  const std::size_t k2 = cfg.kernel * cfg.kernel;
  return 2 * (k2 * 2 * cfg.channels) + cfg.res_blocks * 2 * (k2 * cfg.channels * cfg.channels) + 1;
}

NetworkParams::NetworkParams(const NetConfig& cfg) : cfg_(cfg), flat_(count_params(cfg), 0.0) {
  flat_.back() = softplus_inverse(cfg.initial_mu);
}

std::size_t NetworkParams::block_offset(std::size_t block, int which) const noexcept {
  const std::size_t k = cfg_.kernel, C = cfg_.channels;
  return conv_size(k, 2, C) + (2 * block + static_cast<std::size_t>(which)) * conv_size(k, C, C);
}

std::size_t NetworkParams::conv_out_offset() const noexcept { return block_offset(cfg_.res_blocks, 0); }

std::span<const double> NetworkParams::conv_in() const {
  return std::span<const double>(flat_).subspan(0, conv_size(cfg_.kernel, 2, cfg_.channels));
}
std::span<const double> NetworkParams::block_conv(std::size_t block, int which) const {
  return std::span<const double>(flat_).subspan(block_offset(block, which),
                                                conv_size(cfg_.kernel, cfg_.channels, cfg_.channels));
}
std::span<const double> NetworkParams::conv_out() const {
  return std::span<const double>(flat_).subspan(conv_out_offset(), conv_size(cfg_.kernel, cfg_.channels, 2));
}
std::span<double> NetworkParams::conv_in() {
  return std::span<double>(flat_).subspan(0, conv_size(cfg_.kernel, 2, cfg_.channels));
}
std::span<double> NetworkParams::block_conv(std::size_t block, int which) {
  return std::span<double>(flat_).subspan(block_offset(block, which),
                                          conv_size(cfg_.kernel, cfg_.channels, cfg_.channels));
}
std::span<double> NetworkParams::conv_out() {
  return std::span<double>(flat_).subspan(conv_out_offset(), conv_size(cfg_.kernel, cfg_.channels, 2));
}

double NetworkParams::mu() const { return softplus(mu_raw()); }

double softplus(double x) noexcept { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ParameterError("softplus inverse needs a positive argument");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

NetworkParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkParams p(cfg);
  SplitMix64 rng(seed);
  auto fill = [&](std::span<double> w, std::size_t cin) {
    const double std = std::sqrt(2.0 / static_cast<double>(cfg.kernel * cfg.kernel * cin));
    for (auto& v : w) {
      double z = rng.normal();
      while (std::abs(z) > 2.0) z = rng.normal();
      v = std * z;
    }
  };
  fill(p.conv_in(), 2);
  for (std::size_t b = 0; b < cfg.res_blocks; ++b) {
    fill(p.block_conv(b, 0), cfg.channels);
    fill(p.block_conv(b, 1), cfg.channels);
  }
  if (!cfg.zero_init_output) fill(p.conv_out(), cfg.channels);
  return p;
}

// ---------------------------------------------------------------------------

FeatureMap conv2d(const FeatureMap& x, std::span<const double> w, std::size_t kernel, std::size_t c_out) {
  if (w.size() != kernel * kernel * x.channels * c_out)
    throw ShapeError("conv2d weight size does not match kernel and channel counts");
  const Padded xp = pad(x, kernel);
  RowMatrix y = RowMatrix::Zero(static_cast<long>(c_out), static_cast<long>(xp.span()));
  for (std::size_t kh = 0; kh < kernel; ++kh)
    for (std::size_t kw = 0; kw < kernel; ++kw)
      y.noalias() += tap_weights(w, kh * kernel + kw, x.channels, c_out).transpose() *
                     xp.window(xp.tap_offset(kh, kw));
  return narrow(y, x.rows, x.cols, xp.wp);
}

FeatureMap conv2d_backward(const FeatureMap& x, std::span<const double> w, std::size_t kernel, const FeatureMap& gy,
                           std::span<double> grad_w) {
  const std::size_t cin = x.channels, c_out = gy.channels;
  if (w.size() != kernel * kernel * cin * c_out || grad_w.size() != w.size())
    throw ShapeError("conv2d_backward weight size mismatch");
  if (gy.rows != x.rows || gy.cols != x.cols) throw ShapeError("conv2d_backward gradient shape mismatch");
  const Padded xp = pad(x, kernel);
  const RowMatrix g = widen(gy, xp.wp);
  Padded gx(cin, x.rows, x.cols, kernel);
  for (std::size_t kh = 0; kh < kernel; ++kh)
    for (std::size_t kw = 0; kw < kernel; ++kw) {
      const std::size_t tap = kh * kernel + kw, off = xp.tap_offset(kh, kw);
      MutMap gw(grad_w.data() + tap * cin * c_out, static_cast<long>(cin), static_cast<long>(c_out));
      gw.noalias() += xp.window(off) * g.transpose();
      gx.window(off).noalias() += tap_weights(w, tap, cin, c_out) * g;
    }
  // Interior of the padded gradient is dL/dx.
  FeatureMap out(cin, x.rows, x.cols);
  const std::size_t h = kernel / 2;
  for (std::size_t ch = 0; ch < cin; ++ch)
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* src = gx.data.data() + ch * gx.plane + (r + h) * gx.wp + h;
      std::copy(src, src + x.cols, out.data.data() + (ch * x.rows + r) * x.cols);
    }
  return out;
}

FeatureMap to_channels(const ComplexImage& x) {
  FeatureMap f(2, x.rows(), x.cols());
  const std::size_t P = f.plane();
  for (std::size_t i = 0; i < P; ++i) {
    f.data[i] = x[i].real();
    f.data[P + i] = x[i].imag();
  }
  return f;
}

ComplexImage from_channels(const FeatureMap& f) {
  if (f.channels != 2) throw ShapeError("complex image needs exactly 2 channels");
  ComplexImage x(f.rows, f.cols);
  const std::size_t P = f.plane();
  for (std::size_t i = 0; i < P; ++i) x[i] = {f.data[i], f.data[P + i]};
  return x;
}

// ---------------------------------------------------------------------------

ComplexImage resnet_forward(const NetworkParams& p, const ComplexImage& x, ResNetTape* tape) {
  const auto& cfg = p.config();
  const std::size_t k = cfg.kernel, C = cfg.channels;
  FeatureMap in = to_channels(x);
  FeatureMap h = conv2d(in, p.conv_in(), k, C);
  if (tape) {
    tape->h.clear();
    tape->pre_act.clear();
    tape->h.push_back(h);
  }
  for (std::size_t b = 0; b < cfg.res_blocks; ++b) {
    FeatureMap a = conv2d(h, p.block_conv(b, 0), k, C);
    if (tape) tape->pre_act.push_back(a);
    for (auto& v : a.data) v = v > 0.0 ? v : 0.0;
    const FeatureMap c = conv2d(a, p.block_conv(b, 1), k, C);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += cfg.scale * c.data[i];
    if (tape) tape->h.push_back(h);
  }
  FeatureMap out = conv2d(h, p.conv_out(), k, 2);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += in.data[i];
  if (tape) tape->input = std::move(in);
  return from_channels(out);
}

ComplexImage resnet_backward(const NetworkParams& p, const ResNetTape& tape, const ComplexImage& g_out,
                             std::span<double> grad) {
  const auto& cfg = p.config();
  const std::size_t k = cfg.kernel;
  if (grad.size() != p.size()) throw ShapeError("gradient layout does not match parameters");
  const FeatureMap g_top = to_channels(g_out);

  FeatureMap gh = conv2d_backward(tape.h.back(), p.conv_out(), k, g_top,
                                  grad.subspan(p.conv_out_offset(), p.conv_out().size()));
  check_finite(gh, "conv_out backward");
  for (std::size_t b = cfg.res_blocks; b-- > 0;) {
    FeatureMap gc = gh;
    for (auto& v : gc.data) v *= cfg.scale;
    FeatureMap act = tape.pre_act[b];
    for (auto& v : act.data) v = v > 0.0 ? v : 0.0;
    FeatureMap ga = conv2d_backward(act, p.block_conv(b, 1), k, gc,
                                    grad.subspan(p.block_offset(b, 1), p.block_conv(b, 1).size()));
    for (std::size_t i = 0; i < ga.data.size(); ++i)
      if (!(tape.pre_act[b].data[i] > 0.0)) ga.data[i] = 0.0;
    const FeatureMap gx = conv2d_backward(tape.h[b], p.block_conv(b, 0), k, ga,
                                          grad.subspan(p.block_offset(b, 0), p.block_conv(b, 0).size()));
    for (std::size_t i = 0; i < gh.data.size(); ++i) gh.data[i] += gx.data[i];
    check_finite(gh, "residual block " + std::to_string(b) + " backward");
  }
  FeatureMap gin = conv2d_backward(tape.input, p.conv_in(), k, gh, grad.subspan(0, p.conv_in().size()));
  for (std::size_t i = 0; i < gin.data.size(); ++i) gin.data[i] += g_top.data[i];
  check_finite(gin, "conv_in backward");
  return from_channels(gin);
}

// ---------------------------------------------------------------------------

ComplexImage unrolled_forward(const NetworkParams& p, const SenseOperator& op, const CoilKSpace& y,
                              UnrolledTape* tape) {
  const auto& cfg = p.config();
  const double mu = p.mu();
  const CgOptions cg{cfg.cg_iters, 0.0, false};
  ComplexImage x = op.adjoint(y);
  if (tape) {
    tape->resnet.assign(cfg.unrolls, {});
    tape->z.clear();
    tape->x.clear();
    tape->x.push_back(x);
  }
  for (std::size_t t = 0; t < cfg.unrolls; ++t) {
    ComplexImage z = resnet_forward(p, x, tape ? &tape->resnet[t] : nullptr);
    x = dc_solve(op, y, z, mu, cg);
    if (tape) {
      tape->z.push_back(std::move(z));
      tape->x.push_back(x);
    }
  }
  return x;
}

void unrolled_backward(const NetworkParams& p, const SenseOperator& op, const UnrolledTape& tape,
                       const ComplexImage& g_out, std::span<double> grad) {
  const auto& cfg = p.config();
  if (grad.size() != p.size()) throw ShapeError("gradient layout does not match parameters");
  if (tape.z.size() != cfg.unrolls) throw ShapeError("tape does not match the configured unroll count");
  const double mu = p.mu();
  const CgOptions cg{cfg.cg_iters, 0.0, false};
  auto apply = [&](const ComplexImage& v) {
    ComplexImage out = op.normal(v);
    axpy(mu, v.span(), out.span());
    return out;
  };

  ComplexImage g = g_out;
  double g_mu = 0.0;
  for (std::size_t t = cfg.unrolls; t-- > 0;) {
    const ComplexImage w = conjugate_gradient(apply, g, ComplexImage(g.rows(), g.cols()), cg);
    const ComplexImage diff = tape.z[t] - tape.x[t + 1];
    g_mu += vdot(w.span(), diff.span()).real();
    const ComplexImage gz = cplx(mu) * w;
    g = resnet_backward(p, tape.resnet[t], gz, grad);
    if (!all_finite(g.span()) || !std::isfinite(g_mu))
      throw NumericError("non-finite gradient at unroll " + std::to_string(t));
  }
  grad.back() += g_mu * sigmoid(p.mu_raw());
}

}  // namespace ssdu
