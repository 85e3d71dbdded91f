#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"
#include "ssdu/solvers.hpp"

namespace ssdu {

struct NetConfig {
  std::size_t unrolls = 10;
  std::size_t cg_iters = 10;
  std::size_t channels = 16;
  std::size_t res_blocks = 4;
  std::size_t kernel = 3;
  /// Constant multiplier applied to each residual block's output.
  double scale = 0.1;
  /// Penalty weight mu at initialization.
  double initial_mu = 1.0;
  /// Start conv_out at zero so the untrained regularizer is the identity.
  bool zero_init_output = true;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Number of trainable scalars: bias-free convolutions plus the penalty mu.
std::size_t count_params(const NetConfig& cfg);

/// All trainable weights in one flat vector, in this order:
///   conv_in  [k][k][2][C]
///   for each residual block: conv_a [k][k][C][C], conv_b [k][k][C][C]
///   conv_out [k][k][C][2]
///   mu (unconstrained; the penalty is softplus of this entry)
/// The same layout is used for gradients and optimizer moments.
class NetworkParams {
 public:
  NetworkParams() = default;
  /// Zero convolution weights, mu at cfg.initial_mu.
  explicit NetworkParams(const NetConfig& cfg);

  const NetConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return flat_.size(); }
  std::span<double> flat() noexcept { return flat_; }
  std::span<const double> flat() const noexcept { return flat_; }

  std::span<const double> conv_in() const;
  std::span<const double> block_conv(std::size_t block, int which) const;
  std::span<const double> conv_out() const;
  std::span<double> conv_in();
  std::span<double> block_conv(std::size_t block, int which);
  std::span<double> conv_out();

  double mu_raw() const { return flat_.back(); }
  double& mu_raw() { return flat_.back(); }
  /// Positive penalty mu = softplus(mu_raw).
  double mu() const;

  /// Offset of a named tensor inside flat(); used for diagnostics.
  std::size_t conv_in_offset() const noexcept { return 0; }
  std::size_t block_offset(std::size_t block, int which) const noexcept;
  std::size_t conv_out_offset() const noexcept;

  bool operator==(const NetworkParams&) const = default;

 private:
  NetConfig cfg_;
  std::vector<double> flat_;
};

double softplus(double x) noexcept;
double softplus_inverse(double y);
double sigmoid(double x) noexcept;

/// Truncated-normal (2 sigma) He initialization, std sqrt(2 / (k^2 C_in)) per layer.
/// conv_out is left at zero when cfg.zero_init_output is set.
NetworkParams init_params(const NetConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Convolution primitives ("same" zero padding, stride 1, no bias) on
// channel-major feature maps [C][rows][cols]. Weights are [k][k][C_in][C_out].

struct FeatureMap {
  std::size_t channels = 0, rows = 0, cols = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t r, std::size_t w) : channels(c), rows(r), cols(w), data(c * r * w) {}
  std::size_t plane() const noexcept { return rows * cols; }
};

FeatureMap conv2d(const FeatureMap& x, std::span<const double> w, std::size_t kernel, std::size_t c_out);

/// Given dL/dy, accumulates dL/dw into grad_w and returns dL/dx.
FeatureMap conv2d_backward(const FeatureMap& x, std::span<const double> w, std::size_t kernel, const FeatureMap& gy,
                           std::span<double> grad_w);

FeatureMap to_channels(const ComplexImage& x);
ComplexImage from_channels(const FeatureMap& f);

// ---------------------------------------------------------------------------

/// Activations kept by resnet_forward for the backward pass.
struct ResNetTape {
  FeatureMap input;
  std::vector<FeatureMap> h;        // h[0] = conv_in(input), h[b+1] = block b output
  std::vector<FeatureMap> pre_act;  // first conv of each block, before ReLU
};

/// x + conv_out(blocks(conv_in(x))), complex in and out.
ComplexImage resnet_forward(const NetworkParams& p, const ComplexImage& x, ResNetTape* tape = nullptr);

/// Backpropagates dL/d(output) through one resnet application; accumulates
/// weight gradients into grad (NetworkParams layout) and returns dL/d(input).
ComplexImage resnet_backward(const NetworkParams& p, const ResNetTape& tape, const ComplexImage& g_out,
                             std::span<double> grad);

struct UnrolledTape {
  std::vector<ResNetTape> resnet;
  std::vector<ComplexImage> z;  // regularizer outputs, one per unroll
  std::vector<ComplexImage> x;  // x[0] = E^H y, x[t] = DC output of unroll t
};

/// x0 = E^H y; repeat: z = resnet(x), x = dc_solve(z) with a fixed cg_iters budget.
ComplexImage unrolled_forward(const NetworkParams& p, const SenseOperator& op, const CoilKSpace& y,
                              UnrolledTape* tape = nullptr);

/// Reverse pass through the unrolled network. The data-consistency unit uses
/// the implicit adjoint: w = (N + mu I)^{-1} g, dL/dz = mu w, dL/dmu = Re<w, z - x>.
/// Accumulates into grad (NetworkParams layout).
void unrolled_backward(const NetworkParams& p, const SenseOperator& op, const UnrolledTape& tape,
                       const ComplexImage& g_out, std::span<double> grad);

}  // namespace ssdu
