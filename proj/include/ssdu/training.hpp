#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"
#include "ssdu/network.hpp"
#include "ssdu/phantom.hpp"

namespace ssdu {

enum class LossKind { supervised_image, selfsup_kspace };

std::string_view to_string(LossKind k) noexcept;
LossKind parse_loss_kind(std::string_view s);

/// ||u - v||_2 / ||u||_2 + ||u - v||_1 / ||u||_1
double norm_l1l2_loss(std::span<const cplx> u, std::span<const cplx> v);

/// Gradient of norm_l1l2_loss with respect to v (as d/dRe + i d/dIm), with
/// a zero subgradient wherever u - v vanishes.
std::vector<cplx> norm_l1l2_loss_grad(std::span<const cplx> u, std::span<const cplx> v);

/// Entries of a coil stack at the locations set in `where`, concatenated over coils.
std::vector<cplx> gather(const CoilKSpace& y, const BoolGrid& where);

/// Everything needed to evaluate one training loss on one scan.
struct LossSpec {
  LossKind kind = LossKind::selfsup_kspace;
  /// Network input operator and data: E_Theta / y_Theta (selfsup) or E_Omega / y_Omega (supervised).
  const SenseOperator* op_in = nullptr;
  const CoilKSpace* y_in = nullptr;
  /// selfsup only.
  const SenseOperator* op_loss = nullptr;
  const CoilKSpace* y_loss = nullptr;
  /// supervised only.
  const ComplexImage* x_ref = nullptr;
};

double selfsup_loss(const NetworkParams& p, const SenseOperator& op_theta, const SenseOperator& op_lambda,
                    const CoilKSpace& y_theta, const CoilKSpace& y_lambda);

double supervised_loss(const NetworkParams& p, const SenseOperator& op_omega, const CoilKSpace& y_omega,
                       const ComplexImage& x_ref);

double evaluate_loss(const NetworkParams& p, const LossSpec& spec);

struct GradientBundle {
  double loss = 0.0;
  /// dL/dtheta in the NetworkParams flat layout.
  std::vector<double> grad;
};

GradientBundle backprop(const NetworkParams& p, const LossSpec& spec);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : m(n, 0.0), v(n, 0.0), lr(lr) {}
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);
void adam_step(AdamState& state, NetworkParams& params, const GradientBundle& grads);

/// Operators and data for one scan in the role required by a loss kind.
struct PreparedScan {
  SenseOperator op_in;
  CoilKSpace y_in;
  std::optional<SenseOperator> op_loss;
  CoilKSpace y_loss;
  const ComplexImage* x_ref = nullptr;

  LossSpec spec(LossKind kind) const;
};

PreparedScan prepare_scan(const Scan& scan, LossKind kind);

struct FitOptions {
  LossKind loss = LossKind::selfsup_kspace;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Experimental: draw a fresh Theta/Lambda split of every scan each epoch
  /// (same rho and scheme as the scan's stored split). Off by default.
  bool resample_splits = false;
  SplitOptions split_options;
  /// Called after every epoch with (epoch index, epoch-mean loss, params).
  std::function<void(std::size_t, double, const NetworkParams&)> on_epoch;
};

struct FitResult {
  NetworkParams params;
  std::vector<double> epoch_loss;
};

/// Batch-size-1 Adam training over a seeded shuffle of the scans each epoch.
FitResult fit(const std::vector<Scan>& scans, const NetConfig& cfg, const FitOptions& opts);

/// Inference: unrolled network on all acquired data.
ComplexImage reconstruct_network(const NetworkParams& p, const Scan& scan);

}  // namespace ssdu
