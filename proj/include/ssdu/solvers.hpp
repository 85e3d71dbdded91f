#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"

namespace ssdu {

struct CgReport {
  std::size_t iterations_run = 0;
  double final_residual_norm = 0.0;
  bool converged = false;
  /// Residual l2 norm before each iteration and after the last one.
  std::vector<double> residual_trace;
};

struct CgOptions {
  std::size_t max_iters = 100;
  double tol = 1e-10;
  /// When false the solver always runs max_iters iterations (fixed computation graph).
  bool early_exit = true;
};

using ImageOperator = std::function<ComplexImage(const ComplexImage&)>;

/// Conjugate gradient for a Hermitian positive (semi-)definite system A x = b from x0.
ComplexImage conjugate_gradient(const ImageOperator& apply, const ComplexImage& b, ComplexImage x0,
                                const CgOptions& opts, CgReport* report = nullptr);

/// Solves (E^H E + mu I) x = E^H y + mu z by CG, initialized at x = z.
ComplexImage dc_solve(const SenseOperator& op, const CoilKSpace& y, const ComplexImage& z, double mu,
                      const CgOptions& opts, CgReport* report = nullptr);

inline ComplexImage dc_solve(const SenseOperator& op, const CoilKSpace& y, const ComplexImage& z, double mu,
                             std::size_t max_iters, double tol, CgReport* report = nullptr) {
  return dc_solve(op, y, z, mu, CgOptions{max_iters, tol, true}, report);
}

/// CG-SENSE: CG on E^H E x = E^H y from zero.
ComplexImage cg_sense(const SenseOperator& op, const CoilKSpace& y, const CgOptions& opts,
                      CgReport* report = nullptr);

// ---------------------------------------------------------------------------
// Second-order total generalized variation.

/// Forward differences with Neumann boundary (last difference is zero).
/// Index 0 differentiates along rows, index 1 along columns.
struct VectorField {
  std::array<ComplexImage, 2> c;
};

/// Symmetric 2x2 tensor field: (xx, yy, xy).
struct SymTensorField {
  std::array<ComplexImage, 3> c;
};

VectorField gradient(const ComplexImage& x);
/// Exact adjoint of gradient().
ComplexImage gradient_adjoint(const VectorField& g);
SymTensorField sym_gradient(const VectorField& v);
/// Adjoint of sym_gradient() under the pairing that counts the off-diagonal twice.
VectorField sym_gradient_adjoint(const SymTensorField& w);

enum class Region { full, interior };

/// alpha1 * ||grad x - v||_1 + alpha0 * ||sym_grad v||_1 for a given v.
/// Region::interior drops the last two rows and columns.
double tgv_functional(const ComplexImage& x, const VectorField& v, double alpha1, double alpha0,
                      Region region = Region::full);

struct TgvOptions {
  double alpha1 = 1e-2;
  double alpha0 = 2e-2;
  std::size_t iters = 500;
  /// Bound on ||K||^2 for the stacked operator; steps are tau = sigma = 1/sqrt(bound).
  double operator_norm_bound = 12.0;
  /// Objective checkpoint spacing (0 disables).
  std::size_t objective_every = 50;
};

struct TgvReport {
  /// ||y - E xbar||^2 + alpha1 ||grad xbar - vbar||_1 + alpha0 ||sym_grad vbar||_1,
  /// evaluated at the running average of the iterates, one entry per checkpoint.
  std::vector<double> objective;
};

/// Chambolle-Pock primal-dual minimization of ||y - E x||^2 + TGV^2(x), started from E^H y.
ComplexImage tgv_reconstruct(const SenseOperator& op, const CoilKSpace& y, const TgvOptions& opts,
                             TgvReport* report = nullptr);

}  // namespace ssdu
