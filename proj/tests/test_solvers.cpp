#include <Eigen/Dense>

#include "doctest.h"
#include "ssdu/solvers.hpp"
#include "test_util.hpp"

using namespace ssdu;
using namespace testutil;

namespace {

CoilSensitivities unit_coil(std::size_t rows, std::size_t cols) {
  return CoilSensitivities({ComplexImage(rows, cols, std::vector<cplx>(rows * cols, 1.0))});
}

// Minimum-norm least-squares solution of E x = y via a complete orthogonal
// decomposition of the dense encoding matrix.
std::vector<cplx> dense_pinv_solve(const DenseMatrix& E, const std::vector<cplx>& y) {
  Eigen::MatrixXcd M(E.m, E.n);
  for (std::size_t i = 0; i < E.m; ++i)
    for (std::size_t j = 0; j < E.n; ++j) M(i, j) = E(i, j);
  Eigen::VectorXcd b(E.m);
  for (std::size_t i = 0; i < E.m; ++i) b(i) = y[i];
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(M);
  const Eigen::VectorXcd x = cod.solve(b);
  return {x.data(), x.data() + x.size()};
}

}  // namespace

TEST_CASE("dc_solve: closed form with N = I") {
  const SenseOperator op(unit_coil(16, 16), BoolGrid(16, 16, true));
  const auto y = random_kspace(1, 16, 16, 1);
  const auto z = random_image(16, 16, 2);
  for (double mu : {0.1, 1.0, 10.0}) {
    CgReport rep;
    const auto x = dc_solve(op, y, z, mu, 10, 1e-10, &rep);
    const auto expect = (1.0 / (1.0 + mu)) * (op.adjoint(y) + cplx(mu) * z);
    CHECK(rel_err(x.values(), expect.values()) < 1e-10);
    CHECK(rep.iterations_run == 1);
    CHECK(rep.converged);
  }
}

TEST_CASE("dc_solve: a huge penalty returns z") {
  const SenseOperator op(random_sos_maps(2, 16, 16, 3), random_mask(16, 16, 0.4, 4));
  const auto y = random_kspace(2, 16, 16, 5);
  const auto z = random_image(16, 16, 6);
  const auto x = dc_solve(op, y, z, 1e8, 50, 1e-14);
  CHECK(rel_err(x.values(), z.values()) < 1e-7);
}

TEST_CASE("dc_solve: matches a dense solve on a 4x4, 2-coil masked system") {
  const auto sens = random_sos_maps(2, 4, 4, 7);
  const auto mask = random_mask(4, 4, 0.5, 8);
  const SenseOperator op(sens, mask);
  const auto y = op.forward(random_image(4, 4, 9));
  const auto z = random_image(4, 4, 10);
  const double mu = 0.3;

  const auto E = dense_sense(sens, mask);
  auto A = hermitian_product(E);
  for (std::size_t i = 0; i < 16; ++i) A(i, i) += mu;
  std::vector<cplx> rhs(16);
  for (std::size_t j = 0; j < 16; ++j) {
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 16; ++i) rhs[j] += std::conj(E(c * 16 + i, j)) * y[c][i];
    rhs[j] += mu * z[j];
  }
  const auto ref = dense_solve(A, rhs);
  const auto x = dc_solve(op, y, z, mu, 100, 1e-14);
  CHECK(max_abs_diff(x.values(), ref) < 1e-10);
}

TEST_CASE("dc_solve: z is the fixed point when y = E z") {
  const SenseOperator op(random_sos_maps(3, 16, 16, 11), random_mask(16, 16, 0.3, 12));
  const auto z = random_image(16, 16, 13);
  const auto y = op.forward(z);
  const auto x = dc_solve(op, y, z, 0.5, 20, 1e-10);
  CHECK(rel_err(x.values(), z.values()) < 1e-10);
}

TEST_CASE("dc_solve: fixed-iteration mode runs every iteration") {
  const SenseOperator op(random_sos_maps(3, 16, 16, 14), random_mask(16, 16, 0.3, 15));
  const auto y = random_kspace(3, 16, 16, 16);
  CgReport rep;
  dc_solve(op, y, random_image(16, 16, 17), 0.05, CgOptions{10, 1e-10, false}, &rep);
  CHECK(rep.iterations_run == 10);
}

TEST_CASE("CG residuals never increase on SPD systems") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SenseOperator op(random_sos_maps(4, 32, 32, s), random_mask(32, 32, 0.35, s + 1));
    CgReport rep;
    dc_solve(op, random_kspace(4, 32, 32, s + 2), random_image(32, 32, s + 3), 0.1, CgOptions{30, 1e-12, true},
             &rep);
    REQUIRE(rep.residual_trace.size() >= 2);
    // CG minimizes the A-norm of the error; the 2-norm residual is monotone for
    // well-conditioned systems like this one (condition number <= 11).
    for (std::size_t k = 1; k < rep.residual_trace.size(); ++k)
      CHECK(rep.residual_trace[k] <= rep.residual_trace[k - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("dc_solve: errors") {
  const SenseOperator op(random_sos_maps(2, 8, 8, 1), BoolGrid(8, 8, true));
  const auto y = random_kspace(2, 8, 8, 1);
  CHECK_THROWS_AS(dc_solve(op, y, ComplexImage(8, 4), 1.0, 10, 1e-10), ShapeError);
  auto z = random_image(8, 8, 2);
  z[3] = cplx(std::nan(""), 0.0);
  CHECK_THROWS_AS(dc_solve(op, y, z, 1.0, 10, 1e-10), NumericError);
  CHECK_THROWS_AS(dc_solve(op, y, random_image(8, 8, 2), -1.0, 10, 1e-10), NumericError);
}

TEST_CASE("cg_sense: exact under full sampling") {
  const SenseOperator op(random_sos_maps(4, 16, 16, 20), BoolGrid(16, 16, true));
  const auto xt = random_image(16, 16, 21);
  const auto x = cg_sense(op, op.forward(xt), CgOptions{20, 1e-14, true});
  CHECK(rel_err(x.values(), xt.values()) < 1e-10);
}

TEST_CASE("cg_sense: zero data gives exactly zero") {
  const SenseOperator op(random_sos_maps(2, 16, 16, 22), random_mask(16, 16, 0.3, 23));
  CgReport rep;
  const auto x = cg_sense(op, CoilKSpace(2, KSpaceGrid(16, 16)), CgOptions{}, &rep);
  for (const auto& v : x.values()) CHECK(v == cplx{});
}

TEST_CASE("cg_sense: matches the dense least-norm solution") {
  const auto sens = random_sos_maps(2, 4, 4, 30);
  const auto mask = random_mask(4, 4, 0.3, 31);
  const SenseOperator op(sens, mask);
  const auto y = random_kspace(2, 4, 4, 32);
  const auto E = dense_sense(sens, mask);
  std::vector<cplx> yflat;
  for (const auto& g : y) yflat.insert(yflat.end(), g.values().begin(), g.values().end());
  const auto ref = dense_pinv_solve(E, yflat);
  const auto x = cg_sense(op, y, CgOptions{200, 1e-15, true});
  CHECK(max_abs_diff(x.values(), ref) < 1e-8);
}

// ---------------------------------------------------------------------------

TEST_CASE("gradient and sym_gradient adjoints") {
  const auto x = random_image(8, 16, 40);
  const VectorField g{{random_image(8, 16, 41), random_image(8, 16, 42)}};
  const auto gx = gradient(x);
  const cplx lhs = vdot(gx.c[0].span(), g.c[0].span()) + vdot(gx.c[1].span(), g.c[1].span());
  const cplx rhs = vdot(x.span(), gradient_adjoint(g).span());
  CHECK(std::abs(lhs - rhs) < 1e-12);

  const SymTensorField w{{random_image(8, 16, 43), random_image(8, 16, 44), random_image(8, 16, 45)}};
  const auto ev = sym_gradient(g);
  const cplx l2 = vdot(ev.c[0].span(), w.c[0].span()) + vdot(ev.c[1].span(), w.c[1].span()) +
                  2.0 * vdot(ev.c[2].span(), w.c[2].span());
  const auto ew = sym_gradient_adjoint(w);
  const cplx r2 = vdot(g.c[0].span(), ew.c[0].span()) + vdot(g.c[1].span(), ew.c[1].span());
  CHECK(std::abs(l2 - r2) < 1e-12);
}

TEST_CASE("stacked TGV operator norm is below the step-size bound") {
  // Power iteration on K^H K for K = [E 0; grad -I; 0 symgrad].
  const SenseOperator op(random_sos_maps(4, 32, 32, 50), BoolGrid(32, 32, true));
  ComplexImage x = random_image(32, 32, 51);
  VectorField v{{random_image(32, 32, 52), random_image(32, 32, 53)}};
  double lambda = 0;
  for (int it = 0; it < 300; ++it) {
    const double n = std::sqrt(std::norm(l2_norm(x.span())) + std::norm(l2_norm(v.c[0].span())) +
                               std::norm(l2_norm(v.c[1].span())));
    x = (1.0 / n) * x;
    v.c[0] = (1.0 / n) * v.c[0];
    v.c[1] = (1.0 / n) * v.c[1];
    VectorField p = gradient(x);
    for (int k = 0; k < 2; ++k) p.c[k] = p.c[k] - v.c[k];
    const auto q = sym_gradient(v);
    const auto r = op.forward(x);
    ComplexImage nx = gradient_adjoint(p) + op.adjoint(r);
    auto eq = sym_gradient_adjoint(q);
    VectorField nv{{eq.c[0] - p.c[0], eq.c[1] - p.c[1]}};
    lambda = std::sqrt(std::norm(l2_norm(nx.span())) + std::norm(l2_norm(nv.c[0].span())) +
                       std::norm(l2_norm(nv.c[1].span())));
    x = nx;
    v = nv;
  }
  MESSAGE("||K||^2 estimate " << lambda);
  CHECK(lambda < 12.0);
}

TEST_CASE("TGV vanishes on affine images in the interior") {
  ComplexImage x(16, 16);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) x(i, j) = cplx(0.5 + 0.25 * double(i) - 0.1 * double(j), 0.3 * double(j));
  const auto v = gradient(x);
  CHECK(tgv_functional(x, v, 1.0, 2.0, Region::interior) < 1e-12);
  // A non-affine image has positive penalty.
  x(7, 7) += 1.0;
  CHECK(tgv_functional(x, gradient(x), 1.0, 2.0, Region::interior) > 0.1);
}

TEST_CASE("tgv_reconstruct: zero data gives zero") {
  const SenseOperator op(random_sos_maps(2, 16, 16, 60), random_mask(16, 16, 0.4, 61));
  TgvOptions o;
  o.iters = 50;
  const auto x = tgv_reconstruct(op, CoilKSpace(2, KSpaceGrid(16, 16)), o);
  for (const auto& v : x.values()) CHECK(v == cplx{});
}

TEST_CASE("tgv_reconstruct: a constant image is a fixed point") {
  const SenseOperator op(random_sos_maps(3, 16, 16, 62), BoolGrid(16, 16, true));
  const ComplexImage c(16, 16, std::vector<cplx>(256, cplx(0.7, -0.2)));
  for (double a : {1e-3, 1.0}) {
    TgvOptions o;
    o.alpha1 = a;
    o.alpha0 = 2 * a;
    o.iters = 500;
    const auto x = tgv_reconstruct(op, op.forward(c), o);
    CHECK(rel_err(x.values(), c.values()) < 1e-4);
  }
}

TEST_CASE("tgv_reconstruct: vanishing regularization returns E^H y") {
  const SenseOperator op(random_sos_maps(3, 16, 16, 63), BoolGrid(16, 16, true));
  const auto y = op.forward(random_image(16, 16, 64));
  TgvOptions o;
  o.alpha1 = 1e-8;
  o.alpha0 = 1e-8;
  o.iters = 500;
  const auto x = tgv_reconstruct(op, y, o);
  CHECK(rel_err(x.values(), op.adjoint(y).values()) < 1e-4);
}

TEST_CASE("tgv_reconstruct: averaged objective is non-increasing at checkpoints") {
  const SenseOperator op(random_sos_maps(4, 32, 32, 70), random_mask(32, 32, 0.35, 71));
  ComplexImage truth(32, 32);
  for (std::size_t i = 8; i < 24; ++i)
    for (std::size_t j = 10; j < 22; ++j) truth(i, j) = 1.0;
  const auto y = op.forward(truth);
  TgvOptions o;
  o.alpha1 = 1e-2;
  o.alpha0 = 2e-2;
  o.iters = 500;
  TgvReport rep;
  tgv_reconstruct(op, y, o, &rep);
  REQUIRE(rep.objective.size() == 10);
  for (std::size_t k = 1; k < rep.objective.size(); ++k) CHECK(rep.objective[k] <= rep.objective[k - 1] + 1e-8);
}

TEST_CASE("tgv_reconstruct: parameter errors") {
  const SenseOperator op(random_sos_maps(1, 8, 8, 1), BoolGrid(8, 8, true));
  TgvOptions o;
  o.alpha1 = 0.0;
  CHECK_THROWS_AS(tgv_reconstruct(op, CoilKSpace(1, KSpaceGrid(8, 8)), o), ParameterError);
  o.alpha1 = 1.0;
  o.alpha0 = -1.0;
  CHECK_THROWS_AS(tgv_reconstruct(op, CoilKSpace(1, KSpaceGrid(8, 8)), o), ParameterError);
}
