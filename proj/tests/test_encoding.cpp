#include "doctest.h"
#include "ssdu/encoding.hpp"
#include "test_util.hpp"

using namespace ssdu;
using namespace testutil;

namespace {

CoilSensitivities unit_coil(std::size_t rows, std::size_t cols) {
  std::vector<ComplexImage> m{ComplexImage(rows, cols, std::vector<cplx>(rows * cols, 1.0))};
  return CoilSensitivities(std::move(m));
}

std::vector<cplx> flatten(const CoilKSpace& y) {
  std::vector<cplx> v;
  for (const auto& g : y) v.insert(v.end(), g.values().begin(), g.values().end());
  return v;
}

}  // namespace

TEST_CASE("single unit coil with a full mask reduces to the FFT") {
  const SenseOperator op(unit_coil(16, 16), BoolGrid(16, 16, true));
  const auto x = random_image(16, 16, 1);
  const auto y = op.forward(x);
  REQUIRE(y.size() == 1);
  CHECK(y[0].values() == fft2c(x).values());

  const auto k = random_kspace(1, 16, 16, 2);
  CHECK(op.adjoint(k).values() == ifft2c(k[0]).values());
}

TEST_CASE("an empty mask produces zeros") {
  const SenseOperator op(random_sos_maps(3, 8, 8, 1), BoolGrid(8, 8, false));
  const auto x = random_image(8, 8, 3);
  for (const auto& g : op.forward(x))
    for (const auto& v : g.values()) CHECK(v == cplx{});
  const auto n = op.normal(x);
  for (const auto& v : n.values()) CHECK(v == cplx{});
}

TEST_CASE("forward matches the dense matrix oracle on a 4x4, 2-coil grid") {
  const auto sens = random_sos_maps(2, 4, 4, 7);
  const auto mask = random_mask(4, 4, 0.5, 8);
  const SenseOperator op(sens, mask);
  const auto E = dense_sense(sens, mask);
  REQUIRE(E.m == 32);
  REQUIRE(E.n == 16);
  const auto x = random_image(4, 4, 9);
  std::vector<cplx> ref(32);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 16; ++j) ref[i] += E(i, j) * x[j];
  CHECK(max_abs_diff(flatten(op.forward(x)), ref) < 1e-12);

  // Unmasked entries are exact zeros.
  for (const auto& g : op.forward(x))
    for (std::size_t i = 0; i < 16; ++i)
      if (!mask[i]) CHECK(g[i] == cplx{});
}

TEST_CASE("adjoint of forward is the identity for full sampling and SOS maps") {
  const SenseOperator op(random_sos_maps(4, 16, 16, 2), BoolGrid(16, 16, true));
  const auto x = random_image(16, 16, 4);
  CHECK(rel_err(op.adjoint(op.forward(x)).values(), x.values()) < 1e-13);
  CHECK(rel_err(op.normal(x).values(), x.values()) < 1e-13);
}

TEST_CASE("adjoint test on random masked operators") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SenseOperator op(random_sos_maps(3, 16, 32, s), random_mask(16, 32, 0.3, s + 50));
    const auto x = random_image(16, 32, s + 100);
    const auto y = random_kspace(3, 16, 32, s + 200);
    const auto ex = op.forward(x);
    const cplx lhs = vdot(ex, y);
    const cplx rhs = vdot(x.span(), op.adjoint(y).span());
    CHECK(std::abs(lhs - rhs) / (l2_norm(ex) * l2_norm(y)) < 1e-12);
  }
}

TEST_CASE("fused normal equals forward-then-adjoint") {
  const SenseOperator op(random_sos_maps(4, 16, 16, 11), random_mask(16, 16, 0.4, 12));
  const auto x = random_image(16, 16, 13);
  CHECK(max_abs_diff(op.normal(x).values(), op.adjoint(op.forward(x)).values()) < 1e-13);
}

TEST_CASE("normal operator is self-adjoint and positive semidefinite") {
  const SenseOperator op(random_sos_maps(4, 16, 16, 21), random_mask(16, 16, 0.3, 22));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = random_image(16, 16, 300 + s);
    const auto y = random_image(16, 16, 400 + s);
    const auto nx = op.normal(x), ny = op.normal(y);
    CHECK(vdot(x.span(), nx.span()).real() >= 0.0);
    const cplx a = vdot(x.span(), ny.span()), b = std::conj(vdot(y.span(), nx.span()));
    CHECK(std::abs(a - b) / (l2_norm(x.span()) * l2_norm(ny.span())) < 1e-12);
  }
}

TEST_CASE("masking is idempotent and monotone in the mask") {
  const auto sens = random_sos_maps(2, 16, 16, 31);
  const auto small = random_mask(16, 16, 0.3, 32);
  BoolGrid big = small;
  const auto extra = random_mask(16, 16, 0.3, 33);
  for (std::size_t i = 0; i < big.size(); ++i)
    if (extra[i]) big.set(i, true);
  const SenseOperator a(sens, small), b(sens, big);
  const auto x = random_image(16, 16, 34);

  auto y = a.forward(x);
  auto y2 = y;
  a.restrict(y2);
  CHECK(flatten(y2) == flatten(y));
  CHECK(l2_norm(a.forward(x)) <= l2_norm(b.forward(x)));
}

TEST_CASE("shape and normalization errors") {
  const SenseOperator op(random_sos_maps(2, 8, 8, 1), BoolGrid(8, 8, true));
  CHECK_THROWS_AS(op.forward(ComplexImage(8, 16)), ShapeError);
  CHECK_THROWS_AS(op.adjoint(random_kspace(3, 8, 8, 1)), ShapeError);
  CHECK_THROWS_AS(op.adjoint(random_kspace(2, 8, 4, 1)), ShapeError);
  CHECK_THROWS_AS(op.normal(ComplexImage(4, 8)), ShapeError);
  CHECK_THROWS_AS(SenseOperator(random_sos_maps(2, 8, 8, 1), BoolGrid(4, 8, true)), ShapeError);

  std::vector<ComplexImage> bad{random_image(8, 8, 5)};
  CHECK_THROWS_AS(CoilSensitivities(std::move(bad)), NormalizationError);
  std::vector<ComplexImage> mismatched{ComplexImage(8, 8), ComplexImage(4, 8)};
  CHECK_THROWS_AS(CoilSensitivities(std::move(mismatched)), ShapeError);
}
