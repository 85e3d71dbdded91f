#include "doctest.h"
#include "ssdu/phantom.hpp"
#include "test_util.hpp"

using namespace ssdu;
using namespace testutil;

TEST_CASE("make_phantom: deterministic, max magnitude 1, seeds differ") {
  const auto a = make_phantom(64, 64, 5);
  CHECK(a.values() == make_phantom(64, 64, 5).values());
  double mx = 0;
  for (const auto& v : a.values()) mx = std::max(mx, std::abs(v));
  CHECK(std::abs(mx - 1.0) < 1e-15);

  const auto b = make_phantom(64, 64, 6);
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::norm(a[i] - b[i]);
  CHECK(std::sqrt(d) > 0.01);
  CHECK(all_finite(a.span()));
}

TEST_CASE("make_phantom: phase is smooth, not constant") {
  const auto x = make_phantom(64, 64, 8);
  // Phase differences between horizontal neighbours inside the object stay small.
  double worst = 0, spread = 0;
  double lo = 10, hi = -10;
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c + 1 < 64; ++c)
      if (std::abs(x(r, c)) > 0.05 && std::abs(x(r, c + 1)) > 0.05) {
        worst = std::max(worst, std::abs(std::arg(x(r, c + 1) / x(r, c))));
        lo = std::min(lo, std::arg(x(r, c)));
        hi = std::max(hi, std::arg(x(r, c)));
      }
  spread = hi - lo;
  CHECK(worst < 0.2);
  CHECK(spread > 0.05);
}

TEST_CASE("make_phantom: rejects non power-of-two sizes") {
  CHECK_THROWS_AS(make_phantom(48, 64, 1), ShapeError);
}

TEST_CASE("make_coilmaps: SOS normalization, single coil, determinism") {
  const auto s = make_coilmaps(64, 64, 8, 3);
  SplitMix64 g(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t i = g.below(64 * 64);
    double sos = 0;
    for (std::size_t c = 0; c < s.ncoils(); ++c) sos += std::norm(s[c][i]);
    CHECK(std::abs(sos - 1.0) < 1e-12);
  }
  const auto one = make_coilmaps(32, 32, 1, 4);
  for (const auto& v : one[0].values()) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);

  const auto again = make_coilmaps(64, 64, 8, 3);
  for (std::size_t c = 0; c < 8; ++c) CHECK(again[c].values() == s[c].values());
  CHECK_THROWS_AS(make_coilmaps(64, 64, 0, 1), ParameterError);
}

TEST_CASE("make_coilmaps: coils see different regions") {
  const auto s = make_coilmaps(64, 64, 4, 9);
  // Each coil's energy peaks somewhere different.
  std::vector<std::size_t> peaks;
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < 64 * 64; ++i)
      if (std::abs(s[c][i]) > std::abs(s[c][best])) best = i;
    peaks.push_back(best);
  }
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) CHECK(peaks[a] != peaks[b]);
}

TEST_CASE("simulate_acquisition") {
  const auto x = make_phantom(32, 32, 1);
  const auto s = make_coilmaps(32, 32, 3, 2);
  const auto m = make_omega_mask(32, 32, 4, 4).picked;
  const SenseOperator op(s, m);

  SUBCASE("zero noise equals the forward operator") {
    const auto y = simulate_acquisition(x, s, m, 0.0, 7);
    const auto e = op.forward(x);
    for (std::size_t c = 0; c < 3; ++c) CHECK(y[c].values() == e[c].values());
  }
  SUBCASE("zero mask gives zeros regardless of noise") {
    const auto y = simulate_acquisition(x, s, BoolGrid(32, 32), 0.5, 7);
    for (const auto& g : y)
      for (const auto& v : g.values()) CHECK(v == cplx(0.0));
  }
  SUBCASE("noise only on masked entries, deterministic per seed") {
    const auto y = simulate_acquisition(x, s, m, 0.1, 7);
    const auto y2 = simulate_acquisition(x, s, m, 0.1, 7);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(y[c].values() == y2[c].values());
      for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) CHECK(y[c][i] == cplx(0.0));
    }
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(simulate_acquisition(make_phantom(16, 16, 1), s, m, 0.0, 1), ShapeError); }
}

TEST_CASE("simulate_acquisition: empirical noise std within 5%") {
  const std::size_t n = 64;
  const ComplexImage zero(n, n);
  const auto s = make_coilmaps(n, n, 4, 3);
  const BoolGrid full(n, n, true);
  const double sigma = 0.02;
  const auto y = simulate_acquisition(zero, s, full, sigma, 11);
  double sq = 0;
  std::size_t count = 0;
  for (const auto& g : y)
    for (const auto& v : g.values()) {
      sq += v.real() * v.real() + v.imag() * v.imag();
      count += 2;
    }
  REQUIRE(count >= 10000);
  CHECK(std::abs(std::sqrt(sq / double(count)) / sigma - 1.0) < 0.05);
}

TEST_CASE("cohort scans: adjoint of noiseless full-mask data recovers the reference") {
  CohortSpec spec;
  spec.scans = 3;
  spec.size = 32;
  spec.seed = 4;
  const auto scans = make_cohort(spec);
  REQUIRE(scans.size() == 3);
  for (const auto& sc : scans) {
    REQUIRE(sc.ref_image);
    const SenseOperator full(sc.sens, BoolGrid(32, 32, true));
    const auto back = full.adjoint(full.forward(*sc.ref_image));
    CHECK(max_abs_diff(back.values(), sc.ref_image->values()) < 1e-10);
    // Acquired data is zero off the mask.
    for (const auto& g : sc.kspace)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!sc.mask.picked[i]) CHECK(g[i] == cplx(0.0));
  }
  CHECK(scans[0].scan_id == "scan_0");
  CHECK(make_cohort(spec)[2].kspace[1].values() == scans[2].kspace[1].values());
}
