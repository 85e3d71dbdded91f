#include "doctest.h"
#include "ssdu/network.hpp"
#include "test_util.hpp"

using namespace ssdu;
using namespace testutil;

namespace {

// Nested-loop reference: y[co][r][c] = sum w[kh][kw][ci][co] * x[ci][r+kh-p][c+kw-p].
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t cin, std::size_t R, std::size_t C,
                               std::span<const double> w, std::size_t k, std::size_t cout) {
  std::vector<double> y(cout * R * C, 0.0);
  const long p = static_cast<long>(k / 2);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0;
        for (std::size_t kh = 0; kh < k; ++kh)
          for (std::size_t kw = 0; kw < k; ++kw)
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const long rr = long(r) + long(kh) - p, cc = long(c) + long(kw) - p;
              if (rr < 0 || cc < 0 || rr >= long(R) || cc >= long(C)) continue;
              s += w[((kh * k + kw) * cin + ci) * cout + co] * x[(ci * R + std::size_t(rr)) * C + std::size_t(cc)];
            }
        y[(co * R + r) * C + c] = s;
      }
  return y;
}

// Reference resnet assembled only from naive_conv.
ComplexImage naive_resnet(const NetworkParams& p, const ComplexImage& x) {
  const auto& cfg = p.config();
  const std::size_t R = x.rows(), C = x.cols(), P = R * C, k = cfg.kernel, Ch = cfg.channels;
  std::vector<double> in(2 * P);
  for (std::size_t i = 0; i < P; ++i) {
    in[i] = x[i].real();
    in[P + i] = x[i].imag();
  }
  auto h = naive_conv(in, 2, R, C, p.conv_in(), k, Ch);
  for (std::size_t b = 0; b < cfg.res_blocks; ++b) {
    auto a = naive_conv(h, Ch, R, C, p.block_conv(b, 0), k, Ch);
    for (auto& v : a) v = std::max(v, 0.0);
    const auto c2 = naive_conv(a, Ch, R, C, p.block_conv(b, 1), k, Ch);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += cfg.scale * c2[i];
  }
  const auto out = naive_conv(h, Ch, R, C, p.conv_out(), k, 2);
  ComplexImage y(R, C);
  for (std::size_t i = 0; i < P; ++i) y[i] = cplx(in[i] + out[i], in[P + i] + out[P + i]);
  return y;
}

NetConfig tiny() {
  NetConfig cfg;
  cfg.channels = 4;
  cfg.res_blocks = 1;
  cfg.unrolls = 2;
  cfg.cg_iters = 8;
  cfg.zero_init_output = false;
  return cfg;
}

}  // namespace

TEST_CASE("count_params") {
  NetConfig cfg;
  cfg.channels = 64;
  cfg.res_blocks = 8;
  cfg.kernel = 3;
  CHECK(count_params(cfg) == 592129);
  cfg.res_blocks = 15;
  CHECK(count_params(cfg) == 1108225);
  cfg.channels = 8;
  cfg.res_blocks = 2;
  CHECK(count_params(cfg) == 2593);
}

TEST_CASE("parameter vector size equals count_params") {
  for (std::size_t C : {1, 4, 16})
    for (std::size_t B : {0, 1, 3}) {
      NetConfig cfg;
      cfg.channels = C;
      cfg.res_blocks = B;
      const auto p = init_params(cfg, 1);
      std::size_t n = p.conv_in().size() + p.conv_out().size() + 1;
      for (std::size_t b = 0; b < B; ++b) n += p.block_conv(b, 0).size() + p.block_conv(b, 1).size();
      CHECK(p.size() == count_params(cfg));
      CHECK(n == p.size());
    }
}

TEST_CASE("NetConfig validation") {
  NetConfig cfg;
  cfg.kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = NetConfig{};
  cfg.unrolls = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = NetConfig{};
  cfg.channels = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("zero weights give the identity") {
  const NetworkParams p(NetConfig{});
  for (std::size_t n : {32, 64}) {
    const auto x = random_image(n, n, n);
    const auto y = resnet_forward(p, x);
    CHECK(y.rows() == n);
    CHECK(y.cols() == n);
    CHECK(y.values() == x.values());
  }
}

TEST_CASE("resnet output shape follows the input (fully convolutional)") {
  const auto p = init_params(NetConfig{}, 3);
  CHECK(resnet_forward(p, random_image(64, 64, 1)).rows() == 64);
  const auto y = resnet_forward(p, random_image(32, 16, 2));
  CHECK(y.rows() == 32);
  CHECK(y.cols() == 16);
}

TEST_CASE("resnet matches the nested-loop convolution reference") {
  const auto p = init_params(tiny(), 7);
  const auto x = random_image(8, 8, 8);
  CHECK(max_abs_diff(resnet_forward(p, x).values(), naive_resnet(p, x).values()) < 1e-12);

  NetConfig two = tiny();
  two.res_blocks = 2;
  two.kernel = 5;
  const auto q = init_params(two, 9);
  const auto x2 = random_image(8, 16, 10);
  CHECK(max_abs_diff(resnet_forward(q, x2).values(), naive_resnet(q, x2).values()) < 1e-12);
}

TEST_CASE("single conv layer gradient matches the correlation formula") {
  // L = 0.5 ||conv(x, w)||^2 => dL/dw[kh][kw][ci][co] = sum_r,c y[co][r][c] x[ci][r+kh-1][c+kw-1]
  FeatureMap x(3, 8, 8);
  SplitMix64 g(11);
  for (auto& v : x.data) v = g.uniform(-1, 1);
  std::vector<double> w(3 * 3 * 3 * 2);
  for (auto& v : w) v = g.uniform(-1, 1);
  const FeatureMap y = conv2d(x, w, 3, 2);
  std::vector<double> gw(w.size(), 0.0);
  const FeatureMap gx = conv2d_backward(x, w, 3, y, gw);

  for (std::size_t kh = 0; kh < 3; ++kh)
    for (std::size_t kw = 0; kw < 3; ++kw)
      for (std::size_t ci = 0; ci < 3; ++ci)
        for (std::size_t co = 0; co < 2; ++co) {
          double s = 0;
          for (long r = 0; r < 8; ++r)
            for (long c = 0; c < 8; ++c) {
              const long rr = r + long(kh) - 1, cc = c + long(kw) - 1;
              if (rr < 0 || cc < 0 || rr >= 8 || cc >= 8) continue;
              s += y.data[std::size_t((long(co) * 8 + r) * 8 + c)] * x.data[std::size_t((long(ci) * 8 + rr) * 8 + cc)];
            }
          CHECK(std::abs(gw[((kh * 3 + kw) * 3 + ci) * 2 + co] - s) < 1e-12);
        }

  // dL/dx is the transposed convolution: check against <gx, dx> = <y, conv(dx)>.
  FeatureMap dx(3, 8, 8);
  for (auto& v : dx.data) v = g.uniform(-1, 1);
  const FeatureMap ydx = conv2d(dx, w, 3, 2);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < dx.data.size(); ++i) lhs += gx.data[i] * dx.data[i];
  for (std::size_t i = 0; i < y.data.size(); ++i) rhs += y.data[i] * ydx.data[i];
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("unrolled_forward: zero weights, full mask, noiseless single coil recovers the truth") {
  NetConfig cfg;
  cfg.unrolls = 5;
  const NetworkParams p(cfg);
  const SenseOperator op(CoilSensitivities({ComplexImage(16, 16, std::vector<cplx>(256, 1.0))}),
                         BoolGrid(16, 16, true));
  const auto xt = random_image(16, 16, 4);
  const auto out = unrolled_forward(p, op, op.forward(xt));
  CHECK(rel_err(out.values(), xt.values()) < 1e-8);
}

TEST_CASE("unrolled_forward: deterministic") {
  const auto p = init_params(tiny(), 5);
  const SenseOperator op(random_sos_maps(2, 8, 8, 1), random_mask(8, 8, 0.4, 2));
  const auto y = op.forward(random_image(8, 8, 3));
  CHECK(unrolled_forward(p, op, y).values() == unrolled_forward(p, op, y).values());
}

TEST_CASE("DC unit pulls toward the data") {
  const auto p = init_params(tiny(), 6);
  const SenseOperator op(random_sos_maps(3, 16, 16, 7), random_mask(16, 16, 0.3, 8));
  const auto y = op.forward(random_image(16, 16, 9));
  auto misfit = [&](const ComplexImage& x) {
    auto r = op.forward(x);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = r[c] - y[c];
    return l2_norm(r);
  };
  UnrolledTape tape;
  unrolled_forward(p, op, y, &tape);
  for (std::size_t t = 0; t < tape.z.size(); ++t) CHECK(misfit(tape.x[t + 1]) <= misfit(tape.z[t]) + 1e-10);
}

TEST_CASE("init_params: conv_out starts at zero unless asked otherwise") {
  NetConfig cfg = tiny();
  cfg.zero_init_output = true;
  const auto p = init_params(cfg, 3);
  for (double w : p.conv_out()) CHECK(w == 0.0);
  const auto x = random_image(8, 8, 4);
  CHECK(resnet_forward(p, x).values() == x.values());
  cfg.zero_init_output = false;
  const auto q = init_params(cfg, 3);
  double n = 0;
  for (double w : q.conv_out()) n += w * w;
  CHECK(n > 0.0);
  // Same draws for the shared layers either way.
  CHECK(std::equal(p.conv_in().begin(), p.conv_in().end(), q.conv_in().begin()));
}

TEST_CASE("init_params: He standard deviation and 2-sigma truncation") {
  NetConfig cfg;
  cfg.channels = 32;
  cfg.res_blocks = 2;
  const auto p = init_params(cfg, 12);
  const auto w = p.block_conv(1, 0);
  const double sd = std::sqrt(2.0 / (9.0 * 32.0));
  double s2 = 0, mx = 0;
  for (double v : w) {
    s2 += v * v;
    mx = std::max(mx, std::abs(v));
  }
  // 2-sigma truncated normal has variance 0.7737 sd^2.
  CHECK(std::abs(std::sqrt(s2 / double(w.size())) / sd - std::sqrt(0.77374)) < 0.03);
  CHECK(mx <= 2.0 * sd);
}

TEST_CASE("softplus parameterization of mu") {
  CHECK(std::abs(softplus(softplus_inverse(1.0)) - 1.0) < 1e-14);
  CHECK(std::abs(softplus(softplus_inverse(0.05)) - 0.05) < 1e-14);
  const NetworkParams p(NetConfig{});
  CHECK(std::abs(p.mu() - 1.0) < 1e-14);
  CHECK(softplus(-50.0) > 0.0);
}
