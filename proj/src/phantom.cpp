#include "ssdu/phantom.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "ssdu/rng.hpp"

namespace ssdu {

namespace {

struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan (Toft) parameters, in normalized [-1, 1] coordinates.
constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
    {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
    {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
    {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
    {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
}};

constexpr std::uint64_t kStreamImage = 1;
constexpr std::uint64_t kStreamCoils = 2;
constexpr std::uint64_t kStreamNoise = 3;

}  // namespace

ComplexImage make_phantom(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (!is_power_of_two(rows) || !is_power_of_two(cols))
    throw ShapeError("phantom size must be a power of two, got " + std::to_string(rows) + "x" + std::to_string(cols));
  SplitMix64 rng(seed);
  // Outer skull ellipse stays close to nominal so the object fills the FOV
  // consistently; inner structures get larger perturbations.
  std::array<Ellipse, kSheppLogan.size()> e = kSheppLogan;
  const double outer_scale = rng.uniform(0.9, 1.0);
  for (std::size_t k = 0; k < e.size(); ++k) {
    auto& el = e[k];
    if (k < 2) {
      el.a *= outer_scale;
      el.b *= outer_scale;
      continue;
    }
    el.a *= rng.uniform(0.75, 1.25);
    el.b *= rng.uniform(0.75, 1.25);
    el.x0 += rng.uniform(-0.06, 0.06);
    el.y0 += rng.uniform(-0.06, 0.06);
    el.phi_deg += rng.uniform(-20.0, 20.0);
    el.intensity *= rng.uniform(0.5, 1.8);
  }
  // Smooth phase: c1 x + c2 y + c3 x^2 + c4 y^2 + c5 x y.
  std::array<double, 5> ph{};
  for (auto& c : ph) c = rng.uniform(-0.8, 0.8);

  ComplexImage img(rows, cols);
  double peak = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double yy = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(rows) - 1.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xx = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(cols) - 1.0;
      double v = 0.0;
      for (const auto& el : e) {
        const double t = el.phi_deg * std::numbers::pi / 180.0;
        const double dx = xx - el.x0, dy = yy - el.y0;
        const double u = (dx * std::cos(t) + dy * std::sin(t)) / el.a;
        const double w = (-dx * std::sin(t) + dy * std::cos(t)) / el.b;
        if (u * u + w * w <= 1.0) v += el.intensity;
      }
      v = std::max(v, 0.0);
      const double phase = ph[0] * xx + ph[1] * yy + ph[2] * xx * xx + ph[3] * yy * yy + ph[4] * xx * yy;
      img(r, c) = std::polar(v, phase);
      peak = std::max(peak, v);
    }
  }
  if (peak > 0.0)
    for (auto& v : img.values()) v /= peak;
  return img;
}

CoilSensitivities make_coilmaps(std::size_t rows, std::size_t cols, std::size_t ncoils, std::uint64_t seed) {
  if (ncoils < 1) throw ParameterError("ncoils must be >= 1");
  SplitMix64 rng(seed);
  std::vector<ComplexImage> maps;
  for (std::size_t k = 0; k < ncoils; ++k) {
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(k) + rng.uniform(-0.15, 0.15)) /
                         static_cast<double>(ncoils);
    const double radius = rng.uniform(1.0, 1.3);
    const double cx = radius * std::cos(angle), cy = radius * std::sin(angle);
    const double width = rng.uniform(0.6, 0.9);
    const double px = rng.uniform(-1.0, 1.0), py = rng.uniform(-1.0, 1.0), p0 = rng.uniform(-3.14, 3.14);
    ComplexImage m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const double yy = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(rows) - 1.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double xx = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(cols) - 1.0;
        const double d2 = (xx - cx) * (xx - cx) + (yy - cy) * (yy - cy);
        m(r, c) = std::polar(std::exp(-d2 / (2.0 * width * width)), p0 + px * xx + py * yy);
      }
    }
    maps.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < rows * cols; ++i) {
    double sos = 0.0;
    for (const auto& m : maps) sos += std::norm(m[i]);
    const double inv = 1.0 / std::sqrt(sos);
    for (auto& m : maps) m[i] *= inv;
  }
  return CoilSensitivities(std::move(maps));
}

CoilKSpace simulate_acquisition(const ComplexImage& x, const CoilSensitivities& sens, const BoolGrid& mask,
                                double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw ParameterError("noise sigma must be >= 0");
  const SenseOperator op(sens, mask);
  CoilKSpace y = op.forward(x);
  if (noise_sigma == 0.0) return y;
  SplitMix64 rng(seed);
  for (auto& g : y)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double re = rng.normal(), im = rng.normal();
      if (mask[i]) g[i] += cplx(noise_sigma * re, noise_sigma * im);
    }
  return y;
}

std::vector<Scan> make_cohort(const CohortSpec& spec) {
  if (!is_power_of_two(spec.size)) throw ParameterError("size must be a power of two");
  if (spec.coils < 1) throw ParameterError("coils must be >= 1");
  std::vector<Scan> scans;
  scans.reserve(spec.scans);
  const SamplingMask mask = make_omega_mask(spec.size, spec.size, spec.accel, spec.acs);
  for (std::size_t k = 0; k < spec.scans; ++k) {
    const std::uint64_t base = derive_seed(spec.seed, k);
    Scan s;
    s.scan_id = spec.id_prefix + std::to_string(k);
    s.ref_image = make_phantom(spec.size, spec.size, derive_seed(base, kStreamImage));
    s.sens = make_coilmaps(spec.size, spec.size, spec.coils, derive_seed(base, kStreamCoils));
    s.mask = mask;
    s.noise_sigma = spec.noise_sigma;
    s.kspace = simulate_acquisition(*s.ref_image, s.sens, mask.picked, spec.noise_sigma,
                                    derive_seed(base, kStreamNoise));
    scans.push_back(std::move(s));
  }
  return scans;
}

void assign_splits(std::vector<Scan>& scans, double rho, SplitScheme scheme, std::uint64_t seed,
                   const SplitOptions& opts) {
  for (std::size_t k = 0; k < scans.size(); ++k)
    scans[k].split = split_omega(scans[k].mask, rho, scheme, derive_seed(seed, k), opts);
}

}  // namespace ssdu
