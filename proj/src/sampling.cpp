#include "ssdu/sampling.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>

#include "ssdu/errors.hpp"
#include "ssdu/rng.hpp"

namespace ssdu {

BoolGrid::BoolGrid(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (bits_.size() != rows_ * cols_) throw ShapeError("mask data length does not match rows*cols");
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BoolGrid::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string_view to_string(SplitScheme s) noexcept {
  return s == SplitScheme::uniform_random ? "uniform" : "gaussian";
}

SplitScheme parse_split_scheme(std::string_view s) {
  if (s == "uniform" || s == "uniform_random") return SplitScheme::uniform_random;
  if (s == "gaussian" || s == "gaussian_density") return SplitScheme::gaussian_density;
  throw ParameterError("split-scheme must be 'uniform' or 'gaussian', got '" + std::string(s) + "'");
}

SamplingMask make_omega_mask(std::size_t rows, std::size_t cols, std::size_t accel, std::size_t acs_lines) {
  if (rows == 0 || cols == 0) throw ParameterError("mask dimensions must be positive");
  if (accel < 1) throw ParameterError("accel must be >= 1");
  if (acs_lines > cols) throw ParameterError("acs lines (" + std::to_string(acs_lines) + ") exceed cols");

  SamplingMask m;
  m.picked = BoolGrid(rows, cols);
  m.accel = accel;

  std::vector<bool> col_on(cols, false);
  for (std::size_t c = 0; c < cols; c += accel) col_on[c] = true;
  if (acs_lines > 0) {
    const std::size_t first = cols / 2 - acs_lines / 2;
    const std::size_t last = first + acs_lines - 1;
    for (std::size_t c = first; c <= last; ++c) col_on[c] = true;
    m.acs_cols = {first, last};
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.picked.set(r, c, col_on[c]);
  return m;
}

std::size_t lambda_count(std::size_t omega_count, double rho) {
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double n = std::nearbyint(rho * static_cast<double>(omega_count));
  std::fesetround(old);
  return static_cast<std::size_t>(n);
}

SplitSpec split_omega(const SamplingMask& mask, double rho, SplitScheme scheme, std::uint64_t seed,
                      const SplitOptions& opts) {
  if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("rho must lie in (0, 1), got " + std::to_string(rho));

  const std::size_t rows = mask.rows();
  const std::size_t cols = mask.cols();
  const std::size_t omega = mask.picked.count();
  const std::size_t want = lambda_count(omega, rho);
  if (want == 0 || want == omega)
    throw SplitError("degenerate split: |Lambda| = " + std::to_string(want) + " of |Omega| = " +
                     std::to_string(omega));

  auto in_acs = [&](std::size_t c) {
    return opts.exclude_acs && mask.acs_cols && c >= mask.acs_cols->first && c <= mask.acs_cols->second;
  };

  // Weighted sampling without replacement (Efraimidis-Spirakis): each eligible
  // point draws key = log(u)/w and the `want` largest keys win. This has the
  // same law as drawing points one at a time proportional to their weights.
  struct Candidate {
    double key;
    std::size_t index;
  };
  std::vector<Candidate> cand;
  cand.reserve(omega);
  const double sigma = opts.sigma_fraction * static_cast<double>(cols);
  const double cr = static_cast<double>(rows / 2);
  const double cc = static_cast<double>(cols / 2);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    if (!mask.picked[i]) continue;
    const double u = rng.uniform_open0();  // drawn for every picked point so streams align across schemes
    const std::size_t r = i / cols;
    const std::size_t c = i % cols;
    if (in_acs(c)) continue;
    double w = 1.0;
    if (scheme == SplitScheme::gaussian_density) {
      const double dr = static_cast<double>(r) - cr;
      const double dc = static_cast<double>(c) - cc;
      w = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
    }
    cand.push_back({w > 0.0 ? std::log(u) / w : -INFINITY, i});
  }
  if (cand.size() < want)
    throw SplitError("not enough eligible points for |Lambda| = " + std::to_string(want));

  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(want), cand.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return a.key != b.key ? a.key > b.key : a.index < b.index;
                    });

  SplitSpec s;
  s.rho = rho;
  s.scheme = scheme;
  s.seed = seed;
  s.lambda = BoolGrid(rows, cols);
  s.theta = mask.picked;
  for (std::size_t k = 0; k < want; ++k) {
    s.lambda.set(cand[k].index, true);
    s.theta.set(cand[k].index, false);
  }
  return s;
}

}  // namespace ssdu
