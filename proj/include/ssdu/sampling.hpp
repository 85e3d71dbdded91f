#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ssdu {

/// Boolean k-space pattern, row-major. Columns are the phase-encode direction.
class BoolGrid {
 public:
  BoolGrid() = default;
  BoolGrid(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}
  BoolGrid(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  void set(std::size_t r, std::size_t c, bool v) { set(r * cols_ + c, v); }

  std::size_t count() const noexcept;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  bool operator==(const BoolGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Acquired pattern Omega: every accel-th column plus a centered block of ACS columns.
struct SamplingMask {
  BoolGrid picked;
  std::size_t accel = 1;
  /// Inclusive ACS column range; absent when no ACS lines were requested.
  std::optional<std::pair<std::size_t, std::size_t>> acs_cols;

  std::size_t rows() const noexcept { return picked.rows(); }
  std::size_t cols() const noexcept { return picked.cols(); }
};

enum class SplitScheme { uniform_random, gaussian_density };

std::string_view to_string(SplitScheme s) noexcept;
SplitScheme parse_split_scheme(std::string_view s);

/// Disjoint partition of Omega into Theta (data consistency) and Lambda (loss).
struct SplitSpec {
  BoolGrid theta;
  BoolGrid lambda;
  double rho = 0.0;
  SplitScheme scheme = SplitScheme::uniform_random;
  std::uint64_t seed = 0;
};

struct SplitOptions {
  /// Standard deviation of the Gaussian selection density, as a fraction of cols.
  double sigma_fraction = 0.25;
  /// When set, ACS points stay in Theta and are never chosen for Lambda.
  bool exclude_acs = false;
};

SamplingMask make_omega_mask(std::size_t rows, std::size_t cols, std::size_t accel, std::size_t acs_lines);

/// Number of Lambda points for a given |Omega| and rho (round half to even).
std::size_t lambda_count(std::size_t omega_count, double rho);

SplitSpec split_omega(const SamplingMask& mask, double rho, SplitScheme scheme, std::uint64_t seed,
                      const SplitOptions& opts = {});

}  // namespace ssdu
