#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssdu/core.hpp"

namespace ssdu {

/// ||ref - rec||^2 / ||ref||^2 over complex values.
double nmse(const ComplexImage& ref, const ComplexImage& rec);

struct SsimOptions {
  std::size_t window = 7;
  /// Dynamic range L; defaults to max |ref|.
  std::optional<double> data_range;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean local SSIM of the magnitude images over all fully contained windows
/// (uniform weights, unbiased local variances and covariance).
double ssim(const ComplexImage& ref, const ComplexImage& rec, const SsimOptions& opts = {});

struct MetricReport {
  std::string scan_id;
  std::string method;
  std::optional<double> rho;  // empty for methods that use no split
  std::string scheme;         // empty for methods that use no split
  double nmse = 0.0;
  double ssim = 0.0;
};

/// Orders rows by scan_id (digit runs compared numerically), then method, rho, scheme.
void sort_reports(std::vector<MetricReport>& rows);

/// Header `scan_id,method,rho,scheme,nmse,ssim`, LF endings, shortest round-trip numbers.
void write_metrics_csv(std::ostream& out, std::vector<MetricReport> rows);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace ssdu
