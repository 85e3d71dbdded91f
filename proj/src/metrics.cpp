#include "ssdu/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <tuple>

namespace ssdu {

namespace {

void require_same_shape(const ComplexImage& a, const ComplexImage& b) {
  if (!a.same_shape(b.rows(), b.cols()))
    throw ShapeError("images differ in shape: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Sums over every w x w window fully inside the image; result is (R-w+1) x (C-w+1).
std::vector<double> box_sums(const std::vector<double>& v, std::size_t R, std::size_t C, std::size_t w) {
  const std::size_t oc = C - w + 1, orows = R - w + 1;
  std::vector<double> rows(R * oc);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < oc; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < w; ++j) s += v[r * C + c + j];
      rows[r * oc + c] = s;
    }
  std::vector<double> out(orows * oc);
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < oc; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < w; ++i) s += rows[(r + i) * oc + c];
      out[r * oc + c] = s;
    }
  return out;
}

// Splits "scan_12" into ("scan_", 12, ...) chunks for natural ordering.
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string_view na(a.data() + i, ie - i), nb(b.data() + j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return a.size() - i < b.size() - j;
  return a < b;
}

}  // namespace

double nmse(const ComplexImage& ref, const ComplexImage& rec) {
  require_same_shape(ref, rec);
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    err += std::norm(ref[i] - rec[i]);
    energy += std::norm(ref[i]);
  }
  if (energy == 0.0) throw NormalizationError("nmse reference is identically zero");
  return err / energy;
}

double ssim(const ComplexImage& ref, const ComplexImage& rec, const SsimOptions& opts) {
  require_same_shape(ref, rec);
  const std::size_t R = ref.rows(), C = ref.cols(), w = opts.window;
  if (w < 2) throw ParameterError("ssim window must be at least 2");
  if (R < w || C < w)
    throw ShapeError("image " + std::to_string(R) + "x" + std::to_string(C) + " is smaller than the " +
                     std::to_string(w) + "x" + std::to_string(w) + " ssim window");

  std::vector<double> x(R * C), y(R * C), xx(R * C), yy(R * C), xy(R * C);
  double peak = 0.0;
  for (std::size_t i = 0; i < R * C; ++i) {
    x[i] = std::abs(ref[i]);
    y[i] = std::abs(rec[i]);
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
    peak = std::max(peak, x[i]);
  }
  const double L = opts.data_range.value_or(peak);
  if (!(L > 0.0)) throw NormalizationError("ssim needs a positive dynamic range");
  const double c1 = (opts.k1 * L) * (opts.k1 * L);
  const double c2 = (opts.k2 * L) * (opts.k2 * L);

  const auto sx = box_sums(x, R, C, w), sy = box_sums(y, R, C, w);
  const auto sxx = box_sums(xx, R, C, w), syy = box_sums(yy, R, C, w), sxy = box_sums(xy, R, C, w);
  const double n = static_cast<double>(w * w);
  double total = 0.0;
  for (std::size_t i = 0; i < sx.size(); ++i) {
    const double mx = sx[i] / n, my = sy[i] / n;
    const double vx = (sxx[i] - n * mx * mx) / (n - 1.0);
    const double vy = (syy[i] - n * my * my) / (n - 1.0);
    const double cxy = (sxy[i] - n * mx * my) / (n - 1.0);
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(sx.size());
}

void sort_reports(std::vector<MetricReport>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.scan_id != b.scan_id) return natural_less(a.scan_id, b.scan_id);
    if (a.method != b.method) return a.method < b.method;
    const double ra = a.rho.value_or(-1.0), rb = b.rho.value_or(-1.0);
    if (ra != rb) return ra < rb;
    return a.scheme < b.scheme;
  });
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, std::vector<MetricReport> rows) {
  sort_reports(rows);
  out << "scan_id,method,rho,scheme,nmse,ssim\n";
  for (const auto& r : rows)
    out << r.scan_id << ',' << r.method << ',' << (r.rho ? format_double(*r.rho) : "") << ',' << r.scheme << ','
        << format_double(r.nmse) << ',' << format_double(r.ssim) << '\n';
}

}  // namespace ssdu
