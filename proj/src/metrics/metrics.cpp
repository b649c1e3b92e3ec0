#include "lvr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lvr/csv.hpp"

namespace lvr {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size()) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

// Valid-mode separable filter of one plane: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * plane[y * w + x + t];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * tmp[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.pixels.empty()) throw std::invalid_argument("psnr: empty image");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> ssim_taps() {
  std::vector<double> taps(kSsimWindow);
  const double mid = static_cast<double>(kSsimWindow / 2);
  double total = 0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - mid;
    taps[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw std::invalid_argument("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " is smaller than the " + std::to_string(kSsimWindow) + "x" +
                                std::to_string(kSsimWindow) + " window");
  }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const auto taps = ssim_taps();
  const std::size_t h = a.height, w = a.width, n = h * w;
  double channel_sum = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[i * 3 + c];
      pb[i] = b.pixels[i * 3 + c];
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, taps);
    const auto mu_b = filter_valid(pb, h, w, taps);
    const auto e_aa = filter_valid(aa, h, w, taps);
    const auto e_bb = filter_valid(bb, h, w, taps);
    const auto e_ab = filter_valid(ab, h, w, taps);
    double acc = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      const double num = (2 * ma * mb + c1) * (2 * cov + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      acc += num / den;
    }
    channel_sum += acc / static_cast<double>(mu_a.size());
  }
  return channel_sum / 3.0;
}

MetricReport MetricReport::from_rows(std::vector<MetricRow> rows) {
  MetricReport r;
  r.rows = std::move(rows);
  r.count = r.rows.size();
  if (r.count == 0) return r;
  double p = 0, s = 0;
  for (const auto& row : r.rows) {
    p += row.psnr_db;
    s += row.ssim;
  }
  r.mean_psnr = p / static_cast<double>(r.count);
  r.mean_ssim = s / static_cast<double>(r.count);
  return r;
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
  csv::Table t;
  t.header = csv::parse_row(kReportHeader);
  for (const auto& row : report.rows) {
    t.rows.push_back({row.path, csv::format_number(row.psnr_db, 17), csv::format_number(row.ssim, 17)});
  }
  t.rows.push_back({"AGGREGATE", csv::format_number(report.mean_psnr, 17), csv::format_number(report.mean_ssim, 17)});
  csv::write(path, t);
}

MetricReport read_report(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t pc = t.column("path"), dc = t.column("psnr_db"), sc = t.column("ssim");
  std::vector<MetricRow> rows;
  for (const auto& r : t.rows) {
    if (r.size() <= std::max({pc, dc, sc})) throw std::runtime_error(path.string() + ": short report row");
    if (r[pc] == "AGGREGATE") continue;
    rows.push_back({r[pc], std::stod(r[dc]), std::stod(r[sc])});
  }
  return MetricReport::from_rows(std::move(rows));
}

}  // namespace lvr
