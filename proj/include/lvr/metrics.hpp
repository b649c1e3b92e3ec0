#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lvr/image.hpp"

namespace lvr {

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// 10*log10(peak^2 / MSE) over all pixels and channels; +inf when equal.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

// Mean SSIM over every valid window position, Gaussian 11x11 window with
// sigma 1.5, per channel then averaged. Requires min(H, W) >= 11.
double ssim(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> ssim_taps();

struct MetricRow {
  std::string path;
  double psnr_db = 0;
  double ssim = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::size_t count = 0;

  // Recomputes the aggregate from the rows.
  static MetricReport from_rows(std::vector<MetricRow> rows);
};

// report.csv: header `path,psnr_db,ssim`, one row per image, then
// `AGGREGATE,<mean>,<mean>`.
inline constexpr const char* kReportHeader = "path,psnr_db,ssim";
void write_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);

}  // namespace lvr
