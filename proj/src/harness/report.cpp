#include "lvr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "lvr/csv.hpp"

namespace lvr {

namespace fs = std::filesystem;

RunSummary summarize_log(const std::string& run, const TrainLog& log) {
  if (log.rows.empty()) throw std::runtime_error(run + ": log has no rows");
  RunSummary s;
  s.run = run;
  s.rows = log.rows;
  s.active[0] = true;
  for (const auto& r : log.rows) {
    s.active[1] = s.active[1] || r.perceptual != 0;
    s.active[2] = s.active[2] || r.edge != 0;
    s.active[3] = s.active[3] || r.fft != 0;
  }
  const char letters[] = {'L', 'P', 'E', 'F'};
  for (int i = 0; i < 4; ++i)
    if (s.active[i]) s.mask += letters[i];
  const LogRow& last = log.rows.back();
  s.epochs = static_cast<std::size_t>(last.epoch);
  s.final_loss = last.total;
  s.val_psnr = last.val_psnr;
  s.val_ssim = last.val_ssim;
  return s;
}

std::vector<RunSummary> summarize_runs(const fs::path& dir, std::vector<std::string>& warnings) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<std::pair<std::string, fs::path>> logs;
  if (fs::is_regular_file(dir / "train_log.csv")) logs.emplace_back(dir.filename().string(), dir / "train_log.csv");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::is_regular_file(e.path() / "train_log.csv")) {
      logs.emplace_back(e.path().filename().string(), e.path() / "train_log.csv");
    }
  }
  std::sort(logs.begin(), logs.end());
  std::vector<RunSummary> out;
  for (const auto& [name, path] : logs) {
    try {
      TrainLog log = read_train_log(path);
      for (auto& w : log.warnings) warnings.push_back(std::move(w));
      out.push_back(summarize_log(name, log));
    } catch (const std::exception& e) {
      warnings.push_back(path.string() + ": skipped: " + e.what());
    }
  }
  return out;
}

void write_summary_csv(const std::vector<RunSummary>& runs, const fs::path& path) {
  csv::Table t;
  t.header = csv::parse_row(kSummaryHeader);
  for (const auto& r : runs) {
    csv::Row row{r.run, r.mask};
    for (bool a : r.active) row.push_back(a ? "1" : "0");
    row.push_back(csv::format_number(r.final_loss, 17));
    row.push_back(csv::format_number(r.val_psnr, 17));
    row.push_back(csv::format_number(r.val_ssim, 17));
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

void write_loss_svg(const std::vector<RunSummary>& runs, const fs::path& path) {
  constexpr double kW = 640, kH = 400, kMargin = 50;
  double max_step = 1, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : runs)
    for (const auto& row : r.rows) {
      max_step = std::max(max_step, static_cast<double>(row.step));
      if (std::isfinite(row.total)) {
        lo = std::min(lo, row.total);
        hi = std::max(hi, row.total);
      }
    }
  if (!(lo < hi)) {
    lo = std::isfinite(lo) ? lo - 1 : 0;
    hi = lo + 2;
  }
  auto px = [&](double step) { return kMargin + (kW - 2 * kMargin) * step / max_step; };
  auto py = [&](double v) { return kH - kMargin - (kH - 2 * kMargin) * (v - lo) / (hi - lo); };
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                kMargin, kH - kMargin, kW - kMargin, kH - kMargin, kMargin, kMargin, kMargin, kH - kMargin);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-size=\"12\">step</text>\n"
                "<text x=\"%g\" y=\"%g\" font-size=\"12\">%.4g</text>\n"
                "<text x=\"5\" y=\"%g\" font-size=\"12\">%.4g</text>\n"
                "<text x=\"5\" y=\"%g\" font-size=\"12\">%.4g</text>\n",
                kW / 2, kH - 10, kW - kMargin - 20, kH - kMargin + 15, max_step, kMargin, hi, kH - kMargin, lo);
  out << buf;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const char* color = colors[i % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& row : runs[i].rows) {
      if (!std::isfinite(row.total)) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(static_cast<double>(row.step)), py(row.total));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\" fill=\"%s\">", kW - kMargin - 100,
                  kMargin + 15.0 * static_cast<double>(i), color);
    out << buf << runs[i].run << " (" << runs[i].mask << ")</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace lvr
