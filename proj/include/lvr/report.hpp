#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "lvr/train.hpp"

namespace lvr {

// One training run, reduced to its final logged state.
struct RunSummary {
  std::string run;   // directory name
  std::string mask;  // active terms, e.g. "LPE"
  std::array<bool, 4> active{};  // Ls, Lp, Le, Lf
  std::size_t epochs = 0;
  double final_loss = 0;
  double val_psnr = 0;
  double val_ssim = 0;
  std::vector<LogRow> rows;
};

// A term is active when any logged value of its column is nonzero.
RunSummary summarize_log(const std::string& run, const TrainLog& log);

// Collects train_log.csv from `dir` and its immediate subdirectories,
// ordered by run name. Malformed rows become warnings.
std::vector<RunSummary> summarize_runs(const std::filesystem::path& dir, std::vector<std::string>& warnings);

inline constexpr const char* kSummaryHeader = "run,mask,L,P,E,F,final_L,val_psnr,val_ssim";
void write_summary_csv(const std::vector<RunSummary>& runs, const std::filesystem::path& path);
// Total loss against step, one polyline per run.
void write_loss_svg(const std::vector<RunSummary>& runs, const std::filesystem::path& path);

}  // namespace lvr
