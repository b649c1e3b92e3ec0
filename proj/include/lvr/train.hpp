#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lvr/checkpoint.hpp"
#include "lvr/config.hpp"
#include "lvr/image.hpp"
#include "lvr/manifest.hpp"
#include "lvr/metrics.hpp"
#include "lvr/model.hpp"

namespace lvr {

// One decoded (degraded, clean) pair of equal size.
struct Pair {
  std::string key;  // degraded image path
  ImageBuffer degraded;
  ImageBuffer clean;
};

// Decodes pairs concurrently. Both images are resized to `size` (height,
// width) when given; otherwise the clean image is resized to the degraded
// one. Unreadable pairs are skipped with a warning naming the manifest line.
std::vector<Pair> load_pairs(const std::vector<ManifestEntry>& entries,
                             std::optional<std::pair<std::size_t, std::size_t>> size,
                             std::vector<std::string>& warnings);

inline constexpr const char* kTrainLogHeader = "epoch,step,L,Ls,Lp,Le,Lf,val_psnr,val_ssim";

// Row 0 holds the losses at initialization over the whole training split;
// row e > 0 holds the means of the per-step losses of epoch e. Validation
// metrics are NaN when the validation split is empty.
struct LogRow {
  int epoch = 0;
  std::uint64_t step = 0;
  double total = 0, recon = 0, perceptual = 0, edge = 0, fft = 0;
  double val_psnr = 0, val_ssim = 0;

  bool operator==(const LogRow&) const = default;
};

std::vector<std::string> format_log_row(const LogRow& row);
LogRow parse_log_row(const std::vector<std::string>& fields);

struct TrainLog {
  std::vector<LogRow> rows;
  std::vector<std::string> warnings;  // malformed rows, skipped
};
TrainLog read_train_log(const std::filesystem::path& path);

struct TrainHooks {
  // Polled after every step; when set, the run saves last.ckpt and returns.
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const std::string&)> warn;
  std::function<void(const LogRow&)> on_log;
};

struct TrainResult {
  std::uint64_t steps = 0;  // optimizer steps taken in total
  bool interrupted = false;
  std::vector<LogRow> rows;  // rows logged by this call
  std::vector<std::string> warnings;
};

// Artifacts under config.output_dir: config.ini, splits.csv, train_log.csv,
// last.ckpt and best.ckpt. With `resume`, continues from last.ckpt when it
// exists; the stored config must describe the same trajectory.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {}, bool resume = false);

// Mean per-term losses of `net` over `pairs`, in batches, no update.
LogRow evaluate_losses(const Lvrnet<float>& net, const std::vector<Pair>& pairs, const TrainConfig& config);

// Restores one image; throws std::invalid_argument below the minimum size.
ImageBuffer restore_image(const Lvrnet<float>& net, const ImageBuffer& degraded);

struct EvalOptions {
  std::string split = "test";
  std::optional<std::filesystem::path> dump_dir;  // restored PNGs when set
};

struct EvalResult {
  MetricReport restored;  // restored vs clean
  MetricReport baseline;  // degraded input vs clean
  std::vector<std::string> warnings;
};

// Deterministic for a given checkpoint and split; images are processed in
// parallel and reported in split order.
EvalResult evaluate(const Checkpoint& ckpt, const EvalOptions& options);
EvalResult evaluate_pairs(const Lvrnet<float>& net, const std::vector<Pair>& pairs,
                          const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

// Recomputes the manifest splits exactly as training did.
ManifestSplits splits_for(const TrainConfig& config, const Manifest& manifest);

}  // namespace lvr
