#include "lvr/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "lvr/adam.hpp"
#include "lvr/csv.hpp"
#include "lvr/kernels.hpp"
#include "lvr/losses.hpp"
#include "lvr/rng.hpp"
#include "lvr/tape.hpp"

namespace lvr {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sub-streams of the run seed.
std::uint64_t init_seed(const TrainConfig& c) { return Rng(c.seed).derive(0).seed(); }
std::uint64_t shuffle_seed(const TrainConfig& c) { return Rng(c.seed).derive(1).seed(); }
std::uint64_t split_seed(const TrainConfig& c) { return Rng(c.seed).derive(2).seed(); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).derive(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

struct Batch {
  Tensor<float> degraded;
  Tensor<float> clean;
};

Batch make_batch(const std::vector<Pair>& pairs, const std::vector<std::size_t>& idx) {
  std::vector<const ImageBuffer*> d, c;
  for (auto i : idx) {
    d.push_back(&pairs[i].degraded);
    c.push_back(&pairs[i].clean);
  }
  return {to_tensor<float>(d), to_tensor<float>(c)};
}

struct StepResult {
  std::array<double, 5> terms{};  // L, Ls, Lp, Le, Lf
  std::vector<Tensor<float>> grads;
};

StepResult run_batch(const Lvrnet<float>& net, const Batch& batch, const LossWeights& w,
                     const FeatureExtractor<float>& fx, bool want_grads) {
  Tape<float> tape;
  const LvrnetVars<float> vars = net.bind(tape);
  Var<float> out = net.forward(tape.constant(batch.degraded), vars);
  const LossTerms<float> t = total_loss(out, tape.constant(batch.clean), w, fx);
  StepResult r;
  const Var<float>* parts[] = {&t.total, &t.recon, &t.perceptual, &t.edge, &t.fft};
  for (int i = 0; i < 5; ++i) r.terms[i] = parts[i]->value()[0];
  if (want_grads) {
    tape.backward(t.total);
    for (const auto& leaf : vars.leaves) r.grads.push_back(tape.gradient(leaf));
  }
  return r;
}

LogRow row_from(int epoch, std::uint64_t step, const std::array<double, 5>& means) {
  LogRow r;
  r.epoch = epoch;
  r.step = step;
  r.total = means[0];
  r.recon = means[1];
  r.perceptual = means[2];
  r.edge = means[3];
  r.fft = means[4];
  return r;
}

void validate_into(const Lvrnet<float>& net, const std::vector<Pair>& val, LogRow& row) {
  if (val.empty()) {
    row.val_psnr = row.val_ssim = kNaN;
    return;
  }
  const EvalResult r = evaluate_pairs(net, val);
  row.val_psnr = r.restored.mean_psnr;
  row.val_ssim = r.restored.mean_ssim;
}

void write_splits(const ManifestSplits& s, const fs::path& path) {
  csv::Table t;
  t.header = {"split", "degraded", "source"};
  auto add = [&](const std::vector<ManifestEntry>& v, const char* name) {
    for (const auto& e : v) t.rows.push_back({name, e.degraded.string(), e.source.string()});
  };
  add(s.train, "train");
  add(s.val, "val");
  add(s.test, "test");
  csv::write(path, t);
}

// Rewrites the log keeping rows up to `step`, so a resumed run continues it.
void truncate_log(const fs::path& path, std::uint64_t step) {
  TrainLog log = fs::exists(path) ? read_train_log(path) : TrainLog{};
  csv::Table t;
  t.header = csv::parse_row(kTrainLogHeader);
  for (const auto& r : log.rows)
    if (r.step <= step) t.rows.push_back(format_log_row(r));
  csv::write(path, t);
}

void append_log(const fs::path& path, const LogRow& row) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot append");
  out << csv::format_row(format_log_row(row)) << '\n';
}

}  // namespace

std::vector<Pair> load_pairs(const std::vector<ManifestEntry>& entries,
                             std::optional<std::pair<std::size_t, std::size_t>> size,
                             std::vector<std::string>& warnings) {
  const std::size_t n = entries.size();
  std::vector<std::optional<Pair>> slots(n);
  std::vector<std::string> errors(n);
  const int threads = kernels::num_threads();

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const ManifestEntry& e = entries[i];
    try {
      Pair p;
      p.key = e.degraded.string();
      p.degraded = read_image(e.degraded);
      p.clean = read_image(e.source);
      const std::size_t h = size ? size->first : p.degraded.height;
      const std::size_t w = size ? size->second : p.degraded.width;
      p.degraded = resize_bilinear(p.degraded, h, w);
      p.clean = resize_bilinear(p.clean, h, w);
      slots[i] = std::move(p);
    } catch (const std::exception& ex) {
      errors[i] = "manifest line " + std::to_string(e.line) + ": skipped pair: " + ex.what();
    }
  }
  std::vector<Pair> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    } else {
      warnings.push_back(errors[i]);
    }
  }
  return out;
}

std::vector<std::string> format_log_row(const LogRow& r) {
  auto f = [](double v) { return csv::format_number(v, 17); };
  return {std::to_string(r.epoch), std::to_string(r.step), f(r.total),    f(r.recon),   f(r.perceptual),
          f(r.edge),               f(r.fft),                f(r.val_psnr), f(r.val_ssim)};
}

LogRow parse_log_row(const std::vector<std::string>& f) {
  if (f.size() != 9) throw std::runtime_error("expected 9 fields, got " + std::to_string(f.size()));
  LogRow r;
  r.epoch = std::stoi(f[0]);
  r.step = std::stoull(f[1]);
  double* dst[] = {&r.total, &r.recon, &r.perceptual, &r.edge, &r.fft, &r.val_psnr, &r.val_ssim};
  for (int i = 0; i < 7; ++i) *dst[i] = std::stod(f[i + 2]);
  return r;
}

TrainLog read_train_log(const fs::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header != csv::parse_row(kTrainLogHeader)) {
    throw std::runtime_error(path.string() + ": unexpected header (want " + kTrainLogHeader + ")");
  }
  TrainLog log;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    try {
      log.rows.push_back(parse_log_row(t.rows[i]));
    } catch (const std::exception& e) {
      log.warnings.push_back(path.string() + ":" + std::to_string(t.lines[i]) + ": skipped row: " + e.what());
    }
  }
  return log;
}

ManifestSplits splits_for(const TrainConfig& config, const Manifest& manifest) {
  ManifestSplits s = split_manifest(manifest.entries, config.split, split_seed(config));
  check_disjoint(s);
  return s;
}

LogRow evaluate_losses(const Lvrnet<float>& net, const std::vector<Pair>& pairs, const TrainConfig& config) {
  const RandomConvExtractor<float> fx(config.extractor_seed);
  std::array<double, 5> sums{};
  std::size_t batches = 0;
  for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(pairs.size(), start + config.batch_size); ++i) idx.push_back(i);
    const StepResult r = run_batch(net, make_batch(pairs, idx), config.loss, fx, false);
    for (int k = 0; k < 5; ++k) sums[k] += r.terms[k];
    ++batches;
  }
  for (double& s : sums) s /= static_cast<double>(std::max<std::size_t>(batches, 1));
  return row_from(0, 0, sums);
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks, bool resume) {
  const auto problems = config.problems(true);
  if (!problems.empty()) throw ConfigError(problems);
  if (config.threads > 0) kernels::set_num_threads(config.threads);

  TrainResult result;
  auto warn = [&](const std::string& w) {
    result.warnings.push_back(w);
    if (hooks.warn) hooks.warn(w);
  };

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const fs::path log_path = dir / "train_log.csv";
  const fs::path last_path = dir / "last.ckpt";
  const fs::path best_path = dir / "best.ckpt";
  {
    std::ofstream snap(dir / "config.ini", std::ios::binary);
    snap << to_ini(config);
  }

  const Manifest manifest = load_manifest(config.manifest, SynthOptions{}.airlight);
  for (const auto& w : manifest.warnings) warn(w);
  const ManifestSplits splits = splits_for(config, manifest);
  write_splits(splits, dir / "splits.csv");

  std::vector<std::string> load_warnings;
  const auto size = std::make_pair(config.image_height, config.image_width);
  const std::vector<Pair> train_pairs = load_pairs(splits.train, size, load_warnings);
  const std::vector<Pair> val_pairs = load_pairs(splits.val, size, load_warnings);
  for (const auto& w : load_warnings) warn(w);
  if (train_pairs.empty()) throw std::runtime_error("no readable training pairs in " + config.manifest.string());

  Lvrnet<float> net(config.model);
  net.init(init_seed(config));
  Checkpoint state = make_checkpoint(config, net, AdamState<float>::zeros_like(net.parameters()));
  state.rng_seed = shuffle_seed(config);

  const bool resuming = resume && fs::exists(last_path);
  if (resuming) {
    Checkpoint prev = load_checkpoint(last_path);
    const TrainConfig stored = checkpoint_config(prev);
    if (!stored.same_trajectory(config)) {
      throw ConfigError({last_path.string() + ": checkpoint was written with a different configuration"});
    }
    load_weights(prev, net);
    state = std::move(prev);
    state.config_text = to_ini(config);
    truncate_log(log_path, state.step);
  } else {
    csv::Table header;
    header.header = csv::parse_row(kTrainLogHeader);
    csv::write(log_path, header);
    LogRow initial = evaluate_losses(net, train_pairs, config);
    validate_into(net, val_pairs, initial);
    append_log(log_path, initial);
    result.rows.push_back(initial);
    if (hooks.on_log) hooks.on_log(initial);
  }

  const RandomConvExtractor<float> fx(config.extractor_seed);
  const AdamOptions adam{config.lr, config.beta1, config.beta2, config.eps};
  const std::size_t n = train_pairs.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  std::uint64_t total = static_cast<std::uint64_t>(config.epochs) * per_epoch;
  if (config.max_steps >= 0) total = std::min<std::uint64_t>(total, static_cast<std::uint64_t>(config.max_steps));

  auto save_last = [&] {
    for (std::size_t i = 0; i < net.parameters().size(); ++i) state.params[i].value = net.parameters()[i].value;
    state.rng_position = state.step;
    save_checkpoint(state, last_path);
  };

  std::vector<std::size_t> order;
  std::uint64_t order_epoch = std::numeric_limits<std::uint64_t>::max();
  while (state.step < total) {
    const std::uint64_t epoch = state.step / per_epoch;
    const std::uint64_t pos = state.step % per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(n, state.rng_seed, epoch);
      order_epoch = epoch;
    }
    std::vector<std::size_t> idx(order.begin() + pos * config.batch_size,
                                 order.begin() + std::min(n, (pos + 1) * config.batch_size));
    StepResult r = run_batch(net, make_batch(train_pairs, idx), config.loss, fx, true);
    if (config.grad_clip > 0) clip_global_norm(r.grads, config.grad_clip);
    adam_step(net.parameters(), r.grads, state.adam, adam);
    for (int k = 0; k < 5; ++k) state.partial.sums[k] += r.terms[k];
    state.partial.count += 1;
    state.step += 1;

    if (pos + 1 == per_epoch) {
      std::array<double, 5> means = state.partial.sums;
      for (double& m : means) m /= static_cast<double>(state.partial.count);
      LogRow row = row_from(static_cast<int>(epoch + 1), state.step, means);
      validate_into(net, val_pairs, row);
      append_log(log_path, row);
      result.rows.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
      state.partial = {};
      const bool improved = !val_pairs.empty() && row.val_psnr > state.best_val_psnr;
      if (improved) state.best_val_psnr = row.val_psnr;
      save_last();
      if (improved) save_checkpoint(state, best_path);
    }
    if (hooks.stop && hooks.stop->load()) {
      save_last();
      result.interrupted = true;
      result.steps = state.step;
      return result;
    }
  }
  save_last();
  if (!fs::exists(best_path)) save_checkpoint(state, best_path);
  result.steps = state.step;
  return result;
}

ImageBuffer restore_image(const Lvrnet<float>& net, const ImageBuffer& degraded) {
  const std::size_t m = Lvrnet<float>::min_image_side();
  if (degraded.height < m || degraded.width < m) {
    throw std::invalid_argument("image is " + std::to_string(degraded.height) + "x" + std::to_string(degraded.width) +
                                "; the network needs at least " + std::to_string(m) + "x" + std::to_string(m));
  }
  return from_tensor(net.infer(to_tensor<float>(degraded)));
}

EvalResult evaluate_pairs(const Lvrnet<float>& net, const std::vector<Pair>& pairs,
                          const std::optional<fs::path>& dump_dir) {
  if (dump_dir) fs::create_directories(*dump_dir);
  const std::size_t n = pairs.size();
  std::vector<MetricRow> restored(n), baseline(n);
  std::vector<std::string> errors(n);

  // Per-image parallelism; kernels inside run single-threaded when nested.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const Pair& p = pairs[i];
    try {
      const ImageBuffer out = restore_image(net, p.degraded);
      restored[i] = {p.key, psnr(out, p.clean), ssim(out, p.clean)};
      baseline[i] = {p.key, psnr(p.degraded, p.clean), ssim(p.degraded, p.clean)};
      if (dump_dir) write_png(out, *dump_dir / fs::path(p.key).filename().replace_extension(".png"));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw std::runtime_error(pairs[i].key + ": " + errors[i]);
  }
  return {MetricReport::from_rows(std::move(restored)), MetricReport::from_rows(std::move(baseline)), {}};
}

EvalResult evaluate(const Checkpoint& ckpt, const EvalOptions& options) {
  const TrainConfig config = checkpoint_config(ckpt);
  const Lvrnet<float> net = model_from_checkpoint(ckpt);
  const Manifest manifest = load_manifest(config.manifest, SynthOptions{}.airlight);
  const ManifestSplits splits = splits_for(config, manifest);
  std::vector<std::string> warnings = manifest.warnings;
  const std::vector<Pair> pairs = load_pairs(select_split(splits, options.split), std::nullopt, warnings);
  if (pairs.empty()) throw std::runtime_error("split '" + options.split + "' has no readable pairs");
  EvalResult r = evaluate_pairs(net, pairs, options.dump_dir);
  r.warnings = std::move(warnings);
  return r;
}

}  // namespace lvr
