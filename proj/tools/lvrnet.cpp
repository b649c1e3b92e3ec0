#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lvr/checkpoint.hpp"
#include "lvr/config.hpp"
#include "lvr/csv.hpp"
#include "lvr/degrade.hpp"
#include "lvr/kernels.hpp"
#include "lvr/metrics.hpp"
#include "lvr/report.hpp"
#include "lvr/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

// Bad input from the user: missing files, invalid values.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

std::string fmt(double v) { return lvr::csv::format_number(v, 6); }

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("--resize expects HxW, got '" + s + "'");
  try {
    const auto h = std::stoul(s.substr(0, x)), w = std::stoul(s.substr(x + 1));
    if (h == 0 || w == 0) throw UsageError("--resize sides must be positive");
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--resize expects HxW, got '" + s + "'");
  }
}

struct SynthArgs {
  std::string input, output, severity = "random", resize;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  if (!fs::is_directory(a.input)) throw UsageError("--input " + a.input + ": not a directory");
  lvr::SynthOptions opts;
  if (a.severity != "random") {
    try {
      opts.severity = std::stoi(a.severity);
      lvr::fog_profile(*opts.severity);
    } catch (const std::exception&) {
      throw UsageError("--severity must be 3, 4, 5 or random (got '" + a.severity + "')");
    }
  }
  std::optional<std::pair<std::size_t, std::size_t>> size;
  if (!a.resize.empty()) size = parse_size(a.resize);
  const auto inputs = lvr::list_images(a.input);
  if (inputs.empty()) throw UsageError("--input " + a.input + ": no PNG or JPEG images");

  fs::create_directories(a.output);
  {
    std::ofstream snap(fs::path(a.output) / "synth.ini", std::ios::binary);
    snap << "[synth]\ninput = " << fs::absolute(a.input).lexically_normal().string() << "\nseed = " << a.seed
         << "\nseverity = " << a.severity << "\nresize = " << a.resize << "\nairlight = " << opts.airlight << "\n";
  }
  const lvr::SynthReport report = lvr::synth_corpus(inputs, a.output, a.seed, opts, size);
  for (const auto& e : report.errors) std::cerr << "synth: " << e << "\n";
  std::cout << "synthesized " << report.records.size() << " of " << inputs.size() << " images into " << a.output
            << "\n";
  return report.errors.empty() ? kOk : kRuntimeError;
}

struct TrainArgs {
  std::string config, loss_mask, output;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<long long> max_steps;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, int threads) {
  std::vector<lvr::ConfigOverride> overrides;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!a.output.empty()) overrides.emplace_back("run.output_dir", fs::absolute(a.output).string());
  if (a.seed) overrides.emplace_back("run.seed", std::to_string(*a.seed));
  if (a.epochs) overrides.emplace_back("train.epochs", std::to_string(*a.epochs));
  if (a.max_steps) overrides.emplace_back("train.max_steps", std::to_string(*a.max_steps));
  if (threads > 0) overrides.emplace_back("run.threads", std::to_string(threads));

  lvr::TrainConfig cfg = lvr::load_config(a.config, overrides);
  if (!a.loss_mask.empty()) {
    // Selected terms keep their configured weight, or the default when it is 0.
    const lvr::LossWeights defaults;
    lvr::LossWeights base = cfg.loss;
    if (base.perceptual == 0) base.perceptual = defaults.perceptual;
    if (base.edge == 0) base.edge = defaults.edge;
    if (base.fft == 0) base.fft = defaults.fft;
    try {
      cfg.loss = lvr::LossWeights::from_mask(a.loss_mask, base);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--loss-mask: ") + e.what());
    }
  }
  const auto problems = cfg.problems(true);
  if (!problems.empty()) throw lvr::ConfigError(problems);

  std::signal(SIGINT, on_sigint);
  lvr::TrainHooks hooks;
  hooks.stop = &g_stop;
  hooks.warn = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
  hooks.on_log = [](const lvr::LogRow& r) {
    std::cout << "epoch " << r.epoch << " step " << r.step << " L " << fmt(r.total) << " (Ls " << fmt(r.recon)
              << " Lp " << fmt(r.perceptual) << " Le " << fmt(r.edge) << " Lf " << fmt(r.fft) << ") val psnr "
              << fmt(r.val_psnr) << " ssim " << fmt(r.val_ssim) << std::endl;
  };
  const lvr::TrainResult r = lvr::train(cfg, hooks, a.resume);
  if (r.interrupted) {
    std::cerr << "interrupted at step " << r.steps << "; checkpoint saved to " << (cfg.output_dir / "last.ckpt")
              << "\n";
    return kRuntimeError;
  }
  std::cout << "trained " << r.steps << " steps; artifacts in " << cfg.output_dir << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, split = "test", dump, out;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::is_regular_file(a.checkpoint)) throw UsageError("--checkpoint " + a.checkpoint + ": file not found");
  const lvr::Checkpoint ckpt = lvr::load_checkpoint(a.checkpoint);
  lvr::EvalOptions opts;
  opts.split = a.split;
  if (!a.dump.empty()) opts.dump_dir = a.dump;
  const lvr::EvalResult r = lvr::evaluate(ckpt, opts);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  const fs::path out =
      a.out.empty() ? fs::path(a.checkpoint).parent_path() / ("report_" + a.split + ".csv") : fs::path(a.out);
  lvr::write_report(r.restored, out);
  std::cout << "split " << a.split << ": " << r.restored.count << " images, PSNR " << fmt(r.restored.mean_psnr)
            << " dB, SSIM " << fmt(r.restored.mean_ssim) << " (degraded input: PSNR " << fmt(r.baseline.mean_psnr)
            << " dB, SSIM " << fmt(r.baseline.mean_ssim) << ")\nreport written to " << out.string() << "\n";
  return kOk;
}

struct RestoreArgs {
  std::string checkpoint, input, output, gt;
};

int cmd_restore(const RestoreArgs& a) {
  for (const auto& [flag, p] : {std::pair{"--checkpoint", a.checkpoint}, {"--input", a.input}}) {
    if (!fs::is_regular_file(p)) throw UsageError(std::string(flag) + " " + p + ": file not found");
  }
  if (!a.gt.empty() && !fs::is_regular_file(a.gt)) throw UsageError("--gt " + a.gt + ": file not found");
  const lvr::Lvrnet<float> net = lvr::model_from_checkpoint(lvr::load_checkpoint(a.checkpoint));
  const lvr::ImageBuffer input = lvr::read_image(a.input);
  lvr::ImageBuffer out;
  try {
    out = lvr::restore_image(net, input);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  lvr::write_png(out, a.output);
  if (!a.gt.empty()) {
    lvr::ImageBuffer gt = lvr::read_image(a.gt);
    if (gt.height != input.height || gt.width != input.width) {
      throw UsageError("--gt size " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                       " differs from the input");
    }
    const lvr::ImageBuffer saved = lvr::quantize8(out);
    std::cout << "restored: PSNR " << fmt(lvr::psnr(saved, gt)) << " dB, SSIM " << fmt(lvr::ssim(saved, gt))
              << "\ninput:    PSNR " << fmt(lvr::psnr(input, gt)) << " dB, SSIM " << fmt(lvr::ssim(input, gt))
              << "\n";
  }
  return kOk;
}

struct ReportArgs {
  std::string logs, out;
};

int cmd_report(const ReportArgs& a) {
  if (!fs::is_directory(a.logs)) throw UsageError("--logs " + a.logs + ": not a directory");
  std::vector<std::string> warnings;
  const auto runs = lvr::summarize_runs(a.logs, warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (runs.empty()) throw UsageError("--logs " + a.logs + ": no train_log.csv found");
  fs::path csv_path = a.out, svg_path = a.out;
  if (fs::path(a.out).extension() == ".svg") {
    csv_path.replace_extension(".csv");
  } else {
    svg_path.replace_extension(".svg");
  }
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  lvr::write_summary_csv(runs, csv_path);
  lvr::write_loss_svg(runs, svg_path);
  for (const auto& r : runs) {
    std::cout << r.run << "  " << r.mask << "  final L " << fmt(r.final_loss) << "  PSNR " << fmt(r.val_psnr)
              << "  SSIM " << fmt(r.val_ssim) << "\n";
  }
  std::cout << "wrote " << csv_path.string() << " and " << svg_path.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-visibility image restoration: data synthesis, training and evaluation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Degrade clean images into a paired dataset with manifest.csv");
  synth->add_option("--input", sa.input, "Directory of clean images")->required();
  synth->add_option("--output", sa.output, "Dataset directory")->required();
  synth->add_option("--seed", sa.seed, "Master seed")->required();
  synth->add_option("--severity", sa.severity, "Fog severity: 3, 4, 5 or random");
  synth->add_option("--resize", sa.resize, "Resize sources to HxW first");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train from a config file");
  trn->add_option("--config", ta.config, "Config file")->required();
  trn->add_option("--loss-mask", ta.loss_mask, "Active loss terms, a subset of LPEF containing L");
  trn->add_option("--output", ta.output, "Run directory (overrides run.output_dir)");
  trn->add_option("--seed", ta.seed, "Overrides run.seed");
  trn->add_option("--epochs", ta.epochs, "Overrides train.epochs");
  trn->add_option("--max-steps", ta.max_steps, "Overrides train.max_steps");
  trn->add_option("--set", ta.sets, "Extra override, section.key=value");
  trn->add_flag("--resume", ta.resume, "Continue from last.ckpt in the run directory");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a split of its manifest");
  evl->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  evl->add_option("--split", ea.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  evl->add_option("--dump-restored", ea.dump, "Write restored images here");
  evl->add_option("--out", ea.out, "Report path (default: report_<split>.csv beside the checkpoint)");

  RestoreArgs ra;
  auto* rst = app.add_subcommand("restore", "Restore a single image");
  rst->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
  rst->add_option("--input", ra.input, "Degraded image")->required();
  rst->add_option("--output", ra.output, "Restored PNG")->required();
  rst->add_option("--gt", ra.gt, "Ground truth; prints PSNR and SSIM");

  ReportArgs pa;
  auto* rep = app.add_subcommand("report", "Summarize training logs into a table and a loss plot");
  rep->add_option("--logs", pa.logs, "Directory of runs")->required();
  rep->add_option("--out", pa.out, "Output .csv or .svg; the other format is written beside it")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (threads > 0) lvr::kernels::set_num_threads(threads);
    if (*synth) return cmd_synth(sa);
    if (*trn) return cmd_train(ta, threads);
    if (*evl) return cmd_eval(ea);
    if (*rst) return cmd_restore(ra);
    if (*rep) return cmd_report(pa);
  } catch (const lvr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
