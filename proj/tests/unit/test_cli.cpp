#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "lvr/checkpoint.hpp"
#include "lvr/csv.hpp"
#include "lvr/image.hpp"
#include "lvr/metrics.hpp"
#include "lvr/train.hpp"
#include "scenes.hpp"

namespace fs = std::filesystem;
using namespace lvr;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with `args`, capturing stdout and stderr together.
Run lvrnet(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli_output.txt";
  const std::string cmd = std::string("\"") + LVRNET_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, testing::read_bytes(log)};
  INFO(cmd);
  INFO(r.out);
  return r;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

struct Corpus {
  fs::path dir;
  fs::path clean;
  fs::path data;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus k;
    k.dir = testing::scratch_dir("cli");
    k.clean = k.dir / "clean";
    testing::write_scenes(k.clean, 10, 20, 24, 4);
    k.data = k.dir / "data";
    const auto r = lvrnet("synth --input " + q(k.clean) + " --output " + q(k.data) + " --seed 5", k.dir);
    REQUIRE(r.code == 0);
    return k;
  }();
  return c;
}

fs::path write_config(const fs::path& dir, int epochs = 1) {
  fs::create_directories(dir);
  const auto path = dir / "small.ini";
  write_text(path, "[run]\nmanifest = " + (corpus().data / "manifest.csv").string() +
                       "\noutput_dir = run\nseed = 2\n\n[model]\ngroups = 1\nblocks_per_group = 2\nwidth = 8\n\n"
                       "[train]\nbatch_size = 2\nepochs = " +
                       std::to_string(epochs) + "\nimage_height = 16\nimage_width = 16\n");
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  const auto dir = testing::scratch_dir("cli_usage");
  CHECK(lvrnet("", dir).code == 2);
  CHECK(lvrnet("frobnicate", dir).code == 2);
  CHECK(lvrnet("synth --input x", dir).code == 2);
  CHECK(lvrnet("--help", dir).code == 0);
  CHECK(lvrnet("synth --input " + q(dir / "nope") + " --output " + q(dir / "o") + " --seed 1", dir).code == 2);
  CHECK(lvrnet("synth --input " + q(corpus().clean) + " --output " + q(dir / "o") + " --seed 1 --severity 7", dir).code == 2);
}

TEST_CASE("synth is deterministic and honors severity") {
  const auto dir = testing::scratch_dir("cli_synth");
  const auto again = dir / "again";
  REQUIRE(lvrnet("synth --input " + q(corpus().clean) + " --output " + q(again) + " --seed 5", dir).code == 0);
  CHECK(testing::corpus_bytes(again) == testing::corpus_bytes(corpus().data));
  CHECK(fs::exists(again / "synth.ini"));

  const auto five = dir / "five";
  REQUIRE(lvrnet("--threads 2 synth --input " + q(corpus().clean) + " --output " + q(five) +
                     " --seed 5 --severity 5 --resize 16x18",
                 dir)
              .code == 0);
  const auto t = csv::read(five / "manifest.csv");
  REQUIRE(t.rows.size() == 10);
  for (const auto& row : t.rows) CHECK(row[t.column("fog_severity")] == "5");
  const auto img = read_image(five / t.rows[0][t.column("degraded")]);
  CHECK(img.height == 16);
  CHECK(img.width == 18);

  const auto broken = dir / "broken_in";
  fs::create_directories(broken);
  fs::copy_file(corpus().clean / "scene_000.png", broken / "a.png");
  write_text(broken / "b.png", "not an image");
  const auto r = lvrnet("synth --input " + q(broken) + " --output " + q(dir / "broken_out") + " --seed 1", dir);
  CHECK(r.code == 1);
  CHECK(r.out.find("b.png") != std::string::npos);
}

TEST_CASE("train validates its inputs") {
  const auto dir = testing::scratch_dir("cli_train_errors");
  write_text(dir / "missing.ini", "[run]\nmanifest = " + (dir / "absent.csv").string() + "\n");
  auto r = lvrnet("train --config " + q(dir / "missing.ini"), dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("absent.csv") != std::string::npos);

  write_text(dir / "bad.ini", "[run]\nmanifest = x.csv\nfoo = 1\n[train]\nlr = -3\n");
  r = lvrnet("train --config " + q(dir / "bad.ini"), dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("run.foo") != std::string::npos);
  CHECK(r.out.find("train.lr") != std::string::npos);

  const auto cfg = write_config(dir);
  CHECK(lvrnet("train --config " + q(cfg) + " --loss-mask PE", dir).code == 2);
  CHECK(lvrnet("train --config " + q(cfg) + " --set train.nonsense=1", dir).code == 2);
  CHECK(lvrnet("train --config " + q(dir / "none.ini"), dir).code == 2);
}

TEST_CASE("train, eval and restore with an identity checkpoint") {
  const auto dir = testing::scratch_dir("cli_identity");
  const auto cfg = write_config(dir);
  const auto run = dir / "ident";
  REQUIRE(lvrnet("train --config " + q(cfg) + " --output " + q(run) + " --max-steps 0", dir).code == 0);
  CHECK(fs::exists(run / "config.ini"));
  const auto ckpt = run / "last.ckpt";
  REQUIRE(fs::exists(ckpt));

  auto r = lvrnet("eval --checkpoint " + q(ckpt) + " --split all --dump-restored " + q(dir / "dump"), dir);
  REQUIRE(r.code == 0);
  const auto report = read_report(run / "report_all.csv");
  REQUIRE(report.count == 10);
  // Independent re-aggregation of the written columns.
  const auto t = csv::read(run / "report_all.csv");
  double sum = 0;
  for (const auto& row : t.rows)
    if (row[0] != "AGGREGATE") sum += std::stod(row[1]);
  CHECK(std::stod(t.rows.back()[1]) == doctest::Approx(sum / 10).epsilon(1e-12));
  CHECK(t.rows.back()[0] == "AGGREGATE");

  const auto manifest = csv::read(corpus().data / "manifest.csv");
  const auto deg_col = manifest.column("degraded"), src_col = manifest.column("source");
  for (const auto& row : report.rows) {
    const fs::path deg = row.path;
    const auto dumped = read_image(dir / "dump" / deg.filename().replace_extension(".png"));
    const auto input = read_image(deg);
    CHECK(dumped == input);
  }
  const auto first = manifest.rows[0];
  const auto deg = corpus().data / first[deg_col];
  const ImageBuffer gt = read_image(first[src_col]);
  const auto base = psnr(read_image(deg), gt);
  bool found = false;
  for (const auto& row : report.rows)
    if (fs::path(row.path).filename() == deg.filename()) {
      found = true;
      CHECK(row.psnr_db == doctest::Approx(base).epsilon(1e-9));
    }
  CHECK(found);

  r = lvrnet("restore --checkpoint " + q(ckpt) + " --input " + q(deg) + " --output " + q(dir / "r1.png") + " --gt " +
                 q(deg),
             dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("SSIM 1") != std::string::npos);
  CHECK(testing::read_bytes(dir / "r1.png").size() > 0);
  CHECK(read_image(dir / "r1.png") == read_image(deg));
  REQUIRE(lvrnet("restore --checkpoint " + q(ckpt) + " --input " + q(deg) + " --output " + q(dir / "r2.png"), dir).code == 0);
  CHECK(testing::read_bytes(dir / "r1.png") == testing::read_bytes(dir / "r2.png"));

  write_png(ImageBuffer(2, 2, 0.5f), dir / "tiny.png");
  r = lvrnet("restore --checkpoint " + q(ckpt) + " --input " + q(dir / "tiny.png") + " --output " + q(dir / "t.png"), dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("3x3") != std::string::npos);
  CHECK(lvrnet("eval --checkpoint " + q(dir / "nope.ckpt"), dir).code == 2);
  CHECK(lvrnet("eval --checkpoint " + q(ckpt) + " --split holdout", dir).code == 2);
}

TEST_CASE("train with loss masks, then report") {
  const auto dir = testing::scratch_dir("cli_masks");
  const auto cfg = write_config(dir);
  for (const char* mask : {"LP", "LEF"}) {
    const auto r = lvrnet("train --config " + q(cfg) + " --loss-mask " + mask + " --output " + q(dir / "runs" / mask), dir);
    REQUIRE(r.code == 0);
    const auto snap = load_config(dir / "runs" / mask / "config.ini");
    CHECK(snap.loss.mask() == mask);
  }
  const auto log = read_train_log(dir / "runs" / "LP" / "train_log.csv");
  for (const auto& row : log.rows) {
    CHECK(row.edge == 0);
    CHECK(row.fft == 0);
    CHECK(row.perceptual > 0);
  }

  auto r = lvrnet("report --logs " + q(dir / "runs") + " --out " + q(dir / "summary.csv"), dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "summary.svg"));
  const auto t = csv::read(dir / "summary.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "LEF");
  CHECK(t.rows[1][1] == "LP");
  csv::write(dir / "rewritten.csv", t);
  CHECK(testing::read_bytes(dir / "rewritten.csv") == testing::read_bytes(dir / "summary.csv"));

  fs::create_directories(dir / "empty");
  CHECK(lvrnet("report --logs " + q(dir / "empty") + " --out " + q(dir / "e.csv"), dir).code == 2);
  CHECK(lvrnet("report --logs " + q(dir / "nothing") + " --out " + q(dir / "e.csv"), dir).code == 2);

  std::ofstream(dir / "runs" / "LP" / "train_log.csv", std::ios::app) << "garbage,row\n";
  r = lvrnet("report --logs " + q(dir / "runs") + " --out " + q(dir / "summary2.svg"), dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("warning") != std::string::npos);
  CHECK(fs::exists(dir / "summary2.csv"));
}

TEST_CASE("interrupted cli training resumes") {
  const auto dir = testing::scratch_dir("cli_resume");
  const auto cfg = write_config(dir, 2);
  REQUIRE(lvrnet("train --config " + q(cfg) + " --output " + q(dir / "full"), dir).code == 0);
  REQUIRE(lvrnet("train --config " + q(cfg) + " --output " + q(dir / "part") + " --max-steps 3", dir).code == 0);
  REQUIRE(lvrnet("train --config " + q(cfg) + " --output " + q(dir / "part") + " --resume", dir).code == 0);
  CHECK(testing::read_bytes(dir / "part" / "train_log.csv") == testing::read_bytes(dir / "full" / "train_log.csv"));
  auto a = load_checkpoint(dir / "part" / "last.ckpt"), b = load_checkpoint(dir / "full" / "last.ckpt");
  a.config_text.clear();
  b.config_text.clear();
  CHECK(a == b);
  CHECK(lvrnet("train --config " + q(cfg) + " --output " + q(dir / "part") + " --resume --set train.lr=0.01", dir).code == 2);
}
