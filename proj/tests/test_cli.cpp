#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "smpcl/dataset.hpp"
#include "smpcl/io.hpp"

using namespace smpcl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "smpcl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("smpcl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

bool has(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

struct EnvGuard {
  std::string name;
  EnvGuard(std::string n, const std::string& value) : name(std::move(n)) {
    ::setenv(name.c_str(), value.c_str(), 1);
  }
  ~EnvGuard() { ::unsetenv(name.c_str()); }
};

const std::vector<std::string> kSmallRun = {
    "--set", "synth.count=6", "--set", "train_count=4", "--set", "val_count=2",
    "--set", "net.widths=4,8", "--set", "max_iter=3", "--set", "batch_size=2",
    "--set", "eval_interval=3", "--quiet"};

}  // namespace

TEST_CASE("help exits 0 and lists every subcommand") {
  auto r = cli({"--help"});
  CHECK(r.code == 0);
  for (const char* sub : {"spobe", "train", "eval", "gradcheck", "scan-bench", "synth"}) {
    CHECK_MESSAGE(has(r.out, sub), sub);
  }
  CHECK(has(r.out, "SMPCL_SEED"));
  auto t = cli({"train", "--help"});
  CHECK(t.code == 0);
  CHECK(has(t.out, "--set"));
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"spobe", "--image", "x.png"}).code == 1);
  CHECK(cli({"scan-bench", "--height", "abc"}).code == 1);
}

TEST_CASE("validation failures exit 1 with a message") {
  auto r = cli({"train", "--set", "lr=-1", "--output", scratch("badlr").string()});
  CHECK(r.code == 1);
  CHECK(has(r.err, "lr"));
  r = cli({"train", "--set", "nonsense=1"});
  CHECK(r.code == 1);
  CHECK(has(r.err, "unknown config key"));
  r = cli({"eval", "--checkpoint", "/nonexistent/model.ckpt"});
  CHECK(r.code == 1);
  CHECK(has(r.err, "model.ckpt"));
  r = cli({"gradcheck", "--filter", "no-such-check"});
  CHECK(r.code == 1);
  r = cli({"scan-bench", "--step", "0"});
  CHECK(r.code == 1);
}

TEST_CASE("environment overrides are validated") {
  {
    EnvGuard g("SMPCL_SEED", "abc");
    auto r = cli({"synth", "--out", scratch("envseed").string(), "--count", "1"});
    CHECK(r.code == 1);
    CHECK(has(r.err, "SMPCL_SEED"));
  }
  {
    EnvGuard g("SMPCL_THREADS", "0");
    CHECK(cli({"scan-bench", "--height", "4", "--width", "4"}).code == 1);
  }
  CHECK(cli({"--threads", "1", "scan-bench", "--height", "4", "--width", "4"}).code == 0);
}

TEST_CASE("runtime failures exit 2") {
  auto dir = scratch("runtime");
  atomic_write(dir / "blocker", "x");
  std::vector<std::string> args{"train", "--output", (dir / "blocker" / "run").string()};
  args.insert(args.end(), kSmallRun.begin(), kSmallRun.end());
  auto r = cli(args);
  CHECK(r.code == 2);
  CHECK(has(r.err, "error:"));
}

TEST_CASE("gradcheck prints one row per check and a summary") {
  auto r = cli({"gradcheck", "--filter", "matmul"});
  CHECK(r.code == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == "check,max_rel_error,threshold,status");
  CHECK(ls[1].rfind("matmul", 0) == 0);
  CHECK(has(ls[1], ",PASS"));
  CHECK(ls[2] == "# 1/1 checks passed");
}

TEST_CASE("scan-bench reports exact visit counts") {
  auto dir = scratch("bench");
  auto r = cli({"scan-bench", "--height", "16", "--width", "12", "--repeats", "1", "--out",
                (dir / "bench.csv").string()});
  CHECK(r.code == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == "kind,height,width,indices_visited,throughput_elems_per_sec");
  CHECK(ls[1].rfind("dense,16,12,768,", 0) == 0);
  CHECK(ls[2].rfind("sparse,16,12,192,", 0) == 0);
  CHECK(read_file(dir / "bench.csv") == r.out);
}

TEST_CASE("synth honours SMPCL_SEED and --seed wins over it") {
  auto a = scratch("synth_a"), b = scratch("synth_b"), c = scratch("synth_c");
  {
    EnvGuard g("SMPCL_SEED", "5");
    REQUIRE(cli({"synth", "--out", a.string(), "--count", "2"}).code == 0);
    REQUIRE(cli({"synth", "--out", c.string(), "--count", "2", "--seed", "0"}).code == 0);
  }
  SynthSpec s;
  s.seed = 5;
  s.count = 2;
  auto expected = synth_dataset(s);
  auto loaded = load_dataset(a);
  REQUIRE(loaded.cases.size() == 2);
  CHECK(loaded.cases[1].scribbles == expected.cases[1].scribbles);
  CHECK(loaded.cases[1].ground_truth == expected.cases[1].ground_truth);
  REQUIRE(cli({"synth", "--out", b.string(), "--count", "2"}).code == 0);
  CHECK(load_dataset(b).cases[0].ground_truth == load_dataset(c).cases[0].ground_truth);
  CHECK_FALSE(load_dataset(b).cases[0].ground_truth == loaded.cases[0].ground_truth);
}

TEST_CASE("spobe writes enriched labels that keep every scribble") {
  auto dir = scratch("spobe");
  SynthSpec s;
  s.count = 1;
  s.num_classes = 3;
  save_dataset(dir, synth_dataset(s));
  auto r = cli({"spobe", "--image", (dir / "case0000_image.png").string(), "--scribbles",
                (dir / "case0000_scribble.png").string(), "--classes", "3", "--out",
                (dir / "enriched.png").string(), "--overlay", (dir / "overlay.ppm").string()});
  REQUIRE(r.code == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() == 4);
  CHECK(ls[0] == "class,scribble_pixels,enriched_pixels");
  const auto scribbles = load_labels(dir / "case0000_scribble.png");
  const auto enriched = load_labels(dir / "enriched.png");
  for (std::size_t i = 0; i < scribbles.size(); ++i) {
    if (scribbles[i] != kUnlabeled) CHECK(enriched[i] == scribbles[i]);
  }
  CHECK(read_file(dir / "overlay.ppm").rfind("P6", 0) == 0);
  CHECK(cli({"spobe", "--image", (dir / "case0000_image.png").string(), "--scribbles",
             (dir / "case0000_scribble.png").string(), "--classes", "3", "--out",
             (dir / "x.png").string(), "--schedule", "4,6"})
            .code == 1);
}

TEST_CASE("spobe on a flat image warns and returns the scribbles unchanged") {
  auto dir = scratch("flat");
  save_image(dir / "flat.png", GrayImage(24, 24, 0.5f));
  LabelMap s(24, 24);
  s.at(5, 5) = 1;
  s.at(20, 3) = 0;
  save_labels(dir / "s.png", s);
  auto r = cli({"spobe", "--image", (dir / "flat.png").string(), "--scribbles",
                (dir / "s.png").string(), "--classes", "2", "--out", (dir / "e.png").string()});
  REQUIRE(r.code == 0);
  CHECK(has(r.err, "warning: spobe: edge map is empty"));
  CHECK(load_labels(dir / "e.png") == s);
}

TEST_CASE("train then eval on its own split gives one row per case and class") {
  auto dir = scratch("train");
  std::vector<std::string> args{"train", "--output", dir.string()};
  args.insert(args.end(), kSmallRun.begin(), kSmallRun.end());
  auto r = cli(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(has(r.out, "val_dice "));
  CHECK(has(r.out, "checkpoint "));
  for (const char* f : {"config.txt", "model.ckpt", "history.csv", "val_metrics.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  CHECK(has(read_file(dir / "config.txt"), "max_iter = 3"));

  auto e = cli({"eval", "--checkpoint", (dir / "model.ckpt").string(), "--split", "train"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  auto ls = lines(e.out);
  // header + 4 cases x 1 foreground class + mean
  REQUIRE(ls.size() == 6);
  CHECK(ls[0] == "case,class,dice,hd95_mm,flags");
  CHECK(ls[1].rfind("case0000,1,", 0) == 0);
  CHECK(ls[4].rfind("case0003,1,", 0) == 0);
  CHECK(ls[5].rfind("mean,all,", 0) == 0);

  // Validation split reproduces the metrics file written by train.
  auto v = cli({"eval", "--checkpoint", (dir / "model.ckpt").string()});
  REQUIRE(v.code == 0);
  CHECK(v.out == read_file(dir / "val_metrics.csv"));

  // Wrong class count on an explicit dataset.
  auto other = scratch("train_other");
  SynthSpec s3;
  s3.count = 1;
  s3.num_classes = 3;
  save_dataset(other, synth_dataset(s3));
  auto bad = cli({"eval", "--checkpoint", (dir / "model.ckpt").string(), "--dataset", other.string()});
  CHECK(bad.code == 1);
  CHECK(has(bad.err, "classes"));
}

TEST_CASE("train is deterministic under SMPCL_SEED") {
  auto a = scratch("det_a"), b = scratch("det_b");
  EnvGuard g("SMPCL_SEED", "3");
  for (const auto& d : {a, b}) {
    std::vector<std::string> args{"train", "--output", d.string()};
    args.insert(args.end(), kSmallRun.begin(), kSmallRun.end());
    REQUIRE(cli(args).code == 0);
  }
  CHECK(read_file(a / "history.csv") == read_file(b / "history.csv"));
  CHECK(has(read_file(a / "config.txt"), "seed = 3"));
}
