#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "smpcl/config.hpp"
#include "smpcl/error.hpp"
#include "smpcl/io.hpp"

using namespace smpcl;

TEST_CASE("config text sets every field it names") {
  auto cfg = parse_config(R"(
# desk run
synth.classes = 3
synth.count   = 30
net.classes = 3
net.widths = 8, 16 ,32
net.scan_mode = dense
spobe.enabled = false
spobe.schedule = 3,5,7
lambda = 0.25     # trailing comment
lr = 0.02
weight_decay = 0
max_iter = 123
guide = identity
augment = no
train_count = 20
val_count = 10
)");
  CHECK(cfg.synth.num_classes == 3);
  CHECK(cfg.synth.count == 30);
  CHECK(cfg.train.net.num_classes == 3);
  CHECK(cfg.train.net.widths == std::vector<int>{8, 16, 32});
  CHECK(cfg.train.net.scan_mode == ScanMode::kDense);
  CHECK_FALSE(cfg.train.use_spobe);
  CHECK(cfg.train.spobe.schedule == std::vector<int>{3, 5, 7});
  CHECK(cfg.train.pcl.lambda == 0.25);
  CHECK(cfg.train.lr == 0.02);
  CHECK(cfg.train.pcl.weight_decay == 0.0);
  CHECK(cfg.train.max_iter == 123);
  CHECK(cfg.train.guide == GuideKind::kIdentity);
  CHECK_FALSE(cfg.train.augment);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("defaults carry the stated optimiser settings") {
  ExperimentConfig cfg;
  CHECK(cfg.train.pcl.momentum == 0.9);
  CHECK(cfg.train.pcl.weight_decay == 1e-4);
  CHECK(cfg.train.pcl.lambda == 0.5);
  CHECK(cfg.train.poly_power == 0.9);
  CHECK(cfg.train.guide == GuideKind::kSyntheticOracle);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("to_text round-trips and lists every documented key") {
  auto cfg = parse_config("net.widths = 4,8\nlambda = 0.3\nseed = 17\noutput = out dir\n");
  const auto text = cfg.to_text();
  CHECK(parse_config(text).to_text() == text);
  CHECK(parse_config(text).output == "out dir");
  const auto help = config_keys_help();
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto key = line.substr(0, line.find(" = "));
    CHECK_MESSAGE(help.find("  " + key + ":") != std::string::npos, key);
  }
}

TEST_CASE("config errors name the origin, line and key") {
  auto expect = [](const std::string& text, const std::string& needle) {
    try {
      parse_config(text, "run.cfg");
      FAIL("no error for " << text);
    } catch (const ValidationError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect("lr = 0.1\nbogus = 1\n", "run.cfg:2");
  expect("bogus = 1\n", "unknown config key 'bogus'");
  expect("lr = fast\n", "lr");
  expect("max_iter = 1.5\n", "max_iter");
  expect("augment = maybe\n", "augment");
  expect("just words\n", "key = value");
  expect("net.scan_mode = zigzag\n", "net.scan_mode");
  expect("guide = medsam\n", "medsam");
}

TEST_CASE("validation rejects out-of-range values and missing paths") {
  auto bad = [](const std::string& text) { return parse_config(text); };
  CHECK_THROWS_AS(bad("lr = 0").validate(), ValidationError);
  CHECK_THROWS_AS(bad("lambda = 1.5").validate(), ValidationError);
  CHECK_THROWS_AS(bad("lambda = -0.1").validate(), ValidationError);
  CHECK_THROWS_AS(bad("train_count = 0").validate(), ValidationError);
  CHECK_THROWS_AS(bad("dataset = /nonexistent/smpcl").validate(), ValidationError);
  CHECK_THROWS_AS(bad("batch_size = 0").validate(), ValidationError);
  CHECK_THROWS_AS(bad("net.widths = 4,8\nnet.size = 30").validate(), ValidationError);
}

TEST_CASE("experiment data splits the synthetic set in order") {
  auto cfg = parse_config("synth.count = 10\ntrain_count = 6\nval_count = 3\nsynth.size = 16\n");
  auto [train, val] = experiment_data(cfg);
  REQUIRE(train.cases.size() == 6);
  REQUIRE(val.cases.size() == 3);
  CHECK(train.cases[0].id == "case0000");
  CHECK(val.cases[0].id == "case0006");
  cfg.val_count = 5;
  CHECK_THROWS_AS(experiment_data(cfg), ValidationError);
}

TEST_CASE("config files load from disk") {
  auto path = std::filesystem::temp_directory_path() / "smpcl_test_config.cfg";
  atomic_write(path, "max_iter = 7\n");
  CHECK(load_config(path).train.max_iter == 7);
  std::filesystem::remove(path);
  CHECK_THROWS(load_config(path));
}
