#include <cmath>
#include <random>

#include "doctest.h"
#include "smpcl/error.hpp"
#include "smpcl/guide.hpp"
#include "support.hpp"

using namespace smpcl;
using smpcl::test::random_tensor;
using smpcl::test::values;

namespace {

// 10x10 dark image with a bright 4x4 square at rows/cols 3..6.
GrayImage square_image() {
  GrayImage img(10, 10, 0.1f);
  for (int r = 3; r <= 6; ++r) {
    for (int c = 3; c <= 6; ++c) img.at(r, c) = 0.9f;
  }
  return img;
}

Tensor<double> as_tensor(const GrayImage& g) {
  std::vector<double> v(g.values().begin(), g.values().end());
  return Tensor<double>({1, std::size_t(g.height()), std::size_t(g.width())}, v);
}

}  // namespace

TEST_CASE("identity guide returns the detached prediction") {
  IdentityGuide<double> guide(3, 4);
  auto y1 = softmax(random_tensor({3, 8, 8}, 1), 0);
  PromptInput<double> in{{}, GrayImage(8, 8), LabelMap(8, 8), y1.detach()};
  auto prompt = guide.encode_prompt(in);
  auto image = random_tensor({1, 8, 8}, 2, 0, 1, false);
  auto emb = guide.encode_image(image);
  CHECK(emb.shape() == Shape{1, 2, 2});
  for (double v : values(emb)) CHECK(v == 0.0);
  auto y2 = guide.decode(emb, prompt);
  CHECK(values(y2) == values(y1));
  CHECK_FALSE(y2.requires_grad());
  CHECK(guide.encoder_parameters().size() == 0);
  CHECK(guide.decoder_parameters().size() == 0);
}

TEST_CASE("region growing recovers a high-contrast square inside its box") {
  LabelMap seeds(10, 10);
  seeds.at(4, 4) = 1;
  seeds.at(5, 5) = 1;
  seeds.at(0, 0) = 0;
  seeds.at(9, 9) = 0;
  seeds.at(1, 8) = 0;
  std::vector<BBox> boxes{{1, 1, 1, 8, 8}};
  auto grown = grow_regions(square_image(), seeds, boxes, 2, OracleGuideConfig{});
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) {
      const bool inside = r >= 3 && r <= 6 && c >= 3 && c <= 6;
      CHECK(grown.at(r, c) == (inside ? 1 : 0));
    }
  }
}

TEST_CASE("foreground never leaves its box") {
  LabelMap seeds(10, 10);
  seeds.at(4, 4) = 1;
  std::vector<BBox> boxes{{1, 3, 3, 4, 4}};  // cuts the square
  auto grown = grow_regions(square_image(), seeds, boxes, 2, OracleGuideConfig{});
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) {
      if (grown.at(r, c) == 1) CHECK(boxes[0].contains(r, c));
    }
  }
}

TEST_CASE("oracle guide output is a distribution and background outside every box") {
  const int k = 3;
  SyntheticOracleGuide<double> guide(k, 5);
  // Non-zero decoder so the correction is active.
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (const auto& t : guide.decoder_parameters().tensors()) {
    auto h = t;
    for (auto& v : h.mutable_data()) v = u(gen);
  }
  LabelMap seeds(10, 10);
  seeds.at(4, 4) = 1;
  seeds.at(0, 0) = 0;
  seeds.at(8, 1) = 2;
  std::vector<BBox> boxes{{1, 2, 2, 7, 7}, {2, 8, 0, 9, 2}};
  auto image = square_image();
  auto prompt = guide.encode_prompt({boxes, image, seeds, Tensor<double>()});
  auto fused = random_tensor({5, 3, 3}, 4, -1, 1, false);
  auto y2 = guide.decode(fused, prompt);
  REQUIRE(y2.shape() == Shape{3, 10, 10});
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * 10 + c);
      double total = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(y2[j * 100 + i] >= 0.0);
        total += y2[j * 100 + i];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      if (!boxes[0].contains(r, c) && !boxes[1].contains(r, c)) {
        CHECK(y2[i] == doctest::Approx(0.9).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("zero decoder reproduces the softened grown labels") {
  SyntheticOracleGuide<double> guide(2, 4);
  LabelMap seeds(10, 10);
  seeds.at(4, 4) = 1;
  seeds.at(0, 0) = 0;
  std::vector<BBox> boxes{{1, 1, 1, 8, 8}};
  auto image = square_image();
  auto grown = grow_regions(image, seeds, boxes, 2, guide.config());
  auto prompt = guide.encode_prompt({boxes, image, seeds, Tensor<double>()});
  auto y2 = guide.decode(guide.encode_image(as_tensor(image)), prompt);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(y2[grown[i] * 100 + i] == doctest::Approx(0.9).epsilon(1e-12));
  }
}

TEST_CASE("oracle encoder is frozen and strided by the patch") {
  SyntheticOracleGuide<double> guide(2, 4);
  auto x = random_tensor({1, 8, 12}, 5, 0, 1);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto emb = guide.encode_image(x);
  CHECK(emb.shape() == Shape{4, 2, 3});
  CHECK_FALSE(emb.requires_grad());
  CHECK(tape.records().empty());
  // Mean filter over the first patch.
  double mean = 0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) mean += x[static_cast<std::size_t>(r * 12 + c)];
  }
  CHECK(emb[0] == doctest::Approx(mean / 16).epsilon(1e-12));
  CHECK(guide.encoder_parameters().entries()[0].first == "encoder.weight");
  CHECK(guide.decoder_parameters().size() == 2);
}

TEST_CASE("guide kinds parse and build") {
  CHECK(parse_guide_kind("identity") == GuideKind::kIdentity);
  CHECK(parse_guide_kind("synthetic_oracle") == GuideKind::kSyntheticOracle);
  CHECK(to_string(GuideKind::kIdentity) == "identity");
  CHECK_THROWS_AS(parse_guide_kind("medsam"), ValidationError);
  CHECK(make_guide<float>(GuideKind::kSyntheticOracle, 3, 8, 4)->name() == "synthetic_oracle");
  CHECK(make_guide<float>(GuideKind::kIdentity, 3, 8, 4)->num_classes() == 3);
  CHECK_THROWS_AS(SyntheticOracleGuide<float>(1, 4), ValidationError);
}
