#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "smpcl/edges.hpp"
#include "smpcl/log.hpp"
#include "smpcl/spobe.hpp"
#include "oracles.hpp"

using namespace smpcl;
using smpcl::test::naive_spobe;

namespace {

LabelMap row_scribble(int width, int col, int cls) {
  LabelMap s(1, width);
  s.at(0, col) = static_cast<std::uint8_t>(cls);
  return s;
}

BinaryMap row_edges(int width, std::vector<int> cols) {
  BinaryMap f(1, width);
  for (int c : cols) f.at(0, c) = 1;
  return f;
}

}  // namespace

TEST_CASE("edge detection: constant image has no edges") {
  GrayImage img(8, 8, 0.4f);
  CHECK(detect_edges(img, {EdgeMethod::kSobel}).count() == 0);
  CHECK(detect_edges(img).count() == 0);
}

TEST_CASE("edge detection: sobel marks the two columns beside a vertical step") {
  GrayImage img(6, 8, 0.0f);
  for (int r = 0; r < 6; ++r)
    for (int c = 4; c < 8; ++c) img.at(r, c) = 1.0f;
  EdgeParams p;
  p.method = EdgeMethod::kSobel;
  p.sobel_threshold = 0.5;
  auto e = detect_edges(img, p);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 8; ++c) CHECK(e.at(r, c) == (c == 3 || c == 4 ? 1 : 0));
  }
}

TEST_CASE("edge detection: canny finds the neighborhood of a bright dot") {
  GrayImage img(15, 15, 0.0f);
  img.at(7, 7) = 1.0f;
  auto e = detect_edges(img);
  CHECK(e.count() > 0);
  for (int r = 0; r < 15; ++r) {
    for (int c = 0; c < 15; ++c) {
      if (e.at(r, c)) CHECK(std::max(std::abs(r - 7), std::abs(c - 7)) <= 3);
    }
  }
}

TEST_CASE("edge detection rejects bad parameters and inputs") {
  GrayImage img(4, 4, 0.5f);
  EdgeParams p;
  p.low = 0.3;
  p.high = 0.2;
  CHECK_THROWS_AS(detect_edges(img, p), ValidationError);
  p.low = p.high = 0.2;
  CHECK_THROWS_AS(detect_edges(img, p), ValidationError);
  img.at(0, 0) = 1.5f;
  CHECK_THROWS_AS(detect_edges(img), ValidationError);
}

TEST_CASE("dilate_class examples") {
  LabelMap s(4, 4);
  s.at(0, 0) = 1;
  auto d = dilate_class(s, 1, 3);
  CHECK(d.count() == 4);
  CHECK(d.at(0, 0) + d.at(0, 1) + d.at(1, 0) + d.at(1, 1) == 4);
  CHECK(dilate_class(s, 1, 1) == s.mask(1));
  CHECK(dilate_class(s, 0, 3).count() == 0);

  LabelMap center(3, 3);
  center.at(1, 1) = 0;
  CHECK(dilate_class(center, 0, 3).count() == 9);
  CHECK_THROWS_AS(dilate_class(s, 1, 4), DomainError);
  CHECK_THROWS_AS(dilate_class(s, 1, -1), DomainError);
}

TEST_CASE("counting_map examples") {
  BinaryMap zero(5, 5);
  CHECK(counting_map(zero, 3, 1).count() == 25);

  BinaryMap ones(5, 5, 1);
  CHECK(counting_map(ones, 3, 1).count() == 0);

  BinaryMap dot(5, 5);
  dot.at(2, 2) = 1;
  auto u = counting_map(dot, 3, 2);
  CHECK(u.count() == 25);  // every window sum is at most 1 < 2
  auto u1 = counting_map(dot, 3, 1);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      const bool covered = std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1;
      CHECK(u1.at(r, c) == (covered ? 0 : 1));
    }
  }
  CHECK_THROWS_AS(counting_map(dot, 3, 0), DomainError);
  CHECK_THROWS_AS(counting_map(dot, 2, 1), DomainError);
}

TEST_CASE("counting_map with n=2 closes where the window holds two edges") {
  BinaryMap two(5, 5);
  two.at(2, 1) = 1;
  two.at(2, 3) = 1;
  auto u = counting_map(two, 3, 2);
  // Only windows centered on column 2, rows 1..3, see both pixels.
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      CHECK(u.at(r, c) == ((c == 2 && r >= 1 && r <= 3) ? 0 : 1));
    }
  }
}

TEST_CASE("spobe on an empty edge map finds nothing") {
  LabelMap s(6, 6);
  s.at(2, 2) = 0;
  s.at(4, 4) = 1;
  auto b = spobe_from_edges(BinaryMap(6, 6), s, 2, {});
  CHECK(b.empty());
  CHECK(b.history[0].size() == 5);
}

TEST_CASE("spobe one-row hand simulation") {
  SpobeConfig cfg;
  cfg.schedule = {3};
  cfg.class_thresholds = {4};
  auto f = row_edges(5, {1, 3});
  auto s = row_scribble(5, 2, 0);
  auto b = spobe_from_edges(f, s, 1, cfg);
  CHECK(b.classes[0] == row_edges(5, {1, 3}));

  cfg.schedule = {3, 5};
  cfg.class_thresholds = {1};
  auto b2 = spobe_from_edges(f, s, 1, cfg);
  CHECK(b2.classes[0] == row_edges(5, {1, 3}));
  CHECK(b2.history[0][0] == b2.history[0][1]);
}

TEST_CASE("spobe gate admits new edges while the window count stays low") {
  SpobeConfig cfg;
  cfg.schedule = {3, 5};
  cfg.class_thresholds = {3};
  auto f = row_edges(7, {1, 3, 5});
  auto s = row_scribble(7, 2, 0);
  auto b = spobe_from_edges(f, s, 1, cfg);
  CHECK(b.history[0][0] == row_edges(7, {1, 3}));
  // Column 0 stays outside the 5-wide reach; column 5 sees at most {3,5} after the merge.
  CHECK(b.classes[0] == row_edges(7, {1, 3}));
  cfg.schedule = {3, 7};
  auto b7 = spobe_from_edges(f, s, 1, cfg);
  CHECK(b7.classes[0] == row_edges(7, {1, 3, 5}));
}

TEST_CASE("spobe matches a straight-loop reference on random inputs") {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = 12 + trial, w = 15 - trial, k = 3;
    BinaryMap f(h, w);
    LabelMap s(h, w);
    for (auto& v : f.values()) v = gen() % 3 == 0;
    for (int i = 0; i < 6; ++i) s.at(gen() % h, gen() % w) = static_cast<std::uint8_t>(gen() % k);
    SpobeConfig cfg;
    cfg.schedule = {3, 5, 7};
    auto b = spobe_from_edges(f, s, k, cfg);
    auto ref = naive_spobe(f, s, k, cfg.schedule);
    for (int c = 0; c < k; ++c) CHECK(b.classes[c] == ref[c]);
  }
}

TEST_CASE("spobe invariants: subset, monotone, local, deterministic") {
  std::mt19937 gen(5);
  GrayImage img(24, 24);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c) {
      const double d = (r - 12) * (r - 12) + (c - 11) * (c - 11);
      img.at(r, c) = static_cast<float>((d < 50 ? 0.8 : 0.2) + 0.05 * (gen() % 3));
    }
  LabelMap s(24, 24);
  for (int c = 8; c < 15; ++c) s.at(12, c) = 1;
  for (int r = 2; r < 20; ++r) s.at(r, 1) = 0;

  auto b = spobe(img, s, 2);
  auto again = spobe(img, s, 2);
  auto f = detect_edges(img);
  const int reach = 11 / 2;
  for (int c = 0; c < 2; ++c) {
    CHECK(b.classes[c] == again.classes[c]);
    CHECK(b.classes[c].subset_of(f));
    for (std::size_t i = 1; i < b.history[c].size(); ++i) {
      CHECK(b.history[c][i - 1].subset_of(b.history[c][i]));
    }
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 24; ++x) {
        if (!b.classes[c].at(y, x)) continue;
        bool near = false;
        for (int yy = 0; yy < 24; ++yy)
          for (int xx = 0; xx < 24; ++xx)
            near = near || (s.at(yy, xx) == c && std::max(std::abs(yy - y), std::abs(xx - x)) <= reach);
        CHECK(near);
      }
    }
  }
  CHECK(b.classes[1].count() > 0);
}

TEST_CASE("spobe skips a class without scribbles and warns") {
  std::vector<std::string> seen;
  auto prev = set_warning_sink([&](const std::string& m) { seen.push_back(m); });
  LabelMap s(5, 5);
  s.at(2, 2) = 0;
  BinaryMap f(5, 5, 1);
  auto b = spobe_from_edges(f, s, 2, {});
  set_warning_sink(prev);
  CHECK(b.warnings.size() == 1);
  CHECK(seen.size() == 1);
  CHECK(b.classes[1].count() == 0);
  CHECK(b.classes[0].count() > 0);
}

TEST_CASE("spobe config validation") {
  SpobeConfig cfg;
  cfg.schedule = {5, 3};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.schedule = {3, 4};
  CHECK_THROWS(cfg.validate());
  cfg.schedule = {};
  CHECK_THROWS(cfg.validate());
  LabelMap s(2, 2);
  GrayImage img(3, 3);
  CHECK_THROWS_AS(spobe(img, s, 2), ShapeError);
}

TEST_CASE("enrich_scribbles") {
  LabelMap s(1, 4);
  s.at(0, 0) = 0;
  s.at(0, 3) = 1;
  BoundaryMap empty;
  empty.num_classes = 2;
  empty.classes.assign(2, BinaryMap(1, 4));
  CHECK(enrich_scribbles(s, empty) == s);

  BoundaryMap b = empty;
  b.classes[1].at(0, 1) = 1;
  b.classes[0].at(0, 2) = 1;
  b.classes[1].at(0, 2) = 1;
  b.classes[1].at(0, 0) = 1;  // originally labeled 0; must stay 0
  auto e = enrich_scribbles(s, b);
  CHECK(e.at(0, 0) == 0);
  CHECK(e.at(0, 1) == 1);
  CHECK(e.at(0, 2) == kUnlabeled);
  CHECK(e.at(0, 3) == 1);
}
