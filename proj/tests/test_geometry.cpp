#include <doctest.h>

#include <random>

#include "maps/error.hpp"
#include "maps/geometry.hpp"
#include "oracles.hpp"

using namespace maps;

TEST_CASE("render: peak 1 at the keypoint cell") {
  KeypointSet kp{{32, 32, true}};
  const auto s = render_heatmaps(kp, {64, 64}, 2.0);
  const auto d = decode_heatmaps(s);
  CHECK(s.at(0, 32, 32) == 1.0);
  double mx = 0;
  for (double v : s.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mx = std::max(mx, v);
  }
  CHECK(mx == 1.0);
  CHECK(d.keypoints[0].x == 32.0);
  CHECK(d.keypoints[0].y == 32.0);
  CHECK(d.confidence[0] == 1.0);
}

TEST_CASE("render matches a direct Gaussian, with stride") {
  KeypointSet kp{{21.0, 9.5, true}};
  const double stride = 4.0;
  const auto s = render_heatmaps(kp, {16, 16}, 1.5, stride);
  const double cx = (21.0 + 0.5) / stride - 0.5, cy = (9.5 + 0.5) / stride - 0.5;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(s.at(0, y, x) == doctest::Approx(oracle::gaussian_cell(cx, cy, x, y, 1.5)).epsilon(1e-12));
  CHECK(s.stride() == stride);
}

TEST_CASE("render: invisible keypoint gives a zero channel") {
  KeypointSet kp{{10, 10, true}, {5, 5, false}};
  const auto s = render_heatmaps(kp, {32, 32}, 2.0);
  for (double v : s.channel(1)) CHECK(v == 0.0);
  CHECK(decode_heatmaps(s).keypoints[1].visible == false);
}

TEST_CASE("render: invalid sigma or resolution") {
  KeypointSet kp{{1, 1, true}};
  CHECK_THROWS_AS(render_heatmaps(kp, {8, 8}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(render_heatmaps(kp, {8, 8}, -1.0), InvalidArgument);
  CHECK_THROWS_AS(render_heatmaps(kp, {0, 8}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(render_heatmaps(kp, {8, -2}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(HeatmapStack(-1, {4, 4}), InvalidArgument);
  CHECK(HeatmapStack(0, {4, 4}).empty());
}

TEST_CASE("render -> decode round trip at a sub-pixel location") {
  KeypointSet kp{{10.5, 20.25, true}};
  const auto d = decode_heatmaps(render_heatmaps(kp, {64, 64}, 2.0));
  CHECK(std::abs(d.keypoints[0].x - 10.5) <= 0.5);
  CHECK(std::abs(d.keypoints[0].y - 20.25) <= 0.5);
}

TEST_CASE("decode: all-zero and negative channels") {
  HeatmapStack s(2, {8, 8});
  for (double& v : s.channel(1)) v = -0.3;
  const auto d = decode_heatmaps(s);
  for (int k = 0; k < 2; ++k) {
    CHECK(d.keypoints[k].x == 0.0);
    CHECK(d.keypoints[k].y == 0.0);
    CHECK_FALSE(d.keypoints[k].visible);
  }
  CHECK(d.confidence[0] == 0.0);
  CHECK_THROWS_AS(decode_heatmaps(HeatmapStack{}), InvalidArgument);
}

TEST_CASE("decode: ties resolve to the first row-major cell") {
  HeatmapStack s(1, {6, 6});
  s.at(0, 2, 4) = 0.9;
  s.at(0, 4, 1) = 0.9;
  const auto d = decode_heatmaps(s);
  CHECK(d.keypoints[0].x == 4.0);
  CHECK(d.keypoints[0].y == 2.0);
}

TEST_CASE("decode: quarter offset toward the larger neighbour, none on the border") {
  HeatmapStack s(1, {5, 5});
  s.at(0, 2, 2) = 1.0;
  s.at(0, 2, 3) = 0.5;
  s.at(0, 1, 2) = 0.4;
  s.at(0, 3, 2) = 0.2;
  auto d = decode_heatmaps(s);
  CHECK(d.keypoints[0].x == 2.25);
  CHECK(d.keypoints[0].y == 1.75);

  HeatmapStack b(1, {5, 5});
  b.at(0, 0, 4) = 1.0;
  b.at(0, 0, 3) = 0.9;
  d = decode_heatmaps(b);
  CHECK(d.keypoints[0].x == 4.0);
  CHECK(d.keypoints[0].y == 0.0);
}

TEST_CASE("decode: random stacks agree with an exhaustive scan") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.2, 1.0);
  for (int t = 0; t < 200; ++t) {
    HeatmapStack s(2, {16, 16}, 4.0);
    for (double& v : s.values()) v = u(rng);
    const auto d = decode_heatmaps(s);
    for (int k = 0; k < 2; ++k) {
      const auto ch = s.channel(k);
      const auto o = oracle::decode_channel({ch.begin(), ch.end()}, 16, 16, 4.0);
      CHECK(d.keypoints[k].x == o.x);
      CHECK(d.keypoints[k].y == o.y);
      CHECK(d.confidence[k] == o.confidence);
    }
  }
}

TEST_CASE("pck: identical predictions score 1") {
  KeypointGroups g{{"a", {0}}, {"b", {1, 2}}};
  KeypointSet gt{{1, 2, true}, {10, 11, true}, {30, 5, true}};
  const auto r = pck(gt, gt, 64, 0.05, g);
  CHECK(r.average == 1.0);
  CHECK(r.per_group.at("a") == 1.0);
  CHECK(r.per_group.at("b") == 1.0);
}

TEST_CASE("pck: one exact, one displaced by 0.1 image size") {
  KeypointGroups g{{"all", {0, 1}}};
  KeypointSet gt{{10, 10, true}, {20, 20, true}};
  KeypointSet pred{{10, 10, true}, {20 + 6.4, 20, true}};
  CHECK(pck(pred, gt, 64, 0.05, g).average == 0.5);
}

TEST_CASE("pck: distance exactly at the threshold is a miss") {
  KeypointGroups g{{"all", {0}}};
  KeypointSet gt{{10, 10, true}};
  // 0.0625 * 64 = 4 with no rounding anywhere.
  KeypointSet exact{{14, 10, true}};
  CHECK(pck(exact, gt, 64, 0.0625, g).average == 0.0);
  KeypointSet inside{{14 - 1e-9, 10, true}};
  CHECK(pck(inside, gt, 64, 0.0625, g).average == 1.0);
  // Offsets from the origin carry the threshold's own rounding.
  KeypointSet origin{{0, 0, true}};
  KeypointSet at{{0.05 * 64, 0, true}};
  CHECK(pck(at, origin, 64, 0.05, g).average == 0.0);
}

TEST_CASE("pck: average is over keypoints, invisible truth is skipped") {
  KeypointGroups g{{"one", {0}}, {"three", {1, 2, 3}}};
  KeypointSet gt{{0, 0, true}, {5, 5, true}, {6, 6, true}, {7, 7, true}};
  KeypointSet pred{{40, 40, true}, {5, 5, true}, {6, 6, true}, {7, 7, true}};
  const auto r = pck(pred, gt, 64, 0.05, g);
  CHECK(r.average == doctest::Approx(0.75));
  CHECK(r.per_group.at("one") == 0.0);
  CHECK(r.per_group.at("three") == 1.0);
  CHECK(r.evaluated == 4);

  gt[0].visible = false;
  const auto r2 = pck(pred, gt, 64, 0.05, g);
  CHECK(r2.average == 1.0);
  CHECK(r2.evaluated == 3);
}

TEST_CASE("pck: errors") {
  KeypointGroups g{{"all", {0}}};
  KeypointSet a{{0, 0, true}}, b{{0, 0, true}, {1, 1, true}};
  CHECK_THROWS_AS(pck(a, b, 64, 0.05, g), InvalidArgument);
  CHECK_THROWS_AS(pck(a, a, 0, 0.05, g), InvalidArgument);
  CHECK_THROWS_AS(pck(a, a, 64, 0.0, g), InvalidArgument);
  CHECK(pck_normalizer(48, 64) == 64);
  CHECK(pck_normalizer(80, 64) == 80);
}

TEST_CASE("pck: hand-built two-sample dataset") {
  KeypointGroups g{{"p", {0}}, {"q", {1}}};
  std::vector<KeypointSet> gt{{{10, 10, true}, {50, 50, true}}, {{20, 30, true}, {40, 8, true}}};
  std::vector<KeypointSet> pred{{{12, 11, true}, {50, 54, true}}, {{20, 30, true}, {37, 6, true}}};
  // distances: sqrt(5)=2.24 hit, 4 miss, 0 hit, sqrt(13)=3.61 miss at 3.2
  const auto r = pck(pred, gt, 64, 0.05, g);
  CHECK(r.average == 0.5);
  CHECK(r.per_group.at("p") == 1.0);
  CHECK(r.per_group.at("q") == 0.0);
  const auto wide = pck(pred, gt, 64, 0.1, g);
  CHECK(wide.average == 1.0);
}
