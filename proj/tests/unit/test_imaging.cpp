#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "bmaguard/error.hpp"
#include "bmaguard/imaging.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace bmaguard;
using namespace bmaguard::oracle;

TEST_CASE("round half up") {
  CHECK(round_half_up(0.5) == 1);
  CHECK(round_half_up(1.49) == 1);
  CHECK(round_half_up(-0.5) == 0);
  CHECK(round_half_up(127.5) == 128);
}

TEST_CASE("downsample of a 2x2 ramp rounds the half up") {
  RgbImage img(2, 2);
  const std::uint8_t v[4] = {0, 0, 255, 255};
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) img.pixels[static_cast<std::size_t>(i * 3 + c)] = v[i];
  const RgbImage d = downsample(img, 0.5);
  REQUIRE(d.width == 1);
  REQUIRE(d.height == 1);
  CHECK(d.at(0, 0)[0] == 128);
  CHECK(d.at(0, 0)[1] == 128);
  CHECK(d.at(0, 0)[2] == 128);
}

TEST_CASE("downsample rejects bad factors") {
  const RgbImage img = test::random_image(4, 4, 1);
  CHECK_THROWS_AS(downsample(img, 0.0), InvalidInput);
  CHECK_THROWS_AS(downsample(img, 1.5), InvalidInput);
}

TEST_CASE("content rectangles of common sizes") {
  struct Case {
    int w, h;
    Rect rect;
  };
  const Case cases[] = {
      {1920, 1080, {0, 0, 960, 540}},
      {3840, 2160, {0, 0, 960, 540}},
      {2560, 1440, {0, 0, 960, 540}},
      {960, 540, {240, 135, 480, 270}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.w);
    CAPTURE(c.h);
    const NormalizedImage n = normalize_screenshot(test::random_image(c.w, c.h, 5));
    CHECK(n.image.width == 960);
    CHECK(n.image.height == 540);
    CHECK(n.content_rect == c.rect);
    CHECK(padding_is_zero(n));
  }
}

TEST_CASE("scale factor") {
  CHECK(normalize_screenshot(test::random_image(3840, 2160, 1)).scale_factor == doctest::Approx(0.5));
  CHECK(normalize_screenshot(test::random_image(800, 600, 1)).scale_factor == 1.0);
}

TEST_CASE("normalization agrees with the per-pixel reference") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> wd(16, 4000), hd(16, 3000);
  // Edge shapes first, then random ones.
  std::vector<std::pair<int, int>> sizes = {{16, 16}, {4000, 3000}, {1921, 1080}, {1920, 1081}, {16, 3000}, {4000, 16},
                                            {1919, 1079}, {1366, 768}, {360, 640}};
  while (sizes.size() < 40) sizes.emplace_back(wd(rng), hd(rng));
  for (const auto& [w, h] : sizes) {
    CAPTURE(w);
    CAPTURE(h);
    const RgbImage raw = test::random_image(w, h, static_cast<std::uint64_t>(w) * 7919 + static_cast<std::uint64_t>(h));
    const NormalizedImage n = normalize_screenshot(raw);
    REQUIRE(n.image.width == 960);
    REQUIRE(n.image.height == 540);
    CHECK(n.image == oracle_normalize(raw));
    CHECK(padding_is_zero(n));
  }
}

TEST_CASE("fitted size never exceeds the canvas and keeps the aspect") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(1, 9000);
  for (int i = 0; i < 2000; ++i) {
    const int w = d(rng), h = d(rng);
    const auto [fw, fh] = fitted_size(w, h);
    CHECK(fw <= 1920);
    CHECK(fh <= 1080);
    if (w > 1920 || h > 1080) CHECK((fw == 1920 || fh == 1080));
    else CHECK((fw == w && fh == h));
  }
}

TEST_CASE("normalize rejects empty images") {
  CHECK_THROWS_AS(normalize_screenshot(RgbImage{}), InvalidInput);
}

TEST_CASE("resize_area preserves a constant image") {
  const RgbImage img = test::solid_image(37, 23, 10, 200, 77);
  const RgbImage r = resize_area(img, 11, 5);
  CHECK(r == test::solid_image(11, 5, 10, 200, 77));
}

TEST_CASE("letterbox centres content with floor offsets") {
  const NormalizedImage n = letterbox(test::random_image(100, 100, 2), 960, 540);
  CHECK(n.content_rect == Rect{210, 0, 540, 540});
  CHECK(padding_is_zero(n));
}

TEST_CASE("grayscale transform equalizes channels") {
  const NormalizedImage n = normalize_screenshot(test::random_image(1280, 720, 9));
  const NormalizedImage g = apply_transform(n, Transform::grayscale, 4);
  for (int y = 0; y < 540; ++y)
    for (int x = 0; x < 960; ++x) {
      const auto* p = g.image.at(x, y);
      REQUIRE(p[0] == p[1]);
      REQUIRE(p[1] == p[2]);
    }
}

TEST_CASE("inversion of the content area") {
  const NormalizedImage n = normalize_screenshot(test::random_image(960, 540, 9));
  const NormalizedImage inv = apply_transform(n, Transform::inversion, 0);
  const auto* a = n.image.at(300, 200);
  const auto* b = inv.image.at(300, 200);
  CHECK(a[0] + b[0] == 255);
  CHECK(padding_is_zero(inv));
}

TEST_CASE("augmentation applies two distinct transforms and keeps padding") {
  const NormalizedImage n = normalize_screenshot(test::random_image(800, 600, 11));
  std::set<std::pair<int, int>> seen;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    AugmentationSpec spec;
    spec.seed = seed;
    const auto t = select_transforms(spec);
    CHECK(t[0] != t[1]);
    CHECK(select_transforms(spec) == t);
    seen.insert({static_cast<int>(t[0]), static_cast<int>(t[1])});
  }
  CHECK(seen.size() == 56);
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    AugmentationSpec spec;
    spec.seed = seed;
    const NormalizedImage a = augment_image(n, spec);
    CHECK(a.image.width == 960);
    CHECK(a.image.height == 540);
    CHECK(padding_is_zero(a));
    CHECK(a.image == augment_image(n, spec).image);
  }
}

TEST_CASE("margin crop removes at most a tenth per edge") {
  const NormalizedImage n = normalize_screenshot(test::random_image(1920, 1080, 12));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NormalizedImage c = apply_transform(n, Transform::margin_crop, seed);
    CHECK(c.image.width == 960);
    CHECK(padding_is_zero(c));
    CHECK(c.content_rect.w * c.content_rect.h >= 960 * 540 * 79 / 100);
  }
}
