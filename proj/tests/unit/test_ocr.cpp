#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "bmaguard/error.hpp"
#include "bmaguard/ocr.hpp"
#include "test_support.hpp"

using namespace bmaguard;

TEST_CASE("strips partition the height with the remainder on top") {
  const RgbImage img = test::random_image(960, 542, 1);
  const auto strips = slice_image(img);
  REQUIRE(strips.size() == 4);
  CHECK(strips[0].height == 136);
  CHECK(strips[1].height == 136);
  CHECK(strips[2].height == 135);
  CHECK(strips[3].height == 135);
  int y = 0;
  for (const auto& s : strips) {
    CHECK(s.width == 960);
    CHECK(std::equal(s.pixels.begin(), s.pixels.end(), img.at(0, y)));
    y += s.height;
  }
  CHECK(y == 542);
}

TEST_CASE("strip heights for any height") {
  for (int h = 4; h < 200; ++h) {
    const auto strips = slice_image(RgbImage(3, h));
    int total = 0, mx = 0, mn = h;
    for (const auto& s : strips) {
      total += s.height;
      mx = std::max(mx, s.height);
      mn = std::min(mn, s.height);
    }
    CHECK(total == h);
    CHECK(mx - mn <= 1);
    CHECK(strips.front().height >= strips.back().height);
  }
  CHECK_THROWS_AS(slice_image(RgbImage(3, 3)), InvalidInput);
}

TEST_CASE("results are joined top to bottom") {
  ScriptedOcrEngine engine([](const RgbImage&, std::size_t i) { return std::to_string(i); });
  const OcrText t = extract_text(test::random_image(960, 540, 2), engine);
  CHECK(t.text == "0\n1\n2\n3");
  CHECK(t.per_slice == std::vector<std::string>{"0", "1", "2", "3"});
  CHECK(t.extraction_ms.count() >= 0);
}

TEST_CASE("order holds when later strips finish first") {
  ScriptedOcrEngine engine([](const RgbImage&, std::size_t i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20 * (4 - static_cast<int>(i))));
    return "s" + std::to_string(i);
  });
  CHECK(extract_text(test::random_image(64, 64, 3), engine).text == "s0\ns1\ns2\ns3");
}

TEST_CASE("empty strips keep their separators") {
  ScriptedOcrEngine engine([](const RgbImage&, std::size_t) { return std::string{}; });
  CHECK(extract_text(test::random_image(960, 540, 2), engine).text == "\n\n\n");
}

TEST_CASE("a failing strip names its index") {
  ScriptedOcrEngine engine([](const RgbImage&, std::size_t i) -> std::string {
    if (i == 2) throw std::runtime_error("boom");
    return "ok";
  });
  try {
    extract_text(test::random_image(960, 540, 2), engine);
    FAIL("expected EngineError");
  } catch (const EngineError& e) {
    CHECK(e.strip() == 2);
  }
}

TEST_CASE("non-concurrent engines are serialized") {
  std::atomic<int> active{0}, peak{0};
  ScriptedOcrEngine engine(
      [&](const RgbImage&, std::size_t) {
        const int now = ++active;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return std::string("x");
      },
      false);
  extract_text(test::random_image(64, 64, 3), engine);
  CHECK(peak.load() == 1);
}

TEST_CASE("fixed text engine answers on the first strip only") {
  FixedTextOcrEngine engine("hello world");
  CHECK(extract_text(test::random_image(64, 64, 3), engine).text == "hello world\n\n\n");
}

TEST_CASE("external engine reads stdout") {
  ExternalOcrEngine engine("/bin/sh", {"-c", "echo strip; test -s \"$0\"", "{}"});
  const OcrText t = extract_text(test::random_image(64, 64, 3), engine);
  CHECK(t.text == "strip\nstrip\nstrip\nstrip");
}

TEST_CASE("external engine failures") {
  SUBCASE("non-zero exit") {
    ExternalOcrEngine engine("/bin/sh", {"-c", "exit 3"});
    CHECK_THROWS_AS(extract_text(test::random_image(64, 64, 3), engine), EngineError);
  }
  SUBCASE("missing executable") {
    ExternalOcrEngine engine("/nonexistent/ocr-binary");
    CHECK_THROWS_AS(extract_text(test::random_image(64, 64, 3), engine), EngineError);
  }
  SUBCASE("timeout") {
    ExternalOcrEngine engine("/bin/sh", {"-c", "sleep 5"}, std::chrono::milliseconds(100));
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(extract_text(test::random_image(64, 64, 3), engine), EngineError);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(4));
  }
}
