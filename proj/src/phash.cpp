#include "bmaguard/phash.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <vector>

#include "bmaguard/error.hpp"

namespace bmaguard {

namespace {

struct Tap {
  int src;
  std::int64_t weight;
};

std::vector<std::vector<Tap>> taps_for(int n, int m) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t lo = i * n, hi = (i + 1) * n;
    for (std::int64_t j = lo / m; j < (hi + m - 1) / m; ++j) {
      const std::int64_t w = std::min(hi, (j + 1) * m) - std::max(lo, j * m);
      if (w > 0) taps[static_cast<std::size_t>(i)].push_back({static_cast<int>(j), w});
    }
  }
  return taps;
}

} // namespace

// Luminance is kept as 299R + 587G + 114B and the box resize is left
// unnormalized: every resized pixel shares the denominator width*height*1000,
// so block means compare exactly as integers.
std::array<std::int64_t, 64> block_sums(const RgbImage& img) {
  if (!img.valid()) throw InvalidInput("compute_phash: invalid image");
  const auto xt = taps_for(img.width, kHashResize);
  const auto yt = taps_for(img.height, kHashResize);

  std::vector<std::int64_t> luma(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (std::size_t i = 0; i < luma.size(); ++i) {
    const std::uint8_t* p = img.pixels.data() + 3 * i;
    luma[i] = 299 * p[0] + 587 * p[1] + 114 * p[2];
  }

  constexpr int cell = kHashResize / kHashGrid;
  std::array<std::int64_t, 64> sums{};
  std::vector<std::int64_t> row(static_cast<std::size_t>(img.width));
  for (int oy = 0; oy < kHashResize; ++oy) {
    std::fill(row.begin(), row.end(), 0);
    for (const Tap& ty : yt[static_cast<std::size_t>(oy)]) {
      const std::int64_t* s = luma.data() + static_cast<std::size_t>(ty.src) * static_cast<std::size_t>(img.width);
      for (int x = 0; x < img.width; ++x) row[static_cast<std::size_t>(x)] += ty.weight * s[x];
    }
    for (int ox = 0; ox < kHashResize; ++ox) {
      std::int64_t acc = 0;
      for (const Tap& tx : xt[static_cast<std::size_t>(ox)]) acc += tx.weight * row[static_cast<std::size_t>(tx.src)];
      sums[static_cast<std::size_t>((oy / cell) * kHashGrid + ox / cell)] += acc;
    }
  }
  return sums;
}

PerceptualHash compute_phash(const RgbImage& img) {
  const auto sums = block_sums(img);
  auto sorted = sums;
  std::sort(sorted.begin(), sorted.end());
  // Median of 64 values is (s[31] + s[32]) / 2; compare 2*x against the sum.
  const std::int64_t twice_median = sorted[31] + sorted[32];
  PerceptualHash h{0, img.width, img.height};
  for (std::size_t b = 0; b < 64; ++b)
    if (2 * sums[b] > twice_median) h.bits |= std::uint64_t{1} << (63 - b);
  return h;
}

HashDistance hamming_distance(const PerceptualHash& a, const PerceptualHash& b) noexcept {
  return {std::popcount(a.bits ^ b.bits)};
}

bool is_significant_change(HashDistance d, int threshold) noexcept { return d.value >= threshold; }

std::string to_hex(const PerceptualHash& h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.bits));
  return buf;
}

PerceptualHash hash_from_hex(std::string_view hex) {
  if (hex.size() != 16) throw InvalidInput("hash must be 16 hex digits");
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
  if (ec != std::errc{} || ptr != hex.data() + hex.size()) throw InvalidInput("hash must be 16 hex digits");
  return {v, 0, 0};
}

} // namespace bmaguard
