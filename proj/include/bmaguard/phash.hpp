// 64-bit block-mean perceptual hash and Hamming-distance change detection.

#ifndef BMAGUARD_PHASH_HPP_
#define BMAGUARD_PHASH_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "bmaguard/imaging.hpp"

namespace bmaguard {

inline constexpr int kHashResize = 256;
inline constexpr int kHashGrid = 8;
inline constexpr int kSignificantChange = 5;

/// Bit for block (row, col) is bit 63 - (row*8 + col): the hex form reads
/// the grid row-major from the most significant nibble.
struct PerceptualHash {
  std::uint64_t bits = 0;
  int source_width = 0;
  int source_height = 0;

  bool block(int row, int col) const noexcept { return (bits >> (63 - (row * kHashGrid + col))) & 1u; }
  friend bool operator==(const PerceptualHash& a, const PerceptualHash& b) noexcept { return a.bits == b.bits; }
};

struct HashDistance {
  int value = 0;
  friend auto operator<=>(const HashDistance&, const HashDistance&) = default;
};

/// Block sums of the 256x256 luminance resize, scaled by a common positive
/// constant. Exposed so the hash rule can be checked independently.
std::array<std::int64_t, 64> block_sums(const RgbImage& img);

PerceptualHash compute_phash(const RgbImage& img);
inline PerceptualHash compute_phash(const NormalizedImage& img) { return compute_phash(img.image); }

HashDistance hamming_distance(const PerceptualHash& a, const PerceptualHash& b) noexcept;

bool is_significant_change(HashDistance d, int threshold = kSignificantChange) noexcept;

std::string to_hex(const PerceptualHash& h);
/// Accepts exactly 16 hex digits.
PerceptualHash hash_from_hex(std::string_view hex);

} // namespace bmaguard

#endif
