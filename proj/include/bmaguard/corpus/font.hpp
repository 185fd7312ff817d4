// 5x7 bitmap font for printable ASCII.

#ifndef BMAGUARD_CORPUS_FONT_HPP_
#define BMAGUARD_CORPUS_FONT_HPP_

#include <array>
#include <cstdint>
#include <string_view>

#include "bmaguard/imaging.hpp"

namespace bmaguard {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
/// Horizontal advance in font pixels, including one column of spacing.
inline constexpr int kGlyphAdvance = 6;

/// Five column bytes, bit 0 = top row. Characters outside 0x20..0x7e map
/// to '?'.
const std::array<std::uint8_t, 5>& glyph(char c) noexcept;

/// Draws `text` with its top-left corner at (x, y), each font pixel scaled
/// to a `scale` x `scale` square. Clipped to the image. Returns the x
/// coordinate just past the last glyph.
int draw_text(RgbImage& img, int x, int y, std::string_view text, std::array<std::uint8_t, 3> color, int scale = 1);

inline int text_width(std::string_view text, int scale = 1) noexcept {
  return static_cast<int>(text.size()) * kGlyphAdvance * scale;
}

} // namespace bmaguard

#endif
