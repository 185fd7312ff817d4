// Screenshot normalization to the fixed model canvas, and training-time
// image augmentation.

#ifndef BMAGUARD_IMAGING_HPP_
#define BMAGUARD_IMAGING_HPP_

#include <array>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bmaguard {

inline constexpr int kCanvasWidth = 1920;
inline constexpr int kCanvasHeight = 1080;
inline constexpr int kNormWidth = 960;
inline constexpr int kNormHeight = 540;

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Row-major interleaved RGB8 buffer.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
  }
  std::uint8_t* at(int x, int y) noexcept { return pixels.data() + index(x, y); }
  const std::uint8_t* at(int x, int y) const noexcept { return pixels.data() + index(x, y); }
  bool valid() const noexcept {
    return width >= 1 && height >= 1 &&
           pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct RawScreenshot {
  RgbImage image;
  std::string source_domain;
  std::chrono::system_clock::time_point captured_at{};
};

/// Always 960x540. Pixels outside `content_rect` are exactly (0,0,0).
struct NormalizedImage {
  RgbImage image;
  double scale_factor = 1.0;
  Rect content_rect;
};

/// Floor(x + 0.5), the single rounding rule used throughout imaging.
std::int64_t round_half_up(double x) noexcept;

/// Area-average (box filter) resampling to an explicit output size. Exact
/// integer arithmetic; each output channel is the rounded-half-up mean of
/// the source area it covers.
RgbImage resize_area(const RgbImage& src, int out_width, int out_height);

/// Area-average downsampling by `factor` in (0, 1]; output dims are
/// round-half-up(dim * factor), at least 1.
RgbImage downsample(const RgbImage& src, double factor);

/// Dimensions of the screenshot after the oversize rule (fit inside
/// 1920x1080, isotropic, round-half-up). Returns the input size when it
/// already fits.
std::array<int, 2> fitted_size(int width, int height);

NormalizedImage normalize_screenshot(const RgbImage& raw);
inline NormalizedImage normalize_screenshot(const RawScreenshot& raw) {
  return normalize_screenshot(raw.image);
}

/// Isotropically fits `content` into a zero canvas of the given size,
/// centered with floor offsets. Used by margin-crop augmentation.
NormalizedImage letterbox(const RgbImage& content, int canvas_width, int canvas_height);

enum class Transform : std::uint8_t {
  inversion,
  grayscale,
  margin_crop,
  hue_shift,
  brightness,
  contrast,
  saturation,
  solarization,
};

inline constexpr std::array<Transform, 8> kTransformPool = {
    Transform::inversion,  Transform::grayscale, Transform::margin_crop, Transform::hue_shift,
    Transform::brightness, Transform::contrast,  Transform::saturation,  Transform::solarization,
};

std::string_view to_string(Transform t) noexcept;

struct AugmentationSpec {
  static constexpr int count = 2;
  std::uint64_t seed = 0;
  std::array<Transform, 8> transform_pool = kTransformPool;
};

/// The two distinct transforms `augment_image` applies, in application order.
std::array<Transform, 2> select_transforms(const AugmentationSpec& spec);

/// Applies exactly two seed-selected transforms. Colour transforms act on the
/// content rectangle only so the zero padding survives; margin-crop removes at
/// most 10% per edge and re-letterboxes to 960x540.
NormalizedImage augment_image(const NormalizedImage& img, const AugmentationSpec& spec);

/// Applies one transform with parameters drawn from `seed`.
NormalizedImage apply_transform(const NormalizedImage& img, Transform t, std::uint64_t seed);

} // namespace bmaguard

#endif
