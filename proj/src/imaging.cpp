#include "bmaguard/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bmaguard/error.hpp"

namespace bmaguard {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h),
      pixels(static_cast<std::size_t>(std::max(w, 0)) * static_cast<std::size_t>(std::max(h, 0)) * 3, fill) {}

std::int64_t round_half_up(double x) noexcept { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

namespace {

struct Tap {
  int src;
  std::int64_t weight;
};

// Output pixel i covers source interval [i*n, (i+1)*n) in units of 1/m source
// pixels; source pixel j spans [j*m, (j+1)*m). Weights of one output sum to n.
std::vector<std::vector<Tap>> area_taps(int n, int m) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(m));
  const std::int64_t nn = n, mm = m;
  for (std::int64_t i = 0; i < mm; ++i) {
    const std::int64_t lo = i * nn, hi = (i + 1) * nn;
    const std::int64_t j0 = lo / mm, j1 = (hi + mm - 1) / mm;
    for (std::int64_t j = j0; j < j1; ++j) {
      const std::int64_t w = std::min(hi, (j + 1) * mm) - std::max(lo, j * mm);
      if (w > 0) taps[static_cast<std::size_t>(i)].push_back({static_cast<int>(j), w});
    }
  }
  return taps;
}

std::uint8_t clamp_u8(double v) noexcept {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(round_half_up(v), 0, 255));
}

} // namespace

RgbImage resize_area(const RgbImage& src, int out_width, int out_height) {
  if (!src.valid()) throw InvalidInput("resize_area: invalid source image");
  if (out_width < 1 || out_height < 1) throw InvalidInput("resize_area: output size must be positive");
  if (out_width == src.width && out_height == src.height) return src;

  const auto xt = area_taps(src.width, out_width);
  const auto yt = area_taps(src.height, out_height);
  const std::int64_t denom = static_cast<std::int64_t>(src.width) * src.height;

  RgbImage out(out_width, out_height);
  std::vector<std::int64_t> row(static_cast<std::size_t>(src.width) * 3);
  for (int oy = 0; oy < out_height; ++oy) {
    std::fill(row.begin(), row.end(), 0);
    for (const Tap& ty : yt[static_cast<std::size_t>(oy)]) {
      const std::uint8_t* s = src.at(0, ty.src);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += ty.weight * s[k];
    }
    std::uint8_t* d = out.at(0, oy);
    for (int ox = 0; ox < out_width; ++ox) {
      std::int64_t acc[3] = {0, 0, 0};
      for (const Tap& tx : xt[static_cast<std::size_t>(ox)]) {
        const std::size_t base = static_cast<std::size_t>(tx.src) * 3;
        acc[0] += tx.weight * row[base];
        acc[1] += tx.weight * row[base + 1];
        acc[2] += tx.weight * row[base + 2];
      }
      for (int c = 0; c < 3; ++c) d[ox * 3 + c] = static_cast<std::uint8_t>((2 * acc[c] + denom) / (2 * denom));
    }
  }
  return out;
}

RgbImage downsample(const RgbImage& src, double factor) {
  if (!(factor > 0.0) || factor > 1.0) throw InvalidInput("downsample: factor must lie in (0, 1]");
  if (!src.valid()) throw InvalidInput("downsample: invalid source image");
  const int w = static_cast<int>(std::max<std::int64_t>(1, round_half_up(src.width * factor)));
  const int h = static_cast<int>(std::max<std::int64_t>(1, round_half_up(src.height * factor)));
  return resize_area(src, w, h);
}

std::array<int, 2> fitted_size(int width, int height) {
  if (width <= kCanvasWidth && height <= kCanvasHeight) return {width, height};
  const std::int64_t w = width, h = height;
  // Width-limited iff 1920/w <= 1080/h. Round-half-up of a rational p/q is
  // floor((2p + q) / 2q).
  if (kCanvasWidth * h <= kCanvasHeight * w) {
    const std::int64_t sh = (2 * h * kCanvasWidth + w) / (2 * w);
    return {kCanvasWidth, static_cast<int>(std::clamp<std::int64_t>(sh, 1, kCanvasHeight))};
  }
  const std::int64_t sw = (2 * w * kCanvasHeight + h) / (2 * h);
  return {static_cast<int>(std::clamp<std::int64_t>(sw, 1, kCanvasWidth)), kCanvasHeight};
}

namespace {

// Places `content` on a zero canvas at (ox, oy), then halves the canvas.
NormalizedImage place_and_halve(const RgbImage& content, int canvas_w, int canvas_h, int ox, int oy) {
  RgbImage canvas(canvas_w, canvas_h, 0);
  const std::size_t row_bytes = static_cast<std::size_t>(content.width) * 3;
  for (int y = 0; y < content.height; ++y)
    std::copy_n(content.at(0, y), row_bytes, canvas.at(ox, oy + y));

  NormalizedImage out;
  out.image = resize_area(canvas, canvas_w / 2, canvas_h / 2);
  const int x0 = ox / 2, y0 = oy / 2;
  const int x1 = (ox + content.width + 1) / 2, y1 = (oy + content.height + 1) / 2;
  out.content_rect = {x0, y0, x1 - x0, y1 - y0};
  return out;
}

} // namespace

NormalizedImage normalize_screenshot(const RgbImage& raw) {
  if (raw.width < 1 || raw.height < 1 || !raw.valid())
    throw InvalidInput("normalize_screenshot: screenshot must have positive dimensions");

  const auto [sw, sh] = fitted_size(raw.width, raw.height);
  const bool oversized = raw.width > kCanvasWidth || raw.height > kCanvasHeight;
  const RgbImage scaled = oversized ? resize_area(raw, sw, sh) : raw;

  NormalizedImage out =
      place_and_halve(scaled, kCanvasWidth, kCanvasHeight, (kCanvasWidth - sw) / 2, (kCanvasHeight - sh) / 2);
  out.scale_factor = oversized ? std::min(static_cast<double>(kCanvasWidth) / raw.width,
                                          static_cast<double>(kCanvasHeight) / raw.height)
                               : 1.0;
  return out;
}

NormalizedImage letterbox(const RgbImage& content, int canvas_width, int canvas_height) {
  if (!content.valid()) throw InvalidInput("letterbox: invalid content image");
  const std::int64_t w = content.width, h = content.height;
  int fw, fh;
  if (static_cast<std::int64_t>(canvas_width) * h <= static_cast<std::int64_t>(canvas_height) * w) {
    fw = canvas_width;
    fh = static_cast<int>(std::clamp<std::int64_t>((2 * h * canvas_width + w) / (2 * w), 1, canvas_height));
  } else {
    fh = canvas_height;
    fw = static_cast<int>(std::clamp<std::int64_t>((2 * w * canvas_height + h) / (2 * h), 1, canvas_width));
  }
  const RgbImage fitted = resize_area(content, fw, fh);
  RgbImage canvas(canvas_width, canvas_height, 0);
  const int ox = (canvas_width - fw) / 2, oy = (canvas_height - fh) / 2;
  for (int y = 0; y < fh; ++y)
    std::copy_n(fitted.at(0, y), static_cast<std::size_t>(fw) * 3, canvas.at(ox, oy + y));
  NormalizedImage out;
  out.image = std::move(canvas);
  out.content_rect = {ox, oy, fw, fh};
  out.scale_factor = static_cast<double>(fw) / content.width;
  return out;
}

std::string_view to_string(Transform t) noexcept {
  switch (t) {
  case Transform::inversion: return "inversion";
  case Transform::grayscale: return "grayscale";
  case Transform::margin_crop: return "margin-crop";
  case Transform::hue_shift: return "hue-shift";
  case Transform::brightness: return "brightness";
  case Transform::contrast: return "contrast";
  case Transform::saturation: return "saturation";
  case Transform::solarization: return "solarization";
  }
  return "unknown";
}

std::array<Transform, 2> select_transforms(const AugmentationSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> first(0, 7);
  std::uniform_int_distribution<int> second(0, 6);
  const int a = first(rng);
  int b = second(rng);
  if (b >= a) ++b;
  return {spec.transform_pool[static_cast<std::size_t>(a)], spec.transform_pool[static_cast<std::size_t>(b)]};
}

namespace {

template <typename F>
void for_each_content_pixel(NormalizedImage& img, F&& f) {
  const Rect& r = img.content_rect;
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) f(img.image.at(x, y));
}

double luminance(const std::uint8_t* p) noexcept { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

void rgb_to_hsv(const std::uint8_t* p, double& h, double& s, double& v) {
  const double r = p[0] / 255.0, g = p[1] / 255.0, b = p[2] / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
}

void hsv_to_rgb(double h, double s, double v, std::uint8_t* p) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s, x = c * (1 - std::fabs(std::fmod(h / 60.0, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0)) {
  case 0: r = c, g = x; break;
  case 1: r = x, g = c; break;
  case 2: g = c, b = x; break;
  case 3: g = x, b = c; break;
  case 4: r = x, b = c; break;
  default: r = c, b = x; break;
  }
  p[0] = clamp_u8((r + m) * 255.0);
  p[1] = clamp_u8((g + m) * 255.0);
  p[2] = clamp_u8((b + m) * 255.0);
}

NormalizedImage margin_crop(const NormalizedImage& img, std::mt19937_64& rng) {
  const Rect& r = img.content_rect;
  std::uniform_real_distribution<double> frac(0.0, 0.10);
  // floor keeps each edge's removal within 10%.
  const int left = static_cast<int>(std::floor(frac(rng) * r.w));
  const int right = static_cast<int>(std::floor(frac(rng) * r.w));
  const int top = static_cast<int>(std::floor(frac(rng) * r.h));
  const int bottom = static_cast<int>(std::floor(frac(rng) * r.h));
  const int cw = std::max(1, r.w - left - right), ch = std::max(1, r.h - top - bottom);
  RgbImage crop(cw, ch);
  for (int y = 0; y < ch; ++y)
    std::copy_n(img.image.at(r.x + left, r.y + top + y), static_cast<std::size_t>(cw) * 3, crop.at(0, y));
  NormalizedImage out = letterbox(crop, img.image.width, img.image.height);
  out.scale_factor = img.scale_factor * out.scale_factor;
  return out;
}

} // namespace

NormalizedImage apply_transform(const NormalizedImage& img, Transform t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NormalizedImage out = img;
  switch (t) {
  case Transform::inversion:
    for_each_content_pixel(out, [](std::uint8_t* p) {
      for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(255 - p[c]);
    });
    break;
  case Transform::grayscale:
    for_each_content_pixel(out, [](std::uint8_t* p) { p[0] = p[1] = p[2] = clamp_u8(luminance(p)); });
    break;
  case Transform::margin_crop:
    out = margin_crop(img, rng);
    break;
  case Transform::hue_shift: {
    const double shift = std::uniform_real_distribution<double>(-30.0, 30.0)(rng);
    for_each_content_pixel(out, [shift](std::uint8_t* p) {
      double h, s, v;
      rgb_to_hsv(p, h, s, v);
      hsv_to_rgb(h + shift, s, v, p);
    });
    break;
  }
  case Transform::brightness: {
    const double f = std::uniform_real_distribution<double>(0.75, 1.25)(rng);
    for_each_content_pixel(out, [f](std::uint8_t* p) {
      for (int c = 0; c < 3; ++c) p[c] = clamp_u8(p[c] * f);
    });
    break;
  }
  case Transform::contrast: {
    const double f = std::uniform_real_distribution<double>(0.75, 1.25)(rng);
    double sum = 0;
    std::size_t n = 0;
    for_each_content_pixel(out, [&](std::uint8_t* p) { sum += luminance(p), ++n; });
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    for_each_content_pixel(out, [f, mean](std::uint8_t* p) {
      for (int c = 0; c < 3; ++c) p[c] = clamp_u8((p[c] - mean) * f + mean);
    });
    break;
  }
  case Transform::saturation: {
    const double f = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for_each_content_pixel(out, [f](std::uint8_t* p) {
      const double g = luminance(p);
      for (int c = 0; c < 3; ++c) p[c] = clamp_u8(g + (p[c] - g) * f);
    });
    break;
  }
  case Transform::solarization: {
    const int threshold = std::uniform_int_distribution<int>(160, 224)(rng);
    for_each_content_pixel(out, [threshold](std::uint8_t* p) {
      for (int c = 0; c < 3; ++c)
        if (p[c] >= threshold) p[c] = static_cast<std::uint8_t>(255 - p[c]);
    });
    break;
  }
  }
  return out;
}

NormalizedImage augment_image(const NormalizedImage& img, const AugmentationSpec& spec) {
  const auto chosen = select_transforms(spec);
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  NormalizedImage out = apply_transform(img, chosen[0], rng());
  return apply_transform(out, chosen[1], rng());
}

} // namespace bmaguard
