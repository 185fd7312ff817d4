// Four-strip OCR over normalized screenshots with a pluggable engine.

#ifndef BMAGUARD_OCR_HPP_
#define BMAGUARD_OCR_HPP_

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "bmaguard/imaging.hpp"

namespace bmaguard {

inline constexpr int kOcrStrips = 4;
inline constexpr int kOcrWorkers = 4;

/// An OCR backend. `recognize` must be deterministic for a given input.
/// Engines that cannot take concurrent calls return false from
/// `concurrent()`; extract_text then serializes them.
class OcrEngine {
public:
  virtual ~OcrEngine() = default;
  virtual std::string recognize(const RgbImage& strip, std::size_t strip_index) = 0;
  virtual std::string engine_name() const = 0;
  virtual bool concurrent() const { return false; }
};

struct OcrText {
  std::string text;
  std::vector<std::string> per_slice;
  std::chrono::duration<double, std::milli> extraction_ms{0};
};

/// Horizontal strips that partition the image; the first height % rows
/// strips are one pixel taller.
std::vector<RgbImage> slice_image(const RgbImage& img, int rows = kOcrStrips);
inline std::vector<RgbImage> slice_image(const NormalizedImage& img, int rows = kOcrStrips) {
  return slice_image(img.image, rows);
}

/// Runs the engine on each strip (up to four at a time) and joins the
/// results with '\n' in top-to-bottom order. Any strip failure raises
/// EngineError for that strip and discards the rest.
OcrText extract_text(const RgbImage& img, OcrEngine& engine, int rows = kOcrStrips);
inline OcrText extract_text(const NormalizedImage& img, OcrEngine& engine, int rows = kOcrStrips) {
  return extract_text(img.image, engine, rows);
}

/// Test double: answers each strip with a scripted callback.
class ScriptedOcrEngine : public OcrEngine {
public:
  using Script = std::function<std::string(const RgbImage&, std::size_t)>;
  explicit ScriptedOcrEngine(Script script, bool concurrent = true)
      : script_(std::move(script)), concurrent_(concurrent) {}

  std::string recognize(const RgbImage& strip, std::size_t strip_index) override {
    return script_(strip, strip_index);
  }
  std::string engine_name() const override { return "scripted"; }
  bool concurrent() const override { return concurrent_; }

private:
  Script script_;
  bool concurrent_;
};

/// Returns a fixed text for the top strip and nothing for the others. Used
/// when the page text is already known (corpus sidecar files).
class FixedTextOcrEngine : public OcrEngine {
public:
  explicit FixedTextOcrEngine(std::string text) : text_(std::move(text)) {}
  std::string recognize(const RgbImage&, std::size_t strip_index) override {
    return strip_index == 0 ? text_ : std::string{};
  }
  std::string engine_name() const override { return "fixed-text"; }
  bool concurrent() const override { return true; }

private:
  std::string text_;
};

/// Spawns an OCR executable once per strip. The strip is written to a
/// temporary PNG; `args` may contain "{}" for the path (appended when
/// absent). Plain-text stdout is the result. Example for tesseract:
/// ExternalOcrEngine("tesseract", {"{}", "stdout"}).
class ExternalOcrEngine : public OcrEngine {
public:
  ExternalOcrEngine(std::string executable, std::vector<std::string> args = {},
                    std::chrono::milliseconds timeout = std::chrono::seconds(10));

  std::string recognize(const RgbImage& strip, std::size_t strip_index) override;
  std::string engine_name() const override { return executable_; }
  bool concurrent() const override { return true; }

private:
  std::string executable_;
  std::vector<std::string> args_;
  std::chrono::milliseconds timeout_;
};

} // namespace bmaguard

#endif
