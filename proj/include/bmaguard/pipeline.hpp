// The defend loop: whitelist short-circuit, perceptual-hash verdict reuse,
// OCR + inference, per-tab pause state, user overrides and the scan timer.

#ifndef BMAGUARD_PIPELINE_HPP_
#define BMAGUARD_PIPELINE_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bmaguard/imaging.hpp"
#include "bmaguard/model/classifier.hpp"
#include "bmaguard/model/vocab.hpp"
#include "bmaguard/ocr.hpp"
#include "bmaguard/phash.hpp"

namespace bmaguard {

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;
using Millis = std::chrono::duration<double, std::milli>;

inline constexpr int kWhitelistCutoff = 100000;

class WhitelistIndex {
public:
  WhitelistIndex() = default;
  explicit WhitelistIndex(int cutoff, bool fold_subdomains = false)
      : cutoff_(cutoff), fold_subdomains_(fold_subdomains) {}

  /// Ranks above the cutoff are dropped; duplicates keep the best rank.
  void insert(std::string domain, int rank);
  /// Exact match on the lowercased domain (trailing dot removed). With
  /// subdomain folding, parent domains are tried down to two labels.
  std::optional<int> rank(std::string_view domain) const;
  bool contains(std::string_view domain) const { return rank(domain).has_value(); }

  std::size_t size() const noexcept { return ranks_.size(); }
  int cutoff() const noexcept { return cutoff_; }
  bool fold_subdomains() const noexcept { return fold_subdomains_; }
  void set_fold_subdomains(bool on) noexcept { fold_subdomains_ = on; }

private:
  std::unordered_map<std::string, int> ranks_;
  int cutoff_ = kWhitelistCutoff;
  bool fold_subdomains_ = false;
};

/// "rank,domain" lines (Tranco format). Malformed lines raise ParseError.
WhitelistIndex parse_whitelist(std::string_view content, int cutoff = kWhitelistCutoff);
WhitelistIndex load_whitelist(const std::filesystem::path& path, int cutoff = kWhitelistCutoff);

enum class VerdictLabel { benign, malicious };
enum class VerdictSource { whitelist, inference, reused };
enum class OverrideChoice { return_to_safety, ignore_warning, not_malicious };

std::string_view to_string(VerdictLabel v) noexcept;
std::string_view to_string(VerdictSource v) noexcept;
std::string_view to_string(OverrideChoice c) noexcept;
/// Throws InvalidInput for anything but the three choice names.
OverrideChoice parse_override_choice(std::string_view s);

/// Stage timings of one cycle; absent stages did not run.
struct StageLatency {
  std::optional<double> normalize_ms;
  std::optional<double> phash_ms;
  std::optional<double> ocr_ms;
  std::optional<double> model_ms;

  double total_ms() const noexcept {
    return normalize_ms.value_or(0) + phash_ms.value_or(0) + ocr_ms.value_or(0) + model_ms.value_or(0);
  }
};

struct Verdict {
  std::uint64_t id = 0;
  std::string tab_id;
  std::string domain;
  VerdictLabel label = VerdictLabel::benign;
  double probability = 0;
  VerdictSource source = VerdictSource::inference;
  int decision_case = 2;
  StageLatency latency;
  TimePoint created_at{};
  std::optional<PerceptualHash> hash;
  std::optional<std::string> ocr_text;
};

struct TabState {
  std::string tab_id;
  std::optional<PerceptualHash> last_hash;
  std::optional<Verdict> last_verdict;
  std::optional<TimePoint> last_scan_at;
  /// Warning dialog open; the tab is not scanned.
  bool paused = false;
};

struct OverrideRecord {
  std::uint64_t verdict_id = 0;
  std::string tab_id;
  OverrideChoice choice = OverrideChoice::ignore_warning;
  TimePoint at{};
};

/// 1 whitelisted, 2 no previous hash, 3 distance >= threshold, 4 reuse.
int decide(const TabState& state, bool whitelisted, const std::optional<PerceptualHash>& new_hash,
           int threshold = kSignificantChange);

/// Probability > 0.5.
VerdictLabel label_for(double probability) noexcept;

/// "YYYY-MM-DDTHH:MM:SS.mmmZ".
std::string iso8601(TimePoint t);
/// "YYYYMMDDTHHMMSSZ", for file names.
std::string iso8601_basic(TimePoint t);

/// Timestamp, tab, domain, case, label, probability, then normalize, phash,
/// ocr and model milliseconds ("-" when a stage did not run), tab-separated.
std::string format_log_line(const Verdict& v);

class ClockSource {
public:
  virtual ~ClockSource() = default;
  virtual TimePoint now() const = 0;
};

class SystemClockSource : public ClockSource {
public:
  TimePoint now() const override { return Clock::now(); }
};

/// Manually advanced time for tests and simulations.
class VirtualClock : public ClockSource {
public:
  explicit VirtualClock(TimePoint start = TimePoint{}) : now_(start) {}
  TimePoint now() const override {
    std::lock_guard lock(mutex_);
    return now_;
  }
  void advance(Clock::duration d) {
    std::lock_guard lock(mutex_);
    now_ += d;
  }
  void set(TimePoint t) {
    std::lock_guard lock(mutex_);
    now_ = t;
  }

private:
  mutable std::mutex mutex_;
  TimePoint now_;
};

/// Malicious-class probability of a normalized screenshot and its text.
class Detector {
public:
  virtual ~Detector() = default;
  virtual double probability(const NormalizedImage& img, std::string_view text) = 0;
};

/// Wraps a frozen classifier snapshot.
template <typename S>
class ModelDetector : public Detector {
public:
  ModelDetector(std::shared_ptr<const DualBranchClassifier<S>> model, std::shared_ptr<const Vocabulary> vocab)
      : model_(std::move(model)), vocab_(std::move(vocab)) {}
  double probability(const NormalizedImage& img, std::string_view text) override {
    return predict_probability(*model_, *vocab_, img, text);
  }

private:
  std::shared_ptr<const DualBranchClassifier<S>> model_;
  std::shared_ptr<const Vocabulary> vocab_;
};

/// Per-stage latency samples in milliseconds.
class LatencyRecorder {
public:
  void record(const StageLatency& l);
  struct Summary {
    std::size_t count = 0;
    double p50 = 0;
    double p95 = 0;
    std::vector<double> samples;
  };
  /// Keys: normalize, phash, ocr, model, total.
  std::map<std::string, Summary> summary() const;

private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<double>> samples_;
};

struct ScannerOptions {
  int hamming_threshold = kSignificantChange;
  /// Keep the normalized canvas of each verdict.
  bool retain_screenshots = false;
};

/// Runs scan cycles and owns tab state, the verdict store and overrides.
/// Cycles for different tabs may run concurrently; a second cycle on a tab
/// that is still scanning raises InvalidInput.
class Scanner {
public:
  Scanner(const WhitelistIndex& whitelist, OcrEngine& ocr, Detector& detector, const ClockSource& clock,
          ScannerOptions options = {});

  /// One cycle. Throws InvalidInput for a paused tab. OCR failures leave the
  /// tab state unchanged, are reported through the log sink, and rethrow.
  /// `ocr` replaces the configured engine for this cycle when non-null.
  Verdict scan(const std::string& tab_id, const RawScreenshot& shot, OcrEngine* ocr = nullptr);

  /// Clears the pause of the verdict's tab. Unknown ids raise NotFound.
  OverrideRecord record_override(std::uint64_t verdict_id, OverrideChoice choice);

  TabState tab(const std::string& tab_id) const;
  bool paused(const std::string& tab_id) const;
  std::optional<Verdict> verdict(std::uint64_t id) const;
  /// Verdicts created at or after `since`, in id order.
  std::vector<Verdict> verdicts_since(TimePoint since) const;
  std::vector<OverrideRecord> overrides() const;
  std::optional<NormalizedImage> screenshot(std::uint64_t verdict_id) const;
  std::size_t inference_count() const;
  const LatencyRecorder& latency() const noexcept { return latency_; }

  /// Called once per verdict with its log line, and with an error line for
  /// aborted cycles.
  void set_log_sink(std::function<void(const std::string&)> sink);

private:
  const WhitelistIndex& whitelist_;
  OcrEngine& ocr_;
  Detector& detector_;
  const ClockSource& clock_;
  ScannerOptions options_;

  mutable std::mutex mutex_;
  std::unordered_map<std::string, TabState> tabs_;
  std::unordered_map<std::string, bool> busy_;
  std::vector<Verdict> verdicts_;
  std::vector<OverrideRecord> overrides_;
  std::unordered_map<std::uint64_t, NormalizedImage> screenshots_;
  std::uint64_t next_id_ = 1;
  std::size_t inferences_ = 0;
  LatencyRecorder latency_;
  std::function<void(const std::string&)> sink_;
};

struct ScanEvent {
  std::string tab_id;
  TimePoint start;
  TimePoint finish;
};

/// Fixed-interval scan timer. A tab's first cycle is due one interval after
/// it is added; the next is due one interval after the previous start, or
/// when it finishes if that is later, so cycles never overlap. Paused tabs
/// skip their slot.
class ScanScheduler {
public:
  using Cycle = std::function<Clock::duration(const std::string& tab_id, TimePoint start)>;
  using PausedFn = std::function<bool(const std::string& tab_id)>;

  explicit ScanScheduler(Clock::duration interval = std::chrono::seconds(5));

  void add_tab(const std::string& tab_id, TimePoint at);
  void remove_tab(const std::string& tab_id);

  /// Runs every cycle due by `until`, in start order, advancing `clock` to
  /// each start and finish. Returns the cycles that also finished by `until`.
  std::vector<ScanEvent> run_until(VirtualClock& clock, TimePoint until, const Cycle& cycle,
                                   const PausedFn& paused = nullptr);

  Clock::duration interval() const noexcept { return interval_; }

private:
  Clock::duration interval_;
  std::map<std::string, TimePoint> next_due_;
};

} // namespace bmaguard

#endif
