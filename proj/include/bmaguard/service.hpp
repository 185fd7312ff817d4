// Runtime configuration, buffered verdict logging, and the loopback JSON
// service consumed by the review UI.

#ifndef BMAGUARD_SERVICE_HPP_
#define BMAGUARD_SERVICE_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bmaguard/pipeline.hpp"

namespace bmaguard {

inline constexpr int kSchemaVersion = 1;

struct Config {
  std::filesystem::path whitelist;
  std::filesystem::path model;
  std::filesystem::path vocab;
  std::chrono::milliseconds scan_interval{5000};
  int hamming_threshold = kSignificantChange;
  int whitelist_cutoff = kWhitelistCutoff;
  bool fold_subdomains = false;
  std::string bind_address = "127.0.0.1";
  int port = 8765;
  std::chrono::milliseconds log_flush_interval{120000};
  std::filesystem::path log_dir = "logs";
  bool retain_screenshots = false;
  /// External OCR command; "{}" in an argument is replaced by the strip PNG.
  std::vector<std::string> ocr_command;

  /// Throws InvalidInput for non-positive intervals, a threshold outside
  /// [0,64], a cutoff below 1 or a port outside 0..65535.
  void validate() const;
};

void to_json(nlohmann::json& j, const Config& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, Config& c);
Config load_config(const std::filesystem::path& path);

/// Ordered in-memory log lines, written out as one timestamped file per
/// flush. Internally synchronized.
class LogBuffer {
public:
  LogBuffer(std::filesystem::path dir, std::chrono::milliseconds interval, TimePoint start);

  void append(std::string line);
  /// Writes and clears the buffer when at least one interval has passed
  /// since the last flush. On I/O failure the lines are kept and a warning
  /// goes to `warn`. Returns the file written, if any.
  std::optional<std::filesystem::path> flush_if_due(TimePoint now);
  /// Unconditional flush, used at shutdown.
  std::optional<std::filesystem::path> flush(TimePoint now);

  std::size_t size() const;
  std::vector<std::string> lines() const;
  TimePoint last_flush() const;
  void set_warning_sink(std::function<void(const std::string&)> warn);

private:
  std::optional<std::filesystem::path> write_locked(TimePoint now);

  mutable std::mutex mutex_;
  std::filesystem::path dir_;
  std::chrono::milliseconds interval_;
  TimePoint last_flush_;
  std::vector<std::string> lines_;
  std::function<void(const std::string&)> warn_;
};

/// RFC 4648 with padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Strict: rejects characters outside the alphabet, bad padding and
/// lengths that are not a multiple of four. Throws InvalidInput.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::int64_t epoch_ms(TimePoint t);
TimePoint from_epoch_ms(std::int64_t ms);

nlohmann::json verdict_json(const Verdict& v, const std::optional<OverrideRecord>& override_record = std::nullopt);
nlohmann::json override_json(const OverrideRecord& r);
nlohmann::json latency_json(const LatencyRecorder& latency);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handlers over a Scanner, plus an HTTP front end bound to the
/// configured address (loopback by default).
class Service {
public:
  Service(const Config& config, Scanner& scanner, LogBuffer& log, const ClockSource& clock);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// {domain, png_base64, tab_id?, ocr_text?}. A supplied ocr_text stands
  /// in for the OCR engine on that scan.
  HttpReply scan(std::string_view body);
  /// `since` is epoch milliseconds.
  HttpReply verdicts(std::optional<std::string_view> since);
  /// {verdict_id, choice}.
  HttpReply override_verdict(std::string_view body);
  HttpReply metrics();
  HttpReply screenshot(std::string_view verdict_id);

  /// Binds and serves until stop(); returns false if binding fails. Port 0
  /// picks a free port, reported by port().
  bool listen();
  /// Binds only; serve with listen_after_bind() on another thread.
  bool bind();
  bool listen_after_bind();
  void stop();
  int port() const noexcept { return port_; }

private:
  struct Http;

  Config config_;
  Scanner& scanner_;
  LogBuffer& log_;
  const ClockSource& clock_;
  std::unique_ptr<Http> http_;
  int port_ = 0;
};

} // namespace bmaguard

#endif
