#include "bmaguard/service.hpp"

#include <httplib.h>

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bmaguard/error.hpp"
#include "bmaguard/png_io.hpp"

namespace bmaguard {

void Config::validate() const {
  if (scan_interval.count() <= 0) throw InvalidInput("scan_interval must be positive");
  if (log_flush_interval.count() <= 0) throw InvalidInput("log_flush_interval must be positive");
  if (hamming_threshold < 0 || hamming_threshold > 64) throw InvalidInput("hamming_threshold must be in [0, 64]");
  if (whitelist_cutoff < 1) throw InvalidInput("whitelist_cutoff must be positive");
  if (port < 0 || port > 65535) throw InvalidInput("port must be in 0..65535");
  if (bind_address.empty()) throw InvalidInput("bind_address must not be empty");
}

void to_json(nlohmann::json& j, const Config& c) {
  j = {{"whitelist", c.whitelist.string()},
       {"model", c.model.string()},
       {"vocab", c.vocab.string()},
       {"scan_interval_ms", c.scan_interval.count()},
       {"hamming_threshold", c.hamming_threshold},
       {"whitelist_cutoff", c.whitelist_cutoff},
       {"fold_subdomains", c.fold_subdomains},
       {"bind_address", c.bind_address},
       {"port", c.port},
       {"log_flush_interval_ms", c.log_flush_interval.count()},
       {"log_dir", c.log_dir.string()},
       {"retain_screenshots", c.retain_screenshots},
       {"ocr_command", c.ocr_command}};
}

void from_json(const nlohmann::json& j, Config& c) {
  c.whitelist = j.value("whitelist", c.whitelist.string());
  c.model = j.value("model", c.model.string());
  c.vocab = j.value("vocab", c.vocab.string());
  c.scan_interval = std::chrono::milliseconds(j.value("scan_interval_ms", c.scan_interval.count()));
  c.hamming_threshold = j.value("hamming_threshold", c.hamming_threshold);
  c.whitelist_cutoff = j.value("whitelist_cutoff", c.whitelist_cutoff);
  c.fold_subdomains = j.value("fold_subdomains", c.fold_subdomains);
  c.bind_address = j.value("bind_address", c.bind_address);
  c.port = j.value("port", c.port);
  c.log_flush_interval = std::chrono::milliseconds(j.value("log_flush_interval_ms", c.log_flush_interval.count()));
  c.log_dir = j.value("log_dir", c.log_dir.string());
  c.retain_screenshots = j.value("retain_screenshots", c.retain_screenshots);
  c.ocr_command = j.value("ocr_command", c.ocr_command);
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Config c;
  try {
    c = nlohmann::json::parse(in).get<Config>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  c.validate();
  return c;
}

LogBuffer::LogBuffer(std::filesystem::path dir, std::chrono::milliseconds interval, TimePoint start)
    : dir_(std::move(dir)), interval_(interval), last_flush_(start) {
  if (interval.count() <= 0) throw InvalidInput("log flush interval must be positive");
}

void LogBuffer::append(std::string line) {
  std::lock_guard lock(mutex_);
  lines_.push_back(std::move(line));
}

std::optional<std::filesystem::path> LogBuffer::flush_if_due(TimePoint now) {
  std::lock_guard lock(mutex_);
  if (now - last_flush_ < interval_) return std::nullopt;
  return write_locked(now);
}

std::optional<std::filesystem::path> LogBuffer::flush(TimePoint now) {
  std::lock_guard lock(mutex_);
  return write_locked(now);
}

std::optional<std::filesystem::path> LogBuffer::write_locked(TimePoint now) {
  if (lines_.empty()) {
    last_flush_ = now;
    return std::nullopt;
  }
  const auto path = dir_ / ("bmaguard-" + iso8601_basic(now) + ".log");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  std::ofstream out(path, std::ios::app);
  for (const auto& l : lines_) out << l << '\n';
  out.flush();
  if (!out) {
    if (warn_) warn_("log flush to " + path.string() + " failed; keeping " + std::to_string(lines_.size()) + " lines");
    return std::nullopt;
  }
  lines_.clear();
  last_flush_ = now;
  return path;
}

std::size_t LogBuffer::size() const {
  std::lock_guard lock(mutex_);
  return lines_.size();
}

std::vector<std::string> LogBuffer::lines() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

TimePoint LogBuffer::last_flush() const {
  std::lock_guard lock(mutex_);
  return last_flush_;
}

void LogBuffer::set_warning_sink(std::function<void(const std::string&)> warn) {
  std::lock_guard lock(mutex_);
  warn_ = std::move(warn);
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

} // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s : {18, 12, 6, 0}) out += kAlphabet[(v >> s) & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw InvalidInput("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      if (c == '=' && last && k >= 2) {
        ++pad;
        v[static_cast<std::size_t>(k)] = 0;
        continue;
      }
      if (pad) throw InvalidInput("base64 padding in the middle of a quantum");
      v[static_cast<std::size_t>(k)] = b64_value(c);
      if (v[static_cast<std::size_t>(k)] < 0) throw InvalidInput("invalid base64 character");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    if ((pad == 1 && (n & 0xff)) || (pad == 2 && (n & 0xffff))) throw InvalidInput("non-canonical base64 padding");
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

std::int64_t epoch_ms(TimePoint t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

TimePoint from_epoch_ms(std::int64_t ms) {
  return TimePoint(std::chrono::duration_cast<Clock::duration>(std::chrono::milliseconds(ms)));
}

nlohmann::json verdict_json(const Verdict& v, const std::optional<OverrideRecord>& override_record) {
  auto stage = [](const std::optional<double>& ms) { return ms ? nlohmann::json(*ms) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"id", v.id},
                      {"tab_id", v.tab_id},
                      {"domain", v.domain},
                      {"label", to_string(v.label)},
                      {"probability", v.probability},
                      {"source", to_string(v.source)},
                      {"case", v.decision_case},
                      {"created_at", iso8601(v.created_at)},
                      {"created_at_ms", epoch_ms(v.created_at)},
                      {"hash", v.hash ? nlohmann::json(to_hex(*v.hash)) : nlohmann::json(nullptr)},
                      {"latency_ms",
                       {{"normalize", stage(v.latency.normalize_ms)},
                        {"phash", stage(v.latency.phash_ms)},
                        {"ocr", stage(v.latency.ocr_ms)},
                        {"model", stage(v.latency.model_ms)},
                        {"total", v.latency.total_ms()}}},
                      {"override", override_record ? nlohmann::json(to_string(override_record->choice))
                                                   : nlohmann::json(nullptr)}};
  return j;
}

nlohmann::json override_json(const OverrideRecord& r) {
  return {{"schema_version", kSchemaVersion}, {"verdict_id", r.verdict_id}, {"tab_id", r.tab_id},
          {"choice", to_string(r.choice)},     {"at", iso8601(r.at)},        {"at_ms", epoch_ms(r.at)}};
}

nlohmann::json latency_json(const LatencyRecorder& latency) {
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, s] : latency.summary())
    stages[name] = {{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"samples", s.samples}};
  return stages;
}

namespace {

HttpReply json_reply(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }

HttpReply error_reply(int status, const std::string& message) {
  return json_reply(status, {{"schema_version", kSchemaVersion}, {"error", message}});
}

} // namespace

struct Service::Http {
  httplib::Server server;
};

Service::Service(const Config& config, Scanner& scanner, LogBuffer& log, const ClockSource& clock)
    : config_(config), scanner_(scanner), log_(log), clock_(clock), http_(std::make_unique<Http>()) {
  config_.validate();
  scanner_.set_log_sink([this](const std::string& line) { log_.append(line); });

  auto& s = http_->server;
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  s.Post("/scan", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, scan(req.body)); });
  s.Get("/verdicts", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> since;
    if (req.has_param("since")) since = req.get_param_value("since");
    send(res, verdicts(since ? std::optional<std::string_view>(*since) : std::nullopt));
  });
  s.Post("/override", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, override_verdict(req.body));
  });
  s.Get("/metrics", [this, send](const httplib::Request&, httplib::Response& res) { send(res, metrics()); });
  s.Get(R"(/screenshot/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, screenshot(req.matches[1].str()));
  });
  s.set_post_routing_handler([this](const httplib::Request&, httplib::Response&) { log_.flush_if_due(clock_.now()); });
}

Service::~Service() { stop(); }

HttpReply Service::scan(std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_reply(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("domain") || !req["domain"].is_string() || !req.contains("png_base64") ||
      !req["png_base64"].is_string())
    return error_reply(400, "expected {domain: string, png_base64: string}");
  const std::string tab_id = req.value("tab_id", std::string("default"));
  RawScreenshot shot;
  shot.source_domain = req["domain"].get<std::string>();
  shot.captured_at = clock_.now();
  if (shot.source_domain.empty()) return error_reply(400, "domain must not be empty");
  try {
    shot.image = decode_png(base64_decode(req["png_base64"].get<std::string>()));
  } catch (const Error& e) {
    return error_reply(400, std::string("png_base64: ") + e.what());
  }
  std::optional<FixedTextOcrEngine> fixed;
  if (req.contains("ocr_text")) {
    if (!req["ocr_text"].is_string()) return error_reply(400, "ocr_text must be a string");
    fixed.emplace(req["ocr_text"].get<std::string>());
  }
  try {
    const Verdict v = scanner_.scan(tab_id, shot, fixed ? &*fixed : nullptr);
    return json_reply(200, verdict_json(v));
  } catch (const InvalidInput& e) {
    return error_reply(409, e.what());
  } catch (const EngineError& e) {
    return error_reply(502, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

HttpReply Service::verdicts(std::optional<std::string_view> since) {
  std::int64_t since_ms = 0;
  if (since) {
    const auto [ptr, ec] = std::from_chars(since->data(), since->data() + since->size(), since_ms);
    if (ec != std::errc{} || ptr != since->data() + since->size())
      return error_reply(400, "since must be epoch milliseconds");
  }
  const auto overrides = scanner_.overrides();
  nlohmann::json list = nlohmann::json::array();
  for (const auto& v : scanner_.verdicts_since(from_epoch_ms(since_ms))) {
    std::optional<OverrideRecord> last;
    for (const auto& o : overrides)
      if (o.verdict_id == v.id) last = o;
    auto j = verdict_json(v, last);
    j["tab_paused"] = scanner_.paused(v.tab_id);
    if (config_.retain_screenshots && scanner_.screenshot(v.id)) j["screenshot_url"] = "/screenshot/" + std::to_string(v.id);
    list.push_back(std::move(j));
  }
  return json_reply(200, {{"schema_version", kSchemaVersion}, {"now_ms", epoch_ms(clock_.now())}, {"verdicts", list}});
}

HttpReply Service::override_verdict(std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_reply(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("verdict_id") || !req["verdict_id"].is_number_unsigned() ||
      !req.contains("choice") || !req["choice"].is_string())
    return error_reply(400, "expected {verdict_id: integer, choice: string}");
  OverrideChoice choice;
  try {
    choice = parse_override_choice(req["choice"].get<std::string>());
  } catch (const InvalidInput& e) {
    return error_reply(400, e.what());
  }
  try {
    const auto r = scanner_.record_override(req["verdict_id"].get<std::uint64_t>(), choice);
    log_.append(iso8601(r.at) + "\t" + r.tab_id + "\toverride\t" + std::to_string(r.verdict_id) + "\t" +
                std::string(to_string(r.choice)));
    return json_reply(200, override_json(r));
  } catch (const NotFound& e) {
    return error_reply(404, e.what());
  }
}

HttpReply Service::metrics() {
  return json_reply(200, {{"schema_version", kSchemaVersion},
                          {"scans", scanner_.verdicts_since(TimePoint::min()).size()},
                          {"inferences", scanner_.inference_count()},
                          {"stages", latency_json(scanner_.latency())}});
}

HttpReply Service::screenshot(std::string_view verdict_id) {
  std::uint64_t id = 0;
  const auto [ptr, ec] = std::from_chars(verdict_id.data(), verdict_id.data() + verdict_id.size(), id);
  if (ec != std::errc{} || ptr != verdict_id.data() + verdict_id.size()) return error_reply(400, "bad verdict id");
  if (!config_.retain_screenshots) return error_reply(404, "screenshot retention is off");
  const auto img = scanner_.screenshot(id);
  if (!img) return error_reply(404, "no screenshot for verdict " + std::string(verdict_id));
  const auto png = encode_png(img->image);
  return {200, "image/png", std::string(png.begin(), png.end())};
}

bool Service::bind() {
  if (config_.port == 0) {
    port_ = http_->server.bind_to_any_port(config_.bind_address);
    return port_ > 0;
  }
  port_ = config_.port;
  return http_->server.bind_to_port(config_.bind_address, config_.port);
}

bool Service::listen_after_bind() { return http_->server.listen_after_bind(); }

bool Service::listen() { return bind() && listen_after_bind(); }

void Service::stop() {
  if (http_) http_->server.stop();
  log_.flush(clock_.now());
}

} // namespace bmaguard
