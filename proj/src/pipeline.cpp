#include "bmaguard/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "bmaguard/error.hpp"
#include "bmaguard/metrics.hpp"

namespace bmaguard {

namespace {

std::string normalize_domain(std::string_view d) {
  std::string s(d);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  while (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return Millis(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

void WhitelistIndex::insert(std::string domain, int rank) {
  if (rank < 1) throw InvalidInput("whitelist ranks start at 1");
  if (rank > cutoff_) return;
  domain = normalize_domain(domain);
  auto [it, added] = ranks_.emplace(std::move(domain), rank);
  if (!added) it->second = std::min(it->second, rank);
}

std::optional<int> WhitelistIndex::rank(std::string_view domain) const {
  std::string d = normalize_domain(domain);
  while (true) {
    if (const auto it = ranks_.find(d); it != ranks_.end()) return it->second;
    if (!fold_subdomains_) return std::nullopt;
    const auto dot = d.find('.');
    if (dot == std::string::npos || d.find('.', dot + 1) == std::string::npos) return std::nullopt;
    d.erase(0, dot + 1);
  }
}

WhitelistIndex parse_whitelist(std::string_view content, int cutoff) {
  WhitelistIndex idx(cutoff);
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ParseError("expected rank,domain", line_no);
    const std::string_view rank_s = trim(line.substr(0, comma));
    const std::string_view domain = trim(line.substr(comma + 1));
    int rank = 0;
    const auto [ptr, ec] = std::from_chars(rank_s.data(), rank_s.data() + rank_s.size(), rank);
    if (ec != std::errc{} || ptr != rank_s.data() + rank_s.size() || rank < 1)
      throw ParseError("bad rank '" + std::string(rank_s) + "'", line_no);
    if (domain.empty() || domain.find_first_of(" \t,") != std::string_view::npos)
      throw ParseError("bad domain '" + std::string(domain) + "'", line_no);
    idx.insert(std::string(domain), rank);
  }
  return idx;
}

WhitelistIndex load_whitelist(const std::filesystem::path& path, int cutoff) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_whitelist(ss.str(), cutoff);
}

std::string_view to_string(VerdictLabel v) noexcept { return v == VerdictLabel::malicious ? "malicious" : "benign"; }

std::string_view to_string(VerdictSource v) noexcept {
  switch (v) {
  case VerdictSource::whitelist: return "whitelist";
  case VerdictSource::inference: return "inference";
  case VerdictSource::reused: return "reused";
  }
  return "?";
}

std::string_view to_string(OverrideChoice c) noexcept {
  switch (c) {
  case OverrideChoice::return_to_safety: return "return_to_safety";
  case OverrideChoice::ignore_warning: return "ignore_warning";
  case OverrideChoice::not_malicious: return "not_malicious";
  }
  return "?";
}

OverrideChoice parse_override_choice(std::string_view s) {
  for (auto c : {OverrideChoice::return_to_safety, OverrideChoice::ignore_warning, OverrideChoice::not_malicious})
    if (s == to_string(c)) return c;
  throw InvalidInput("choice must be return_to_safety, ignore_warning or not_malicious");
}

int decide(const TabState& state, bool whitelisted, const std::optional<PerceptualHash>& new_hash, int threshold) {
  if (whitelisted) return 1;
  if (!state.last_hash || !state.last_verdict) return 2;
  if (!new_hash) throw InvalidInput("decide: a hash is required for non-whitelisted domains");
  return is_significant_change(hamming_distance(*state.last_hash, *new_hash), threshold) ? 3 : 4;
}

VerdictLabel label_for(double probability) noexcept {
  return probability > 0.5 ? VerdictLabel::malicious : VerdictLabel::benign;
}

std::string iso8601(TimePoint t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000 - (ms % 1000 < 0));
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(((ms % 1000) + 1000) % 1000));
  return buf;
}

std::string iso8601_basic(TimePoint t) {
  const std::time_t secs = Clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string format_log_line(const Verdict& v) {
  auto stage = [](const std::optional<double>& ms) {
    if (!ms) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *ms);
    return std::string(buf);
  };
  char prob[32];
  std::snprintf(prob, sizeof prob, "%.6f", v.probability);
  std::string line = iso8601(v.created_at);
  for (const std::string& f : {v.tab_id, v.domain, std::to_string(v.decision_case), std::string(to_string(v.label)),
                               std::string(prob), stage(v.latency.normalize_ms), stage(v.latency.phash_ms),
                               stage(v.latency.ocr_ms), stage(v.latency.model_ms)})
    line += "\t" + f;
  return line;
}

void LatencyRecorder::record(const StageLatency& l) {
  std::lock_guard lock(mutex_);
  if (l.normalize_ms) samples_["normalize"].push_back(*l.normalize_ms);
  if (l.phash_ms) samples_["phash"].push_back(*l.phash_ms);
  if (l.ocr_ms) samples_["ocr"].push_back(*l.ocr_ms);
  if (l.model_ms) samples_["model"].push_back(*l.model_ms);
  samples_["total"].push_back(l.total_ms());
}

std::map<std::string, LatencyRecorder::Summary> LatencyRecorder::summary() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, Summary> out;
  for (const auto& [stage, v] : samples_) {
    Summary s;
    s.count = v.size();
    s.samples = v;
    if (!v.empty()) {
      s.p50 = percentile(v, 0.5);
      s.p95 = percentile(v, 0.95);
    }
    out.emplace(stage, std::move(s));
  }
  return out;
}

Scanner::Scanner(const WhitelistIndex& whitelist, OcrEngine& ocr, Detector& detector, const ClockSource& clock,
                 ScannerOptions options)
    : whitelist_(whitelist), ocr_(ocr), detector_(detector), clock_(clock), options_(options) {
  if (options_.hamming_threshold < 0 || options_.hamming_threshold > 64)
    throw InvalidInput("hamming threshold must be in [0, 64]");
}

void Scanner::set_log_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(mutex_);
  sink_ = std::move(sink);
}

Verdict Scanner::scan(const std::string& tab_id, const RawScreenshot& shot, OcrEngine* ocr) {
  TabState state;
  {
    std::lock_guard lock(mutex_);
    auto& t = tabs_[tab_id];
    t.tab_id = tab_id;
    if (t.paused) throw InvalidInput("tab " + tab_id + " is paused while its warning is open");
    if (busy_[tab_id]) throw InvalidInput("tab " + tab_id + " already has a scan in progress");
    busy_[tab_id] = true;
    state = t;
  }
  struct BusyGuard {
    Scanner* s;
    const std::string& id;
    ~BusyGuard() {
      std::lock_guard lock(s->mutex_);
      s->busy_[id] = false;
    }
  } guard{this, tab_id};

  Verdict v;
  v.tab_id = tab_id;
  v.domain = shot.source_domain;
  NormalizedImage norm;
  std::optional<PerceptualHash> hash;
  const bool whitelisted = whitelist_.contains(shot.source_domain);
  if (!whitelisted) {
    auto t0 = std::chrono::steady_clock::now();
    norm = normalize_screenshot(shot);
    v.latency.normalize_ms = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    hash = compute_phash(norm);
    v.latency.phash_ms = ms_since(t0);
  }
  v.decision_case = decide(state, whitelisted, hash, options_.hamming_threshold);
  v.hash = hash;

  switch (v.decision_case) {
  case 1:
    v.source = VerdictSource::whitelist;
    v.label = VerdictLabel::benign;
    v.probability = 0;
    break;
  case 4:
    v.source = VerdictSource::reused;
    v.label = state.last_verdict->label;
    v.probability = state.last_verdict->probability;
    v.ocr_text = state.last_verdict->ocr_text;
    v.hash = state.last_hash;
    break;
  default: {
    OcrText text;
    try {
      text = extract_text(norm, ocr ? *ocr : ocr_);
    } catch (const std::exception& e) {
      std::function<void(const std::string&)> sink;
      {
        std::lock_guard lock(mutex_);
        sink = sink_;
      }
      if (sink)
        sink(iso8601(clock_.now()) + "\t" + tab_id + "\t" + shot.source_domain + "\terror\t" + e.what());
      throw;
    }
    v.latency.ocr_ms = text.extraction_ms.count();
    const auto t0 = std::chrono::steady_clock::now();
    v.probability = detector_.probability(norm, text.text);
    v.latency.model_ms = ms_since(t0);
    v.label = label_for(v.probability);
    v.source = VerdictSource::inference;
    v.ocr_text = std::move(text.text);
  }
  }

  std::function<void(const std::string&)> sink;
  {
    std::lock_guard lock(mutex_);
    v.id = next_id_++;
    v.created_at = clock_.now();
    auto& t = tabs_[tab_id];
    t.last_scan_at = v.created_at;
    if (v.source == VerdictSource::inference) {
      ++inferences_;
      t.last_hash = v.hash;
      t.last_verdict = v;
      if (v.label == VerdictLabel::malicious) t.paused = true;
    }
    verdicts_.push_back(v);
    if (options_.retain_screenshots && !whitelisted) screenshots_.emplace(v.id, std::move(norm));
    sink = sink_;
  }
  latency_.record(v.latency);
  if (sink) sink(format_log_line(v));
  return v;
}

OverrideRecord Scanner::record_override(std::uint64_t verdict_id, OverrideChoice choice) {
  std::lock_guard lock(mutex_);
  const auto it = std::find_if(verdicts_.begin(), verdicts_.end(), [&](const Verdict& v) { return v.id == verdict_id; });
  if (it == verdicts_.end()) throw NotFound("no verdict " + std::to_string(verdict_id));
  OverrideRecord r{verdict_id, it->tab_id, choice, clock_.now()};
  overrides_.push_back(r);
  tabs_[it->tab_id].paused = false;
  return r;
}

TabState Scanner::tab(const std::string& tab_id) const {
  std::lock_guard lock(mutex_);
  const auto it = tabs_.find(tab_id);
  if (it == tabs_.end()) return TabState{tab_id, {}, {}, {}, false};
  return it->second;
}

bool Scanner::paused(const std::string& tab_id) const {
  std::lock_guard lock(mutex_);
  const auto it = tabs_.find(tab_id);
  return it != tabs_.end() && it->second.paused;
}

std::optional<Verdict> Scanner::verdict(std::uint64_t id) const {
  std::lock_guard lock(mutex_);
  for (const auto& v : verdicts_)
    if (v.id == id) return v;
  return std::nullopt;
}

std::vector<Verdict> Scanner::verdicts_since(TimePoint since) const {
  std::lock_guard lock(mutex_);
  std::vector<Verdict> out;
  for (const auto& v : verdicts_)
    if (v.created_at >= since) out.push_back(v);
  return out;
}

std::vector<OverrideRecord> Scanner::overrides() const {
  std::lock_guard lock(mutex_);
  return overrides_;
}

std::optional<NormalizedImage> Scanner::screenshot(std::uint64_t verdict_id) const {
  std::lock_guard lock(mutex_);
  const auto it = screenshots_.find(verdict_id);
  if (it == screenshots_.end()) return std::nullopt;
  return it->second;
}

std::size_t Scanner::inference_count() const {
  std::lock_guard lock(mutex_);
  return inferences_;
}

ScanScheduler::ScanScheduler(Clock::duration interval) : interval_(interval) {
  if (interval <= Clock::duration::zero()) throw InvalidInput("scan interval must be positive");
}

void ScanScheduler::add_tab(const std::string& tab_id, TimePoint at) { next_due_[tab_id] = at + interval_; }

void ScanScheduler::remove_tab(const std::string& tab_id) { next_due_.erase(tab_id); }

std::vector<ScanEvent> ScanScheduler::run_until(VirtualClock& clock, TimePoint until, const Cycle& cycle,
                                                const PausedFn& paused) {
  std::vector<ScanEvent> events;
  while (true) {
    auto next = std::min_element(next_due_.begin(), next_due_.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    if (next == next_due_.end() || next->second > until) break;
    const std::string tab = next->first;
    const TimePoint start = next->second;
    if (clock.now() < start) clock.set(start);
    if (paused && paused(tab)) {
      next->second = start + interval_;
      continue;
    }
    const auto took = cycle(tab, start);
    const TimePoint finish = start + std::max(took, Clock::duration::zero());
    if (clock.now() < finish) clock.set(finish);
    if (finish <= until) events.push_back({tab, start, finish});
    next_due_[tab] = std::max(start + interval_, finish);
  }
  return events;
}

} // namespace bmaguard
