#include "bmaguard/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace bmaguard {

namespace {

void validate(const ScoredLabels& data) {
  if (data.scores.size() != data.labels.size()) throw InvalidInput("scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] != 0 && data.labels[i] != 1) throw InvalidInput("labels must be 0 or 1");
    if (!std::isfinite(data.scores[i])) throw InvalidInput("scores must be finite");
    pos += static_cast<std::size_t>(data.labels[i]);
  }
  if (pos == 0 || pos == data.labels.size()) throw UndefinedMetric("both classes must be present");
}

} // namespace

double auroc(const ScoredLabels& data) {
  validate(data);
  const std::size_t n = data.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.scores[a] < data.scores[b]; });

  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && data.scores[order[j]] == data.scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (data.labels[order[k]] == 1) rank_sum += mid_rank, ++n_pos;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n - n_pos);
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

OperatingPoint operating_point(const ScoredLabels& data, double fp_target) {
  validate(data);
  if (!(fp_target >= 0.0 && fp_target <= 1.0)) throw InvalidInput("fp_target must lie in [0, 1]");
  std::vector<double> neg, pos;
  for (std::size_t i = 0; i < data.scores.size(); ++i)
    (data.labels[i] ? pos : neg).push_back(data.scores[i]);
  std::sort(neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());

  const auto allowed_fp = static_cast<std::size_t>(std::floor(fp_target * static_cast<double>(neg.size()) + 1e-9));
  auto above = [](const std::vector<double>& v, double t) {
    return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), t));
  };

  if (neg.size() <= allowed_fp) return {1.0, std::nullopt};

  // FPR falls as the threshold rises, so the smallest admissible observed
  // score gives the highest detection rate.
  std::vector<double> candidates = neg;
  candidates.insert(candidates.end(), pos.begin(), pos.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (double t : candidates) {
    if (above(neg, t) <= allowed_fp)
      return {static_cast<double>(above(pos, t)) / static_cast<double>(pos.size()), t};
  }
  return {0.0, candidates.back()};
}

MetricsReport evaluate(const ScoredLabels& data, double fp_target) {
  MetricsReport r;
  r.auroc = auroc(data);
  const auto op = operating_point(data, fp_target);
  r.dr_at_fp = op.detection_rate;
  r.threshold = op.threshold;
  r.fp_target = fp_target;
  for (std::size_t i = 0; i < data.scores.size(); ++i) {
    const bool flagged = !op.threshold || data.scores[i] > *op.threshold;
    if (data.labels[i]) {
      ++r.n_bma;
      flagged ? ++r.confusion.tp : ++r.confusion.fn;
    } else {
      ++r.n_benign;
      flagged ? ++r.confusion.fp : ++r.confusion.tn;
    }
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {
      {"auroc", r.auroc},
      {"dr_at_fp", r.dr_at_fp},
      {"fp_target", r.fp_target},
      {"threshold", r.threshold ? nlohmann::json(*r.threshold) : nlohmann::json(nullptr)},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
      {"n_benign", r.n_benign},
      {"n_bma", r.n_bma},
  };
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (c < 0x80) len = 1, cp = c;
    else if ((c & 0xE0) == 0xC0) len = 2, cp = c & 0x1F;
    else if ((c & 0xF0) == 0xE0) len = 3, cp = c & 0x0F;
    else if ((c & 0xF8) == 0xF0) len = 4, cp = c & 0x07;
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
    } else {
      out.push_back(cp);
      i += static_cast<std::size_t>(len);
    }
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::u32string x = utf8_decode(a), y = utf8_decode(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

namespace {

std::vector<std::string> lower_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string tok; in >> tok;) {
    for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(std::move(tok));
  }
  return out;
}

} // namespace

double rouge_l_f1(std::string_view a, std::string_view b) {
  const auto x = lower_tokens(a), y = lower_tokens(b);
  if (x.empty() || y.empty()) return 0.0;
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[y.size()]);
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(y.size()), r = lcs / static_cast<double>(x.size());
  return 2 * p * r / (p + r);
}

double krippendorff_alpha(const LabelMatrix& m) {
  std::size_t annotators = 0;
  for (const auto& row : m) annotators = std::max(annotators, row.size());
  if (annotators < 2) throw InvalidInput("krippendorff_alpha: need at least two annotators");

  std::map<int, std::size_t> index;
  for (const auto& row : m)
    for (const auto& v : row)
      if (v) index.emplace(*v, 0);
  std::size_t k = 0;
  for (auto& [value, idx] : index) idx = k++;

  Eigen::MatrixXd coincidence = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  bool pairable = false;
  for (const auto& row : m) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    double mu = 0;
    for (const auto& v : row)
      if (v) counts(static_cast<Eigen::Index>(index[*v])) += 1, mu += 1;
    if (mu < 2) continue;
    pairable = true;
    Eigen::MatrixXd pairs = counts * counts.transpose();
    pairs.diagonal() -= counts;
    coincidence += pairs / (mu - 1);
  }
  if (!pairable) throw InvalidInput("krippendorff_alpha: no item has two or more labels");

  const Eigen::VectorXd marginals = coincidence.rowwise().sum();
  const double n = marginals.sum();
  const double observed = coincidence.sum() - coincidence.trace();
  const double expected = (marginals.sum() * marginals.sum() - marginals.squaredNorm());
  if (expected == 0) throw UndefinedMetric("krippendorff_alpha: zero expected disagreement");
  return 1.0 - (n - 1) * observed / expected;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw UndefinedMetric("percentile of empty sample");
  if (!(q >= 0 && q <= 1)) throw InvalidInput("percentile: q must lie in [0, 1]");
  std::sort(samples.begin(), samples.end());
  const double pos = q * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

} // namespace bmaguard
