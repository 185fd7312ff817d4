// Brute-force references used by the unit tests and the acceptance run.

#ifndef BMAGUARD_TEST_ORACLES_HPP_
#define BMAGUARD_TEST_ORACLES_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bmaguard/imaging.hpp"
#include "bmaguard/metrics.hpp"

namespace bmaguard::oracle {

// Independent reference: build the 1920x1080 canvas pixel by pixel, each
// scaled pixel an exact 2-D area integral over the raw image, then average
// 2x2 canvas blocks.
struct OracleGeometry {
  int sw, sh, ox, oy;
};

inline OracleGeometry oracle_geometry(int w, int h) {
  if (w <= 1920 && h <= 1080) return {w, h, (1920 - w) / 2, (1080 - h) / 2};
  // s = min(1920/w, 1080/h) as a fraction num/den.
  std::int64_t num = 1920, den = w;
  if (std::int64_t{1080} * w < std::int64_t{1920} * h) num = 1080, den = h;
  auto scaled = [&](std::int64_t d) {
    // floor(d*num/den + 1/2)
    return static_cast<int>(std::max<std::int64_t>(1, (2 * d * num + den) / (2 * den)));
  };
  const int sw = std::min(1920, scaled(w)), sh = std::min(1080, scaled(h));
  return {sw, sh, (1920 - sw) / 2, (1080 - sh) / 2};
}

inline std::uint8_t oracle_scaled(const RgbImage& raw, int sw, int sh, int i, int j, int c) {
  if (sw == raw.width && sh == raw.height) return raw.at(i, j)[c];
  // Output cell [i*w, (i+1)*w) x [j*h, (j+1)*h) against source cells of
  // size sw x sh, all in units of 1/(sw*sh) pixel.
  const std::int64_t w = raw.width, h = raw.height;
  std::int64_t acc = 0;
  for (std::int64_t q = (j * h) / sh; q * sh < (j + 1) * h && q < h; ++q) {
    const std::int64_t oy = std::min((j + 1) * h, (q + 1) * sh) - std::max(j * h, q * sh);
    for (std::int64_t p = (i * w) / sw; p * sw < (i + 1) * w && p < w; ++p) {
      const std::int64_t ox = std::min((i + 1) * w, (p + 1) * sw) - std::max(i * w, p * sw);
      acc += ox * oy * raw.at(static_cast<int>(p), static_cast<int>(q))[c];
    }
  }
  const std::int64_t area = w * h;
  return static_cast<std::uint8_t>((2 * acc + area) / (2 * area));
}

inline RgbImage oracle_normalize(const RgbImage& raw) {
  const auto g = oracle_geometry(raw.width, raw.height);
  RgbImage out(960, 540);
  for (int y = 0; y < 540; ++y)
    for (int x = 0; x < 960; ++x)
      for (int c = 0; c < 3; ++c) {
        int sum = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int cx = 2 * x + dx - g.ox, cy = 2 * y + dy - g.oy;
            if (cx >= 0 && cy >= 0 && cx < g.sw && cy < g.sh) sum += oracle_scaled(raw, g.sw, g.sh, cx, cy, c);
          }
        out.at(x, y)[c] = static_cast<std::uint8_t>((2 * sum + 4) / 8);
      }
  return out;
}

inline bool padding_is_zero(const NormalizedImage& n) {
  for (int y = 0; y < n.image.height; ++y)
    for (int x = 0; x < n.image.width; ++x)
      if (!n.content_rect.contains(x, y)) {
        const auto* p = n.image.at(x, y);
        if (p[0] || p[1] || p[2]) return false;
      }
  return true;
}

// Reference hash: float block means of a 256x256 box resize of luminance,
// bit set when above the median of the 64 means.
inline std::uint64_t reference_hash(const RgbImage& img) {
  const int w = img.width, h = img.height;
  std::vector<double> luma(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto* p = img.at(x, y);
      luma[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          299.0 * p[0] + 587.0 * p[1] + 114.0 * p[2];
    }
  std::array<double, 64> block{};
  // Each block covers [bx*w/8, (bx+1)*w/8) x [by*h/8, (by+1)*h/8) of the source.
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      const double x0 = bx * w / 8.0, x1 = (bx + 1) * w / 8.0, y0 = by * h / 8.0, y1 = (by + 1) * h / 8.0;
      double acc = 0;
      for (int y = static_cast<int>(y0); y < std::min(h, static_cast<int>(std::ceil(y1))); ++y) {
        const double oy = std::min(y1, y + 1.0) - std::max(y0, static_cast<double>(y));
        for (int x = static_cast<int>(x0); x < std::min(w, static_cast<int>(std::ceil(x1))); ++x) {
          const double ox = std::min(x1, x + 1.0) - std::max(x0, static_cast<double>(x));
          acc += ox * oy * luma[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
        }
      }
      block[static_cast<std::size_t>(by * 8 + bx)] = acc;
    }
  auto sorted = block;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[31] + sorted[32]);
  std::uint64_t bits = 0;
  for (int b = 0; b < 64; ++b)
    if (block[static_cast<std::size_t>(b)] > median) bits |= std::uint64_t{1} << (63 - b);
  return bits;
}

inline RgbImage invert(RgbImage img) {
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(255 - v);
  return img;
}

inline double pairwise_auroc(const ScoredLabels& d) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < d.scores.size(); ++i)
    for (std::size_t j = 0; j < d.scores.size(); ++j)
      if (d.labels[i] == 1 && d.labels[j] == 0) {
        pairs += 1;
        if (d.scores[i] > d.scores[j]) good += 1;
        else if (d.scores[i] == d.scores[j]) good += 0.5;
      }
  return good / pairs;
}

inline double sweep_dr(const ScoredLabels& d, double target) {
  std::vector<double> thresholds = d.scores;
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  double best = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
      const bool flag = d.scores[i] > t;
      if (d.labels[i] == 1) {
        p += 1;
        tp += flag;
      } else {
        n += 1;
        fp += flag;
      }
    }
    if (fp / n <= target) best = std::max(best, tp / p);
  }
  return best;
}

inline std::size_t naive_levenshtein(const std::u32string& a, const std::u32string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::u32string ta = a.substr(1), tb = b.substr(1);
  if (a[0] == b[0]) return naive_levenshtein(ta, tb);
  return 1 + std::min({naive_levenshtein(ta, b), naive_levenshtein(a, tb), naive_levenshtein(ta, tb)});
}

inline std::vector<std::string> lower_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Longest common subsequence by enumerating subsets of the shorter side.
inline std::size_t subset_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << s.size()); ++mask) {
    std::size_t j = 0, k = 0;
    bool ok = true;
    for (std::size_t i = 0; i < s.size() && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      while (j < l.size() && l[j] != s[i]) ++j;
      if (j == l.size()) ok = false;
      else ++j, ++k;
    }
    if (ok) best = std::max(best, k);
  }
  return best;
}

inline double oracle_rouge(const std::string& a, const std::string& b) {
  const auto ta = lower_tokens(a), tb = lower_tokens(b);
  if (ta.empty() || tb.empty()) return 0;
  const double lcs = static_cast<double>(subset_lcs(ta, tb));
  if (lcs == 0) return 0;
  const double p = lcs / static_cast<double>(tb.size()), r = lcs / static_cast<double>(ta.size());
  return 2 * p * r / (p + r);
}

// Pairwise form: observed disagreement within units, expected over all
// pairable values.
inline double pairwise_alpha(const LabelMatrix& m) {
  std::vector<std::vector<int>> units;
  for (const auto& row : m) {
    std::vector<int> v;
    for (const auto& x : row)
      if (x) v.push_back(*x);
    if (v.size() >= 2) units.push_back(v);
  }
  double n = 0;
  for (const auto& u : units) n += static_cast<double>(u.size());
  double d_o = 0;
  for (const auto& u : units) {
    double dis = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j && u[i] != u[j]) dis += 1;
    d_o += dis / static_cast<double>(u.size() - 1);
  }
  d_o /= n;
  std::vector<int> all;
  for (const auto& u : units) all.insert(all.end(), u.begin(), u.end());
  double d_e = 0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j)
      if (i != j && all[i] != all[j]) d_e += 1;
  d_e /= n * (n - 1);
  return 1 - d_o / d_e;
}

inline ScoredLabels random_scored(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> grid(0, 9);
  ScoredLabels d;
  do {
    d.scores.clear();
    d.labels.clear();
    for (int i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng() % 2);
      d.labels.push_back(label);
      d.scores.push_back(grid(rng) / 10.0 + 0.05 * label);
    }
  } while (std::set<int>(d.labels.begin(), d.labels.end()).size() < 2);
  return d;
}

} // namespace bmaguard::oracle

#endif
