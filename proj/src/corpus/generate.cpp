#include <algorithm>
#include <array>
#include <random>
#include <string>
#include <vector>

#include "bmaguard/corpus/corpus.hpp"
#include "bmaguard/corpus/font.hpp"
#include "bmaguard/error.hpp"

namespace bmaguard {

namespace {

using Color = std::array<std::uint8_t, 3>;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T, std::size_t N>
const T& pick(const std::array<T, N>& a, std::mt19937_64& rng) {
  return a[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void fill_rect(RgbImage& img, int x, int y, int w, int h, Color c) {
  const int x0 = std::max(x, 0), x1 = std::min(x + w, img.width);
  const int y0 = std::max(y, 0), y1 = std::min(y + h, img.height);
  for (int py = y0; py < y1; ++py)
    for (int px = x0; px < x1; ++px) {
      std::uint8_t* p = img.at(px, py);
      p[0] = c[0];
      p[1] = c[1];
      p[2] = c[2];
    }
}

void darken(RgbImage& img, double keep) {
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(v * keep);
}

void fill_triangle(RgbImage& img, int cx, int top, int size, Color c) {
  for (int dy = 0; dy < size; ++dy) {
    const int half = dy / 2 + 1;
    fill_rect(img, cx - half, top + dy, 2 * half, 1, c);
  }
}

void fill_circle(RgbImage& img, int cx, int cy, int r, Color c) {
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r && cx + dx >= 0 && cx + dx < img.width && cy + dy >= 0 && cy + dy < img.height) {
        std::uint8_t* p = img.at(cx + dx, cy + dy);
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
      }
}

/// Greedy word wrap to at most `max_chars` per line.
std::vector<std::string> wrap(const std::string& text, int max_chars) {
  std::vector<std::string> lines;
  std::string line;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t j = std::min(text.find(' ', i), text.size());
    const std::string word = text.substr(i, j - i);
    if (!line.empty() && static_cast<int>(line.size() + 1 + word.size()) > max_chars) {
      lines.push_back(line);
      line.clear();
    }
    line += line.empty() ? word : " " + word;
    i = j + 1;
  }
  if (!line.empty()) lines.push_back(line);
  return lines;
}

constexpr std::array<const char*, 40> kAttackPhrases = {
    "Your computer is infected with 5 viruses",
    "Click Allow to continue",
    "Click Allow to verify you are not a robot",
    "Press Allow to watch the video",
    "Your system has been blocked",
    "Call Microsoft support immediately",
    "Do not close this window",
    "Your personal data is at risk",
    "Download the security update now",
    "Your browser is outdated",
    "Update your player to continue",
    "Warning suspicious activity detected",
    "Your files will be deleted",
    "Scan completed threats found",
    "Remove the virus now",
    "Install the recommended protection",
    "Your subscription has expired",
    "Renew your antivirus license today",
    "Congratulations you have won a prize",
    "Claim your reward before it expires",
    "Enable notifications to access the content",
    "Your download is ready",
    "Security alert from the system",
    "Contact technical support toll free",
    "Immediate action required",
    "Your device is damaged by malware",
    "Clean your phone now",
    "Battery damaged by viruses",
    "Access to this computer has been suspended",
    "Confirm to continue browsing",
    "This page requires a plugin update",
    "Error code 0x80070424 detected",
    "Windows Defender alert",
    "Your IP address has been exposed",
    "Unlock your account now",
    "Verify your age to continue",
    "Tap Allow to play",
    "You are the lucky visitor today",
    "Free gift card waiting for you",
    "Fix the problem in one click",
};

constexpr std::array<const char*, 10> kDialogTitles = {
    "Security Warning", "System Alert",    "Virus Detected", "Action Required", "Critical Error",
    "Notification",     "Windows Support", "Chrome Update",  "Congratulations", "Attention",
};

constexpr std::array<std::array<const char*, 2>, 8> kButtons = {{
    {"Allow", "Block"},
    {"Download", "Cancel"},
    {"Call Now", "Close"},
    {"Scan Now", "Later"},
    {"Update", "Skip"},
    {"OK", "Cancel"},
    {"Claim", "No Thanks"},
    {"Continue", "Exit"},
}};

constexpr std::array<const char*, 12> kSitePrefix = {"Daily", "Green",  "Metro", "Harbor", "Maple", "Sunny",
                                                     "North", "Golden", "River", "Urban",  "Quiet", "Bright"};
constexpr std::array<const char*, 12> kSiteSuffix = {"Times",   "Kitchen", "Outfitters", "Journal", "Travel", "Garden",
                                                     "Library", "Sports",  "Market",     "Review",  "Gazette", "Studio"};
constexpr std::array<const char*, 8> kNav = {"Home", "News", "Sports", "Shop", "About", "Contact", "Blog", "Travel"};

constexpr std::array<const char*, 16> kSubjects = {
    "The city council", "Our team",     "Local farmers",   "The new museum", "Researchers",  "This recipe",
    "The school",       "Our editors",  "The local club",  "Students",       "The festival", "Our customers",
    "The coach",        "The library",  "Travel writers",  "The author"};
constexpr std::array<const char*, 16> kVerbs = {
    "announced", "shared",   "opened",   "released", "reviewed",   "prepared", "discussed", "visited",
    "planned",   "welcomed", "improved", "explored", "celebrated", "tested",   "described", "recommended"};
constexpr std::array<const char*, 20> kObjects = {
    "a new park plan",      "the spring menu",       "fresh vegetables",      "the history gallery",
    "a healthy dinner",     "the concert schedule",  "the mountain trail",    "a quiet beach hotel",
    "the match results",    "new library books",     "the garden flowers",    "the river project",
    "simple lunch ideas",   "the weather forecast",  "the season tickets",    "our product review",
    "the travel guide",     "free shipping on orders", "the photo gallery",   "the student projects"};
constexpr std::array<const char*, 12> kModifiers = {
    "this weekend",       "in the morning",      "for the community", "after a long season",
    "with local experts", "near the river",      "at the city hall",  "for young readers",
    "before the holiday", "in a short article",  "with new photos",   "for all customers"};

constexpr std::array<Color, 8> kBrandColors = {{{40, 70, 140},
                                                {30, 120, 80},
                                                {150, 60, 40},
                                                {90, 50, 120},
                                                {20, 110, 130},
                                                {120, 100, 30},
                                                {60, 60, 60},
                                                {160, 40, 90}}};

struct CampaignStyle {
  std::string title;
  std::array<std::string, 2> buttons;
  std::vector<std::string> phrases;
  Color header;
  Color dialog_bg;
  Color dialog_text;
  Color button;
  int icon = 0;
  int background = 0;
  double overlay_keep = 0.4;
  double width_frac = 0.5;
  double top_frac = 0.25;
};

CampaignStyle campaign_style(std::string_view campaign) {
  std::mt19937_64 rng(fnv1a(campaign));
  CampaignStyle s;
  s.title = pick(kDialogTitles, rng);
  const auto& b = pick(kButtons, rng);
  s.buttons = {b[0], b[1]};
  std::vector<std::size_t> idx(kAttackPhrases.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < 10; ++i) s.phrases.emplace_back(kAttackPhrases[idx[i]]);
  s.header = {static_cast<std::uint8_t>(uniform(rng, 120, 230)), static_cast<std::uint8_t>(uniform(rng, 0, 80)),
              static_cast<std::uint8_t>(uniform(rng, 0, 120))};
  if (uniform(rng, 0, 2) == 0) std::swap(s.header[0], s.header[2]);
  const bool dark = uniform(rng, 0, 3) == 0;
  s.dialog_bg = dark ? Color{35, 35, 40} : Color{static_cast<std::uint8_t>(uniform(rng, 225, 255)),
                                                 static_cast<std::uint8_t>(uniform(rng, 225, 255)),
                                                 static_cast<std::uint8_t>(uniform(rng, 225, 255))};
  s.dialog_text = dark ? Color{240, 240, 240} : Color{20, 20, 20};
  s.button = {static_cast<std::uint8_t>(uniform(rng, 0, 60)), static_cast<std::uint8_t>(uniform(rng, 90, 180)),
              static_cast<std::uint8_t>(uniform(rng, 150, 240))};
  s.icon = uniform(rng, 0, 2);
  s.background = uniform(rng, 0, 2);
  s.overlay_keep = uniform(rng, 25, 55) / 100.0;
  s.width_frac = uniform(rng, 40, 65) / 100.0;
  s.top_frac = uniform(rng, 10, 35) / 100.0;
  return s;
}

std::string sentence(std::mt19937_64& rng) {
  return std::string(pick(kSubjects, rng)) + " " + pick(kVerbs, rng) + " " + pick(kObjects, rng) + " " +
         pick(kModifiers, rng);
}

int font_scale(Resolution r) { return std::max(1, std::min(r.width / 480, r.height / 270)); }

void text_lines(RgbImage& img, std::vector<std::string>& out, int x, int& y, const std::string& text, int max_w,
                Color color, int scale) {
  const int max_chars = std::max(8, max_w / (kGlyphAdvance * scale));
  for (const auto& line : wrap(text, max_chars)) {
    draw_text(img, x, y, line, color, scale);
    out.push_back(line);
    y += (kGlyphHeight + 4) * scale;
  }
}

/// Plain content page. Adds the rendered text lines to `lines` when
/// `with_text` is set; otherwise only draws layout blocks.
void draw_benign_layout(RgbImage& img, std::mt19937_64& rng, std::vector<std::string>& lines, bool with_text,
                        int scale) {
  const int W = img.width, H = img.height;
  const Color bg = {static_cast<std::uint8_t>(uniform(rng, 235, 255)), static_cast<std::uint8_t>(uniform(rng, 235, 255)),
                    static_cast<std::uint8_t>(uniform(rng, 230, 255))};
  fill_rect(img, 0, 0, W, H, bg);
  const Color brand = pick(kBrandColors, rng);
  const int header_h = std::max(12, H / 10);
  fill_rect(img, 0, 0, W, header_h, brand);
  const int margin = std::max(4, W / 40);
  const std::string site = std::string(pick(kSitePrefix, rng)) + " " + pick(kSiteSuffix, rng);
  const int ty = (header_h - kGlyphHeight * scale) / 2;
  if (with_text) {
    int x = draw_text(img, margin, ty, site, {255, 255, 255}, scale) + 4 * kGlyphAdvance * scale;
    lines.push_back(site);
    std::string nav;
    std::array<std::size_t, 8> order{};
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int n_nav = uniform(rng, 3, 5);
    for (int i = 0; i < n_nav; ++i) {
      const std::string item = kNav[order[static_cast<std::size_t>(i)]];
      if (x + text_width(item, scale) > W - margin) break;
      x = draw_text(img, x, ty, item, {230, 230, 230}, scale) + 2 * kGlyphAdvance * scale;
      nav += nav.empty() ? item : " " + item;
    }
    if (!nav.empty()) lines.push_back(nav);
  }

  const bool two_col = W > H && uniform(rng, 0, 1) == 1;
  const int body_w = two_col ? (W - 3 * margin) * 2 / 3 : W - 2 * margin;
  int y = header_h + margin;
  if (two_col) {
    const int side_x = margin * 2 + body_w;
    for (int k = 0, sy = y; k < 3 && sy < H - margin; ++k) {
      const int bh = uniform(rng, H / 10, H / 5);
      fill_rect(img, side_x, sy, W - side_x - margin, bh,
                {static_cast<std::uint8_t>(uniform(rng, 80, 200)), static_cast<std::uint8_t>(uniform(rng, 80, 200)),
                 static_cast<std::uint8_t>(uniform(rng, 80, 200))});
      sy += bh + margin;
    }
  }
  if (!with_text) {
    for (int k = 0; k < 8 && y < H - margin; ++k) {
      const int bh = uniform(rng, 3, 8) * scale;
      fill_rect(img, margin, y, uniform(rng, body_w / 2, body_w), bh, {150, 150, 150});
      y += bh + 6 * scale;
    }
    return;
  }
  std::string headline = sentence(rng);
  headline[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(headline[0])));
  text_lines(img, lines, margin, y, headline, body_w, brand, scale + 1);
  y += margin / 2;
  if (uniform(rng, 0, 2) == 0) {
    const int ih = uniform(rng, H / 8, H / 4);
    fill_rect(img, margin, y, body_w / 2, ih,
              {static_cast<std::uint8_t>(uniform(rng, 60, 220)), static_cast<std::uint8_t>(uniform(rng, 60, 220)),
               static_cast<std::uint8_t>(uniform(rng, 60, 220))});
    y += ih + margin / 2;
  }
  const int n = uniform(rng, 3, 5);
  for (int k = 0; k < n && y < H - 2 * margin; ++k) text_lines(img, lines, margin, y, sentence(rng) + ".", body_w, {40, 40, 40}, scale);

  if (uniform(rng, 0, 3) == 0) {
    const int bh = (kGlyphHeight + 8) * scale * 2;
    fill_rect(img, 0, H - bh, W, bh, {245, 245, 245});
    int by = H - bh + 4 * scale;
    const std::string note = "We use cookies to improve your experience";
    text_lines(img, lines, margin, by, note, W - 2 * margin - text_width("Accept", scale) - margin, {60, 60, 60}, scale);
    const int bx = W - margin - text_width("Accept", scale) - 4 * scale;
    fill_rect(img, bx - 2 * scale, H - bh + 2 * scale, text_width("Accept", scale) + 6 * scale, (kGlyphHeight + 4) * scale, brand);
    draw_text(img, bx, H - bh + 4 * scale, "Accept", {255, 255, 255}, scale);
    lines.push_back("Accept");
  }
}

RenderedPage render_benign(const SampleRecord& r, std::mt19937_64& rng) {
  RenderedPage page;
  page.image = RgbImage(r.resolution.width, r.resolution.height);
  std::vector<std::string> lines;
  draw_benign_layout(page.image, rng, lines, true, font_scale(r.resolution));
  for (const auto& l : lines) page.text += (page.text.empty() ? "" : "\n") + l;
  return page;
}

RenderedPage render_bma(const SampleRecord& r, std::mt19937_64& rng) {
  const CampaignStyle style = campaign_style(r.campaign_id);
  const int W = r.resolution.width, H = r.resolution.height, scale = font_scale(r.resolution);
  RenderedPage page;
  page.image = RgbImage(W, H);
  RgbImage& img = page.image;
  std::vector<std::string> lines;
  if (style.background == 0) {
    std::vector<std::string> ignored;
    draw_benign_layout(img, rng, ignored, false, scale);
  } else if (style.background == 1) {
    fill_rect(img, 0, 0, W, H, {20, 20, 20});
    const int ps = std::max(10, std::min(W, H) / 6);
    fill_triangle(img, W / 2, H / 2 - ps / 2, ps, {200, 200, 200});
  } else {
    for (int y = 0; y < H; ++y)
      fill_rect(img, 0, y, W, 1,
                {static_cast<std::uint8_t>(40 + 120 * y / H), static_cast<std::uint8_t>(60 + 60 * y / H), 140});
  }
  darken(img, style.overlay_keep);

  const int dw = std::clamp(static_cast<int>(W * style.width_frac), std::min(W - 8, 200), W - 8);
  const int dx = (W - dw) / 2;
  const int pad = std::max(4, 6 * scale);
  const int header_h = (kGlyphHeight + 8) * scale + 4;
  const int max_chars = std::max(8, (dw - 2 * pad) / (kGlyphAdvance * scale));

  std::vector<std::string> phrases = style.phrases;
  std::shuffle(phrases.begin(), phrases.end(), rng);
  phrases.resize(static_cast<std::size_t>(uniform(rng, 3, 5)));
  std::vector<std::vector<std::string>> wrapped;
  int body_lines = 0;
  for (const auto& p : phrases) {
    wrapped.push_back(wrap(p, max_chars));
    body_lines += static_cast<int>(wrapped.back().size());
  }
  const int line_h = (kGlyphHeight + 5) * scale;
  const int icon = std::max(12, 12 * scale);
  const int button_h = (kGlyphHeight + 10) * scale;
  const int dh = header_h + pad + icon + pad + body_lines * line_h + pad + button_h + pad;
  const int dy = std::clamp(static_cast<int>(H * style.top_frac), 0, std::max(0, H - dh));

  fill_rect(img, dx + 3 * scale, dy + 3 * scale, dw, dh, {0, 0, 0});
  fill_rect(img, dx, dy, dw, dh, style.dialog_bg);
  fill_rect(img, dx, dy, dw, header_h, style.header);
  draw_text(img, dx + pad, dy + (header_h - kGlyphHeight * scale) / 2, style.title, {255, 255, 255}, scale);
  lines.push_back(style.title);

  int y = dy + header_h + pad;
  const int icx = dx + dw / 2;
  if (style.icon == 0) {
    fill_triangle(img, icx, y, icon, {240, 200, 0});
  } else if (style.icon == 1) {
    fill_circle(img, icx, y + icon / 2, icon / 2, {220, 30, 30});
  } else {
    fill_rect(img, icx - icon / 2, y, icon, icon, {230, 120, 0});
  }
  fill_rect(img, icx - std::max(1, scale / 2), y + icon / 4, std::max(2, scale), icon / 2, {255, 255, 255});
  y += icon + pad;

  for (const auto& block : wrapped)
    for (const auto& l : block) {
      draw_text(img, dx + pad, y, l, style.dialog_text, scale);
      lines.push_back(l);
      y += line_h;
    }
  y += pad / 2;
  const int b0w = text_width(style.buttons[0], scale) + 4 * pad;
  const int b1w = text_width(style.buttons[1], scale) + 4 * pad;
  const int bx1 = dx + dw - pad - b0w;
  const int bx2 = std::max(dx + pad, bx1 - pad - b1w);
  fill_rect(img, bx1, y, b0w, button_h, style.button);
  draw_text(img, bx1 + 2 * pad, y + (button_h - kGlyphHeight * scale) / 2, style.buttons[0], {255, 255, 255}, scale);
  fill_rect(img, bx2, y, b1w, button_h, {150, 150, 150});
  draw_text(img, bx2 + 2 * pad, y + (button_h - kGlyphHeight * scale) / 2, style.buttons[1], {20, 20, 20}, scale);
  lines.push_back(style.buttons[1] + " " + style.buttons[0]);

  for (const auto& l : lines) page.text += (page.text.empty() ? "" : "\n") + l;
  return page;
}

} // namespace

std::string neutral_sentence(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sentence(rng) + ".";
}

std::vector<std::string> campaign_ids(int count) {
  std::vector<std::string> ids;
  for (int i = 0; i < count; ++i) ids.push_back("c" + std::to_string(i));
  return ids;
}

RenderedPage render_page(const SampleRecord& r) {
  if (!r.render_seed) throw InvalidInput("record " + r.id + " is not synthetic");
  if (r.resolution.width < 1 || r.resolution.height < 1) throw InvalidInput("record " + r.id + " has no resolution");
  std::mt19937_64 rng(*r.render_seed);
  return r.label == SampleLabel::bma ? render_bma(r, rng) : render_benign(r, rng);
}

Manifest generate_synthetic_corpus(const CorpusSpec& spec) {
  if (spec.resolutions.empty()) throw InvalidInput("corpus: at least one resolution required");
  if (spec.n_bma > 0 && spec.campaigns.empty()) throw InvalidInput("corpus: BMA samples need campaigns");
  for (const auto& c : spec.campaigns)
    if (c.empty()) throw InvalidInput("corpus: empty campaign id");
  Manifest m;
  m.seed = spec.seed;
  std::mt19937_64 rng(spec.seed);
  auto add = [&](SampleLabel label, std::size_t i) {
    SampleRecord r;
    r.id = (label == SampleLabel::bma ? "m" : "b") + std::string(6 - std::min<std::size_t>(6, std::to_string(i).size()), '0') +
           std::to_string(i);
    r.label = label;
    r.image_path = "images/" + r.id + ".png";
    r.text_path = "texts/" + r.id + ".txt";
    r.resolution = spec.resolutions[std::uniform_int_distribution<std::size_t>(0, spec.resolutions.size() - 1)(rng)];
    if (label == SampleLabel::bma) r.campaign_id = spec.campaigns[i % spec.campaigns.size()];
    r.render_seed = splitmix(spec.seed ^ splitmix(fnv1a(r.id)));
    r.text = render_page(r).text;
    m.records.push_back(std::move(r));
  };
  for (std::size_t i = 0; i < spec.n_benign; ++i) add(SampleLabel::benign, i);
  for (std::size_t i = 0; i < spec.n_bma; ++i) add(SampleLabel::bma, i);
  return m;
}

} // namespace bmaguard
