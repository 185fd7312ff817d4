#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "bmaguard/adversarial.hpp"
#include "bmaguard/corpus/corpus.hpp"
#include "bmaguard/error.hpp"
#include "bmaguard/png_io.hpp"

namespace bmaguard {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace

std::string_view to_string(SampleLabel l) noexcept { return l == SampleLabel::bma ? "bma" : "benign"; }

SampleLabel label_from_string(std::string_view s) {
  if (s == "benign") return SampleLabel::benign;
  if (s == "bma") return SampleLabel::bma;
  throw InvalidInput("unknown label '" + std::string(s) + "'");
}

std::string to_string(Resolution r) { return std::to_string(r.width) + "x" + std::to_string(r.height); }

Resolution parse_resolution(std::string_view s) {
  const auto x = s.find('x');
  Resolution r;
  try {
    if (x == std::string_view::npos) throw std::invalid_argument("no separator");
    std::size_t used = 0;
    const std::string w(s.substr(0, x)), h(s.substr(x + 1));
    r.width = std::stoi(w, &used);
    if (used != w.size()) throw std::invalid_argument("width");
    r.height = std::stoi(h, &used);
    if (used != h.size()) throw std::invalid_argument("height");
  } catch (const std::exception&) {
    throw InvalidInput("bad resolution '" + std::string(s) + "', expected WxH");
  }
  if (r.width < 1 || r.height < 1) throw InvalidInput("bad resolution '" + std::string(s) + "'");
  return r;
}

void to_json(nlohmann::json& j, const SampleRecord& r) {
  j = {{"id", r.id},
       {"image", r.image_path},
       {"text", r.text_path},
       {"label", to_string(r.label)},
       {"campaign", r.campaign_id},
       {"resolution", to_string(r.resolution)},
       {"split", r.split}};
  if (r.render_seed) j["render_seed"] = *r.render_seed;
  if (r.augment_seed) j["augment_seed"] = *r.augment_seed;
  if (r.prenormalized) j["prenormalized"] = true;
}

void from_json(const nlohmann::json& j, SampleRecord& r) {
  j.at("id").get_to(r.id);
  j.at("image").get_to(r.image_path);
  j.at("text").get_to(r.text_path);
  r.label = label_from_string(j.at("label").get<std::string>());
  r.campaign_id = j.value("campaign", "");
  r.resolution = parse_resolution(j.at("resolution").get<std::string>());
  r.split = j.value("split", "");
  if (j.contains("render_seed")) r.render_seed = j["render_seed"].get<std::uint64_t>();
  if (j.contains("augment_seed")) r.augment_seed = j["augment_seed"].get<std::uint64_t>();
  r.prenormalized = j.value("prenormalized", false);
  if (r.label == SampleLabel::bma && r.campaign_id.empty()) throw InvalidInput("BMA record " + r.id + " has no campaign");
}

std::size_t Manifest::n_benign() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.label == SampleLabel::benign; }));
}

std::size_t Manifest::n_bma() const noexcept { return records.size() - n_benign(); }

std::vector<Resolution> Manifest::resolutions() const {
  std::set<Resolution> s;
  for (const auto& r : records) s.insert(r.resolution);
  return {s.begin(), s.end()};
}

std::vector<std::string> Manifest::campaigns() const {
  std::set<std::string> s;
  for (const auto& r : records)
    if (!r.campaign_id.empty()) s.insert(r.campaign_id);
  return {s.begin(), s.end()};
}

const SampleRecord& Manifest::find(std::string_view id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw NotFound("no record " + std::string(id));
}

nlohmann::json manifest_meta(const Manifest& m) {
  nlohmann::json res = nlohmann::json::array(), camp = nlohmann::json::array();
  for (const auto& r : m.resolutions()) res.push_back(to_string(r));
  for (const auto& c : m.campaigns()) camp.push_back(c);
  const double ratio = m.n_bma() ? static_cast<double>(m.n_benign()) / static_cast<double>(m.n_bma()) : 0.0;
  return {{"records", m.records.size()}, {"benign", m.n_benign()},  {"bma", m.n_bma()},      {"benign_per_bma", ratio},
          {"resolutions", res},         {"campaigns", camp},       {"seed", m.seed}};
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::string out;
  for (const auto& r : m.records) out += nlohmann::json(r).dump() + "\n";
  write_file(path, out);
  write_file(path.string() + ".meta.json", manifest_meta(m).dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(nlohmann::json::parse(line).get<SampleRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  const auto meta = path.string() + ".meta.json";
  if (std::filesystem::exists(meta)) m.seed = nlohmann::json::parse(read_file(meta)).value("seed", std::uint64_t{0});
  const auto root = path.parent_path();
  for (auto& r : m.records)
    if (std::filesystem::exists(root / r.text_path)) r.text = read_file(root / r.text_path);
  return m;
}

NormalizedImage sample_image(const SampleRecord& r, const std::filesystem::path& root) {
  NormalizedImage img;
  if (r.render_seed && !r.prenormalized) {
    img = normalize_screenshot(render_page(r).image);
  } else {
    RgbImage raw = read_png(root / r.image_path);
    if (r.prenormalized) {
      if (raw.width != kNormWidth || raw.height != kNormHeight)
        throw InvalidInput("record " + r.id + " is marked normalized but is not 960x540");
      return {std::move(raw), 1.0, {0, 0, kNormWidth, kNormHeight}};
    }
    img = normalize_screenshot(raw);
  }
  if (r.augment_seed) img = augment_image(img, AugmentationSpec{*r.augment_seed});
  return img;
}

void write_corpus(const std::filesystem::path& root, const Manifest& m) {
  Manifest stored = m;
  std::filesystem::create_directories(root);
  for (auto& r : stored.records) {
    std::filesystem::create_directories((root / r.image_path).parent_path());
    std::filesystem::create_directories((root / r.text_path).parent_path());
    if (r.render_seed && !r.prenormalized) {
      if (r.augment_seed) {
        write_png(root / r.image_path, sample_image(r).image);
        r.prenormalized = true;
      } else {
        write_png(root / r.image_path, render_page(r).image);
      }
    }
    write_file(root / r.text_path, r.text);
  }
  write_manifest(root / "manifest.jsonl", stored);
}

SynonymTable parse_synonym_table(std::string_view content) {
  SynonymTable table;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError("expected word<TAB>synonyms", line_no);
    std::string word = line.substr(0, tab);
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    auto& syns = table[word];
    std::istringstream list(line.substr(tab + 1));
    std::string s;
    while (std::getline(list, s, ',')) {
      if (s.empty() || s.find_first_of(" \t") != std::string::npos)
        throw ParseError("synonyms must be single non-empty words", line_no);
      if (std::find(syns.begin(), syns.end(), s) == syns.end()) syns.push_back(s);
    }
    if (syns.empty()) throw ParseError("no synonyms for '" + word + "'", line_no);
  }
  return table;
}

SynonymTable load_synonym_table(const std::filesystem::path& path) { return parse_synonym_table(read_file(path)); }

std::string synonym_replace(std::string_view text, const SynonymTable& table, std::uint64_t seed, double probability) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    if (is_space(text[i])) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    const std::string_view token = text.substr(i, j - i);
    std::size_t a = 0, b = token.size();
    while (a < b && !is_word(token[a])) ++a;
    while (b > a && !is_word(token[b - 1])) --b;
    std::string key(token.substr(a, b - a));
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto hit = key.empty() ? table.end() : table.find(key);
    if (hit != table.end() && u(rng) < probability) {
      const auto& syns = hit->second;
      std::string syn = syns[std::uniform_int_distribution<std::size_t>(0, syns.size() - 1)(rng)];
      if (std::isupper(static_cast<unsigned char>(token[a])))
        syn[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(syn[0])));
      out.append(token.substr(0, a));
      out += syn;
      out.append(token.substr(b));
    } else {
      out += token;
    }
    i = j;
  }
  return out;
}

Manifest augment_dataset(const Manifest& m, std::uint64_t seed, const SynonymTable& table, int factor) {
  if (factor < 1) throw InvalidInput("augmentation factor must be >= 1");
  Manifest out = m;
  for (const auto& r : m.records) {
    if (r.label != SampleLabel::bma || r.augment_seed) continue;
    for (int k = 1; k < factor; ++k) {
      SampleRecord a = r;
      a.id = r.id + "-aug" + std::to_string(k);
      a.image_path = "images/" + a.id + ".png";
      a.text_path = "texts/" + a.id + ".txt";
      const std::uint64_t s = mix(mix(seed, fnv1a(r.id)), static_cast<std::uint64_t>(k));
      a.augment_seed = s;
      a.text = synonym_replace(r.text, table, mix(s, 1));
      out.records.push_back(std::move(a));
    }
  }
  return out;
}

SplitResult leave_out_split(const Manifest& m, SplitAxis axis, std::span<const std::string> held,
                            const SplitOptions& options) {
  if (held.empty()) throw InvalidInput("split: nothing held out");
  std::vector<Resolution> held_res;
  for (const auto& h : held) {
    if (axis == SplitAxis::resolution) {
      const Resolution r = parse_resolution(h);
      const auto inv = m.resolutions();
      if (std::find(inv.begin(), inv.end(), r) == inv.end()) throw NotFound("no records at resolution " + h);
      held_res.push_back(r);
    } else {
      const auto inv = m.campaigns();
      if (std::find(inv.begin(), inv.end(), h) == inv.end()) throw NotFound("no campaign " + h);
    }
  }
  auto matches = [&](const SampleRecord& r) {
    if (axis == SplitAxis::resolution) return std::find(held_res.begin(), held_res.end(), r.resolution) != held_res.end();
    return std::find(held.begin(), held.end(), r.campaign_id) != held.end();
  };

  SplitResult out;
  out.train.seed = out.test.seed = m.seed;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> held_idx, rest_idx;
  for (std::size_t i = 0; i < m.records.size(); ++i) (matches(m.records[i]) ? held_idx : rest_idx).push_back(i);

  std::vector<bool> to_test(m.records.size(), false);
  if (axis == SplitAxis::resolution && options.per_campaign_cap > 0) {
    std::shuffle(held_idx.begin(), held_idx.end(), rng);
    std::map<std::string, std::size_t> taken;
    for (std::size_t i : held_idx) {
      const auto& r = m.records[i];
      if (r.label == SampleLabel::bma && taken[r.campaign_id]++ >= options.per_campaign_cap) {
        out.excluded.push_back(r.id);
        continue;
      }
      to_test[i] = true;
    }
    std::sort(out.excluded.begin(), out.excluded.end());
  } else {
    for (std::size_t i : held_idx) to_test[i] = true;
  }
  if (axis == SplitAxis::campaign && options.benign_test_count > 0) {
    std::vector<std::size_t> benign;
    for (std::size_t i : rest_idx)
      if (m.records[i].label == SampleLabel::benign) benign.push_back(i);
    if (options.benign_test_count > benign.size()) throw InvalidInput("split: not enough benign records for the test draw");
    std::shuffle(benign.begin(), benign.end(), rng);
    for (std::size_t k = 0; k < options.benign_test_count; ++k) to_test[benign[k]] = true;
  }
  const std::set<std::string> excluded(out.excluded.begin(), out.excluded.end());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    SampleRecord r = m.records[i];
    if (to_test[i]) {
      r.split = "test";
      out.test.records.push_back(std::move(r));
    } else if (!matches(r) && !excluded.count(r.id)) {
      r.split = "train";
      out.train.records.push_back(std::move(r));
    }
  }
  return out;
}

SplitResult leave_one_out_split(const Manifest& m, SplitAxis axis, const std::string& held, const SplitOptions& options) {
  return leave_out_split(m, axis, std::span<const std::string>(&held, 1), options);
}

std::array<std::string, 5> synthesize_text_levels(std::string_view text, const SynonymTable& table, std::uint64_t seed) {
  constexpr std::array<double, 5> noise = {0.1, 0.15, 0.2, 0.3, 0.5};
  constexpr std::array<double, 5> synonyms = {0.0, 0.3, 0.5, 0.8, 1.0};
  constexpr std::array<double, 5> inserts = {0.0, 0.0, 0.5, 1.0, 2.0};
  std::array<std::string, 5> out;
  for (int k = 0; k < 5; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const std::uint64_t s = mix(seed, ks + 1);
    std::mt19937_64 rng(mix(s, 11));
    std::string t = synonyms[ks] > 0 ? synonym_replace(text, table, mix(s, 7), synonyms[ks]) : std::string(text);
    if (k >= 2) {
      std::vector<std::string> lines;
      std::istringstream in(t);
      for (std::string line; std::getline(in, line);) {
        std::istringstream ws(line);
        std::vector<std::string> words{std::istream_iterator<std::string>(ws), {}};
        if (words.empty()) continue;
        if (k == 3 && words.size() > 2) std::reverse(words.begin() + 1, words.end());
        std::string l;
        for (const auto& w : words) l += (l.empty() ? "" : " ") + w;
        lines.push_back(std::move(l));
      }
      const auto n_insert = static_cast<std::size_t>(inserts[ks] * static_cast<double>(std::max<std::size_t>(lines.size(), 1)) + 0.5);
      for (std::size_t i = 0; i < n_insert; ++i) lines.push_back(neutral_sentence(mix(s, 100 + i)));
      std::shuffle(lines.begin(), lines.end(), rng);
      if (k == 4) {
        std::vector<std::string> words;
        for (const auto& l : lines) {
          std::istringstream ws(l);
          words.insert(words.end(), std::istream_iterator<std::string>(ws), {});
        }
        std::shuffle(words.begin(), words.end(), rng);
        lines.clear();
        for (std::size_t i = 0; i < words.size(); i += 8) {
          std::string l;
          for (std::size_t j = i; j < std::min(words.size(), i + 8); ++j) l += (l.empty() ? "" : " ") + words[j];
          lines.push_back(std::move(l));
        }
      }
      t.clear();
      for (const auto& l : lines) t += (t.empty() ? "" : "\n") + l;
    }
    out[ks] = perturb_text_level1(t, mix(s, 13), noise[ks]);
  }
  return out;
}

TrainSample make_train_sample(const NormalizedImage& img, std::string_view text, int label, const Vocabulary& vocab,
                              const ModelConfig& config) {
  TrainSample s;
  s.image = std::make_shared<const PooledImage>(pool_image(img.image, config.visual_pool));
  s.tokens = tokenize(text, vocab, config.max_tokens);
  s.label = label;
  return s;
}

std::vector<TrainSample> build_train_samples(const Manifest& m, const Vocabulary& vocab, const ModelConfig& config,
                                             const std::filesystem::path& root, unsigned threads) {
  std::vector<TrainSample> out(m.records.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, m.records.size())));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t)
      workers.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < m.records.size(); i += threads) {
            const auto& r = m.records[i];
            std::string text = r.text;
            if (text.empty() && !r.text_path.empty() && std::filesystem::exists(root / r.text_path))
              text = read_file(root / r.text_path);
            out[i] = make_train_sample(sample_image(r, root), text, static_cast<int>(r.label), vocab, config);
          }
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

} // namespace bmaguard
