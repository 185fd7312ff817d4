#include "bmaguard/adversarial.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bmaguard/metrics.hpp"

namespace bmaguard {

PerturbationTier tier_for_level(int level) {
  if (level < 1 || level > kTierCount) throw InvalidInput("perturbation level must be in 1..5");
  return {level, kTierEpsilon255[static_cast<std::size_t>(level - 1)] / 255.0};
}

void PgdConfig::validate() const {
  if (!(epsilon >= 0 && epsilon <= 1)) throw InvalidInput("pgd: epsilon must be in [0,1]");
  if (iterations < 1) throw InvalidInput("pgd: iterations must be >= 1");
  if (step_size < 0) throw InvalidInput("pgd: step size must be positive");
}

template <typename S>
NormalizedImage pgd_attack(const DualBranchClassifier<S>& model, const NormalizedImage& img,
                           const TokenSequence& tokens, int label, const PgdConfig& config, double* final_loss) {
  if (label != 0 && label != 1) throw InvalidInput("pgd: label must be 0 or 1");
  const int w = img.image.width, h = img.image.height, pool = model.config().visual_pool;
  if (w / pool != model.input_width() || h / pool != model.input_height())
    throw InvalidInput("pgd: image does not match the model input size");

  const Vec<S> text = model.text_forward(tokens, Mode::eval);
  const LossGradient<S> loss_grad = [&](const Mat<S>& x, Mat<S>* grad) {
    Tape<S> tape;
    const Vec<S> v = model.visual_forward(pool_tensor<S>(x, w, h, pool), Mode::eval, nullptr,
                                          grad ? &tape.visual : nullptr);
    const Vec<S> logits = model.fuse_and_classify(v, text, Mode::eval, nullptr, grad ? &tape.head : nullptr);
    const Vec<S> p = layers::softmax<S>(logits);
    if (grad) {
      Vec<S> dlogits = p;
      dlogits(label) -= S(1);
      Mat<S> dinput;
      model.backward(tape, dlogits, nullptr, &dinput, false);
      *grad = unpool_gradient<S>(dinput, w, h, pool);
    }
    const double a = static_cast<double>(logits(0)), b = static_cast<double>(logits(1));
    const double mx = std::max(a, b);
    return mx + std::log(std::exp(a - mx) + std::exp(b - mx)) - (label ? b : a);
  };

  const PgdResult<S> r = pgd_maximize<S>(image_tensor<S>(img.image), loss_grad, config);
  if (final_loss) *final_loss = r.loss;
  NormalizedImage out = img;
  for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(r.x.data()[i]), 0.0, 1.0);
    out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

double linf_distance(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidInput("linf_distance: size mismatch");
  int worst = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) worst = std::max(worst, std::abs(a.pixels[i] - b.pixels[i]));
  return worst / 255.0;
}

namespace {

bool ascii_alpha(char c) { return static_cast<unsigned char>(c) < 0x80 && std::isalpha(static_cast<unsigned char>(c)); }

} // namespace

std::string apply_text_noise(std::string_view word, TextNoise rule, std::mt19937_64& rng) {
  std::string out(word);
  std::vector<std::size_t> candidates;
  switch (rule) {
  case TextNoise::o_to_zero:
    std::replace_if(out.begin(), out.end(), [](char c) { return c == 'O' || c == 'o'; }, '0');
    return out;
  case TextNoise::l_to_one:
    std::replace(out.begin(), out.end(), 'l', '1');
    return out;
  case TextNoise::adjacent_swap:
    for (std::size_t i = 0; i + 1 < out.size(); ++i)
      if (static_cast<unsigned char>(out[i]) < 0x80 && static_cast<unsigned char>(out[i + 1]) < 0x80 &&
          out[i] != out[i + 1])
        candidates.push_back(i);
    break;
  case TextNoise::case_flip:
    for (std::size_t i = 0; i < out.size(); ++i)
      if (ascii_alpha(out[i])) candidates.push_back(i);
    break;
  }
  if (candidates.empty()) return out;
  const std::size_t i = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  if (rule == TextNoise::adjacent_swap) {
    std::swap(out[i], out[i + 1]);
  } else {
    const auto c = static_cast<unsigned char>(out[i]);
    out[i] = static_cast<char>(std::isupper(c) ? std::tolower(c) : std::toupper(c));
  }
  return out;
}

std::string perturb_text_level1(std::string_view text, std::uint64_t seed, double probability,
                                std::optional<TextNoise> forced) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 3);
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view word = text.substr(i, j - i);
    if (u(rng) < probability) {
      const TextNoise rule = forced ? *forced : static_cast<TextNoise>(pick(rng));
      out += apply_text_noise(word, rule, rng);
    } else {
      out += word;
    }
    i = j;
  }
  return out;
}

const std::string& ExternalPerturbations::text(std::string_view id, int level) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw NotFound("no perturbations for sample " + std::string(id));
  const auto lv = by_level.find(level);
  if (lv == by_level.end()) throw NotFound("no perturbations at level " + std::to_string(level));
  return lv->second[static_cast<std::size_t>(it - ids.begin())];
}

ExternalPerturbations parse_external_perturbations(std::string_view content) {
  ExternalPerturbations out;
  for (int k = 1; k <= kTierCount; ++k) out.by_level[k];

  std::array<std::optional<std::string>, kTierCount> blocks;
  std::string id;
  std::size_t header_line = 0;
  int current = 0;
  auto finish_block = [&] {
    if (current == 0) return;
    auto& s = *blocks[static_cast<std::size_t>(current - 1)];
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    current = 0;
  };
  auto finish_sample = [&](std::size_t line_no) {
    finish_block();
    if (!header_line) return;
    for (int k = 1; k <= kTierCount; ++k)
      if (!blocks[static_cast<std::size_t>(k - 1)])
        throw ParseError("sample " + id + " is missing Level " + std::to_string(k), line_no);
    out.ids.push_back(id);
    for (int k = 1; k <= kTierCount; ++k) out.by_level[k].push_back(std::move(*blocks[static_cast<std::size_t>(k - 1)]));
    blocks = {};
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    const bool at_end = end == content.size();
    pos = end + 1;
    ++line_no;
    if (at_end && line.empty()) break;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.starts_with("# id ")) {
      finish_sample(line_no);
      id = std::string(line.substr(5));
      while (!id.empty() && std::isspace(static_cast<unsigned char>(id.back()))) id.pop_back();
      if (id.empty()) throw ParseError("empty sample id", line_no);
      if (std::find(out.ids.begin(), out.ids.end(), id) != out.ids.end())
        throw ParseError("duplicate sample id " + id, line_no);
      header_line = line_no;
      continue;
    }
    if (line.starts_with("Level ")) {
      const auto colon = line.find(':');
      const std::string_view num = line.substr(6, colon == std::string_view::npos ? 0 : colon - 6);
      int k = 0;
      const bool numeric = !num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      if (numeric && num.size() < 3) k = std::stoi(std::string(num));
      if (!numeric || k < 1 || k > kTierCount) throw ParseError("malformed level label: " + std::string(line), line_no);
      if (!header_line) throw ParseError("level label before any '# id' header", line_no);
      finish_block();
      auto& slot = blocks[static_cast<std::size_t>(k - 1)];
      if (slot) throw ParseError("duplicate Level " + std::to_string(k) + " for sample " + id, line_no);
      std::string_view rest = line.substr(colon + 1);
      if (rest.starts_with(' ')) rest.remove_prefix(1);
      slot = std::string(rest);
      current = k;
      continue;
    }
    if (current == 0) {
      if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
      throw ParseError("text outside a 'Level k:' block", line_no);
    }
    auto& s = *blocks[static_cast<std::size_t>(current - 1)];
    s += '\n';
    s += line;
  }
  finish_sample(line_no);
  return out;
}

ExternalPerturbations load_external_perturbations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_external_perturbations(ss.str());
}

std::string format_external_perturbations(const ExternalPerturbations& p) {
  std::string out;
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    out += "# id " + p.ids[i] + "\n";
    for (int k = 1; k <= kTierCount; ++k) out += "Level " + std::to_string(k) + ": " + p.by_level.at(k)[i] + "\n";
  }
  return out;
}

void write_external_perturbations(const std::filesystem::path& path, const ExternalPerturbations& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_external_perturbations(p);
  if (!out) throw IoError("short write to " + path.string());
}

std::size_t curriculum_per_tier(std::size_t n_clean, int clean_parts, int tier_parts) {
  if (clean_parts <= 0 || tier_parts < 0) throw InvalidInput("curriculum ratio must be positive");
  return n_clean * static_cast<std::size_t>(tier_parts) / static_cast<std::size_t>(clean_parts);
}

Curriculum build_adv_curriculum(std::span<const TrainSample> clean, std::span<const std::size_t> sources,
                                std::size_t per_tier,
                                const std::function<TrainSample(std::size_t, const PerturbationTier&)>& generator,
                                std::uint64_t seed) {
  if (clean.empty()) throw InvalidInput("curriculum: empty clean set");
  Curriculum c;
  c.samples.assign(clean.begin(), clean.end());
  c.tiers.assign(clean.size(), 0);
  c.origins.resize(clean.size());
  std::iota(c.origins.begin(), c.origins.end(), 0);
  if (per_tier == 0) return c;
  if (sources.empty()) throw InvalidInput("curriculum: no adversarial sources");
  for (std::size_t s : sources)
    if (s >= clean.size()) throw InvalidInput("curriculum: source index out of range");

  std::mt19937_64 rng(seed);
  for (int level = 1; level <= kTierCount; ++level) {
    const PerturbationTier tier = tier_for_level(level);
    std::vector<std::size_t> order(sources.begin(), sources.end());
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < per_tier; ++j) {
      const std::size_t origin = order[j % order.size()];
      c.samples.push_back(generator(origin, tier));
      c.tiers.push_back(level);
      c.origins.push_back(origin);
    }
  }
  return c;
}

PerturbationMetrics perturbation_metrics(std::string_view original, std::string_view perturbed,
                                         const std::function<Eigen::VectorXd(std::string_view)>& embed) {
  PerturbationMetrics m;
  m.levenshtein = levenshtein(original, perturbed);
  m.rouge_l_f1 = rouge_l_f1(original, perturbed);
  m.semantic_similarity = cosine_similarity(embed(original), embed(perturbed));
  return m;
}

template <typename S>
PerturbationMetrics perturbation_metrics(std::string_view original, std::string_view perturbed,
                                         const DualBranchClassifier<S>& model, const Vocabulary& vocab) {
  return perturbation_metrics(original, perturbed, [&](std::string_view t) -> Eigen::VectorXd {
    return model.text_forward(tokenize(t, vocab, model.config().max_tokens), Mode::eval).template cast<double>();
  });
}

#define BMAGUARD_INSTANTIATE(S)                                                                                       \
  template NormalizedImage pgd_attack<S>(const DualBranchClassifier<S>&, const NormalizedImage&,                      \
                                         const TokenSequence&, int, const PgdConfig&, double*);                       \
  template PerturbationMetrics perturbation_metrics<S>(std::string_view, std::string_view,                            \
                                                       const DualBranchClassifier<S>&, const Vocabulary&);
BMAGUARD_INSTANTIATE(float)
BMAGUARD_INSTANTIATE(double)
#undef BMAGUARD_INSTANTIATE

} // namespace bmaguard
