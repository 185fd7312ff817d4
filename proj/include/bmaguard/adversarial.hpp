// PGD image attacks, character-level text noise, externally generated text
// perturbations and the adversarial training curriculum.

#ifndef BMAGUARD_ADVERSARIAL_HPP_
#define BMAGUARD_ADVERSARIAL_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmaguard/error.hpp"
#include "bmaguard/imaging.hpp"
#include "bmaguard/model/classifier.hpp"
#include "bmaguard/model/train.hpp"

namespace bmaguard {

inline constexpr int kTierCount = 5;
/// Image budgets of levels 1..5, in units of 1/255.
inline constexpr std::array<int, kTierCount> kTierEpsilon255 = {2, 4, 8, 16, 32};

struct PerturbationTier {
  int level = 1;
  double epsilon = 2.0 / 255.0;
};

/// Throws InvalidInput outside 1..5.
PerturbationTier tier_for_level(int level);

struct PgdConfig {
  double epsilon = 8.0 / 255.0;
  /// Non-positive means epsilon / 4.
  double step_size = 0;
  int iterations = 10;
  bool random_start = false;
  std::uint64_t seed = 0;

  double effective_step() const noexcept { return step_size > 0 ? step_size : epsilon / 4; }
  void validate() const;
};

template <typename S>
struct PgdResult {
  Mat<S> x;
  double loss = 0;
  double initial_loss = 0;
};

/// loss(x), writing d(loss)/dx into `grad` when non-null.
template <typename S>
using LossGradient = std::function<double(const Mat<S>& x, Mat<S>* grad)>;

/// Sign-gradient ascent from x0 inside the L-inf ball of radius epsilon,
/// clamped to [0,1] after every step. Returns the best iterate seen
/// (x0 included).
template <typename S>
PgdResult<S> pgd_maximize(const Mat<S>& x0, const LossGradient<S>& loss_grad, const PgdConfig& config) {
  config.validate();
  PgdResult<S> best{x0, 0, 0};
  if (config.epsilon == 0) {
    best.loss = best.initial_loss = loss_grad(x0, nullptr);
    return best;
  }
  const S eps = static_cast<S>(config.epsilon);
  const S step = static_cast<S>(config.effective_step());
  const Mat<S> lo = (x0.array() - eps).max(S(0)).matrix();
  const Mat<S> hi = (x0.array() + eps).min(S(1)).matrix();

  Mat<S> x = x0;
  if (config.random_start) {
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(-config.epsilon, config.epsilon);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += static_cast<S>(u(rng));
    x = x.cwiseMax(lo).cwiseMin(hi);
  }
  best.loss = -std::numeric_limits<double>::infinity();
  Mat<S> grad;
  for (int it = 0; it <= config.iterations; ++it) {
    const bool last = it == config.iterations;
    const double loss = loss_grad(x, last ? nullptr : &grad);
    if (it == 0) best.initial_loss = loss;
    if (loss > best.loss) {
      best.loss = loss;
      best.x = x;
    }
    if (last) break;
    x += step * grad.unaryExpr([](S g) { return static_cast<S>((g > 0) - (g < 0)); });
    x = x.cwiseMax(lo).cwiseMin(hi);
  }
  return best;
}

/// Maximizes the cross-entropy of `label` through the visual branch of the
/// model; the text embedding is computed once and held fixed. `img` must
/// be a normalized 960x540 canvas. The result is quantized back to 8 bits,
/// which keeps the L-inf bound when epsilon is a multiple of 1/255.
template <typename S>
NormalizedImage pgd_attack(const DualBranchClassifier<S>& model, const NormalizedImage& img,
                           const TokenSequence& tokens, int label, const PgdConfig& config,
                           double* final_loss = nullptr);

/// Largest per-channel absolute difference, in [0,1] units.
double linf_distance(const RgbImage& a, const RgbImage& b);

enum class TextNoise { adjacent_swap, case_flip, o_to_zero, l_to_one };

/// Applies one noise rule to a single word; the character count is kept.
/// O/o become 0, l becomes 1 everywhere in the word. Swap and case flip pick
/// a position with `rng`.
std::string apply_text_noise(std::string_view word, TextNoise rule, std::mt19937_64& rng);

/// Each whitespace-delimited word is hit with `probability`, using a rule
/// drawn uniformly (or `forced` when set). Whitespace is preserved.
std::string perturb_text_level1(std::string_view text, std::uint64_t seed, double probability = 0.1,
                                std::optional<TextNoise> forced = std::nullopt);

/// Per sample: "# id <sample-id>", then "Level k:" blocks for k = 1..5.
struct ExternalPerturbations {
  std::vector<std::string> ids;
  /// level -> texts, aligned with `ids`.
  std::map<int, std::vector<std::string>> by_level;

  const std::string& text(std::string_view id, int level) const;
};

ExternalPerturbations parse_external_perturbations(std::string_view content);
ExternalPerturbations load_external_perturbations(const std::filesystem::path& path);
std::string format_external_perturbations(const ExternalPerturbations& p);
void write_external_perturbations(const std::filesystem::path& path, const ExternalPerturbations& p);

/// Adversarial samples per tier for `n_clean` clean samples at a
/// clean:per-tier ratio of `clean_parts`:`tier_parts` (default 10:2).
std::size_t curriculum_per_tier(std::size_t n_clean, int clean_parts = 10, int tier_parts = 2);

struct Curriculum {
  std::vector<TrainSample> samples;
  /// 0 for clean samples, else the tier level.
  std::vector<int> tiers;
  std::vector<std::size_t> origins;
};

/// Clean set followed by `per_tier` generated samples for each of the five
/// tiers. Origins cycle through a seed-shuffled copy of `sources` (indices
/// into `clean`).
Curriculum build_adv_curriculum(std::span<const TrainSample> clean, std::span<const std::size_t> sources,
                                std::size_t per_tier,
                                const std::function<TrainSample(std::size_t, const PerturbationTier&)>& generator,
                                std::uint64_t seed);

struct PerturbationMetrics {
  std::size_t levenshtein = 0;
  double semantic_similarity = 0;
  double rouge_l_f1 = 0;
};

/// Semantic similarity is the cosine between `embed` outputs.
PerturbationMetrics perturbation_metrics(std::string_view original, std::string_view perturbed,
                                         const std::function<Eigen::VectorXd(std::string_view)>& embed);

/// Uses the eval-mode text-branch embedding of `model`.
template <typename S>
PerturbationMetrics perturbation_metrics(std::string_view original, std::string_view perturbed,
                                         const DualBranchClassifier<S>& model, const Vocabulary& vocab);

} // namespace bmaguard

#endif
