#include "bmaguard/experiment.hpp"

#include <random>

#include "bmaguard/error.hpp"

namespace bmaguard {

CorpusSpec desk_corpus_spec(std::uint64_t seed) {
  CorpusSpec s;
  s.n_benign = 1200;
  s.n_bma = 300;
  s.campaigns = campaign_ids(12);
  s.resolutions = {{1920, 1080}, {1366, 768}, {1536, 864}, {1280, 720}, {2560, 1440}, {360, 640}, {414, 896}};
  s.seed = seed;
  return s;
}

std::vector<std::string> desk_held_out_campaigns() { return {"c0", "c1", "c2", "c3"}; }

ModelConfig desk_model_config(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.max_tokens = 128;
  return c;
}

TrainConfig desk_train_config(std::size_t n_benign, std::size_t n_bma, int epochs, std::uint64_t seed) {
  TrainConfig t;
  t.optimizer = OptimizerKind::adamw;
  t.learning_rate = 5e-4;
  t.batch_size = 32;
  t.class_weights = class_weights_from_counts(n_benign, n_bma);
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

ExperimentData prepare_experiment(const Manifest& corpus, std::span<const std::string> held_out_campaigns,
                                  std::size_t benign_test_count, const std::filesystem::path& root,
                                  std::uint64_t seed) {
  ExperimentData d;
  SplitOptions opts;
  opts.benign_test_count = benign_test_count;
  opts.seed = seed;
  d.split = leave_out_split(corpus, SplitAxis::campaign, held_out_campaigns, opts);
  std::vector<std::string> texts;
  texts.reserve(d.split.train.records.size());
  for (const auto& r : d.split.train.records) texts.push_back(r.text);
  d.vocab = Vocabulary::build(texts);
  d.model_config = desk_model_config(d.vocab.size());
  d.train = build_train_samples(d.split.train, d.vocab, d.model_config, root);
  d.test = build_train_samples(d.split.test, d.vocab, d.model_config, root);
  return d;
}

template <typename S>
std::vector<EpochStats> fit(DualBranchClassifier<S>& model, std::span<const TrainSample> data,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  Optimizer<S> opt(config, model.params());
  std::mt19937_64 rng(config.seed);
  std::vector<EpochStats> out;
  for (int e = 0; e < config.epochs; ++e) {
    out.push_back(train_epoch(model, data, config, opt, rng));
    if (on_epoch) on_epoch(e + 1, out.back());
  }
  return out;
}

template <typename S>
ScoredLabels score(const DualBranchClassifier<S>& model, std::span<const TrainSample> data) {
  ScoredLabels s;
  s.scores = predict_batch(model, data);
  s.labels.reserve(data.size());
  for (const auto& d : data) s.labels.push_back(d.label);
  return s;
}

double accuracy(const ScoredLabels& data, double threshold) {
  if (data.scores.size() != data.labels.size()) throw InvalidInput("accuracy: size mismatch");
  if (data.scores.empty()) throw UndefinedMetric("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.scores.size(); ++i) hit += (data.scores[i] > threshold ? 1 : 0) == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(data.scores.size());
}

ExternalPerturbations synthesize_perturbations(const Manifest& m, const SynonymTable& table, std::uint64_t seed) {
  ExternalPerturbations p;
  std::uint64_t k = 0;
  for (const auto& r : m.records) {
    const auto levels = synthesize_text_levels(r.text, table, seed ^ (0x9e3779b97f4a7c15ULL * ++k));
    p.ids.push_back(r.id);
    for (int l = 1; l <= kTierCount; ++l) p.by_level[l].push_back(levels[static_cast<std::size_t>(l - 1)]);
  }
  return p;
}

namespace {

template <typename S>
TrainSample attack_with_text(const DualBranchClassifier<S>& model, const Vocabulary& vocab,
                             const SampleRecord& record, std::string_view text, double epsilon,
                             const std::filesystem::path& root, const PgdConfig& base) {
  const auto& cfg = model.config();
  const NormalizedImage img = sample_image(record, root);
  const TokenSequence tokens = tokenize(text, vocab, cfg.max_tokens);
  PgdConfig pc = base;
  pc.epsilon = epsilon;
  const int label = static_cast<int>(record.label);
  const NormalizedImage adv = pgd_attack(model, img, tokens, label, pc);
  TrainSample s;
  s.image = std::make_shared<const PooledImage>(pool_image(adv.image, cfg.visual_pool));
  s.tokens = tokens;
  s.label = label;
  return s;
}

} // namespace

template <typename S>
TrainSample tier_attack(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const SampleRecord& record,
                        const ExternalPerturbations& texts, const PerturbationTier& tier,
                        const std::filesystem::path& root, const PgdConfig& base) {
  return attack_with_text(model, vocab, record, texts.text(record.id, tier.level), tier.epsilon, root, base);
}

template <typename S>
TrainSample image_attack(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const SampleRecord& record,
                         double epsilon, const std::filesystem::path& root, const PgdConfig& base) {
  return attack_with_text(model, vocab, record, record.text, epsilon, root, base);
}

template <typename S>
std::vector<TrainSample> tier_attack_all(const DualBranchClassifier<S>& model, const Vocabulary& vocab,
                                         std::span<const SampleRecord> records, const ExternalPerturbations& texts,
                                         const PerturbationTier& tier, const std::filesystem::path& root,
                                         const PgdConfig& base) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tier_attack(model, vocab, r, texts, tier, root, base));
  return out;
}

template <typename S>
Curriculum adversarial_curriculum(const DualBranchClassifier<S>& attacker, const ExperimentData& data,
                                  const ExternalPerturbations& texts, std::uint64_t seed,
                                  const std::filesystem::path& root) {
  std::vector<std::size_t> sources(data.train.size());
  for (std::size_t i = 0; i < sources.size(); ++i) sources[i] = i;
  const auto& records = data.split.train.records;
  return build_adv_curriculum(
      data.train, sources, curriculum_per_tier(data.train.size()),
      [&](std::size_t origin, const PerturbationTier& tier) {
        return tier_attack(attacker, data.vocab, records[origin], texts, tier, root);
      },
      seed);
}

template <typename S>
std::vector<EpochStats> adversarial_fit(DualBranchClassifier<S>& model, const ExperimentData& data,
                                        const ExternalPerturbations& texts, const TrainConfig& config,
                                        const EpochCallback& on_epoch, const std::filesystem::path& root) {
  config.validate();
  Optimizer<S> opt(config, model.params());
  std::mt19937_64 rng(config.seed);
  TrainConfig epoch_config = config;
  std::vector<EpochStats> out;
  for (int e = 0; e < config.epochs; ++e) {
    const Curriculum c = adversarial_curriculum(model, data, texts, config.seed + static_cast<std::uint64_t>(e) + 1, root);
    std::size_t benign = 0;
    for (const auto& s : c.samples) benign += s.label == 0;
    epoch_config.class_weights = class_weights_from_counts(benign, c.samples.size() - benign);
    out.push_back(train_epoch(model, std::span<const TrainSample>(c.samples), epoch_config, opt, rng));
    if (on_epoch) on_epoch(e + 1, out.back());
  }
  return out;
}

#define BMAGUARD_INSTANTIATE(S)                                                                                        \
  template std::vector<EpochStats> fit<S>(DualBranchClassifier<S>&, std::span<const TrainSample>, const TrainConfig&,  \
                                          const EpochCallback&);                                                       \
  template ScoredLabels score<S>(const DualBranchClassifier<S>&, std::span<const TrainSample>);                         \
  template TrainSample tier_attack<S>(const DualBranchClassifier<S>&, const Vocabulary&, const SampleRecord&,          \
                                      const ExternalPerturbations&, const PerturbationTier&,                           \
                                      const std::filesystem::path&, const PgdConfig&);                                 \
  template TrainSample image_attack<S>(const DualBranchClassifier<S>&, const Vocabulary&, const SampleRecord&, double, \
                                       const std::filesystem::path&, const PgdConfig&);                                \
  template std::vector<TrainSample> tier_attack_all<S>(const DualBranchClassifier<S>&, const Vocabulary&,              \
                                                       std::span<const SampleRecord>, const ExternalPerturbations&,    \
                                                       const PerturbationTier&, const std::filesystem::path&,          \
                                                       const PgdConfig&);                                              \
  template Curriculum adversarial_curriculum<S>(const DualBranchClassifier<S>&, const ExperimentData&,                 \
                                                const ExternalPerturbations&, std::uint64_t,                           \
                                                const std::filesystem::path&);                                 \
  template std::vector<EpochStats> adversarial_fit<S>(DualBranchClassifier<S>&, const ExperimentData&,                 \
                                                      const ExternalPerturbations&, const TrainConfig&,                \
                                                      const EpochCallback&, const std::filesystem::path&);
BMAGUARD_INSTANTIATE(float)
BMAGUARD_INSTANTIATE(double)
#undef BMAGUARD_INSTANTIATE

} // namespace bmaguard
