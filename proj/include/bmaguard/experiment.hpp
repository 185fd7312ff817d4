// Desk-scale experiments over the synthetic corpus: data preparation,
// training, scoring and the tiered adversarial attack/defense runs.

#ifndef BMAGUARD_EXPERIMENT_HPP_
#define BMAGUARD_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bmaguard/adversarial.hpp"
#include "bmaguard/corpus/corpus.hpp"
#include "bmaguard/metrics.hpp"
#include "bmaguard/model/train.hpp"

namespace bmaguard {

/// 1,200 benign and 300 BMA pages over 12 campaigns and 7 resolutions.
/// Holding out four campaigns with 200 benign test pages leaves 1,000/200
/// for training and 200/100 for testing.
CorpusSpec desk_corpus_spec(std::uint64_t seed = 7);
std::vector<std::string> desk_held_out_campaigns();

/// Production dimensions with the token window cut to 128.
ModelConfig desk_model_config(int vocab_size);

/// AdamW, learning rate 5e-4, batch 32, weights from the class counts.
TrainConfig desk_train_config(std::size_t n_benign, std::size_t n_bma, int epochs = 3, std::uint64_t seed = 0);

struct ExperimentData {
  SplitResult split;
  Vocabulary vocab;
  ModelConfig model_config;
  std::vector<TrainSample> train;
  std::vector<TrainSample> test;
};

/// Campaign hold-out split, vocabulary from training texts only, then
/// pooled and tokenized samples for both sides.
ExperimentData prepare_experiment(const Manifest& corpus, std::span<const std::string> held_out_campaigns,
                                  std::size_t benign_test_count, const std::filesystem::path& root = {},
                                  std::uint64_t seed = 1);

using EpochCallback = std::function<void(int epoch, const EpochStats&)>;

/// Runs config.epochs epochs with a fresh optimizer; the shuffle RNG is
/// seeded from config.seed.
template <typename S>
std::vector<EpochStats> fit(DualBranchClassifier<S>& model, std::span<const TrainSample> data,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

template <typename S>
ScoredLabels score(const DualBranchClassifier<S>& model, std::span<const TrainSample> data);

/// Fraction of samples whose predicted class (score > threshold) matches.
double accuracy(const ScoredLabels& data, double threshold = 0.5);

/// Rule-based Level 1..5 texts for every record, in file form.
ExternalPerturbations synthesize_perturbations(const Manifest& m, const SynonymTable& table, std::uint64_t seed);

/// PGD at the tier's epsilon against `model` for the record's true label,
/// paired with the record's text at the tier's level.
template <typename S>
TrainSample tier_attack(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const SampleRecord& record,
                        const ExternalPerturbations& texts, const PerturbationTier& tier,
                        const std::filesystem::path& root = {}, const PgdConfig& base = {});

/// Same as tier_attack with the clean text (image-only attack).
template <typename S>
TrainSample image_attack(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const SampleRecord& record,
                         double epsilon, const std::filesystem::path& root = {}, const PgdConfig& base = {});

/// tier_attack over every record.
template <typename S>
std::vector<TrainSample> tier_attack_all(const DualBranchClassifier<S>& model, const Vocabulary& vocab,
                                         std::span<const SampleRecord> records, const ExternalPerturbations& texts,
                                         const PerturbationTier& tier, const std::filesystem::path& root = {},
                                         const PgdConfig& base = {});

/// Clean training samples plus curriculum_per_tier(n) samples per tier,
/// each forged by tier_attack against `attacker`.
template <typename S>
Curriculum adversarial_curriculum(const DualBranchClassifier<S>& attacker, const ExperimentData& data,
                                  const ExternalPerturbations& texts, std::uint64_t seed,
                                  const std::filesystem::path& root = {});

/// Adversarial training: each epoch forges a fresh curriculum against the
/// current weights, then trains one pass over it. Class weights follow the
/// curriculum counts.
template <typename S>
std::vector<EpochStats> adversarial_fit(DualBranchClassifier<S>& model, const ExperimentData& data,
                                        const ExternalPerturbations& texts, const TrainConfig& config,
                                        const EpochCallback& on_epoch = {}, const std::filesystem::path& root = {});

} // namespace bmaguard

#endif
