// Synthetic screenshot+text corpora, manifests, augmentation and
// leave-out evaluation splits.

#ifndef BMAGUARD_CORPUS_CORPUS_HPP_
#define BMAGUARD_CORPUS_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bmaguard/imaging.hpp"
#include "bmaguard/model/config.hpp"
#include "bmaguard/model/train.hpp"
#include "bmaguard/model/vocab.hpp"

namespace bmaguard {

enum class SampleLabel { benign = 0, bma = 1 };

std::string_view to_string(SampleLabel l) noexcept;
SampleLabel label_from_string(std::string_view s);

struct Resolution {
  int width = 0;
  int height = 0;

  friend auto operator<=>(const Resolution&, const Resolution&) = default;
};

/// "WxH".
std::string to_string(Resolution r);
Resolution parse_resolution(std::string_view s);

struct SampleRecord {
  std::string id;
  std::string image_path;
  std::string text_path;
  SampleLabel label = SampleLabel::benign;
  std::string campaign_id;
  Resolution resolution;
  std::string split;
  /// Synthetic records re-render from this seed.
  std::optional<std::uint64_t> render_seed;
  /// Set on augmented copies: seed of the two image transforms.
  std::optional<std::uint64_t> augment_seed;
  /// The stored image is already a 960x540 canvas.
  bool prenormalized = false;
  /// Paired text; kept in memory, stored in the text sidecar on disk.
  std::string text;
};

void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);

struct Manifest {
  std::vector<SampleRecord> records;
  std::uint64_t seed = 0;

  std::size_t n_benign() const noexcept;
  std::size_t n_bma() const noexcept;
  std::vector<Resolution> resolutions() const;
  std::vector<std::string> campaigns() const;
  const SampleRecord& find(std::string_view id) const;
};

/// Counts and inventories, as written to the ".meta.json" sidecar.
nlohmann::json manifest_meta(const Manifest& m);

/// JSON lines, plus "<path>.meta.json".
void write_manifest(const std::filesystem::path& path, const Manifest& m);
/// Texts are read from the sidecars under the manifest directory when
/// present. Malformed lines raise ParseError with the line number.
Manifest read_manifest(const std::filesystem::path& path);

struct CorpusSpec {
  std::size_t n_benign = 100;
  std::size_t n_bma = 20;
  std::vector<Resolution> resolutions = {{1920, 1080}};
  /// BMA campaign ids; generated as c0..c{n-1} when given by count.
  std::vector<std::string> campaigns = {"c0", "c1"};
  std::uint64_t seed = 0;
};

std::vector<std::string> campaign_ids(int count);

/// BMA records are spread round-robin over the campaigns; resolutions are
/// drawn uniformly. Texts are produced eagerly, images on demand.
Manifest generate_synthetic_corpus(const CorpusSpec& spec);

struct RenderedPage {
  RgbImage image;
  std::string text;
};

/// Deterministic page for a synthetic record at its native resolution.
RenderedPage render_page(const SampleRecord& r);

/// Normalized (and, for augmented copies, transformed) canvas of a record.
/// Non-synthetic images are read from `root` / image_path.
NormalizedImage sample_image(const SampleRecord& r, const std::filesystem::path& root = {});

/// Writes PNGs, text sidecars and the manifest under `root`. Augmented
/// records are stored as their 960x540 canvases.
void write_corpus(const std::filesystem::path& root, const Manifest& m);

using SynonymTable = std::map<std::string, std::vector<std::string>, std::less<>>;

/// "word<TAB>syn1,syn2" lines; '#' comments and blank lines ignored.
/// Synonyms must be single words.
SynonymTable parse_synonym_table(std::string_view content);
SynonymTable load_synonym_table(const std::filesystem::path& path);

/// Each whitespace token whose lowercased letters hit the table is replaced
/// with `probability` by a seed-chosen synonym. Punctuation around the word
/// and the separators are kept, so the token count does not change.
std::string synonym_replace(std::string_view text, const SynonymTable& table, std::uint64_t seed,
                            double probability = 0.5);

/// Adds factor-1 augmented copies of every BMA record (two image
/// transforms and synonym replacement). Benign records are untouched.
Manifest augment_dataset(const Manifest& m, std::uint64_t seed, const SynonymTable& table, int factor);

enum class SplitAxis { resolution, campaign };

struct SplitOptions {
  /// Benign records moved to the test side for campaign splits.
  std::size_t benign_test_count = 0;
  /// Cap on BMA test records per campaign for resolution splits (0 = none).
  std::size_t per_campaign_cap = 10;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Manifest train;
  Manifest test;
  /// Held-out records dropped by the per-campaign cap.
  std::vector<std::string> excluded;
};

/// Holds out every record matching one of `held` on `axis`. Unknown values
/// raise NotFound.
SplitResult leave_out_split(const Manifest& m, SplitAxis axis, std::span<const std::string> held,
                            const SplitOptions& options = {});
SplitResult leave_one_out_split(const Manifest& m, SplitAxis axis, const std::string& held,
                                const SplitOptions& options = {});

/// One sentence in the style of benign page copy.
std::string neutral_sentence(std::uint64_t seed);

/// Synthetic Level 1..5 rewrites of `text` with increasing strength. Level
/// 1 is the character-noise rule set. Level 2 adds synonym swaps, level 3
/// inserts benign-looking sentences between lines and reorders them, level
/// 4 also reverses word order with more insertions, level 5 shuffles all
/// words under heavy noise.
std::array<std::string, 5> synthesize_text_levels(std::string_view text, const SynonymTable& table, std::uint64_t seed);

/// Pools the canvas and tokenizes the text of every record, using up to
/// `threads` workers (0 = hardware concurrency).
std::vector<TrainSample> build_train_samples(const Manifest& m, const Vocabulary& vocab, const ModelConfig& config,
                                             const std::filesystem::path& root = {}, unsigned threads = 0);

TrainSample make_train_sample(const NormalizedImage& img, std::string_view text, int label, const Vocabulary& vocab,
                              const ModelConfig& config);

} // namespace bmaguard

#endif
