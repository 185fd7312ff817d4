// Word-level vocabulary and tokenizer for the text branch.

#ifndef BMAGUARD_MODEL_VOCAB_HPP_
#define BMAGUARD_MODEL_VOCAB_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bmaguard {

inline constexpr int kMaxTokens = 512;

class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  /// Specials only.
  Vocabulary();

  /// Words seen at least `min_frequency` times, most frequent first (ties
  /// lexicographic), capped at `max_size` entries including the specials.
  static Vocabulary build(std::span<const std::string> texts, int min_frequency = 2, int max_size = 8192);

  int id(std::string_view word) const;
  const std::string& token(int id) const;
  int size() const noexcept { return static_cast<int>(tokens_.size()); }

  /// One "token<TAB>id" line per entry, ids ascending.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Always `max_length` long; `attention_mask` is 1 exactly where ids != PAD.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;

  /// Number of non-padding positions (CLS included).
  int length() const noexcept;
};

/// Lowercases and splits on ASCII non-alphanumerics; bytes >= 0x80 are kept
/// as word characters.
std::vector<std::string> split_words(std::string_view text);

/// CLS + vocabulary ids (UNK fallback), truncated then padded to max_length.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_length = kMaxTokens);

} // namespace bmaguard

#endif
