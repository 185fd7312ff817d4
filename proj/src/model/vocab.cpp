#include "bmaguard/model/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "bmaguard/error.hpp"

namespace bmaguard {

Vocabulary::Vocabulary() {
  add("[PAD]");
  add("[UNK]");
  add("[CLS]");
}

void Vocabulary::add(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, int min_frequency, int max_size) {
  std::map<std::string, int> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, int>> ranked;
  for (auto& [w, c] : counts)
    if (c >= min_frequency) ranked.emplace_back(w, c);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  for (auto& [w, c] : ranked) {
    if (v.size() >= max_size) break;
    if (!v.ids_.contains(w)) v.add(w);
  }
  return v;
}

int Vocabulary::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw InvalidInput("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected token<TAB>id", lineno);
    int id = -1;
    try {
      id = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("bad id", lineno);
    }
    if (id != v.size()) throw ParseError("ids must be dense and ascending", lineno);
    v.add(line.substr(0, tab));
  }
  if (v.size() < 3 || v.tokens_[kPad] != "[PAD]" || v.tokens_[kUnk] != "[UNK]" || v.tokens_[kCls] != "[CLS]")
    throw ParseError("vocabulary must start with [PAD], [UNK], [CLS]", 0);
  return v;
}

int TokenSequence::length() const noexcept {
  return static_cast<int>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_length) {
  if (max_length < 1) throw InvalidInput("max_length must be positive");
  TokenSequence seq;
  const auto n = static_cast<std::size_t>(max_length);
  seq.ids.reserve(n);
  seq.ids.push_back(Vocabulary::kCls);
  for (const auto& w : split_words(text)) {
    if (seq.ids.size() >= n) break;
    seq.ids.push_back(vocab.id(w));
  }
  seq.attention_mask.assign(seq.ids.size(), 1);
  seq.ids.resize(n, Vocabulary::kPad);
  seq.attention_mask.resize(n, 0);
  return seq;
}

} // namespace bmaguard
