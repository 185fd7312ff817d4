#include <doctest.h>

#include "bmaguard/error.hpp"
#include "bmaguard/model/vocab.hpp"
#include "test_support.hpp"

using namespace bmaguard;

TEST_CASE("words are lowercased and split on punctuation") {
  CHECK(split_words("Click ALLOW, to-continue!") == std::vector<std::string>{"click", "allow", "to", "continue"});
  CHECK(split_words("  ").empty());
  CHECK(split_words("caf\xC3\xA9 x") == std::vector<std::string>{"caf\xC3\xA9", "x"});
}

TEST_CASE("vocabulary keeps frequent words in frequency order") {
  const std::vector<std::string> texts = {"allow allow allow now", "now click allow", "rare now"};
  const Vocabulary v = Vocabulary::build(texts, 2);
  REQUIRE(v.size() == 5);
  CHECK(v.token(Vocabulary::kPad) == "[PAD]");
  CHECK(v.token(3) == "allow");
  CHECK(v.token(4) == "now");
  CHECK(v.id("click") == Vocabulary::kUnk);
  CHECK(tokenize("ALLOW", v, 4).ids[1] == 3);
}

TEST_CASE("vocabulary size cap includes specials") {
  const std::vector<std::string> texts = {"a a b b c c d d"};
  CHECK(Vocabulary::build(texts, 1, 5).size() == 5);
}

TEST_CASE("long inputs are truncated to the window") {
  std::string text;
  for (int i = 0; i < 600; ++i) text += "word ";
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{text});
  const TokenSequence t = tokenize(text, v);
  CHECK(t.ids.size() == 512);
  CHECK(t.length() == 512);
  CHECK(t.ids[0] == Vocabulary::kCls);
}

TEST_CASE("short inputs are padded with a zero mask") {
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{"a b a b"});
  const TokenSequence t = tokenize("a b zzz", v, 8);
  CHECK(t.length() == 4);
  CHECK(t.ids == std::vector<int>{Vocabulary::kCls, v.id("a"), v.id("b"), Vocabulary::kUnk, 0, 0, 0, 0});
  for (std::size_t i = 0; i < t.ids.size(); ++i) CHECK((t.attention_mask[i] == 1) == (t.ids[i] != Vocabulary::kPad));
  CHECK(tokenize("", v, 4).length() == 1);
  CHECK_THROWS_AS(tokenize("a", v, 0), InvalidInput);
}

TEST_CASE("vocabulary file round trip") {
  test::TempDir dir("vocab");
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{"x y z x y z w w"}, 1);
  v.save(dir.path() / "v.tsv");
  CHECK(Vocabulary::load(dir.path() / "v.tsv") == v);
  CHECK_THROWS(Vocabulary::load(dir.path() / "missing.tsv"));
}
