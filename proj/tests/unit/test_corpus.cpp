#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bmaguard/corpus/corpus.hpp"
#include "bmaguard/error.hpp"
#include "bmaguard/metrics.hpp"
#include "test_support.hpp"

using namespace bmaguard;
namespace fs = std::filesystem;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 3) {
  CorpusSpec s;
  s.n_benign = 100;
  s.n_bma = 20;
  s.resolutions = {{1920, 1080}};
  s.campaigns = {"c0", "c1"};
  s.seed = seed;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> ids(const Manifest& m) {
  std::set<std::string> out;
  for (const auto& r : m.records) out.insert(r.id);
  return out;
}

// Logistic regression over word presence, fitted by batch gradient descent.
struct BagOfWords {
  std::map<std::string, std::size_t> index;
  Eigen::VectorXd w;
  double b = 0;

  Eigen::VectorXd features(const std::string& text) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(index.size()));
    for (const auto& word : split_words(text)) {
      const auto it = index.find(word);
      if (it != index.end()) x(static_cast<Eigen::Index>(it->second)) = 1;
    }
    return x;
  }

  void fit(const Manifest& m) {
    for (const auto& r : m.records)
      for (const auto& word : split_words(r.text)) index.emplace(word, index.size());
    std::vector<Eigen::VectorXd> xs;
    for (const auto& r : m.records) xs.push_back(features(r.text));
    w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(index.size()));
    const auto weights = std::array<double, 2>{1.0 * static_cast<double>(m.records.size()) / (2.0 * static_cast<double>(m.n_benign())),
                                               1.0 * static_cast<double>(m.records.size()) / (2.0 * static_cast<double>(m.n_bma()))};
    for (int epoch = 0; epoch < 200; ++epoch) {
      Eigen::VectorXd gw = Eigen::VectorXd::Zero(w.size());
      double gb = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const int y = m.records[i].label == SampleLabel::bma;
        const double p = 1 / (1 + std::exp(-(w.dot(xs[i]) + b)));
        gw += weights[static_cast<std::size_t>(y)] * (p - y) * xs[i];
        gb += weights[static_cast<std::size_t>(y)] * (p - y);
      }
      w -= 0.5 * gw / static_cast<double>(xs.size());
      b -= 0.5 * gb / static_cast<double>(xs.size());
    }
  }

  double score(const std::string& text) const { return w.dot(features(text)) + b; }
};

} // namespace

TEST_CASE("counts and inventories") {
  const Manifest m = generate_synthetic_corpus(small_spec());
  CHECK(m.records.size() == 120);
  CHECK(m.n_benign() == 100);
  CHECK(m.n_bma() == 20);
  CHECK(m.campaigns() == std::vector<std::string>{"c0", "c1"});
  CHECK(m.resolutions() == std::vector<Resolution>{{1920, 1080}});
  for (const auto& r : m.records) {
    if (r.label == SampleLabel::bma) CHECK(!r.campaign_id.empty());
    CHECK(!r.text.empty());
  }
  const auto meta = manifest_meta(m);
  CHECK(meta["benign"] == 100);
  CHECK(meta["benign_per_bma"] == doctest::Approx(5.0));
  CHECK(meta["bma"] == 20);
  CHECK(campaign_ids(3) == std::vector<std::string>{"c0", "c1", "c2"});
}

TEST_CASE("generation is deterministic down to the bytes") {
  CorpusSpec spec = small_spec(11);
  spec.n_benign = 4;
  spec.n_bma = 2;
  spec.resolutions = {{640, 360}, {360, 640}};
  test::TempDir a("corpus-a"), b("corpus-b");
  write_corpus(a.path(), generate_synthetic_corpus(spec));
  write_corpus(b.path(), generate_synthetic_corpus(spec));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a.path());
    CHECK(slurp(e.path()) == slurp(b.path() / rel));
  }
  CHECK(files >= 13);
  spec.seed = 12;
  CHECK(generate_synthetic_corpus(spec).records[0].text != generate_synthetic_corpus(small_spec(11)).records[0].text);
}

TEST_CASE("manifest round trip through disk") {
  CorpusSpec spec = small_spec(5);
  spec.n_benign = 6;
  spec.n_bma = 3;
  test::TempDir dir("manifest");
  const Manifest m = generate_synthetic_corpus(spec);
  write_corpus(dir.path(), m);
  const Manifest back = read_manifest(dir.path() / "manifest.jsonl");
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].text == m.records[i].text);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].resolution == m.records[i].resolution);
    CHECK(sample_image(back.records[i], dir.path()).image == sample_image(m.records[i]).image);
  }
  CHECK(fs::exists(dir.path() / "manifest.jsonl.meta.json"));

  {
    std::ofstream(dir.path() / "bad.jsonl") << slurp(dir.path() / "manifest.jsonl") << "{not json\n";
  }
  try {
    read_manifest(dir.path() / "bad.jsonl");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.line() == m.records.size() + 1);
  }
}

TEST_CASE("pages render at their native resolution") {
  CorpusSpec spec = small_spec(6);
  spec.n_benign = 2;
  spec.n_bma = 2;
  spec.resolutions = {{360, 640}};
  const Manifest m = generate_synthetic_corpus(spec);
  for (const auto& r : m.records) {
    const RenderedPage p = render_page(r);
    CHECK(p.image.width == 360);
    CHECK(p.image.height == 640);
    CHECK(p.text == r.text);
    CHECK(render_page(r).image == p.image);
  }
}

TEST_CASE("text alone separates the synthetic classes") {
  CorpusSpec spec = small_spec(8);
  spec.n_benign = 300;
  spec.n_bma = 60;
  spec.campaigns = campaign_ids(6);
  const Manifest m = generate_synthetic_corpus(spec);
  SplitOptions opt;
  opt.benign_test_count = 60;
  const std::vector<std::string> held = {"c0", "c1"};
  const SplitResult s = leave_out_split(m, SplitAxis::campaign, held, opt);
  BagOfWords bow;
  bow.fit(s.train);
  ScoredLabels test;
  for (const auto& r : s.test.records) {
    test.scores.push_back(bow.score(r.text));
    test.labels.push_back(r.label == SampleLabel::bma);
  }
  CHECK(auroc(test) >= 0.9);
}

TEST_CASE("synonym replacement") {
  const SynonymTable forced = {{"download", {"fetch"}}};
  CHECK(synonym_replace("download now", forced, 1, 1.0) == "fetch now");
  CHECK(synonym_replace("Download, now!", forced, 1, 1.0) == "Fetch, now!");
  CHECK(synonym_replace("download now", {}, 1, 1.0) == "download now");
  CHECK(synonym_replace("download now", forced, 1, 0.0) == "download now");

  const SynonymTable table = load_synonym_table(BMAGUARD_DATA_DIR "/synonyms.tsv");
  CHECK(table.size() >= 150);
  const Manifest m = generate_synthetic_corpus(small_spec(9));
  int changed = 0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const std::string& t = m.records[i].text;
    const std::string out = synonym_replace(t, table, i);
    CHECK(split_words(out).size() >= split_words(t).size());
    std::istringstream a(t), b(out);
    CHECK(std::distance(std::istream_iterator<std::string>(a), {}) == std::distance(std::istream_iterator<std::string>(b), {}));
    changed += out != t;
  }
  CHECK(changed > 0);
  CHECK_THROWS_AS(parse_synonym_table("word\ttwo words\n"), ParseError);
}

TEST_CASE("augmentation multiplies only the attack pages") {
  const SynonymTable table = load_synonym_table(BMAGUARD_DATA_DIR "/synonyms.tsv");
  const Manifest m = generate_synthetic_corpus(small_spec(10));
  const Manifest a = augment_dataset(m, 4, table, 3);
  CHECK(a.n_bma() == 60);
  CHECK(a.n_benign() == 100);
  CHECK(ids(augment_dataset(m, 4, table, 1)) == ids(m));
  CHECK_THROWS_AS(augment_dataset(m, 4, table, 0), InvalidInput);
  int checked = 0;
  for (const auto& r : a.records) {
    if (!r.augment_seed || checked++ >= 4) continue;
    const NormalizedImage img = sample_image(r);
    CHECK(img.image.width == 960);
    CHECK(img.image.height == 540);
  }
}

TEST_CASE("leave-one-resolution-out") {
  CorpusSpec spec = small_spec(12);
  spec.n_benign = 80;
  spec.n_bma = 80;
  spec.resolutions = {{1920, 1080}, {360, 640}, {1366, 768}};
  spec.campaigns = campaign_ids(2);
  const Manifest m = generate_synthetic_corpus(spec);
  const SplitResult s = leave_one_out_split(m, SplitAxis::resolution, "360x640");
  for (const auto& r : s.train.records) CHECK(r.resolution != Resolution{360, 640});
  for (const auto& r : s.test.records) CHECK(r.resolution == Resolution{360, 640});
  std::map<std::string, int> per_campaign;
  for (const auto& r : s.test.records)
    if (r.label == SampleLabel::bma) ++per_campaign[r.campaign_id];
  for (const auto& [c, n] : per_campaign) CHECK(n <= 10);
  std::set<std::string> all = ids(s.train);
  for (const auto& id : ids(s.test)) CHECK(all.insert(id).second);
  for (const auto& id : s.excluded) CHECK(all.insert(id).second);
  CHECK(all == ids(m));
  CHECK(!s.excluded.empty());
  CHECK_THROWS_AS(leave_one_out_split(m, SplitAxis::resolution, "800x600"), NotFound);
}

TEST_CASE("leave-one-campaign-out") {
  CorpusSpec spec = small_spec(13);
  spec.campaigns = campaign_ids(8);
  spec.n_bma = 40;
  const Manifest m = generate_synthetic_corpus(spec);
  SplitOptions opt;
  opt.benign_test_count = 15;
  const SplitResult s = leave_one_out_split(m, SplitAxis::campaign, "c7", opt);
  const auto train_c = s.train.campaigns(), test_c = s.test.campaigns();
  CHECK(test_c == std::vector<std::string>{"c7"});
  CHECK(std::find(train_c.begin(), train_c.end(), "c7") == train_c.end());
  CHECK(s.test.n_benign() == 15);
  std::set<std::string> all = ids(s.train);
  for (const auto& id : ids(s.test)) CHECK(all.insert(id).second);
  CHECK(all == ids(m));
  CHECK(ids(leave_one_out_split(m, SplitAxis::campaign, "c7", opt).test) == ids(s.test));
  CHECK_THROWS_AS(leave_one_out_split(m, SplitAxis::campaign, "c99"), NotFound);
}

TEST_CASE("training samples are independent of the worker count") {
  CorpusSpec spec = small_spec(14);
  spec.n_benign = 5;
  spec.n_bma = 3;
  const Manifest m = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& r : m.records) texts.push_back(r.text);
  const Vocabulary v = Vocabulary::build(texts);
  const ModelConfig cfg = ModelConfig::toy(v.size());
  const auto one = build_train_samples(m, v, cfg, {}, 1);
  const auto many = build_train_samples(m, v, cfg, {}, 3);
  REQUIRE(one.size() == m.records.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].image->sums == many[i].image->sums);
    CHECK(one[i].tokens.ids == many[i].tokens.ids);
    CHECK(one[i].label == (m.records[i].label == SampleLabel::bma));
  }
}

TEST_CASE("resolution strings") {
  CHECK(parse_resolution("1920x1080") == Resolution{1920, 1080});
  CHECK(to_string(Resolution{360, 640}) == "360x640");
  CHECK_THROWS_AS(parse_resolution("1920"), InvalidInput);
  CHECK_THROWS_AS(parse_resolution("0x5"), InvalidInput);
  CHECK(label_from_string("bma") == SampleLabel::bma);
  CHECK_THROWS(label_from_string("evil"));
}
