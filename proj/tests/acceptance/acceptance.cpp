// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmaguard/error.hpp"
#include "bmaguard/experiment.hpp"
#include "bmaguard/model/checkpoint.hpp"
#include "bmaguard/model/gradcheck.hpp"
#include "bmaguard/phash.hpp"
#include "bmaguard/pipeline.hpp"
#include "bmaguard/service.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace bmaguard;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

using Seconds = std::chrono::duration<double>;

double since(std::chrono::steady_clock::time_point t0) { return Seconds(std::chrono::steady_clock::now() - t0).count(); }

/// Collects failed checks with a short description each.
class Checks {
public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += !ok;
  }
  bool ok() const { return failed_ == 0; }
  std::size_t count() const { return count_; }
  std::string summary() const {
    std::string s = std::to_string(failed_) + " of " + std::to_string(count_) + " checks failed";
    for (const auto& f : failures_) s += "; " + f;
    return s;
  }

private:
  std::size_t count_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

struct Criterion {
  std::string name;
  /// Zero means no runtime bound.
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Normalization --------------------------------------------------------

Outcome normalization() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> wd(16, 4000), hd(16, 3000);
  std::vector<std::pair<int, int>> sizes = {{16, 16}, {4000, 3000}, {1920, 1080}, {1921, 1080}, {1920, 1081},
                                            {16, 3000}, {4000, 16}, {960, 540}, {1366, 768}, {360, 640}};
  while (sizes.size() < 200) sizes.emplace_back(wd(rng), hd(rng));
  std::size_t mismatched = 0, wrong_size = 0, bad_padding = 0;
  for (const auto& [w, h] : sizes) {
    const RgbImage raw = test::random_image(w, h, static_cast<std::uint64_t>(w) * 100003u + static_cast<std::uint64_t>(h));
    const NormalizedImage n = normalize_screenshot(raw);
    wrong_size += n.image.width != 960 || n.image.height != 540;
    mismatched += !(n.image == oracle::oracle_normalize(raw));
    bad_padding += !oracle::padding_is_zero(n);
  }
  Outcome o;
  o.pass = mismatched == 0 && wrong_size == 0 && bad_padding == 0;
  o.detail = std::to_string(sizes.size()) + " sizes, " + std::to_string(mismatched) + " oracle mismatches, " +
             std::to_string(wrong_size) + " not 960x540";
  o.data = {{"sizes", sizes.size()}, {"mismatched", mismatched}, {"wrong_size", wrong_size}, {"bad_padding", bad_padding}};
  return o;
}

// Perceptual hash ------------------------------------------------------

/// 1920x1080 page of 8x8 blocks, bright where `pattern` has a bit. Hash
/// block rows are 67.5 canvas rows tall; the canvas rows they split are a
/// flat gray so every block of the same shade sums to the same value.
RawScreenshot block_page(std::uint64_t pattern, const std::string& domain) {
  RgbImage img(1920, 1080);
  for (int y = 0; y < 1080; ++y)
    for (int x = 0; x < 1920; ++x) {
      const int b = (y / 135) * 8 + x / 240;
      const bool on = pattern >> (63 - b) & 1u;
      const bool seam = y % 270 == 134 || y % 270 == 135;
      std::fill_n(img.at(x, y), 3, seam ? 120 : on ? 200 : 40);
    }
  return {img, domain, {}};
}

class CountingDetector : public Detector {
public:
  explicit CountingDetector(double p) : p_(p) {}
  double probability(const NormalizedImage&, std::string_view) override {
    ++calls;
    return p_;
  }
  int calls = 0;

private:
  double p_;
};

Outcome phash() {
  Checks c;
  std::mt19937_64 rng(99);
  for (int i = 0; i < 10000; ++i) {
    const PerceptualHash a{rng(), 0, 0}, b{rng(), 0, 0}, x{rng(), 0, 0};
    const int ab = hamming_distance(a, b).value;
    c.expect(ab == hamming_distance(b, a).value, "symmetry");
    c.expect(hamming_distance(a, a).value == 0, "identity");
    c.expect((ab == 0) == (a.bits == b.bits), "separation");
    c.expect(hamming_distance(a, x).value <= ab + hamming_distance(b, x).value, "triangle inequality");
    c.expect(ab == std::popcount(a.bits ^ b.bits), "popcount");
  }
  for (std::uint8_t v : {0, 90, 255}) {
    c.expect(compute_phash(normalize_screenshot(test::solid_image(1920, 1080, v, v, v))).bits == 0, "uniform hash");
    c.expect(compute_phash(test::solid_image(640, 360, v, v, v)).bits == 0, "uniform canvas hash");
  }
  RgbImage halves = test::solid_image(1920, 1080, 0, 0, 0);
  for (int y = 0; y < 1080; ++y)
    for (int x = 960; x < 1920; ++x) std::fill_n(halves.at(x, y), 3, 255);
  const auto hh = compute_phash(normalize_screenshot(halves));
  c.expect(std::popcount(hh.bits) == 32, "half/half has 32 bits");

  // 32 bright blocks; `near` swaps two pairs, `far` darkens three and
  // brightens two, which moves the median and flips 5 bits.
  const std::uint64_t base = 0xF0F0F0F0F0F0F0F0ULL;
  const std::uint64_t near = base ^ 0xC300000000000000ULL;
  const std::uint64_t far = base ^ 0xEC00000000000000ULL;
  const auto hb = compute_phash(normalize_screenshot(block_page(base, "x").image));
  const auto hn = compute_phash(normalize_screenshot(block_page(near, "x").image));
  const auto hf = compute_phash(normalize_screenshot(block_page(far, "x").image));
  const int dn = hamming_distance(hb, hn).value, df = hamming_distance(hb, hf).value;
  c.expect(dn == 4, "near page at distance 4 (got " + std::to_string(dn) + ")");
  c.expect(df == 5, "far page at distance 5 (got " + std::to_string(df) + ")");
  c.expect(hb.bits == oracle::reference_hash(normalize_screenshot(block_page(base, "x").image).image), "reference hash");
  c.expect(!is_significant_change({4}) && is_significant_change({5}), "threshold predicate");

  const WhitelistIndex none(kWhitelistCutoff);
  FixedTextOcrEngine ocr("page");
  CountingDetector det(0.1);
  VirtualClock clock(from_epoch_ms(1700000000000));
  Scanner scanner(none, ocr, det, clock);
  scanner.scan("a", block_page(base, "site.net"));
  const Verdict reuse = scanner.scan("a", block_page(near, "site.net"));
  scanner.scan("b", block_page(base, "site.net"));
  const Verdict infer = scanner.scan("b", block_page(far, "site.net"));
  c.expect(reuse.decision_case == 4 && reuse.source == VerdictSource::reused, "distance 4 reuses");
  c.expect(infer.decision_case == 3 && infer.source == VerdictSource::inference, "distance 5 infers");
  c.expect(det.calls == 3, "three inferences");

  Outcome o;
  o.pass = c.ok();
  o.detail = c.ok() ? "10000 random triples, uniform 0, half/half 32 bits, distance 4 reuse / 5 infer" : c.summary();
  o.data = {{"checks", c.count()}, {"near_distance", dn}, {"far_distance", df}};
  return o;
}

// Decision cases -------------------------------------------------------

Outcome decision() {
  Checks c;
  const PerceptualHash base = hash_from_hex("00000000000000ff");
  const PerceptualHash near = hash_from_hex("000000000000000f");
  const PerceptualHash far = hash_from_hex("0000000000000007");
  c.expect(hamming_distance(base, near).value == 4 && hamming_distance(base, far).value == 5, "fixture distances");
  int combos = 0;
  for (bool whitelisted : {false, true})
    for (bool prior : {false, true})
      for (bool changed : {false, true}) {
        TabState s;
        if (prior) {
          s.last_hash = base;
          s.last_verdict = Verdict{};
        }
        const int expected = whitelisted ? 1 : !prior ? 2 : changed ? 3 : 4;
        const int got = decide(s, whitelisted, changed ? far : near);
        c.expect(got == expected, "combination " + std::to_string(combos) + " gave case " + std::to_string(got));
        ++combos;
      }

  const WhitelistIndex w = parse_whitelist("99999,below.org\n100000,edge.org\n100001,beyond.org\n");
  c.expect(w.contains("below.org") && w.contains("edge.org"), "rank 100000 included");
  c.expect(!w.contains("beyond.org"), "rank 100001 excluded");

  FixedTextOcrEngine ocr("page");
  CountingDetector det(0.1);
  VirtualClock clock;
  Scanner scanner(w, ocr, det, clock);
  const RawScreenshot shot{test::random_image(1280, 720, 3), "", {}};
  RawScreenshot edge = shot, beyond = shot;
  edge.source_domain = "edge.org";
  beyond.source_domain = "beyond.org";
  c.expect(scanner.scan("e", edge).decision_case == 1, "edge.org scan is case 1");
  c.expect(det.calls == 0, "case 1 skips inference");
  c.expect(scanner.scan("b", beyond).decision_case == 2, "beyond.org scan is case 2");

  Outcome o;
  o.pass = c.ok() && combos == 8;
  o.detail = c.ok() ? "8 combinations map to their cases; rank 100000 in, 100001 out" : c.summary();
  o.data = {{"combinations", combos}};
  return o;
}

// Gradients ------------------------------------------------------------

Outcome gradients() {
  CorpusSpec spec;
  spec.n_benign = 6;
  spec.n_bma = 3;
  spec.campaigns = campaign_ids(3);
  spec.resolutions = {{1920, 1080}, {1366, 768}, {414, 896}};
  spec.seed = 11;
  const Manifest m = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& r : m.records) texts.push_back(r.text);
  const Vocabulary vocab = Vocabulary::build(texts);
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const auto samples = build_train_samples(m, vocab, cfg);
  const std::vector<double> weights = class_weights_from_counts(m.n_benign(), m.n_bma());

  Outcome o;
  o.pass = true;
  double worst = 0, worst_dir = 0;
  std::size_t checked = 0, skipped = 0;
  json batches = json::array();
  for (std::size_t b = 0; b < 3; ++b) {
    const std::vector<TrainSample> batch(samples.begin() + static_cast<std::ptrdiff_t>(3 * b),
                                         samples.begin() + static_cast<std::ptrdiff_t>(3 * b + 3));
    const DualBranchClassifier<double> model(cfg, 100 + b);
    GradCheckOptions opt;
    opt.seed = b + 1;
    const GradCheckReport r = gradient_check(model, batch, weights, opt);
    worst = std::max(worst, r.max_rel_error);
    worst_dir = std::max(worst_dir, r.directional_rel_error);
    checked += r.checked;
    skipped += r.skipped;
    o.pass = o.pass && r.checked >= 200 && r.max_rel_error <= 1e-3;
    batches.push_back({{"checked", r.checked}, {"skipped", r.skipped}, {"max_rel_error", r.max_rel_error},
                       {"worst_parameter", r.worst_parameter}, {"directional_rel_error", r.directional_rel_error}});
  }
  o.detail = "3 batches, " + std::to_string(checked) + " parameters, max relative error " + sci(worst) +
             " (unscreened random direction " + sci(worst_dir) + "), " + std::to_string(skipped) + " kink skips";
  o.data = {{"batches", batches}};
  return o;
}

// Desk experiment data, shared by the learning and PGD criteria --------

struct Desk {
  Manifest corpus;
  ExperimentData data;
  ExternalPerturbations texts;
  double prepare_s = 0;
};

const Desk& desk() {
  static const Desk d = [] {
    const auto t0 = std::chrono::steady_clock::now();
    Desk d;
    d.corpus = generate_synthetic_corpus(desk_corpus_spec());
    const auto held = desk_held_out_campaigns();
    d.data = prepare_experiment(d.corpus, held, 200);
    d.texts = synthesize_perturbations(d.corpus, load_synonym_table(BMAGUARD_DATA_DIR "/synonyms.tsv"), 99);
    d.prepare_s = since(t0);
    return d;
  }();
  return d;
}

std::span<const TrainSample> span_of(const std::vector<TrainSample>& v) { return {v.data(), v.size()}; }

Outcome learnability() {
  const Desk& d = desk();
  const auto& split = d.data.split;
  Checks c;
  c.expect(split.train.n_benign() == 1000 && split.train.n_bma() == 200, "train is 1000/200");
  c.expect(split.test.n_benign() == 200 && split.test.n_bma() == 100, "test is 200/100");
  std::set<std::string> train_campaigns;
  for (const auto& r : split.train.records)
    if (r.label == SampleLabel::bma) train_campaigns.insert(r.campaign_id);
  bool disjoint = true;
  for (const auto& r : split.test.records)
    if (r.label == SampleLabel::bma) disjoint = disjoint && !train_campaigns.count(r.campaign_id);
  c.expect(disjoint, "campaign-disjoint");

  DualBranchClassifier<float> model(d.data.model_config, 1);
  TrainConfig tc = desk_train_config(split.train.n_benign(), split.train.n_bma(), 1, 3);
  Optimizer<float> opt(tc, model.params());
  std::mt19937_64 rng(tc.seed);
  int reached = 0;
  MetricsReport last;
  json curve = json::array();
  for (int e = 1; e <= 30 && !reached; ++e) {
    const EpochStats s = train_epoch(model, span_of(d.data.train), tc, opt, rng);
    last = evaluate(score(model, span_of(d.data.test)), 0.01);
    curve.push_back({{"epoch", e}, {"loss", s.mean_loss}, {"auroc", last.auroc}, {"dr_at_fp", last.dr_at_fp}});
    if (last.auroc >= 0.95 && last.dr_at_fp >= 0.80) reached = e;
  }
  Outcome o;
  o.pass = c.ok() && reached > 0;
  o.detail = (c.ok() ? std::string() : c.summary() + "; ") + "AUROC " + fmt(last.auroc, 4) + ", DR@1%FP " +
             fmt(last.dr_at_fp, 4) + (reached ? " at epoch " + std::to_string(reached) : " after 30 epochs") +
             " (data " + fmt(d.prepare_s, 1) + " s)";
  o.data = {{"curve", curve}, {"epochs", reached}};
  return o;
}

// PGD ------------------------------------------------------------------

/// The attack objective of pgd_attack, kept continuous.
template <typename S>
LossGradient<S> visual_loss(const DualBranchClassifier<S>& model, const TokenSequence& tokens, int label) {
  const int pool = model.config().visual_pool;
  const Vec<S> text = model.text_forward(tokens, Mode::eval);
  return [&model, text, label, pool](const Mat<S>& x, Mat<S>* grad) {
    Tape<S> tape;
    const Vec<S> v = model.visual_forward(pool_tensor<S>(x, 960, 540, pool), Mode::eval, nullptr,
                                          grad ? &tape.visual : nullptr);
    const Vec<S> logits = model.fuse_and_classify(v, text, Mode::eval, nullptr, grad ? &tape.head : nullptr);
    if (grad) {
      Vec<S> dlogits = layers::softmax<S>(logits);
      dlogits(label) -= S(1);
      Mat<S> dinput;
      model.backward(tape, dlogits, nullptr, &dinput, false);
      *grad = unpool_gradient<S>(dinput, 960, 540, pool);
    }
    const double a = logits(0), b = logits(1), mx = std::max(a, b);
    return mx + std::log(std::exp(a - mx) + std::exp(b - mx)) - (label ? b : a);
  };
}

Outcome pgd() {
  const Desk& d = desk();
  const auto& split = d.data.split;
  const std::span<const SampleRecord> test_records(split.test.records);
  Checks c;

  DualBranchClassifier<float> clean(d.data.model_config, 1);
  fit(clean, span_of(d.data.train), desk_train_config(split.train.n_benign(), split.train.n_bma(), 2, 3));

  // Budget and range on continuous iterates (double copy of the model) and
  // on the 8-bit outputs.
  const test::TempDir tmp("acceptance");
  save_checkpoint(tmp.path() / "clean.ckpt", clean);
  const DualBranchClassifier<double> wide = load_checkpoint<double>(tmp.path() / "clean.ckpt");
  double worst_excess = -1, lo = 1, hi = 0;
  for (int k = 1; k <= kTierCount; ++k) {
    const PerturbationTier tier = tier_for_level(k);
    for (std::size_t i = 0; i < 6; ++i) {
      const SampleRecord& r = test_records[i * 50];
      const NormalizedImage img = sample_image(r);
      const TokenSequence tokens = tokenize(d.texts.text(r.id, k), d.data.vocab, clean.config().max_tokens);
      PgdConfig pc;
      pc.epsilon = tier.epsilon;
      pc.random_start = i % 2 == 1;
      pc.seed = i;
      const Mat<double> x0 = image_tensor<double>(img.image);
      const auto res = pgd_maximize<double>(x0, visual_loss(wide, tokens, static_cast<int>(r.label)), pc);
      const double dist = (res.x - x0).cwiseAbs().maxCoeff();
      worst_excess = std::max(worst_excess, dist - tier.epsilon);
      lo = std::min(lo, res.x.minCoeff());
      hi = std::max(hi, res.x.maxCoeff());
      c.expect(dist <= tier.epsilon + 0x1p-50, "tier " + std::to_string(k) + " continuous ball");
      c.expect(res.loss >= res.initial_loss, "tier " + std::to_string(k) + " loss not lowered");

      const NormalizedImage adv = pgd_attack(clean, img, tokens, static_cast<int>(r.label), pc);
      int steps = 0;
      for (std::size_t p = 0; p < img.image.pixels.size(); ++p)
        steps = std::max(steps, std::abs(adv.image.pixels[p] - img.image.pixels[p]));
      c.expect(steps <= kTierEpsilon255[static_cast<std::size_t>(k - 1)], "tier " + std::to_string(k) + " 8-bit ball");
    }
  }
  c.expect(lo >= 0 && hi <= 1, "pixels within [0,1]");
  const bool budgets_ok = c.ok();

  const PerturbationTier t3 = tier_for_level(3);
  const double clean_acc = accuracy(score(clean, span_of(d.data.test)));
  const auto attacked = tier_attack_all(clean, d.data.vocab, test_records, d.texts, t3);
  const double attacked_acc = accuracy(score(clean, span_of(attacked)));
  std::vector<TrainSample> image_only;
  for (const auto& r : test_records) image_only.push_back(image_attack(clean, d.data.vocab, r, t3.epsilon));
  const double image_only_acc = accuracy(score(clean, span_of(image_only)));
  const double drop = clean_acc - attacked_acc;

  DualBranchClassifier<float> robust = clean;
  TrainConfig ft = desk_train_config(split.train.n_benign(), split.train.n_bma(), 1, 4);
  ft.learning_rate = 2e-4;
  adversarial_fit(robust, d.data, d.texts, ft);
  const auto robust_attacked = tier_attack_all(robust, d.data.vocab, test_records, d.texts, t3);
  const double robust_acc = accuracy(score(robust, span_of(robust_attacked)));
  const double robust_clean = accuracy(score(robust, span_of(d.data.test)));
  const double recovered = robust_acc - attacked_acc;

  c.expect(drop >= 0.20, "drop below 20 pp");
  c.expect(recovered >= drop / 2, "recovered less than half the drop");
  Outcome o;
  o.pass = c.ok();
  o.detail = std::string(budgets_ok ? "budgets hold" : "budgets violated") + " on 5 tiers (continuous worst excess " + sci(std::max(0.0, worst_excess)) +
             ", 8-bit exact); accuracy clean " + fmt(clean_acc) + ", 8/255 attack " + fmt(attacked_acc) + " (drop " +
             fmt(100 * drop, 1) + " pp), after adversarial training " + fmt(robust_acc) + " (recovered " +
             fmt(100 * recovered, 1) + " pp); image-only attack " + fmt(image_only_acc);
  if (!c.ok()) o.detail += "; " + c.summary();
  o.data = {{"clean_accuracy", clean_acc},        {"attacked_accuracy", attacked_acc},
            {"image_only_accuracy", image_only_acc}, {"robust_attacked_accuracy", robust_acc},
            {"robust_clean_accuracy", robust_clean}, {"drop", drop},
            {"recovered", recovered},                {"pixel_range", {lo, hi}}};
  return o;
}

// Metrics --------------------------------------------------------------

Outcome metrics() {
  Checks c;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  c.expect(auroc({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}}) == 0.75, "auroc example");
  c.expect(auroc({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}) == 0.5, "auroc ties");
  ScoredLabels ex;
  for (int i = 0; i < 100; ++i) {
    ex.scores.push_back(i / 100.0);
    ex.labels.push_back(0);
  }
  for (double s : {0.995, 0.985, 0.5}) {
    ex.scores.push_back(s);
    ex.labels.push_back(1);
  }
  c.expect(near(dr_at_fp(ex, 0.01), 2.0 / 3.0), "dr@fp example");
  c.expect(dr_at_fp(ex, 1.0) == 1.0, "dr@fp at target 1");
  c.expect(levenshtein("kitten", "sitting") == 3 && levenshtein("", "abc") == 3, "levenshtein examples");
  c.expect(near(rouge_l_f1("the cat sat", "the cat ran"), 2.0 / 3.0), "rouge example");
  c.expect(krippendorff_alpha({{0, 1}, {1, 0}, {0, 1}, {1, 0}}) < 0, "alpha complementary");
  c.expect(krippendorff_alpha({{1, 1, 1}, {0, 0, 0}, {1, 1, 1}}) == 1.0, "alpha agreement");

  std::mt19937_64 rng(7);
  int n_auc = 0, n_dr = 0, n_lev = 0, n_rouge = 0, n_alpha = 0;
  for (int t = 0; t < 150; ++t) {
    const ScoredLabels d = oracle::random_scored(rng, 2 + static_cast<int>(rng() % 40));
    c.expect(near(auroc(d), oracle::pairwise_auroc(d)), "auroc oracle");
    ++n_auc;
    for (double target : {0.0, 0.05, 0.25}) c.expect(near(dr_at_fp(d, target), oracle::sweep_dr(d, target)), "dr oracle");
    ++n_dr;
  }
  const std::string alphabet = "abcd";
  for (int t = 0; t < 150; ++t) {
    std::string a, b;
    for (std::size_t i = rng() % 7; i > 0; --i) a += alphabet[rng() % 4];
    for (std::size_t i = rng() % 7; i > 0; --i) b += alphabet[rng() % 4];
    c.expect(levenshtein(a, b) ==
                 oracle::naive_levenshtein(std::u32string(a.begin(), a.end()), std::u32string(b.begin(), b.end())),
             "levenshtein oracle");
    ++n_lev;
  }
  const char* words[] = {"a", "b", "c", "d"};
  for (int t = 0; t < 150; ++t) {
    std::string a, b;
    for (std::size_t i = rng() % 8; i > 0; --i) a += std::string(words[rng() % 4]) + " ";
    for (std::size_t i = rng() % 8; i > 0; --i) b += std::string(words[rng() % 4]) + " ";
    c.expect(near(rouge_l_f1(a, b), oracle::oracle_rouge(a, b)), "rouge oracle");
    ++n_rouge;
  }
  while (n_alpha < 150) {
    const int items = 2 + static_cast<int>(rng() % 8), raters = 2 + static_cast<int>(rng() % 3);
    LabelMatrix m(static_cast<std::size_t>(items));
    for (auto& row : m)
      for (int r = 0; r < raters; ++r)
        row.push_back(rng() % 5 == 0 ? std::nullopt : std::optional<int>(static_cast<int>(rng() % 3)));
    const double expected = oracle::pairwise_alpha(m);
    if (!std::isfinite(expected)) continue;
    c.expect(std::abs(krippendorff_alpha(m) - expected) <= 1e-9, "alpha oracle");
    ++n_alpha;
  }
  Outcome o;
  o.pass = c.ok();
  o.detail = c.ok() ? "worked examples exact; 150 random instances each for AUROC, DR@FP, Levenshtein, ROUGE-L, alpha"
                    : c.summary();
  o.data = {{"auroc", n_auc}, {"dr_at_fp", n_dr}, {"levenshtein", n_lev}, {"rouge_l", n_rouge}, {"alpha", n_alpha}};
  return o;
}

// Latency --------------------------------------------------------------

Outcome latency() {
  CorpusSpec spec;
  spec.n_benign = 40;
  spec.n_bma = 10;
  spec.campaigns = campaign_ids(5);
  spec.resolutions = {{1920, 1080}, {1366, 768}, {1536, 864}, {1280, 720}, {2560, 1440}, {360, 640}, {414, 896}};
  spec.seed = 21;
  const Manifest m = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& r : m.records) texts.push_back(r.text);
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::build(texts));
  auto model = std::make_shared<const DualBranchClassifier<float>>(desk_model_config(vocab->size()), 5);
  ModelDetector<float> detector(model, vocab);
  FixedTextOcrEngine idle("");
  const WhitelistIndex none(kWhitelistCutoff);
  SystemClockSource clock;
  Scanner scanner(none, idle, detector, clock);

  std::vector<RenderedPage> pages;
  for (const auto& r : m.records) pages.push_back(render_page(r));
  for (std::size_t i = 0; i < 50; ++i) {
    const RenderedPage& p = pages[i];
    FixedTextOcrEngine ocr(p.text);
    const Verdict v = scanner.scan("tab", {p.image, "site" + std::to_string(i % 3) + ".net", clock.now()}, &ocr);
    if (v.label == VerdictLabel::malicious) scanner.record_override(v.id, OverrideChoice::ignore_warning);
  }
  const auto summary = scanner.latency().summary();
  json stages = json::object();
  std::string line;
  for (const char* k : {"normalize", "phash", "ocr", "model", "total"}) {
    if (!summary.count(k)) continue;
    const auto& s = summary.at(k);
    stages[k] = {{"count", s.count}, {"p50_ms", s.p50}, {"p95_ms", s.p95}};
    line += std::string(line.empty() ? "" : ", ") + k + " " + fmt(s.p50, 1) + "/" + fmt(s.p95, 1);
  }
  const auto& total = summary.at("total");
  Outcome o;
  o.pass = total.count == 50 && total.p50 < 1000.0;
  o.detail = "50 cycles, P50/P95 ms: " + line + " (" + std::to_string(scanner.inference_count()) + " inferences)";
  o.data = {{"stages", stages}, {"inferences", scanner.inference_count()}};
  return o;
}

// Scheduler ------------------------------------------------------------

Outcome scheduler() {
  Checks c;
  const WhitelistIndex none(kWhitelistCutoff);
  FixedTextOcrEngine ocr("daily news and weather");
  CountingDetector det(0.1);
  VirtualClock clock(from_epoch_ms(1700000000000));
  Scanner scanner(none, ocr, det, clock);
  ScanScheduler sched(5s);
  sched.add_tab("t", clock.now());
  const auto t0 = clock.now();
  RawScreenshot page = block_page(0xF0F0F0F0F0F0F0F0ULL, "news.net");
  std::vector<int> cases;
  auto cycle = [&](const std::string& tab, TimePoint) {
    cases.push_back(scanner.scan(tab, page).decision_case);
    return 400ms;
  };
  const auto first = sched.run_until(clock, t0 + 16s, cycle);
  c.expect(first.size() == 3, "3 cycles in 16 s (got " + std::to_string(first.size()) + ")");
  c.expect(det.calls == 1, "1 inference over 3 unchanged cycles (got " + std::to_string(det.calls) + ")");
  c.expect(cases == std::vector<int>{2, 4, 4}, "cases 2, 4, 4");
  for (std::size_t i = 0; i < first.size(); ++i)
    c.expect(first[i].start == t0 + 5s * static_cast<int>(i + 1), "cycle starts every 5 s");

  page = block_page(~0xF0F0F0F0F0F0F0F0ULL, "news.net");
  const auto second = sched.run_until(clock, t0 + 21s, cycle);
  c.expect(second.size() == 1, "one more cycle");
  c.expect(det.calls == 2, "change triggers exactly one more inference");
  c.expect(cases.back() == 3, "changed page is case 3");
  const auto third = sched.run_until(clock, t0 + 31s, cycle);
  c.expect(third.size() == 2 && det.calls == 2, "changed page then reused");

  Outcome o;
  o.pass = c.ok();
  o.detail = c.ok() ? "unchanged page: 3 cycles, 1 inference; changed page: +1 inference, then reuse" : c.summary();
  o.data = {{"inferences", det.calls}, {"cycles", first.size() + second.size() + third.size()}};
  return o;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"bmaguard acceptance run"};
  std::vector<std::string> only;
  std::string report;
  bool list = false;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--json", report, "Write a JSON report here");
  app.add_flag("--list", list, "List criteria and exit");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"normalization-oracle", 60, normalization},
      {"phash-invariants", 0, phash},
      {"decision-cases", 0, decision},
      {"gradient-check", 300, gradients},
      {"toy-learnability", 900, learnability},
      {"pgd-contract", 1200, pgd},
      {"metric-oracles", 0, metrics},
      {"latency-report", 0, latency},
      {"scheduler-reuse", 0, scheduler},
  };
  if (list) {
    for (const auto& c : criteria) std::cout << c.name << "\n";
    return 0;
  }

  int failed = 0;
  json out = json::array();
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double s = since(t0);
    const bool in_time = c.limit_s <= 0 || s <= c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string timing = fmt(s, 1) + " s";
    if (c.limit_s > 0) timing += " of " + fmt(c.limit_s, 0) + " s";
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << timing << "]" << std::endl;
    out.push_back({{"criterion", c.name}, {"pass", pass}, {"seconds", s}, {"detail", o.detail}, {"data", o.data}});
  }
  if (!report.empty()) std::ofstream(report) << out.dump(2) << "\n";
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
