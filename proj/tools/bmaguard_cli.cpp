// bmaguard command-line front end.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmaguard/adversarial.hpp"
#include "bmaguard/corpus/corpus.hpp"
#include "bmaguard/error.hpp"
#include "bmaguard/experiment.hpp"
#include "bmaguard/model/checkpoint.hpp"
#include "bmaguard/phash.hpp"
#include "bmaguard/pipeline.hpp"
#include "bmaguard/png_io.hpp"
#include "bmaguard/service.hpp"

namespace fs = std::filesystem;
using namespace bmaguard;
using json = nlohmann::json;

namespace {

using Model = DualBranchClassifier<float>;

struct ModelFiles {
  fs::path checkpoint;
  fs::path vocab;
};

std::shared_ptr<const Model> load_model(const fs::path& p) { return std::make_shared<const Model>(load_checkpoint<float>(p)); }

std::shared_ptr<const Vocabulary> load_vocab(const ModelFiles& f) {
  fs::path v = f.vocab.empty() ? f.checkpoint.parent_path() / "vocab.tsv" : f.vocab;
  return std::make_shared<const Vocabulary>(Vocabulary::load(v));
}

std::vector<TrainSample> manifest_samples(const Manifest& m, const Vocabulary& vocab, const ModelConfig& cfg,
                                          const fs::path& root) {
  return build_train_samples(m, vocab, cfg, root);
}

/// Stands in for a real model when the domain is whitelisted.
class NoDetector : public Detector {
public:
  double probability(const NormalizedImage&, std::string_view) override {
    throw InvalidInput("no model configured; pass --model for non-whitelisted domains");
  }
};

std::unique_ptr<OcrEngine> make_ocr(const std::vector<std::string>& cmd, const std::optional<std::string>& text) {
  if (text) return std::make_unique<FixedTextOcrEngine>(*text);
  if (!cmd.empty()) return std::make_unique<ExternalOcrEngine>(cmd[0], std::vector<std::string>(cmd.begin() + 1, cmd.end()));
  return std::make_unique<FixedTextOcrEngine>("");
}

int cmd_hash(const fs::path& image) {
  std::cout << to_hex(compute_phash(normalize_screenshot(read_png(image)))) << "\n";
  return 0;
}

struct ScanArgs {
  std::string domain;
  fs::path image;
  fs::path config;
  fs::path whitelist;
  ModelFiles model;
  std::string ocr_text;
  bool has_ocr_text = false;
  std::vector<std::string> ocr_cmd;
};

int cmd_scan(const ScanArgs& a) {
  Config cfg = a.config.empty() ? Config{} : load_config(a.config);
  if (!a.whitelist.empty()) cfg.whitelist = a.whitelist;
  if (!a.model.checkpoint.empty()) cfg.model = a.model.checkpoint;
  if (!a.model.vocab.empty()) cfg.vocab = a.model.vocab;
  if (!a.ocr_cmd.empty()) cfg.ocr_command = a.ocr_cmd;
  cfg.validate();

  WhitelistIndex whitelist = cfg.whitelist.empty() ? WhitelistIndex(cfg.whitelist_cutoff, cfg.fold_subdomains)
                                                   : load_whitelist(cfg.whitelist, cfg.whitelist_cutoff);
  std::unique_ptr<Detector> detector;
  if (cfg.model.empty()) {
    detector = std::make_unique<NoDetector>();
  } else {
    detector = std::make_unique<ModelDetector<float>>(load_model(cfg.model), load_vocab({cfg.model, cfg.vocab}));
  }
  auto ocr = make_ocr(cfg.ocr_command, a.has_ocr_text ? std::optional(a.ocr_text) : std::nullopt);
  SystemClockSource clock;
  Scanner scanner(whitelist, *ocr, *detector, clock, {cfg.hamming_threshold, false});
  RawScreenshot shot{read_png(a.image), a.domain, clock.now()};
  std::cout << verdict_json(scanner.scan("cli", shot)).dump(2) << "\n";
  return 0;
}

int cmd_serve(const fs::path& config_path, std::optional<int> port) {
  Config cfg = config_path.empty() ? Config{} : load_config(config_path);
  if (port) cfg.port = *port;
  cfg.validate();
  WhitelistIndex whitelist = cfg.whitelist.empty() ? WhitelistIndex(cfg.whitelist_cutoff, cfg.fold_subdomains)
                                                   : load_whitelist(cfg.whitelist, cfg.whitelist_cutoff);
  std::unique_ptr<Detector> detector;
  if (cfg.model.empty()) detector = std::make_unique<NoDetector>();
  else detector = std::make_unique<ModelDetector<float>>(load_model(cfg.model), load_vocab({cfg.model, cfg.vocab}));
  auto ocr = make_ocr(cfg.ocr_command, std::nullopt);
  SystemClockSource clock;
  Scanner scanner(whitelist, *ocr, *detector, clock, {cfg.hamming_threshold, cfg.retain_screenshots});
  LogBuffer log(cfg.log_dir, cfg.log_flush_interval, clock.now());
  log.set_warning_sink([](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
  Service service(cfg, scanner, log, clock);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  if (!service.bind()) {
    std::cerr << "error: cannot bind " << cfg.bind_address << ":" << cfg.port << "\n";
    return 1;
  }
  std::cerr << "listening on " << cfg.bind_address << ":" << service.port() << "\n";
  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.listen_after_bind();
  service.stop();
  pthread_kill(waiter.native_handle(), SIGTERM);
  return 0;
}

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  int epochs = 3;
  double lr = 5e-4;
  int batch = 32;
  double weight_decay = 5e-4;
  std::string optimizer = "adamw";
  int max_tokens = 128;
  std::uint64_t seed = 0;
  fs::path init;
};

int cmd_train(const TrainArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  const fs::path root = a.manifest.parent_path();
  std::vector<std::string> texts;
  for (const auto& r : m.records) texts.push_back(r.text);
  Vocabulary vocab = Vocabulary::build(texts);
  ModelConfig mc = desk_model_config(vocab.size());
  mc.max_tokens = a.max_tokens;
  Model model = a.init.empty() ? Model(mc, a.seed) : load_checkpoint<float>(a.init);
  if (!a.init.empty()) {
    vocab = *load_vocab({a.init, {}});
    mc = model.config();
  }
  const auto samples = manifest_samples(m, vocab, mc, root);
  TrainConfig tc = desk_train_config(m.n_benign(), m.n_bma(), a.epochs, a.seed);
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.weight_decay = a.weight_decay;
  tc.optimizer = a.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adamw;
  fit(model, std::span<const TrainSample>(samples), tc, [](int e, const EpochStats& s) {
    std::cerr << "epoch " << e << " loss " << s.mean_loss << "\n";
  });
  fs::create_directories(a.out);
  save_checkpoint(a.out / "model.ckpt", model);
  vocab.save(a.out / "vocab.tsv");
  std::cout << json{{"checkpoint", (a.out / "model.ckpt").string()}, {"vocab", (a.out / "vocab.tsv").string()},
                    {"samples", samples.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const fs::path& manifest, const ModelFiles& files, double fp_target) {
  const Manifest m = read_manifest(manifest);
  const auto model = load_model(files.checkpoint);
  const auto vocab = load_vocab(files);
  const auto samples = manifest_samples(m, *vocab, model->config(), manifest.parent_path());
  const ScoredLabels scored = score(*model, std::span<const TrainSample>(samples));
  json j = to_json(evaluate(scored, fp_target));
  j["accuracy"] = accuracy(scored);
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct AttackArgs {
  fs::path manifest;
  ModelFiles model;
  fs::path out;
  int level = 3;
  std::optional<double> epsilon;
  fs::path perturbations;
  fs::path synonyms;
  int iterations = 10;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  const fs::path root = a.manifest.parent_path();
  const auto model = load_model(a.model.checkpoint);
  const auto vocab = load_vocab(a.model);
  PerturbationTier tier = tier_for_level(a.level);
  if (a.epsilon) tier.epsilon = *a.epsilon;
  const ExternalPerturbations texts =
      a.perturbations.empty() ? synthesize_perturbations(m, load_synonym_table(a.synonyms), a.seed)
                              : load_external_perturbations(a.perturbations);
  PgdConfig pc;
  pc.epsilon = tier.epsilon;
  pc.iterations = a.iterations;
  pc.seed = a.seed;
  pc.validate();

  fs::create_directories(a.out / "images");
  fs::create_directories(a.out / "texts");
  Manifest out;
  out.seed = a.seed;
  double worst = 0;
  for (const auto& r : m.records) {
    const NormalizedImage img = sample_image(r, root);
    const std::string& text = texts.text(r.id, tier.level);
    const NormalizedImage adv = pgd_attack(*model, img, tokenize(text, *vocab, model->config().max_tokens),
                                           static_cast<int>(r.label), pc);
    worst = std::max(worst, linf_distance(adv.image, img.image));
    SampleRecord rec = r;
    rec.id = r.id + "-adv" + std::to_string(tier.level);
    rec.image_path = "images/" + rec.id + ".png";
    rec.text_path = "texts/" + rec.id + ".txt";
    rec.render_seed.reset();
    rec.augment_seed.reset();
    rec.prenormalized = true;
    rec.text = text;
    write_png(a.out / rec.image_path, adv.image);
    std::ofstream(a.out / rec.text_path, std::ios::binary) << text;
    out.records.push_back(std::move(rec));
  }
  write_manifest(a.out / "manifest.jsonl", out);
  std::cout << json{{"records", out.records.size()}, {"level", tier.level}, {"epsilon", tier.epsilon},
                    {"max_linf", worst}, {"manifest", (a.out / "manifest.jsonl").string()}}
                   .dump()
            << "\n";
  return 0;
}

struct GenArgs {
  fs::path out;
  std::size_t benign = 100;
  std::size_t bma = 20;
  int campaigns = 2;
  std::vector<std::string> resolutions = {"1920x1080"};
  std::uint64_t seed = 0;
  fs::path synonyms;
  int augment = 1;
};

int cmd_gen_corpus(const GenArgs& a) {
  CorpusSpec spec;
  spec.n_benign = a.benign;
  spec.n_bma = a.bma;
  spec.campaigns = campaign_ids(a.campaigns);
  spec.resolutions.clear();
  for (const auto& r : a.resolutions) spec.resolutions.push_back(parse_resolution(r));
  spec.seed = a.seed;
  Manifest m = generate_synthetic_corpus(spec);
  SynonymTable table;
  if (!a.synonyms.empty()) table = load_synonym_table(a.synonyms);
  if (a.augment > 1) m = augment_dataset(m, a.seed, table, a.augment);
  write_corpus(a.out, m);
  write_external_perturbations(a.out / "perturbations.txt", synthesize_perturbations(m, table, a.seed));
  std::cout << manifest_meta(m).dump(2) << "\n";
  return 0;
}

int cmd_split(const fs::path& manifest, const std::string& axis, const std::vector<std::string>& held,
              const fs::path& out, std::size_t benign_test, std::size_t cap, std::uint64_t seed) {
  Manifest m = read_manifest(manifest);
  SplitOptions opts;
  opts.benign_test_count = benign_test;
  opts.per_campaign_cap = cap;
  opts.seed = seed;
  SplitAxis ax;
  if (axis == "campaign") ax = SplitAxis::campaign;
  else if (axis == "resolution") ax = SplitAxis::resolution;
  else throw InvalidInput("axis must be campaign or resolution");
  SplitResult s = leave_out_split(m, ax, held, opts);
  const fs::path root = fs::absolute(manifest.parent_path());
  fs::create_directories(out);
  const fs::path out_abs = fs::absolute(out);
  for (auto* part : {&s.train, &s.test})
    for (auto& r : part->records) {
      if (!r.image_path.empty()) r.image_path = fs::relative(root / r.image_path, out_abs).generic_string();
      if (!r.text_path.empty()) r.text_path = fs::relative(root / r.text_path, out_abs).generic_string();
    }
  write_manifest(out / "train.jsonl", s.train);
  write_manifest(out / "test.jsonl", s.test);
  std::cout << json{{"train", manifest_meta(s.train)}, {"test", manifest_meta(s.test)}, {"excluded", s.excluded}}.dump(2)
            << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior-manipulation attack screenshot detector"};
  app.require_subcommand(1);

  fs::path hash_image;
  auto* hash = app.add_subcommand("hash", "Print the perceptual hash of a PNG after normalization");
  hash->add_option("image", hash_image, "PNG file")->required()->check(CLI::ExistingFile);

  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "Classify one screenshot and print the verdict JSON");
  scan->add_option("--domain", scan_args.domain, "Page domain")->required();
  scan->add_option("--image", scan_args.image, "Screenshot PNG")->required()->check(CLI::ExistingFile);
  scan->add_option("--config", scan_args.config, "Service config JSON")->check(CLI::ExistingFile);
  scan->add_option("--whitelist", scan_args.whitelist, "rank,domain CSV")->check(CLI::ExistingFile);
  scan->add_option("--model", scan_args.model.checkpoint, "Checkpoint")->check(CLI::ExistingFile);
  scan->add_option("--vocab", scan_args.model.vocab, "Vocabulary (default: vocab.tsv next to the checkpoint)");
  auto* ocr_text = scan->add_option("--ocr-text", scan_args.ocr_text, "Use this text instead of running OCR");
  scan->add_option("--ocr-cmd", scan_args.ocr_cmd, "External OCR command; {} is the strip PNG");

  fs::path serve_config;
  std::optional<int> serve_port;
  auto* serve = app.add_subcommand("serve", "Run the local JSON service");
  serve->add_option("--config", serve_config, "Service config JSON")->check(CLI::ExistingFile);
  serve->add_option("--port", serve_port, "Override the configured port (0 = any)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model on a manifest; writes model.ckpt and vocab.tsv");
  train->add_option("--manifest", train_args.manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--epochs", train_args.epochs)->capture_default_str();
  train->add_option("--lr", train_args.lr)->capture_default_str();
  train->add_option("--batch", train_args.batch)->capture_default_str();
  train->add_option("--weight-decay", train_args.weight_decay)->capture_default_str();
  train->add_option("--optimizer", train_args.optimizer)->check(CLI::IsMember({"sgd", "adamw"}))->capture_default_str();
  train->add_option("--max-tokens", train_args.max_tokens)->capture_default_str();
  train->add_option("--seed", train_args.seed)->capture_default_str();
  train->add_option("--init", train_args.init, "Continue from this checkpoint")->check(CLI::ExistingFile);

  fs::path eval_manifest;
  ModelFiles eval_model;
  double eval_fp = 0.01;
  auto* eval = app.add_subcommand("eval", "Score a manifest and print the metrics report JSON");
  eval->add_option("--manifest", eval_manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--model", eval_model.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--vocab", eval_model.vocab);
  eval->add_option("--fp", eval_fp, "False-positive target")->capture_default_str();

  AttackArgs attack_args;
  std::optional<double> attack_eps255;
  auto* attack = app.add_subcommand("attack", "Write PGD image + level-k text adversarial pairs");
  attack->add_option("--manifest", attack_args.manifest)->required()->check(CLI::ExistingFile);
  attack->add_option("--model", attack_args.model.checkpoint)->required()->check(CLI::ExistingFile);
  attack->add_option("--vocab", attack_args.model.vocab);
  attack->add_option("--out", attack_args.out)->required();
  attack->add_option("--level", attack_args.level)->check(CLI::Range(1, 5))->capture_default_str();
  attack->add_option("--epsilon255", attack_eps255, "Override the tier budget, in 1/255 units");
  attack->add_option("--perturbations", attack_args.perturbations, "Level file")->check(CLI::ExistingFile);
  attack->add_option("--synonyms", attack_args.synonyms, "Synonym table for synthesized levels")
      ->check(CLI::ExistingFile);
  attack->add_option("--iterations", attack_args.iterations)->capture_default_str();
  attack->add_option("--seed", attack_args.seed)->capture_default_str();

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-corpus", "Synthesize a corpus with a perturbation-level file");
  gen->add_option("--out", gen_args.out)->required();
  gen->add_option("--benign", gen_args.benign)->capture_default_str();
  gen->add_option("--bma", gen_args.bma)->capture_default_str();
  gen->add_option("--campaigns", gen_args.campaigns)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--resolutions", gen_args.resolutions, "WxH list")->capture_default_str();
  gen->add_option("--seed", gen_args.seed)->capture_default_str();
  gen->add_option("--synonyms", gen_args.synonyms)->check(CLI::ExistingFile);
  gen->add_option("--augment", gen_args.augment, "BMA multiplication factor")->check(CLI::PositiveNumber);

  fs::path split_manifest, split_out;
  std::string split_axis = "campaign";
  std::vector<std::string> split_held;
  std::size_t split_benign = 0, split_cap = 10;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Write leave-out train.jsonl and test.jsonl");
  split->add_option("--manifest", split_manifest)->required()->check(CLI::ExistingFile);
  split->add_option("--axis", split_axis)->check(CLI::IsMember({"campaign", "resolution"}))->capture_default_str();
  split->add_option("--held", split_held, "Held-out campaigns or WxH resolutions")->required();
  split->add_option("--out", split_out)->required();
  split->add_option("--benign-test", split_benign)->capture_default_str();
  split->add_option("--cap", split_cap, "BMA cap per campaign for resolution splits")->capture_default_str();
  split->add_option("--seed", split_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*hash) return cmd_hash(hash_image);
    if (*scan) {
      scan_args.has_ocr_text = ocr_text->count() > 0;
      return cmd_scan(scan_args);
    }
    if (*serve) return cmd_serve(serve_config, serve_port);
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_manifest, eval_model, eval_fp);
    if (*attack) {
      if (attack_eps255) attack_args.epsilon = *attack_eps255 / 255.0;
      if (attack_args.perturbations.empty() && attack_args.synonyms.empty())
        throw InvalidInput("attack needs --perturbations or --synonyms");
      return cmd_attack(attack_args);
    }
    if (*gen) return cmd_gen_corpus(gen_args);
    if (*split) return cmd_split(split_manifest, split_axis, split_held, split_out, split_benign, split_cap, split_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
