#include "ser/pipeline.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ser/error.h"
#include "ser/nn/model_config.h"

namespace ser {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& section) {
  if (!j.is_object())
    throw UsageError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw UsageError("config: unknown key '" +
                       (section.empty() ? key : section + "." + key) + "'");
}

json to_json(const SynthClassSpec& s) {
  return {{"class_label", s.class_label},
          {"fundamental_hz", s.fundamental_hz},
          {"modulation", to_string(s.modulation)},
          {"per_utterance_jitter", s.per_utterance_jitter},
          {"noise_floor", s.noise_floor}};
}

SynthClassSpec synth_class_from_json(const json& j) {
  check_keys(j,
             {"class_label", "fundamental_hz", "modulation",
              "per_utterance_jitter", "noise_floor"},
             "synth.classes[]");
  SynthClassSpec s;
  s.class_label = j.at("class_label").get<std::string>();
  s.fundamental_hz = j.value("fundamental_hz", s.fundamental_hz);
  s.modulation = modulation_from_string(j.value("modulation", to_string(s.modulation)));
  s.per_utterance_jitter = j.value("per_utterance_jitter", s.per_utterance_jitter);
  s.noise_floor = j.value("noise_floor", s.noise_floor);
  return s;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

}  // namespace

void PipelineConfig::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  lens.seed = seed;
  split.seed = seed;
  train.seed = seed;
}

void PipelineConfig::validate() const {
  stft.validate();
  lens.validate();
  split.validate();
  solver.validate();
  if (!(model.width_scale > 0.0)) throw UsageError("model.width_scale must be > 0");
  if (model.input_size < 1) throw UsageError("model.input_size must be >= 1");
  if (model.num_classes < 0) throw UsageError("model.num_classes must be >= 0");
  if (train.epochs < 0) throw UsageError("train.epochs must be >= 0");
  if (train.batch_size < 1) throw UsageError("train.batch_size must be >= 1");
  if (train.patience && *train.patience < 1)
    throw UsageError("train.patience must be >= 1");
  if (synth.classes.empty()) throw UsageError("synth.classes must be non-empty");
  if (synth.utterances_per_class < 1)
    throw UsageError("synth.utterances_per_class must be >= 1");
  if (!(synth.duration_s > 0.0)) throw UsageError("synth.duration_s must be > 0");
  if (synth.sample_rate < 1) throw UsageError("synth.sample_rate must be >= 1");
  if (paths.work_dir.empty()) throw UsageError("paths.work_dir must be set");
}

json to_json(const PipelineConfig& cfg) {
  json classes = json::array();
  for (const auto& c : cfg.synth.classes) classes.push_back(to_json(c));
  return {
      {"stft", to_json(cfg.stft)},
      {"db_floor", cfg.db_floor},
      {"lens", to_json(cfg.lens)},
      {"split",
       {{"train", cfg.split.train},
        {"val", cfg.split.val},
        {"test", cfg.split.test},
        {"mode", to_string(cfg.split.mode)},
        {"stratify", cfg.split.stratify},
        {"seed", cfg.split.seed}}},
      {"model",
       {{"width_scale", cfg.model.width_scale},
        {"input_size", cfg.model.input_size},
        {"num_classes", cfg.model.num_classes}}},
      {"solver", nn::to_json(cfg.solver)},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"patience", cfg.train.patience ? json(*cfg.train.patience) : json(nullptr)},
        {"seed", cfg.train.seed}}},
      {"synth",
       {{"classes", classes},
        {"utterances_per_class", cfg.synth.utterances_per_class},
        {"duration_s", cfg.synth.duration_s},
        {"sample_rate", cfg.synth.sample_rate},
        {"seed", cfg.synth.seed}}},
      {"paths", {{"corpus", cfg.paths.corpus}, {"work_dir", cfg.paths.work_dir}}},
  };
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig cfg;
  try {
    check_keys(j,
               {"stft", "db_floor", "lens", "split", "model", "solver", "train",
                "synth", "paths"},
               "");
    if (j.contains("stft")) {
      check_keys(j["stft"], {"nfft", "window_len", "overlap", "window_fn"}, "stft");
      cfg.stft = stft_config_from_json(j["stft"]);
    }
    cfg.db_floor = j.value("db_floor", cfg.db_floor);
    if (j.contains("lens")) {
      check_keys(j["lens"], {"focal_length", "x", "y", "u_max", "sampling", "seed"},
                 "lens");
      cfg.lens = lens_config_from_json(j["lens"]);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      check_keys(s, {"train", "val", "test", "mode", "stratify", "seed"}, "split");
      cfg.split.train = s.value("train", cfg.split.train);
      cfg.split.val = s.value("val", cfg.split.val);
      cfg.split.test = s.value("test", cfg.split.test);
      cfg.split.mode = split_mode_from_string(s.value("mode", to_string(cfg.split.mode)));
      cfg.split.stratify = s.value("stratify", cfg.split.stratify);
      cfg.split.seed = s.value("seed", cfg.split.seed);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      check_keys(m, {"width_scale", "input_size", "num_classes"}, "model");
      cfg.model.width_scale = m.value("width_scale", cfg.model.width_scale);
      cfg.model.input_size = m.value("input_size", cfg.model.input_size);
      cfg.model.num_classes = m.value("num_classes", cfg.model.num_classes);
    }
    if (j.contains("solver")) {
      check_keys(j["solver"],
                 {"base_lr", "lr_policy", "momentum", "weight_decay", "solver_type"},
                 "solver");
      cfg.solver = nn::solver_config_from_json(j["solver"]);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, {"epochs", "batch_size", "patience", "seed"}, "train");
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      if (t.contains("patience") && !t["patience"].is_null())
        cfg.train.patience = t["patience"].get<int>();
      cfg.train.seed = t.value("seed", cfg.train.seed);
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      check_keys(s,
                 {"classes", "utterances_per_class", "duration_s", "sample_rate",
                  "seed"},
                 "synth");
      if (s.contains("classes")) {
        cfg.synth.classes.clear();
        for (const auto& c : s["classes"]) cfg.synth.classes.push_back(synth_class_from_json(c));
      }
      cfg.synth.utterances_per_class =
          s.value("utterances_per_class", cfg.synth.utterances_per_class);
      cfg.synth.duration_s = s.value("duration_s", cfg.synth.duration_s);
      cfg.synth.sample_rate = s.value("sample_rate", cfg.synth.sample_rate);
      cfg.synth.seed = s.value("seed", cfg.synth.seed);
    }
    if (j.contains("paths")) {
      check_keys(j["paths"], {"corpus", "work_dir"}, "paths");
      cfg.paths.corpus = j["paths"].value("corpus", cfg.paths.corpus);
      cfg.paths.work_dir = j["paths"].value("work_dir", cfg.paths.work_dir);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

nn::ModelConfig model_for(const PipelineConfig& cfg, int num_classes) {
  const int classes = cfg.model.num_classes > 0 ? cfg.model.num_classes : num_classes;
  return nn::build_alexnet_like(classes, cfg.model.width_scale, 1,
                                cfg.model.input_size);
}

std::string WorkLayout::corpus() const { return (fs::path(root) / "corpus").string(); }
std::string WorkLayout::spectrograms() const {
  return (fs::path(root) / "spectrograms").string();
}
std::string WorkLayout::augmented() const {
  return (fs::path(root) / "augmented").string();
}
std::string WorkLayout::split() const { return (fs::path(root) / "split").string(); }
std::string WorkLayout::train() const { return (fs::path(root) / "train").string(); }
std::string WorkLayout::eval() const { return (fs::path(root) / "eval").string(); }
std::string WorkLayout::leakage() const { return (fs::path(root) / "leakage").string(); }
std::string WorkLayout::manifest_in(const std::string& stage_dir) const {
  return (fs::path(stage_dir) / "manifest.jsonl").string();
}

void prepare_output_dir(const std::string& dir, bool overwrite) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite)
      throw UsageError(dir + " is not empty; pass --overwrite to replace it");
    fs::remove_all(dir, ec);
    if (ec) throw DataError("cannot clear " + dir + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
}

Manifest stage_synth(const PipelineConfig& cfg, const std::string& out_dir) {
  SynthOptions opt;
  opt.utterances_per_class = cfg.synth.utterances_per_class;
  opt.duration_s = cfg.synth.duration_s;
  opt.sample_rate = cfg.synth.sample_rate;
  opt.seed = cfg.synth.seed;
  Manifest m = synth_corpus(cfg.synth.classes, opt, out_dir);
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), m);
  return m;
}

Manifest stage_catalog(const PipelineConfig& cfg, const std::string& out_dir) {
  if (cfg.paths.corpus.empty()) throw UsageError("paths.corpus is not set");
  std::vector<std::string> labels;
  for (const auto& c : cfg.synth.classes) labels.push_back(c.class_label);
  auto built = build_manifest(cfg.paths.corpus, prefix_rules(labels));
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), built.manifest);
  return built.manifest;
}

ExpandResult stage_augment(const PipelineConfig& cfg, const Manifest& originals,
                           const std::string& out_dir) {
  ExpandOptions opt;
  opt.stft = cfg.stft;
  opt.lens = cfg.lens;
  opt.db_floor = cfg.db_floor;
  ExpandResult r = expand_with_augmented(originals, opt, out_dir);
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), r.manifest);
  return r;
}

Manifest stage_split(const PipelineConfig& cfg, const Manifest& manifest,
                     const std::string& out_dir) {
  Manifest m = assign_splits(manifest, cfg.split, /*resplit=*/true);
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), m);
  write_split_summary((fs::path(out_dir) / "split_summary.csv").string(), m);
  return m;
}

TrainResult stage_train(const PipelineConfig& cfg, const Manifest& manifest,
                        const std::string& out_dir,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainOptions opt;
  opt.model = model_for(cfg, manifest.labels.size());
  opt.solver = cfg.solver;
  opt.epochs = cfg.train.epochs;
  opt.batch_size = cfg.train.batch_size;
  opt.patience = cfg.train.patience;
  opt.seed = cfg.train.seed;
  opt.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  opt.on_epoch = on_epoch;
  TrainResult r = train(manifest, opt);
  nn::save_checkpoint((fs::path(out_dir) / "last.bin").string(), r.last);
  write_text(fs::path(out_dir) / "history.csv", history_csv(r.history));
  if (!r.history.empty())
    write_text(fs::path(out_dir) / "training_curve.svg", training_curve_svg(r.history));
  return r;
}

ConfusionMatrix stage_eval(const nn::Checkpoint& ckpt, const Manifest& manifest,
                           Split split, const std::vector<EpochRecord>& history,
                           const std::string& out_dir) {
  ConfusionMatrix cm = evaluate(ckpt, manifest, split);
  write_report(cm, history, out_dir);
  return cm;
}

json LeakageReport::to_json(const PipelineConfig& cfg) const {
  json runs_json = json::array();
  for (const auto& r : runs) {
    json counts = json::object();
    for (const auto& [label, c] : r.split_counts)
      counts[label] = {{"train", c[0]}, {"val", c[1]}, {"test", c[2]}};
    runs_json.push_back({{"split_mode", to_string(r.mode)},
                         {"straddling_parents", r.straddling_parents},
                         {"split_counts", counts},
                         {"best_epoch", r.best_epoch},
                         {"best_val_accuracy", r.best_val_accuracy},
                         {"test_accuracy", r.test_accuracy},
                         {"test_confusion", r.test_confusion.rows()}});
  }
  return {{"schema_version", 1},
          {"labels", runs.empty() ? json::array()
                                  : json(runs.front().test_confusion.labels().names())},
          {"runs", runs_json},
          {"gap", gap},
          {"seeds",
           {{"synth", cfg.synth.seed},
            {"lens", cfg.lens.seed},
            {"split", cfg.split.seed},
            {"train", cfg.train.seed}}},
          {"config", ser::to_json(cfg)}};
}

LeakageReport run_leakage_experiment(
    const PipelineConfig& cfg, const std::string& out_dir,
    const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const WorkLayout work{out_dir};
  fs::create_directories(work.corpus());
  fs::create_directories(work.augmented());
  const Manifest originals = cfg.paths.corpus.empty()
                                 ? stage_synth(cfg, work.corpus())
                                 : stage_catalog(cfg, work.corpus());
  say("corpus: " + std::to_string(originals.entries.size()) + " utterances");
  const ExpandResult expanded = stage_augment(cfg, originals, work.augmented());
  say("augmented: " + std::to_string(expanded.manifest.entries.size()) + " images");

  LeakageReport report;
  for (SplitMode mode : {SplitMode::kRandomItem, SplitMode::kGroupedByParent}) {
    PipelineConfig run_cfg = cfg;
    run_cfg.split.mode = mode;
    const fs::path dir = fs::path(out_dir) / to_string(mode);
    fs::create_directories(dir / "split");
    fs::create_directories(dir / "train");
    const Manifest split = stage_split(run_cfg, expanded.manifest, (dir / "split").string());
    LeakageRun run;
    run.mode = mode;
    run.straddling_parents = count_straddling_parents(split);
    run.split_counts = split_counts(split);
    say(to_string(mode) + ": " + std::to_string(run.straddling_parents) +
        " straddling parents");
    const TrainResult tr = stage_train(run_cfg, split, (dir / "train").string(),
                                       [&](const EpochRecord& e) {
                                         char buf[128];
                                         std::snprintf(buf, sizeof(buf),
                                                       "%s epoch %d loss %.4f val %s",
                                                       to_string(mode).c_str(), e.epoch,
                                                       e.train_loss,
                                                       format_percent(e.val_accuracy).c_str());
                                         say(buf);
                                       });
    run.best_epoch = tr.best_epoch;
    run.best_val_accuracy = tr.best_val_accuracy;
    run.test_confusion =
        stage_eval(tr.best, split, Split::kTest, tr.history, (dir / "eval").string());
    run.test_accuracy = overall_accuracy(run.test_confusion);
    say(to_string(mode) + ": test accuracy " + format_percent(run.test_accuracy));
    report.runs.push_back(std::move(run));
  }
  report.gap = report.runs[0].test_accuracy - report.runs[1].test_accuracy;

  write_text(fs::path(out_dir) / "leakage_report.json", report.to_json(cfg).dump(2) + "\n");
  std::ostringstream summary;
  summary << "split_mode,test_accuracy,straddling_parents\n";
  for (const auto& r : report.runs)
    summary << to_string(r.mode) << ',' << format_percent(r.test_accuracy) << ','
            << r.straddling_parents << '\n';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "gap,%.2f points\n", report.gap * 100.0);
  summary << buf;
  write_text(fs::path(out_dir) / "leakage_summary.csv", summary.str());
  return report;
}

}  // namespace ser
