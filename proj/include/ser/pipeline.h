#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ser/audio_io.h"
#include "ser/dataset.h"
#include "ser/dsp.h"
#include "ser/lens.h"
#include "ser/metrics.h"
#include "ser/nn/solver.h"
#include "ser/train.h"

namespace ser {

struct ModelOptions {
  double width_scale = 0.125;
  int input_size = 64;
  int num_classes = 0;  // 0: number of manifest labels
};

struct TrainSettings {
  int epochs = 30;
  int batch_size = 8;
  std::optional<int> patience;
  std::uint64_t seed = 0;
};

struct SynthSettings {
  std::vector<SynthClassSpec> classes = default_synth_specs();
  int utterances_per_class = 25;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
};

struct PathSettings {
  std::string corpus;  // directory of WAVs; empty: use the synthetic corpus
  std::string work_dir = "work";
};

// Every stage parameter in one place. JSON keys mirror the field names;
// missing keys keep their defaults and unknown keys are rejected.
struct PipelineConfig {
  StftConfig stft;
  double db_floor = kDefaultDbFloor;
  LensConfig lens;
  SplitSpec split;
  ModelOptions model;
  nn::SolverConfig solver;
  TrainSettings train;
  SynthSettings synth;
  PathSettings paths;

  // Sets every seed (synth, lens, split, train).
  void set_seed(std::uint64_t seed);
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

nn::ModelConfig model_for(const PipelineConfig& cfg, int num_classes);

// Stage directories below work_dir.
struct WorkLayout {
  std::string root;
  std::string corpus() const;         // WAVs + manifest.jsonl
  std::string spectrograms() const;   // PNG + JSON sidecars
  std::string augmented() const;      // PNGs + manifest.jsonl
  std::string split() const;          // manifest.jsonl + split_summary.csv
  std::string train() const;          // checkpoint.bin, history, curve
  std::string eval() const;           // report files
  std::string leakage() const;
  std::string manifest_in(const std::string& stage_dir) const;
};

// Throws UsageError when `dir` already holds files and overwrite is false;
// clears it otherwise. Creates the directory.
void prepare_output_dir(const std::string& dir, bool overwrite);

Manifest stage_synth(const PipelineConfig& cfg, const std::string& out_dir);
// Catalogs paths.corpus (labels from `<label>_` file-name prefixes).
Manifest stage_catalog(const PipelineConfig& cfg, const std::string& out_dir);
ExpandResult stage_augment(const PipelineConfig& cfg, const Manifest& originals,
                           const std::string& out_dir);
Manifest stage_split(const PipelineConfig& cfg, const Manifest& manifest,
                     const std::string& out_dir);
TrainResult stage_train(const PipelineConfig& cfg, const Manifest& manifest,
                        const std::string& out_dir,
                        const std::function<void(const EpochRecord&)>& on_epoch = {});
ConfusionMatrix stage_eval(const nn::Checkpoint& ckpt, const Manifest& manifest,
                           Split split, const std::vector<EpochRecord>& history,
                           const std::string& out_dir);

struct LeakageRun {
  SplitMode mode;
  int straddling_parents = 0;
  std::map<std::string, std::array<int, 4>> split_counts;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  ConfusionMatrix test_confusion;
};

struct LeakageReport {
  std::vector<LeakageRun> runs;  // random_item, then grouped_by_parent
  double gap = 0.0;              // random_item minus grouped, accuracy fraction
  nlohmann::json to_json(const PipelineConfig& cfg) const;
};

// Runs synth (or catalog), augment, split, train and test evaluation once
// per split mode with identical seeds, writing everything under out_dir.
LeakageReport run_leakage_experiment(
    const PipelineConfig& cfg, const std::string& out_dir,
    const std::function<void(const std::string&)>& log = {});

}  // namespace ser
