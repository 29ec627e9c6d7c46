// ser-cli: batch front end for the speech emotion recognition pipeline.
// Every stage reads its input manifest from disk and writes its outputs
// below --work-dir. Exit codes: 0 ok, 1 usage, 2 data, 3 divergence.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ser/error.h"
#include "ser/nn/gradcheck.h"
#include "ser/pipeline.h"

namespace fs = std::filesystem;
using namespace ser;

namespace {

constexpr double kGradTolerance = 1e-6;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  std::string split_mode;
  std::optional<int> epochs;
  std::optional<double> width_scale;
  bool overwrite = false;
  int jobs = 0;
};

PipelineConfig effective_config(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_pipeline_config(f.config);
  if (f.seed) cfg.set_seed(*f.seed);
  if (!f.work_dir.empty()) cfg.paths.work_dir = f.work_dir;
  if (!f.split_mode.empty()) cfg.split.mode = split_mode_from_string(f.split_mode);
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.width_scale) cfg.model.width_scale = *f.width_scale;
  cfg.validate();
  if (cfg.split.mode == SplitMode::kRandomItem)
    std::cerr << "WARNING: random-item split places augmented siblings of one "
                 "utterance in different splits; test accuracy is inflated by "
                 "leakage\n";
  return cfg;
}

std::string or_default(const std::string& given, const std::string& fallback) {
  return given.empty() ? fallback : given;
}

void print_epoch(const EpochRecord& e) {
  std::printf("epoch %d  train_loss %.6f  val_accuracy %s\n", e.epoch, e.train_loss,
              format_percent(e.val_accuracy).c_str());
  std::fflush(stdout);
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

int fail(const char* kind, const std::string& msg, int code) {
  std::string one_line = msg;
  for (char& c : one_line)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "ser-cli: error[%s]: %s\n", kind, one_line.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech emotion recognition pipeline with lens-based augmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "seed for synth, lens, split and training");
  app.add_option("--work-dir", f.work_dir, "root of all stage outputs");
  app.add_option("--split-mode", f.split_mode, "grouped | random-item")
      ->check(CLI::IsMember({"grouped", "random-item", "grouped_by_parent", "random_item"}));
  app.add_option("--epochs", f.epochs, "training epochs");
  app.add_option("--width-scale", f.width_scale, "channel width multiplier");
  app.add_flag("--overwrite", f.overwrite, "replace existing stage outputs");
  app.add_option("--jobs", f.jobs, "worker threads (0: OpenMP default)")
      ->check(CLI::NonNegativeNumber);

  std::string manifest_path, checkpoint_path, fixture, wav, split_name = "test";

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  auto* catalog = app.add_subcommand("catalog", "catalog paths.corpus WAV files");
  auto* spectrogram = app.add_subcommand("spectrogram", "render spectrogram PNGs");
  spectrogram->add_option("--manifest", manifest_path, "input manifest");
  auto* augment = app.add_subcommand("augment", "lens augmentation of every utterance");
  augment->add_option("--manifest", manifest_path, "input manifest");
  auto* split = app.add_subcommand("split", "assign train/val/test");
  split->add_option("--manifest", manifest_path, "input manifest");
  auto* train_cmd = app.add_subcommand("train", "train the network");
  train_cmd->add_option("--manifest", manifest_path, "split manifest");
  auto* eval = app.add_subcommand("eval", "confusion matrix and report");
  eval->add_option("--manifest", manifest_path, "split manifest");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file");
  eval->add_option("--split", split_name, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--fixture", fixture, "score a stored confusion-matrix CSV instead")
      ->check(CLI::ExistingFile);
  auto* predict_cmd = app.add_subcommand("predict", "classify one WAV file");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file");
  predict_cmd->add_option("wav", wav, "WAV file")->required()->check(CLI::ExistingFile);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  auto* leakage = app.add_subcommand("experiment-leakage",
                                     "random-item versus grouped split comparison");
  auto* config_cmd = app.add_subcommand("config", "print the effective config as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 1);
  }

  try {
    if (f.jobs > 0) omp_set_num_threads(f.jobs);
    const PipelineConfig cfg = effective_config(f);
    const WorkLayout work{cfg.paths.work_dir};

    if (*config_cmd) {
      std::cout << to_json(cfg).dump(2) << "\n";
    } else if (*synth) {
      prepare_output_dir(work.corpus(), f.overwrite);
      const Manifest m = stage_synth(cfg, work.corpus());
      std::printf("wrote %zu utterances to %s\n", m.entries.size(), work.corpus().c_str());
    } else if (*catalog) {
      prepare_output_dir(work.corpus(), f.overwrite);
      const Manifest m = stage_catalog(cfg, work.corpus());
      std::printf("cataloged %zu utterances into %s\n", m.entries.size(),
                  work.corpus().c_str());
    } else if (*spectrogram) {
      const Manifest m =
          read_manifest(or_default(manifest_path, work.manifest_in(work.corpus())));
      prepare_output_dir(work.spectrograms(), f.overwrite);
      write_spectrograms(m, cfg.stft, cfg.db_floor, work.spectrograms());
      std::printf("wrote %zu spectrograms to %s\n", m.entries.size(),
                  work.spectrograms().c_str());
    } else if (*augment) {
      const Manifest m =
          read_manifest(or_default(manifest_path, work.manifest_in(work.corpus())));
      prepare_output_dir(work.augmented(), f.overwrite);
      const ExpandResult r = stage_augment(cfg, m, work.augmented());
      for (const auto& failure : r.failures) std::fprintf(stderr, "skipped %s\n", failure.c_str());
      std::printf("wrote %zu augmented images to %s\n", r.manifest.entries.size(),
                  work.augmented().c_str());
    } else if (*split) {
      const Manifest m =
          read_manifest(or_default(manifest_path, work.manifest_in(work.augmented())));
      prepare_output_dir(work.split(), f.overwrite);
      const Manifest out = stage_split(cfg, m, work.split());
      std::printf("%s split: %zu items, %d straddling parents\n",
                  to_string(cfg.split.mode).c_str(), out.entries.size(),
                  count_straddling_parents(out));
    } else if (*train_cmd) {
      const Manifest m =
          read_manifest(or_default(manifest_path, work.manifest_in(work.split())));
      prepare_output_dir(work.train(), f.overwrite);
      const TrainResult r = stage_train(cfg, m, work.train(), print_epoch);
      std::printf("best epoch %d  val_accuracy %s  checkpoint %s\n", r.best_epoch,
                  format_percent(r.best_val_accuracy).c_str(),
                  (fs::path(work.train()) / "checkpoint.bin").c_str());
    } else if (*eval) {
      if (!fixture.empty()) {
        const ConfusionMatrix cm = load_confusion_csv(fixture);
        std::printf("overall accuracy %s\n", format_percent(overall_accuracy(cm)).c_str());
        std::cout << summary_text(cm);
      } else {
        const Manifest m =
            read_manifest(or_default(manifest_path, work.manifest_in(work.split())));
        const auto ckpt = nn::load_checkpoint(
            or_default(checkpoint_path, (fs::path(work.train()) / "checkpoint.bin").string()));
        prepare_output_dir(work.eval(), f.overwrite);
        const ConfusionMatrix cm = stage_eval(ckpt, m, split_from_string(split_name), {},
                                              work.eval());
        std::printf("overall accuracy %s\n", format_percent(overall_accuracy(cm)).c_str());
        std::cout << summary_text(cm);
      }
    } else if (*predict_cmd) {
      const auto ckpt = nn::load_checkpoint(
          or_default(checkpoint_path, (fs::path(work.train()) / "checkpoint.bin").string()));
      const Prediction p = predict(ckpt, wav, cfg.stft, cfg.db_floor);
      std::printf("label %s\n", p.label.c_str());
      for (size_t i = 0; i < p.probabilities.size(); ++i)
        std::printf("  %-12s %.6f\n", ckpt.labels.names()[i].c_str(), p.probabilities[i]);
    } else if (*gradcheck) {
      double worst = 0.0;
      for (const auto& c : nn::layer_gradient_checks(cfg.train.seed)) {
        std::printf("%-14s max_rel_error %.3e  (%zu entries)\n", c.layer.c_str(),
                    c.max_rel_error, c.checked);
        worst = std::max(worst, c.max_rel_error);
      }
      const auto tiny = nn::tiny_model_check(cfg.train.seed);
      std::printf("%-14s max_rel_error %.3e  (%zu entries, worst %s; "
                  "worst entry %.3e at %s)\n",
                  "tiny_model", tiny.max_rel_error, tiny.checked, tiny.worst.c_str(),
                  tiny.max_entry_rel_error, tiny.worst_entry.c_str());
      worst = std::max(worst, tiny.max_rel_error);
      std::printf("max relative error %.3e (tolerance %.0e)\n", worst, kGradTolerance);
      if (!(worst < kGradTolerance))
        return fail("divergence", "gradient check above tolerance", 3);
    } else if (*leakage) {
      prepare_output_dir(work.leakage(), f.overwrite);
      const LeakageReport r = run_leakage_experiment(
          cfg, work.leakage(), [](const std::string& s) {
            std::printf("%s\n", s.c_str());
            std::fflush(stdout);
          });
      for (const auto& run : r.runs)
        std::printf("%-18s test_accuracy %s  straddling_parents %d\n",
                    to_string(run.mode).c_str(), format_percent(run.test_accuracy).c_str(),
                    run.straddling_parents);
      std::printf("gap %.2f points\n", r.gap * 100.0);
    }
  } catch (const Error& e) {
    return fail(kind_name(e.kind()), e.what(), static_cast<int>(e.kind()));
  } catch (const std::exception& e) {
    return fail("data", e.what(), 2);
  }
  return 0;
}
