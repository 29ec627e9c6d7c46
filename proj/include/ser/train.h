#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ser/dsp.h"
#include "ser/image.h"
#include "ser/manifest.h"
#include "ser/metrics.h"
#include "ser/nn/checkpoint.h"
#include "ser/nn/model_config.h"
#include "ser/nn/solver.h"

namespace ser {

using ImageLoader = std::function<GrayImage(const std::string& path)>;

struct TrainOptions {
  nn::ModelConfig model;
  nn::SolverConfig solver;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;
  std::optional<int> patience;  // early stop after this many epochs without a new best
  std::string checkpoint_path;  // written at each new best when non-empty
  nn::Backend backend = nn::Backend::kParallel;
  ImageLoader loader;           // read_png when empty
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  nn::Checkpoint best;  // initial weights when no epoch ran
  nn::Checkpoint last;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

// Reads only train and val entries. Throws DivergenceError on a non-finite
// loss and DataError on unreadable images.
TrainResult train(const Manifest& manifest, const TrainOptions& opt);

// 8-bit image -> model input: bilinear resize to the model input size,
// scale to [0, 1], subtract `mean`. Gray is replicated across channels.
void image_to_input(const GrayImage& img, const nn::InputSpec& spec, double mean,
                    float* out);

// One argmax prediction per item of the split. Items whose index modulo
// num_shards differs from `shard` are skipped, so merging every shard equals
// the unsharded matrix. Throws DataError before any inference when the
// checkpoint labels differ from the manifest labels.
ConfusionMatrix evaluate(const nn::Checkpoint& ckpt, const Manifest& manifest,
                         Split split, const ImageLoader& loader = {},
                         int shard = 0, int num_shards = 1);

struct Prediction {
  std::string label;
  std::vector<double> probabilities;  // in checkpoint label order
};

// WAV -> spectrogram image -> 256x256 -> model input -> softmax. No lens
// augmentation is applied.
Prediction predict(const nn::Checkpoint& ckpt, const std::string& wav_path,
                   const StftConfig& stft_cfg, double db_floor = kDefaultDbFloor);
Prediction predict_image(const nn::Checkpoint& ckpt, const GrayImage& img);

}  // namespace ser
