#include "ser/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ser/audio_io.h"
#include "ser/error.h"
#include "ser/lens.h"
#include "ser/nn/kernels.h"

namespace ser {

namespace {

GrayImage load_with(const ImageLoader& loader, const std::string& path) {
  return loader ? loader(path) : read_png(path);
}

size_t sample_size(const nn::InputSpec& s) {
  return size_t(s.channels) * s.height * s.width;
}

// Decoded, resized, [0, 1]-scaled pixels of every item; mean not removed.
struct Batchable {
  std::vector<std::vector<float>> pixels;
  std::vector<int> labels;
};

Batchable load_items(const std::vector<const ManifestEntry*>& items,
                     const LabelSet& labels, const nn::InputSpec& spec,
                     const ImageLoader& loader) {
  Batchable b;
  b.pixels.resize(items.size());
  b.labels.resize(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    b.labels[i] = labels.index_of(items[i]->label);
    b.pixels[i].resize(sample_size(spec));
    image_to_input(load_with(loader, items[i]->path), spec, 0.0,
                   b.pixels[i].data());
  }
  return b;
}

int argmax(std::span<const float> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

ConfusionMatrix evaluate_loaded(const nn::Network<float>& net,
                                const LabelSet& labels, const Batchable& items,
                                double mean) {
  const auto& spec = net.config().input;
  const int n = static_cast<int>(items.pixels.size());
  std::vector<int> predicted(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    nn::Tensor<float> x({1, spec.channels, spec.height, spec.width});
    for (size_t k = 0; k < x.size(); ++k)
      x[k] = static_cast<float>(items.pixels[i][k] - mean);
    predicted[i] = argmax(net.infer(x).values());
  }
  ConfusionMatrix cm(labels);
  for (int i = 0; i < n; ++i) cm.add(items.labels[i], predicted[i]);
  return cm;
}

}  // namespace

void TrainOptions::validate() const {
  model.validate();
  solver.validate();
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (patience && *patience < 1) throw UsageError("patience must be >= 1");
}

void image_to_input(const GrayImage& img, const nn::InputSpec& spec, double mean,
                    float* out) {
  GrayImage resized;
  const GrayImage* src = &img;
  if (img.width != spec.width || img.height != spec.height) {
    resized = resize_bilinear(img, spec.width, spec.height);
    src = &resized;
  }
  const size_t plane = size_t(spec.height) * spec.width;
  for (size_t k = 0; k < plane; ++k) {
    const float v = static_cast<float>(src->pixels[k] / 255.0 - mean);
    for (int c = 0; c < spec.channels; ++c) out[c * plane + k] = v;
  }
}

TrainResult train(const Manifest& manifest, const TrainOptions& opt) {
  opt.validate();
  const auto train_items = manifest.in_split(Split::kTrain);
  const auto val_items = manifest.in_split(Split::kVal);
  if (train_items.empty()) throw DataError("empty train split");
  if (val_items.empty()) throw DataError("empty val split");
  if (opt.model.num_classes != manifest.labels.size())
    throw UsageError("model has " + std::to_string(opt.model.num_classes) +
                     " classes but the manifest has " +
                     std::to_string(manifest.labels.size()) + " labels");

  const auto& spec = opt.model.input;
  const Batchable train_set =
      load_items(train_items, manifest.labels, spec, opt.loader);
  const Batchable val_set = load_items(val_items, manifest.labels, spec, opt.loader);

  double sum = 0.0;
  for (const auto& p : train_set.pixels)
    for (float v : p) sum += v;
  const double mean = sum / (double(train_set.pixels.size()) * sample_size(spec));

  nn::Network<float> net(opt.model, opt.backend);
  net.init_he(opt.seed);
  nn::SgdState<float> state;

  TrainResult result;
  result.best = nn::make_checkpoint(net, manifest.labels, 0, mean);
  if (opt.epochs == 0 && !opt.checkpoint_path.empty())
    nn::save_checkpoint(opt.checkpoint_path, result.best);

  const int n = static_cast<int>(train_set.pixels.size());
  std::vector<int> order(n);
  long long iteration = 0;
  int since_best = 0;
  bool have_best = false;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed),
                      static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += opt.batch_size) {
      const int b = std::min(opt.batch_size, n - start);
      nn::Tensor<float> x({b, spec.channels, spec.height, spec.width});
      std::vector<int> labels(b);
      const size_t row = sample_size(spec);
      for (int i = 0; i < b; ++i) {
        const int item = order[start + i];
        labels[i] = train_set.labels[item];
        const auto& px = train_set.pixels[item];
        for (size_t k = 0; k < row; ++k)
          x[size_t(i) * row + k] = static_cast<float>(px[k] - mean);
      }
      ++iteration;
      const double loss = net.loss_and_grad(x, labels);
      if (!std::isfinite(loss))
        throw DivergenceError("diverged at iteration " + std::to_string(iteration));
      nn::sgd_step(net.params(), state, opt.solver);
      loss_sum += loss * b;
    }

    const ConfusionMatrix cm =
        evaluate_loaded(net, manifest.labels, val_set, mean);
    const EpochRecord rec{epoch, loss_sum / n, overall_accuracy(cm)};
    result.history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);

    if (!have_best || rec.val_accuracy > result.best_val_accuracy) {
      have_best = true;
      since_best = 0;
      result.best_epoch = epoch;
      result.best_val_accuracy = rec.val_accuracy;
      result.best = nn::make_checkpoint(net, manifest.labels, epoch, mean, &state);
      if (!opt.checkpoint_path.empty())
        nn::save_checkpoint(opt.checkpoint_path, result.best);
    } else if (opt.patience && ++since_best >= *opt.patience) {
      break;
    }
  }
  result.last = result.history.empty()
                    ? result.best
                    : nn::make_checkpoint(net, manifest.labels,
                                          result.history.back().epoch, mean, &state);
  return result;
}

ConfusionMatrix evaluate(const nn::Checkpoint& ckpt, const Manifest& manifest,
                         Split split, const ImageLoader& loader, int shard,
                         int num_shards) {
  if (!(ckpt.labels == manifest.labels))
    throw DataError("checkpoint labels do not match the manifest labels");
  if (num_shards < 1 || shard < 0 || shard >= num_shards)
    throw UsageError("invalid shard " + std::to_string(shard) + "/" +
                     std::to_string(num_shards));
  const auto all = manifest.in_split(split);
  std::vector<const ManifestEntry*> items;
  for (size_t i = 0; i < all.size(); ++i)
    if (static_cast<int>(i % num_shards) == shard) items.push_back(all[i]);
  const auto net = nn::network_from_checkpoint(ckpt);
  const Batchable loaded = load_items(items, ckpt.labels, ckpt.model.input, loader);
  return evaluate_loaded(net, ckpt.labels, loaded, ckpt.input_mean);
}

Prediction predict_image(const nn::Checkpoint& ckpt, const GrayImage& img) {
  const auto net = nn::network_from_checkpoint(ckpt);
  const auto& spec = ckpt.model.input;
  const GrayImage canvas =
      resize_bilinear(img, kAugmentedSize, kAugmentedSize);
  nn::Tensor<float> x({1, spec.channels, spec.height, spec.width});
  image_to_input(canvas, spec, ckpt.input_mean, x.data());
  const auto logits = net.infer(x);
  const auto probs = nn::softmax(logits.cast<double>());
  Prediction p;
  p.probabilities.assign(probs.values().begin(), probs.values().end());
  p.label = ckpt.labels.names()[argmax(logits.values())];
  return p;
}

Prediction predict(const nn::Checkpoint& ckpt, const std::string& wav_path,
                   const StftConfig& stft_cfg, double db_floor) {
  return predict_image(ckpt,
                       spectrogram_image(load_wav(wav_path), stft_cfg, db_floor));
}

}  // namespace ser
