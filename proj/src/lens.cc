#include "ser/lens.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ser/error.h"

namespace ser {

std::string to_string(DistanceSampling s) {
  return s == DistanceSampling::kGrid ? "grid" : "seeded_uniform";
}

DistanceSampling distance_sampling_from_string(const std::string& s) {
  if (s == "grid") return DistanceSampling::kGrid;
  if (s == "seeded_uniform") return DistanceSampling::kSeededUniform;
  throw UsageError("unknown distance sampling '" + s + "'");
}

void LensConfig::validate() const {
  if (!(focal_length > 0.0)) throw UsageError("focal length must be > 0");
  if (num_magnified < 0 || num_shrunk < 0)
    throw UsageError("x and y must be >= 0");
  if (!(u_max > 2.0)) throw UsageError("u_max must exceed 2 (units of F)");
}

nlohmann::json to_json(const LensConfig& cfg) {
  return {{"focal_length", cfg.focal_length},
          {"x", cfg.num_magnified},
          {"y", cfg.num_shrunk},
          {"u_max", cfg.u_max},
          {"sampling", to_string(cfg.sampling)},
          {"seed", cfg.seed}};
}

LensConfig lens_config_from_json(const nlohmann::json& j) {
  LensConfig cfg;
  cfg.focal_length = j.value("focal_length", cfg.focal_length);
  cfg.num_magnified = j.value("x", cfg.num_magnified);
  cfg.num_shrunk = j.value("y", cfg.num_shrunk);
  cfg.u_max = j.value("u_max", cfg.u_max);
  cfg.sampling = distance_sampling_from_string(
      j.value("sampling", to_string(cfg.sampling)));
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

std::string lens_config_hash(const LensConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double magnification(double u, double focal_length) {
  if (!(u > focal_length))
    throw DataError("virtual/no image: distance must exceed focal length");
  return focal_length / (u - focal_length);
}

std::vector<double> sample_distances(const LensConfig& cfg) {
  cfg.validate();
  const double f = cfg.focal_length;
  const int x = cfg.num_magnified, y = cfg.num_shrunk;
  std::vector<double> near, far;
  if (cfg.sampling == DistanceSampling::kGrid) {
    for (int i = 1; i <= x; ++i) near.push_back(f * (1.0 + double(i) / (x + 1)));
    for (int j = 1; j <= y; ++j)
      far.push_back(f * (2.0 + j * (cfg.u_max - 2.0) / y));
  } else {
    std::mt19937_64 rng(cfg.seed);
    // Open intervals: redraw the (measure-zero) lower endpoint.
    auto draw = [&](double lo, double hi) {
      std::uniform_real_distribution<double> d(lo, hi);
      double v;
      do v = d(rng);
      while (v <= lo);
      return v;
    };
    for (int i = 0; i < x; ++i) near.push_back(draw(f, 2.0 * f));
    for (int j = 0; j < y; ++j) far.push_back(draw(2.0 * f, f * cfg.u_max));
    std::sort(near.begin(), near.end());
    std::sort(far.begin(), far.end());
  }
  std::vector<double> u = near;
  u.push_back(2.0 * f);
  u.insert(u.end(), far.begin(), far.end());
  return u;
}

namespace {

// Bilinear sample at (x, y); points outside the pixel-center grid read 0.
inline std::uint8_t sample(const GrayImage& img, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= img.width - 1 && y <= img.height - 1))
    return 0;
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
  const double bottom = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
  const double v = top * (1.0 - fy) + bottom * fy;
  return static_cast<std::uint8_t>(std::min(std::floor(v + 0.5), 255.0));
}

inline void lens_row(const GrayImage& img, double m, int row, GrayImage& out) {
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  const double ys = cy + (row - cy) / m;
  for (int col = 0; col < img.width; ++col)
    out.at(row, col) = sample(img, cx + (col - cx) / m, ys);
}

inline double resize_coord(int dst, int src_extent, int dst_extent) {
  if (dst_extent == 1) return (src_extent - 1) / 2.0;
  return static_cast<double>(dst) * (src_extent - 1) / (dst_extent - 1);
}

inline void resize_row(const GrayImage& img, int row, GrayImage& out) {
  const double ys = resize_coord(row, img.height, out.height);
  for (int col = 0; col < out.width; ++col)
    out.at(row, col) = sample(img, resize_coord(col, img.width, out.width), ys);
}

void check_lens_args(const GrayImage& img, double m) {
  if (img.empty()) throw UsageError("apply_lens: empty image");
  if (!(m > 0.0)) throw UsageError("apply_lens: magnification must be > 0");
}

void check_resize_args(const GrayImage& img, int w, int h) {
  if (img.empty()) throw UsageError("resize_bilinear: empty image");
  if (w < 1 || h < 1) throw UsageError("resize_bilinear: bad target size");
}

}  // namespace

namespace serial {

GrayImage apply_lens(const GrayImage& img, double m) {
  check_lens_args(img, m);
  GrayImage out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) lens_row(img, m, r, out);
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int w, int h) {
  check_resize_args(img, w, h);
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r) resize_row(img, r, out);
  return out;
}

}  // namespace serial

GrayImage apply_lens(const GrayImage& img, double m) {
  check_lens_args(img, m);
  if (m == 1.0) return img;
  GrayImage out(img.width, img.height);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < img.height; ++r) lens_row(img, m, r, out);
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int w, int h) {
  check_resize_args(img, w, h);
  if (w == img.width && h == img.height) return img;
  GrayImage out(w, h);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) resize_row(img, r, out);
  return out;
}

std::vector<AugmentedImage> augment_image(const GrayImage& spectrogram,
                                          const std::string& parent_id,
                                          const LensConfig& lens_cfg) {
  const auto distances = sample_distances(lens_cfg);
  std::vector<AugmentedImage> out;
  out.reserve(distances.size());
  for (size_t k = 0; k < distances.size(); ++k) {
    AugmentedImage a;
    a.object_distance = distances[k];
    a.magnification = magnification(distances[k], lens_cfg.focal_length);
    a.image = resize_bilinear(apply_lens(spectrogram, a.magnification),
                              kAugmentedSize, kAugmentedSize);
    a.parent_id = parent_id;
    a.augmentation_index = static_cast<int>(k);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AugmentedImage> daarip(const AudioClip& clip,
                                   const StftConfig& stft_cfg,
                                   const LensConfig& lens_cfg) {
  lens_cfg.validate();
  return augment_image(spectrogram_image(clip, stft_cfg), clip.source_id,
                       lens_cfg);
}

}  // namespace ser
