#pragma once

// Lens-based spectrogram augmentation.
//
// A spectrogram image is treated as an object viewed through a thin convex
// lens of focal length F. Placing it at distance u > F yields a real image
// with magnification M = F / (u - F): magnified for F < u < 2F, unit size at
// u = 2F and shrunk beyond 2F. Each sampled distance produces one augmented
// image.
//
// Scaling happens on a fixed canvas of the original dimensions: a magnified
// view crops the borders away and a shrunk view is centered on black
// padding. Only after that is every view resized to 256x256. Scaling the
// whole image and then resizing it to 256x256 would undo the scale, and all
// x + y + 1 outputs would be identical.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ser/audio_io.h"
#include "ser/dsp.h"
#include "ser/image.h"

namespace ser {

inline constexpr int kAugmentedSize = 256;

enum class DistanceSampling { kGrid, kSeededUniform };

std::string to_string(DistanceSampling s);
DistanceSampling distance_sampling_from_string(const std::string& s);

struct LensConfig {
  double focal_length = 1.0;
  int num_magnified = 3;  // x: samples with F < u < 2F
  int num_shrunk = 4;     // y: samples with u > 2F
  double u_max = 4.0;     // in units of F
  DistanceSampling sampling = DistanceSampling::kGrid;
  std::uint64_t seed = 0;

  int num_outputs() const { return num_magnified + num_shrunk + 1; }
  void validate() const;
};

nlohmann::json to_json(const LensConfig& cfg);
LensConfig lens_config_from_json(const nlohmann::json& j);
// FNV-1a over the canonical JSON dump; printed as 16 hex digits.
std::string lens_config_hash(const LensConfig& cfg);

struct AugmentedImage {
  GrayImage image;
  double magnification = 1.0;
  double object_distance = 2.0;
  std::string parent_id;
  int augmentation_index = 0;
};

// Thin-lens magnification F / (u - F). Throws DataError when u <= F.
double magnification(double u, double focal_length);

// Magnified side (ascending u), then u = 2F, then the shrunk side.
std::vector<double> sample_distances(const LensConfig& cfg);

namespace serial {
GrayImage apply_lens(const GrayImage& img, double m);
GrayImage resize_bilinear(const GrayImage& img, int w, int h);
}  // namespace serial

// Scales content by m about the image center onto a canvas of the same size.
GrayImage apply_lens(const GrayImage& img, double m);
// Corner-aligned bilinear resampling, half-up rounding.
GrayImage resize_bilinear(const GrayImage& img, int w, int h);

std::vector<AugmentedImage> daarip(const AudioClip& clip,
                                   const StftConfig& stft_cfg,
                                   const LensConfig& lens_cfg);

// Same pipeline starting from an already rendered spectrogram image.
std::vector<AugmentedImage> augment_image(const GrayImage& spectrogram,
                                          const std::string& parent_id,
                                          const LensConfig& lens_cfg);

}  // namespace ser
