#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ser/audio_io.h"
#include "ser/image.h"

namespace ser {

enum class WindowFn { kHamming, kHann, kRectangular };

std::string to_string(WindowFn w);
WindowFn window_fn_from_string(const std::string& s);

struct StftConfig {
  int nfft = 512;
  int window_len = 512;
  int overlap = 384;
  WindowFn window = WindowFn::kHamming;

  int hop() const { return window_len - overlap; }
  int bins() const { return nfft / 2 + 1; }
  // Throws UsageError if the invariants do not hold.
  void validate() const;
};

nlohmann::json to_json(const StftConfig& cfg);
StftConfig stft_config_from_json(const nlohmann::json& j);

// Dense row-major matrix.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
};

using ComplexMatrix = Matrix<std::complex<double>>;

struct Spectrogram {
  Matrix<double> values;  // rows = frequency bins, cols = frames, dB
  double db_floor = -80.0;
  StftConfig config;

  double max_value() const;
  double min_value() const;
};

inline constexpr double kDefaultDbFloor = -80.0;

bool is_power_of_two(size_t n);

// Window coefficients (symmetric form) of length n.
std::vector<double> make_window(WindowFn fn, int n);

int frame_count(size_t num_samples, const StftConfig& cfg);

// frames x window_len. Throws DataError("too short") if the signal is
// shorter than one window.
Matrix<double> frame_signal(std::span<const double> samples,
                            const StftConfig& cfg);

// Radix-2 decimation-in-time FFT; x is zero-padded to n.
std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x,
                                      size_t n);
// In-place variant, data.size() must be a power of two.
void fft_inplace(std::span<std::complex<double>> data);

namespace serial {
ComplexMatrix stft(std::span<const double> samples, const StftConfig& cfg);
}  // namespace serial

// OpenMP over frames; output is identical to serial::stft.
ComplexMatrix stft(std::span<const double> samples, const StftConfig& cfg);
ComplexMatrix stft(const AudioClip& clip, const StftConfig& cfg);

Spectrogram power_to_db(const ComplexMatrix& c, double db_floor,
                        const StftConfig& cfg = {});

// Per-image [min, max] -> [0, 255], half-up rounding. Low frequencies land
// on the bottom row.
GrayImage render_image(const Spectrogram& s);

// clip -> stft -> dB -> image.
GrayImage spectrogram_image(const AudioClip& clip, const StftConfig& cfg,
                            double db_floor = kDefaultDbFloor);

}  // namespace ser
