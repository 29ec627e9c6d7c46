#include "ser/dsp.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ser/error.h"

namespace ser {

std::string to_string(WindowFn w) {
  switch (w) {
    case WindowFn::kHamming: return "hamming";
    case WindowFn::kHann: return "hann";
    case WindowFn::kRectangular: return "rectangular";
  }
  return "?";
}

WindowFn window_fn_from_string(const std::string& s) {
  if (s == "hamming") return WindowFn::kHamming;
  if (s == "hann") return WindowFn::kHann;
  if (s == "rectangular") return WindowFn::kRectangular;
  throw UsageError("unknown window function '" + s + "'");
}

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void StftConfig::validate() const {
  if (!is_power_of_two(static_cast<size_t>(std::max(nfft, 0))))
    throw UsageError("nfft must be a power of two");
  if (!(0 <= overlap && overlap < window_len && window_len <= nfft))
    throw UsageError("need 0 <= overlap < window_len <= nfft");
}

nlohmann::json to_json(const StftConfig& cfg) {
  return {{"nfft", cfg.nfft},
          {"window_len", cfg.window_len},
          {"overlap", cfg.overlap},
          {"window_fn", to_string(cfg.window)}};
}

StftConfig stft_config_from_json(const nlohmann::json& j) {
  StftConfig cfg;
  cfg.nfft = j.value("nfft", cfg.nfft);
  cfg.window_len = j.value("window_len", cfg.window_len);
  cfg.overlap = j.value("overlap", cfg.overlap);
  cfg.window = window_fn_from_string(j.value("window_fn", to_string(cfg.window)));
  return cfg;
}

double Spectrogram::max_value() const {
  return *std::max_element(values.data.begin(), values.data.end());
}

double Spectrogram::min_value() const {
  return *std::min_element(values.data.begin(), values.data.end());
}

std::vector<double> make_window(WindowFn fn, int n) {
  std::vector<double> w(n, 1.0);
  if (n == 1 || fn == WindowFn::kRectangular) return w;
  const double denom = n - 1;
  // Second half mirrors the first so the window is exactly symmetric.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * i / denom);
    w[i] = w[n - 1 - i] = fn == WindowFn::kHamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
  }
  return w;
}

int frame_count(size_t num_samples, const StftConfig& cfg) {
  if (num_samples < static_cast<size_t>(cfg.window_len)) return 0;
  return static_cast<int>((num_samples - cfg.window_len) / cfg.hop()) + 1;
}

Matrix<double> frame_signal(std::span<const double> samples,
                            const StftConfig& cfg) {
  cfg.validate();
  const int frames = frame_count(samples.size(), cfg);
  if (frames == 0)
    throw DataError("too short: " + std::to_string(samples.size()) +
                    " samples < window " + std::to_string(cfg.window_len));
  Matrix<double> m(frames, cfg.window_len);
  for (int f = 0; f < frames; ++f)
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(f) * cfg.hop(),
                cfg.window_len, m.data.begin() + static_cast<std::ptrdiff_t>(f) * cfg.window_len);
  return m;
}

void fft_inplace(std::span<std::complex<double>> a) {
  const size_t n = a.size();
  if (!is_power_of_two(n)) throw UsageError("fft length must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const size_t half = len / 2;
    for (size_t k = 0; k < half; ++k) {
      // Direct twiddles keep the error at O(eps log n).
      const std::complex<double> w(std::cos(ang * k), std::sin(ang * k));
      for (size_t i = k; i < n; i += len) {
        const std::complex<double> u = a[i];
        const std::complex<double> v = a[i + half] * w;
        a[i] = u + v;
        a[i + half] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x,
                                      size_t n) {
  if (!is_power_of_two(n)) throw UsageError("fft length must be a power of two");
  if (x.size() > n) throw UsageError("fft input longer than transform length");
  std::vector<std::complex<double>> a(n);
  std::copy(x.begin(), x.end(), a.begin());
  fft_inplace(a);
  return a;
}

namespace {

void transform_frame(std::span<const double> samples, const StftConfig& cfg,
                     const std::vector<double>& window, int frame,
                     std::vector<std::complex<double>>& buf,
                     ComplexMatrix& out) {
  std::fill(buf.begin(), buf.end(), std::complex<double>());
  const size_t start = static_cast<size_t>(frame) * cfg.hop();
  for (int i = 0; i < cfg.window_len; ++i)
    buf[i] = samples[start + i] * window[i];
  fft_inplace(buf);
  for (int k = 0; k < out.rows; ++k) out(k, frame) = buf[k];
}

void check_stft_input(std::span<const double> samples, const StftConfig& cfg) {
  cfg.validate();
  if (frame_count(samples.size(), cfg) == 0)
    throw DataError("too short: " + std::to_string(samples.size()) +
                    " samples < window " + std::to_string(cfg.window_len));
}

}  // namespace

namespace serial {

ComplexMatrix stft(std::span<const double> samples, const StftConfig& cfg) {
  check_stft_input(samples, cfg);
  const int frames = frame_count(samples.size(), cfg);
  const auto window = make_window(cfg.window, cfg.window_len);
  ComplexMatrix out(cfg.bins(), frames);
  std::vector<std::complex<double>> buf(cfg.nfft);
  for (int f = 0; f < frames; ++f)
    transform_frame(samples, cfg, window, f, buf, out);
  return out;
}

}  // namespace serial

ComplexMatrix stft(std::span<const double> samples, const StftConfig& cfg) {
  check_stft_input(samples, cfg);
  const int frames = frame_count(samples.size(), cfg);
  const auto window = make_window(cfg.window, cfg.window_len);
  ComplexMatrix out(cfg.bins(), frames);
#pragma omp parallel
  {
    std::vector<std::complex<double>> buf(cfg.nfft);
#pragma omp for schedule(static)
    for (int f = 0; f < frames; ++f)
      transform_frame(samples, cfg, window, f, buf, out);
  }
  return out;
}

ComplexMatrix stft(const AudioClip& clip, const StftConfig& cfg) {
  try {
    return stft(std::span<const double>(clip.samples), cfg);
  } catch (const Error& e) {
    if (clip.source_id.empty()) throw;
    throw Error(e.kind(), std::string(e.what()) + " (" + clip.source_id + ")");
  }
}

Spectrogram power_to_db(const ComplexMatrix& c, double db_floor,
                        const StftConfig& cfg) {
  if (!std::isfinite(db_floor)) throw UsageError("db_floor must be finite");
  Spectrogram s;
  s.db_floor = db_floor;
  s.config = cfg;
  s.values = Matrix<double>(c.rows, c.cols);
  for (size_t i = 0; i < c.data.size(); ++i)
    s.values.data[i] =
        std::max(10.0 * std::log10(std::norm(c.data[i]) + 1e-12), db_floor);
  return s;
}

GrayImage render_image(const Spectrogram& s) {
  if (s.values.data.empty()) throw UsageError("render_image: empty spectrogram");
  const double lo = s.min_value();
  const double hi = s.max_value();
  const int bins = s.values.rows, frames = s.values.cols;
  GrayImage img(frames, bins);
  if (!(hi > lo)) return img;
  const double scale = 255.0 / (hi - lo);
  for (int k = 0; k < bins; ++k)
    for (int t = 0; t < frames; ++t) {
      const double v = std::floor((s.values(k, t) - lo) * scale + 0.5);
      img.at(bins - 1 - k, t) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

GrayImage spectrogram_image(const AudioClip& clip, const StftConfig& cfg,
                            double db_floor) {
  return render_image(power_to_db(stft(clip, cfg), db_floor, cfg));
}

}  // namespace ser
