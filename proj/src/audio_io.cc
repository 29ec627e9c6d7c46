#include "ser/audio_io.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "ser/error.h"

namespace ser {

namespace {

// Harmonics stop here so that the lens crops around mid-band still see
// partials while the upper band keeps only noise.
constexpr double kMaxPartialHz = 6000.0;

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, size_t pos) {
  return std::uint32_t(b[pos]) | std::uint32_t(b[pos + 1]) << 8 |
         std::uint32_t(b[pos + 2]) << 16 | std::uint32_t(b[pos + 3]) << 24;
}

std::uint16_t read_u16(const std::vector<std::uint8_t>& b, size_t pos) {
  return static_cast<std::uint16_t>(b[pos] | b[pos + 1] << 8);
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& b, const char* tag) {
  b.insert(b.end(), tag, tag + 4);
}

bool tag_is(const std::vector<std::uint8_t>& b, size_t pos, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(pos));
}

}  // namespace

AudioClip parse_wav(const std::vector<std::uint8_t>& b,
                    const std::string& source_id) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE"))
    throw DataError("not a WAV: " + source_id);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  size_t data_pos = 0, data_len = 0;
  bool have_data = false;

  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t len = read_u32(b, pos + 4);
    const size_t body = pos + 8;
    if (tag_is(b, pos, "fmt ")) {
      if (len < 16 || body + 16 > b.size())
        throw DataError("not a WAV: truncated fmt chunk in " + source_id);
      format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = read_u32(b, body + 4);
      bits = read_u16(b, body + 14);
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      data_pos = body;
      data_len = std::min<size_t>(len, b.size() - body);
      have_data = true;
    }
    pos = body + len + (len & 1);  // chunks are word aligned
  }
  if (!have_fmt || !have_data)
    throw DataError("not a WAV: missing fmt or data chunk in " + source_id);
  // 0xFFFE (extensible) is not accepted; only plain PCM.
  if (format != 1 || bits != 16)
    throw DataError("unsupported format: need PCM 16-bit (" + source_id + ")");
  if (channels != 1 && channels != 2)
    throw DataError("unsupported format: " + std::to_string(channels) +
                    " channels (" + source_id + ")");
  if (rate == 0) throw DataError("not a WAV: zero sample rate in " + source_id);

  const size_t frame_bytes = 2u * channels;
  const size_t frames = data_len / frame_bytes;
  if (frames == 0) throw DataError("empty audio: " + source_id);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = source_id;
  clip.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(
          read_u16(b, data_pos + f * frame_bytes + 2 * c));
      sum += raw / 32768.0;
    }
    clip.samples[f] = sum / channels;
  }
  return clip;
}

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_wav(bytes, std::filesystem::path(path).stem().string());
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw UsageError("sample_rate must be > 0");
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_len);
  put_tag(b, "RIFF");
  put_u32(b, 36 + data_len);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, 1);  // PCM
  put_u16(b, 1);  // mono
  put_u32(b, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(b, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(b, 2);
  put_u16(b, 16);
  put_tag(b, "data");
  put_u32(b, data_len);
  for (double s : clip.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return b;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path);
}

std::string to_string(Modulation m) {
  switch (m) {
    case Modulation::kNone: return "none";
    case Modulation::kChirp: return "chirp";
    case Modulation::kTremolo: return "tremolo";
  }
  return "?";
}

Modulation modulation_from_string(const std::string& s) {
  if (s == "none") return Modulation::kNone;
  if (s == "chirp") return Modulation::kChirp;
  if (s == "tremolo") return Modulation::kTremolo;
  throw UsageError("unknown modulation '" + s + "'");
}

std::vector<SynthClassSpec> default_synth_specs() {
  // Each class differs in a way that survives uniform rescaling of the
  // spectrogram image: modulation pattern or background noise level.
  return {
      {"anger", 220.0, Modulation::kChirp, 0.08, 0.002},
      {"happiness", 220.0, Modulation::kTremolo, 0.08, 0.002},
      {"neutral", 220.0, Modulation::kNone, 0.08, 0.002},
      {"sadness", 220.0, Modulation::kNone, 0.08, 0.05},
  };
}

AudioClip synth_utterance(const SynthClassSpec& spec, const SynthOptions& opt,
                          int class_index, int utterance_index) {
  const double nyquist = opt.sample_rate / 2.0;
  if (!(spec.fundamental_hz > 0.0 && spec.fundamental_hz < nyquist))
    throw UsageError("class '" + spec.class_label + "': fundamental " +
                     std::to_string(spec.fundamental_hz) +
                     " Hz must lie in (0, Nyquist)");
  if (spec.per_utterance_jitter < 0.0)
    throw UsageError("per_utterance_jitter must be >= 0");

  std::seed_seq seq{static_cast<std::uint32_t>(opt.seed),
                    static_cast<std::uint32_t>(opt.seed >> 32),
                    static_cast<std::uint32_t>(class_index),
                    static_cast<std::uint32_t>(utterance_index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Per-utterance idiosyncrasies: fundamental, tilt of the harmonic
  // envelope, chirp depth and tremolo rate.
  const double f0 = std::clamp(
      spec.fundamental_hz * (1.0 + spec.per_utterance_jitter * normal(rng)),
      20.0, nyquist * 0.9);
  const double tilt = 0.5 + 0.4 * uniform(rng);
  const double sweep = 1.2 + 0.4 * uniform(rng);     // chirp: octaves
  const double trem_hz = 4.0 + 2.0 * uniform(rng);   // tremolo rate
  const double phase0 = 2.0 * std::numbers::pi * uniform(rng);

  const size_t n = static_cast<size_t>(std::llround(opt.duration_s * opt.sample_rate));
  AudioClip clip;
  clip.sample_rate = opt.sample_rate;
  clip.samples.assign(n, 0.0);
  const double dt = 1.0 / opt.sample_rate;
  const double duration = n * dt;
  std::vector<double> weight;  // harmonic envelope 1 / h^tilt
  for (int h = 1; h * 20.0 < nyquist; ++h) weight.push_back(std::pow(h, -tilt));
  double phase = phase0;
  for (size_t i = 0; i < n; ++i) {
    const double t = i * dt;
    double f = f0;
    if (spec.modulation == Modulation::kChirp)
      f = f0 * std::exp2(sweep * t / duration);
    double amp = 1.0;
    if (spec.modulation == Modulation::kTremolo)
      amp = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * trem_hz * t));
    double s = 0.0;
    const double top = std::min(nyquist, kMaxPartialHz);
    for (int h = 1; h * f < top; ++h) s += std::sin(h * phase) * weight[h - 1];
    clip.samples[i] = amp * s;
    phase += 2.0 * std::numbers::pi * f * dt;
  }
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (double& s : clip.samples)
    s = std::clamp(s * gain + spec.noise_floor * normal(rng), -1.0, 1.0);
  return clip;
}

Manifest synth_corpus(const std::vector<SynthClassSpec>& specs,
                      const SynthOptions& opt, const std::string& out_dir) {
  if (specs.empty()) throw UsageError("synth_corpus: no class specs");
  if (opt.utterances_per_class < 1)
    throw UsageError("synth_corpus: utterances_per_class must be >= 1");
  if (opt.sample_rate <= 0 || !(opt.duration_s > 0.0))
    throw UsageError("synth_corpus: bad sample rate or duration");
  for (const auto& s : specs)
    if (!(s.fundamental_hz < opt.sample_rate / 2.0))
      throw UsageError("class '" + s.class_label +
                       "': fundamental must be below Nyquist");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());

  Manifest m;
  for (size_t c = 0; c < specs.size(); ++c) {
    for (int u = 0; u < opt.utterances_per_class; ++u) {
      char id[256];
      std::snprintf(id, sizeof(id), "%s_%03d", specs[c].class_label.c_str(), u);
      AudioClip clip = synth_utterance(specs[c], opt, static_cast<int>(c), u);
      clip.source_id = id;
      const std::string path =
          (std::filesystem::path(out_dir) / (std::string(id) + ".wav")).string();
      write_wav(path, clip);
      m.entries.push_back({id, id, path, specs[c].class_label,
                           Split::kUnassigned, std::nullopt});
    }
  }
  m.normalize();
  return m;
}

}  // namespace ser
