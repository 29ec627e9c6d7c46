#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ser/manifest.h"

namespace ser {

struct AudioClip {
  std::vector<double> samples;  // [-1, 1]
  int sample_rate = 0;
  std::string source_id;
};

// Reads RIFF/WAVE PCM 16-bit, mono or stereo (averaged). Samples are
// int16 / 32768.
AudioClip load_wav(const std::string& path);
AudioClip parse_wav(const std::vector<std::uint8_t>& bytes,
                    const std::string& source_id = "");

// Writes mono PCM 16-bit. Samples are rounded to the nearest int16 step and
// clipped to [-32768, 32767].
void write_wav(const std::string& path, const AudioClip& clip);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

enum class Modulation { kNone, kChirp, kTremolo };

std::string to_string(Modulation m);
Modulation modulation_from_string(const std::string& s);

struct SynthClassSpec {
  std::string class_label;
  double fundamental_hz = 220.0;
  Modulation modulation = Modulation::kNone;
  double per_utterance_jitter = 0.05;  // relative std-dev of fundamental
  double noise_floor = 0.001;          // linear amplitude (noise std-dev)
};

struct SynthOptions {
  int utterances_per_class = 25;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
};

// The four-class corpus used by the desk-scale experiments.
std::vector<SynthClassSpec> default_synth_specs();

// Renders one utterance; deterministic in (spec, options, utterance index).
AudioClip synth_utterance(const SynthClassSpec& spec, const SynthOptions& opt,
                          int class_index, int utterance_index);

// Writes `<label>_<NNN>.wav` per utterance into out_dir and returns the
// catalog (split = unassigned, parent_id = item_id).
Manifest synth_corpus(const std::vector<SynthClassSpec>& specs,
                      const SynthOptions& opt, const std::string& out_dir);

}  // namespace ser
