#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <filesystem>

#include "ser/audio_io.h"
#include "ser/error.h"
#include "test_util.h"

namespace ser {
namespace {

std::vector<std::uint8_t> pcm_wav(const std::vector<std::int16_t>& samples,
                                  int channels, int rate,
                                  std::uint16_t format = 1,
                                  std::uint16_t bits = 16) {
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(std::uint8_t(v));
    b.push_back(std::uint8_t(v >> 8));
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const std::uint32_t data_len = std::uint32_t(samples.size() * 2);
  tag("RIFF");
  u32(4 + 8 + 16 + 8 + 6 + 8 + data_len);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(std::uint16_t(channels));
  u32(std::uint32_t(rate));
  u32(std::uint32_t(rate * channels * 2));
  u16(std::uint16_t(channels * 2));
  u16(bits);
  tag("LIST");  // unknown chunk, skipped
  u32(5);
  b.insert(b.end(), {'h', 'e', 'l', 'l', 'o', 0});  // odd length + pad byte
  tag("data");
  u32(data_len);
  for (auto s : samples) u16(std::uint16_t(s));
  return b;
}

TEST(LoadWav, ScalesInt16By32768) {
  const auto clip = parse_wav(pcm_wav({0, -32768, 32767, 16384}, 1, 16000));
  ASSERT_EQ(clip.samples.size(), 4u);
  EXPECT_EQ(clip.samples[0], 0.0);
  EXPECT_EQ(clip.samples[1], -1.0);
  EXPECT_DOUBLE_EQ(clip.samples[2], 32767.0 / 32768.0);
  EXPECT_EQ(clip.samples[3], 0.5);
  EXPECT_EQ(clip.sample_rate, 16000);
}

TEST(LoadWav, OneSecondAt16kHzHas16000Samples) {
  const auto clip = parse_wav(pcm_wav(std::vector<std::int16_t>(16000, 7), 1, 16000));
  EXPECT_EQ(clip.samples.size(), 16000u);
}

TEST(LoadWav, StereoIsAveraged) {
  const auto clip = parse_wav(pcm_wav({1000, 3000, -32768, 0}, 2, 8000));
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(clip.samples[0], 2000.0 / 32768.0);
  EXPECT_DOUBLE_EQ(clip.samples[1], -0.5);
}

TEST(LoadWav, RejectsMalformedInput) {
  auto expect_error = [](const std::vector<std::uint8_t>& bytes, const std::string& msg) {
    try {
      parse_wav(bytes);
      FAIL() << "expected " << msg;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kData);
      EXPECT_NE(std::string(e.what()).find(msg), std::string::npos) << e.what();
    }
  };
  expect_error({'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'}, "not a WAV");
  expect_error({1, 2, 3}, "not a WAV");
  expect_error(pcm_wav({1, 2}, 1, 16000, /*format=*/3), "unsupported format");
  expect_error(pcm_wav({1, 2}, 1, 16000, 1, /*bits=*/8), "unsupported format");
  expect_error(pcm_wav({}, 1, 16000), "empty audio");
}

TEST(LoadWav, MissingFileIsADataError) {
  EXPECT_THROW(load_wav("/nonexistent/never.wav"), Error);
}

TEST(WavRoundTrip, WithinOneQuantizationStep) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioClip clip;
  clip.sample_rate = 22050;
  for (int i = 0; i < 5000; ++i) clip.samples.push_back(u(rng));
  clip.samples.push_back(-1.0);
  clip.samples.push_back(1.0);
  const auto back = parse_wav(encode_wav(clip));
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate, 22050);
  for (size_t i = 0; i < clip.samples.size(); ++i)
    EXPECT_LE(std::abs(back.samples[i] - clip.samples[i]), 1.0 / 32768.0) << i;
}

TEST(SynthCorpus, CountsAndLabels) {
  testing::TempDir dir("synth");
  SynthOptions opt;
  opt.duration_s = 0.1;
  opt.seed = 5;
  const Manifest m = synth_corpus(default_synth_specs(), opt, dir.str());
  ASSERT_EQ(m.entries.size(), 100u);
  std::map<std::string, int> per_label;
  for (const auto& e : m.entries) {
    ++per_label[e.label];
    EXPECT_EQ(e.parent_id, e.item_id);
    EXPECT_EQ(e.split, Split::kUnassigned);
    EXPECT_TRUE(std::filesystem::exists(e.path));
  }
  EXPECT_EQ(per_label.size(), 4u);
  for (const auto& [label, n] : per_label) EXPECT_EQ(n, 25) << label;
  const auto clip = load_wav(m.entries.front().path);
  EXPECT_EQ(clip.samples.size(), 1600u);
  for (double s : clip.samples) EXPECT_LE(std::abs(s), 1.0);
}

TEST(SynthCorpus, SameSeedGivesIdenticalFiles) {
  testing::TempDir a("synth_a"), b("synth_b");
  SynthOptions opt;
  opt.utterances_per_class = 3;
  opt.duration_s = 0.2;
  opt.seed = 11;
  const Manifest ma = synth_corpus(default_synth_specs(), opt, a.str());
  const Manifest mb = synth_corpus(default_synth_specs(), opt, b.str());
  ASSERT_EQ(ma.entries.size(), mb.entries.size());
  for (size_t i = 0; i < ma.entries.size(); ++i)
    EXPECT_EQ(testing::read_bytes(ma.entries[i].path),
              testing::read_bytes(mb.entries[i].path));
  opt.seed = 12;
  testing::TempDir c("synth_c");
  const Manifest mc = synth_corpus(default_synth_specs(), opt, c.str());
  EXPECT_NE(testing::read_bytes(ma.entries[0].path),
            testing::read_bytes(mc.entries[0].path));
}

TEST(SynthCorpus, UtterancesOfOneClassDiffer) {
  SynthOptions opt;
  opt.duration_s = 0.1;
  const auto spec = default_synth_specs()[2];
  const auto a = synth_utterance(spec, opt, 2, 0);
  const auto b = synth_utterance(spec, opt, 2, 1);
  EXPECT_NE(a.samples, b.samples);
}

TEST(SynthCorpus, RejectsFundamentalAtOrAboveNyquist) {
  testing::TempDir dir("synth_bad");
  SynthOptions opt;
  opt.sample_rate = 8000;
  auto specs = default_synth_specs();
  specs[0].fundamental_hz = 4000.0;
  EXPECT_THROW(synth_corpus(specs, opt, dir.str()), Error);
  specs[0].fundamental_hz = 5000.0;
  EXPECT_THROW(synth_corpus(specs, opt, dir.str()), Error);
}

TEST(SynthCorpus, UnwritableDirectoryIsAnError) {
  SynthOptions opt;
  opt.utterances_per_class = 1;
  opt.duration_s = 0.05;
  EXPECT_THROW(synth_corpus(default_synth_specs(), opt, "/proc/ser_cannot_write"), Error);
}

}  // namespace
}  // namespace ser
