#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "isoword/audio.hpp"
#include "isoword/error.hpp"
#include "oracles.hpp"

namespace isoword {
namespace {

using testing::TempDir;

struct WavSpec {
  std::string magic = "RIFF";
  std::uint16_t format = 1;
  std::uint16_t channels = 1;
  std::uint16_t bits = 16;
  std::uint32_t rate = 16000;
  std::vector<std::int16_t> samples;
  std::int64_t declared_data = -1;  // -1: actual size
  bool extra_chunk = false;
};

void put(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::filesystem::path write_raw(const std::filesystem::path& dir, const std::string& name, const WavSpec& w) {
  std::string data;
  for (std::int16_t s : w.samples) put(data, static_cast<std::uint16_t>(s), 2);
  std::string body = "WAVE";
  if (w.extra_chunk) {
    body += "LIST";
    put(body, 3, 4);
    body += "abc";
    body.push_back('\0');  // pad byte for the odd-sized chunk
  }
  body += "fmt ";
  put(body, 16, 4);
  put(body, w.format, 2);
  put(body, w.channels, 2);
  put(body, w.rate, 4);
  put(body, w.rate * w.channels * w.bits / 8, 4);
  put(body, static_cast<std::uint32_t>(w.channels * w.bits / 8), 2);
  put(body, w.bits, 2);
  body += "data";
  put(body, static_cast<std::uint32_t>(w.declared_data < 0 ? data.size() : w.declared_data), 4);
  body += data;
  std::string file = w.magic;
  put(file, static_cast<std::uint32_t>(body.size()), 4);
  file += body;
  const auto path = dir / name;
  std::ofstream(path, std::ios::binary) << file;
  return path;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an isoword::Error";
  return ErrorCode::InvalidArgument;
}

TEST(ReadWav, ScalesInt16ByInverse32768) {
  TempDir dir("wav");
  WavSpec spec;
  spec.samples = {16384};
  const AudioBuffer half = read_wav(write_raw(dir.path, "half.wav", spec));
  ASSERT_EQ(half.size(), 1u);
  EXPECT_EQ(half.samples[0], 0.5);
  EXPECT_EQ(half.sample_rate_hz, 16000);

  spec.samples = {0};
  EXPECT_EQ(read_wav(write_raw(dir.path, "zero.wav", spec)).samples[0], 0.0);

  spec.samples = {-32768, 32767};
  spec.rate = 8000;
  const AudioBuffer extremes = read_wav(write_raw(dir.path, "ext.wav", spec));
  EXPECT_EQ(extremes.samples[0], -1.0);
  EXPECT_LT(extremes.samples[1], 1.0);
  EXPECT_EQ(extremes.sample_rate_hz, 8000);
}

TEST(ReadWav, SkipsUnknownChunks) {
  TempDir dir("wav");
  WavSpec spec;
  spec.samples = {100, -100, 200};
  spec.extra_chunk = true;
  const AudioBuffer buffer = read_wav(write_raw(dir.path, "list.wav", spec));
  ASSERT_EQ(buffer.size(), 3u);
  EXPECT_DOUBLE_EQ(buffer.samples[2], 200.0 / 32768.0);
}

TEST(ReadWav, RejectsMalformedFiles) {
  TempDir dir("wav");
  WavSpec spec;
  spec.samples = {1, 2, 3};

  WavSpec rifx = spec;
  rifx.magic = "RIFX";
  EXPECT_EQ(code_of([&] { read_wav(write_raw(dir.path, "rifx.wav", rifx)); }), ErrorCode::NotWav);

  WavSpec stereo = spec;
  stereo.channels = 2;
  stereo.samples = {1, 2, 3, 4};
  EXPECT_EQ(code_of([&] { read_wav(write_raw(dir.path, "stereo.wav", stereo)); }), ErrorCode::UnsupportedFormat);

  WavSpec float_format = spec;
  float_format.format = 3;
  EXPECT_EQ(code_of([&] { read_wav(write_raw(dir.path, "float.wav", float_format)); }),
            ErrorCode::UnsupportedFormat);

  WavSpec eight_bit = spec;
  eight_bit.bits = 8;
  EXPECT_EQ(code_of([&] { read_wav(write_raw(dir.path, "u8.wav", eight_bit)); }), ErrorCode::UnsupportedFormat);

  WavSpec truncated = spec;
  truncated.declared_data = 200;
  EXPECT_EQ(code_of([&] { read_wav(write_raw(dir.path, "trunc.wav", truncated)); }), ErrorCode::Truncated);

  std::ofstream(dir.path / "text.wav") << "hello";
  EXPECT_EQ(code_of([&] { read_wav(dir.path / "text.wav"); }), ErrorCode::NotWav);
  EXPECT_EQ(code_of([&] { read_wav(dir.path / "missing.wav"); }), ErrorCode::IoError);
}

TEST(WriteWav, RoundTripWithinOneQuantizationStep) {
  TempDir dir("wav");
  const AudioBuffer small{{0.0, 0.5, -0.5}, 16000};
  write_wav(small, dir.path / "small.wav");
  const AudioBuffer back = read_wav(dir.path / "small.wav");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(back.samples[i] - small.samples[i]), 1.0 / 32768.0);

  Rng rng(1234);
  AudioBuffer random;
  random.sample_rate_hz = 22050;
  for (int i = 0; i < 1000; ++i) random.samples.push_back(rng.uniform(-1.0, 1.0));
  random.samples.push_back(1.0);
  random.samples.push_back(-1.0);
  write_wav(random, dir.path / "random.wav");
  const AudioBuffer random_back = read_wav(dir.path / "random.wav");
  ASSERT_EQ(random_back.size(), random.size());
  EXPECT_EQ(random_back.sample_rate_hz, 22050);
  double worst = 0.0;
  for (std::size_t i = 0; i < random.size(); ++i) {
    worst = std::max(worst, std::abs(random_back.samples[i] - random.samples[i]));
  }
  EXPECT_LE(worst, 1.0 / 32768.0);
}

TEST(WriteWav, RejectsEmptyBufferAndBadPath) {
  TempDir dir("wav");
  EXPECT_EQ(code_of([&] { write_wav(AudioBuffer{}, dir.path / "empty.wav"); }), ErrorCode::EmptyBuffer);
  EXPECT_EQ(code_of([&] { write_wav(AudioBuffer{{0.1}, 16000}, dir.path / "no" / "such" / "dir.wav"); }),
            ErrorCode::IoError);
}

// ---------------------------------------------------------------------------

TEST(SynthLexicon, BuiltinHasTenKeywordsOfTwoToFourSegments) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  ASSERT_EQ(lexicon.words.size(), 10u);
  for (const auto& word : lexicon.words) {
    EXPECT_GE(word.segments.size(), 2u) << word.keyword;
    EXPECT_LE(word.segments.size(), 4u) << word.keyword;
  }
  EXPECT_EQ(lexicon.sample_rate_hz, 16000);
}

TEST(SynthLexicon, ParseRejectsMalformedInput) {
  EXPECT_EQ(code_of([] { SynthLexicon::parse("{\"words\": 3}"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { SynthLexicon::parse("not json"); }), ErrorCode::InvalidArgument);
  const SynthLexicon one = SynthLexicon::parse(
      R"({"words": [{"keyword": "hi", "duration_ms": 300, "segments": [[400, 1800], [700, 2500, 2.0]]}]})");
  EXPECT_EQ(one.find("hi").segments[1].weight, 2.0);
}

TEST(SynthWord, IsAPureFunctionOfTheSpec) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  const SynthSpec spec{"three", 4, 0, 99};
  const AudioBuffer a = synth_word(lexicon, spec);
  const AudioBuffer b = synth_word(lexicon, spec);
  EXPECT_EQ(a.samples, b.samples);
  const AudioBuffer other_seed = synth_word(lexicon, {"three", 4, 0, 100});
  EXPECT_NE(a.samples, other_seed.samples);
}

TEST(SynthWord, SpeakersDifferButDurationsStayWithinFifteenPercent) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  for (const auto& keyword : lexicon.keywords()) {
    std::vector<AudioBuffer> buffers;
    for (int speaker = 1; speaker <= 15; ++speaker) buffers.push_back(synth_word(lexicon, {keyword, speaker, 0, 5}));
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      for (std::size_t j = i + 1; j < buffers.size(); ++j) {
        EXPECT_NE(buffers[i].samples, buffers[j].samples);
        const auto li = static_cast<double>(buffers[i].size());
        const auto lj = static_cast<double>(buffers[j].size());
        EXPECT_LE(std::max(li, lj) / std::min(li, lj), 1.15) << keyword << " speakers " << i + 1 << "," << j + 1;
      }
    }
  }
}

TEST(SynthWord, SpeakerProfilesStayInRange) {
  for (int speaker = -5; speaker < 200; ++speaker) {
    const SpeakerProfile p = speaker_profile(speaker);
    EXPECT_GE(p.frequency_factor, 0.93);
    EXPECT_LE(p.frequency_factor, 1.07);
    EXPECT_GE(p.amplitude_factor, 0.6);
    EXPECT_LE(p.amplitude_factor, 1.2);
  }
}

TEST(SynthWord, SilencePadsAreQuietAndTheMiddleIsLoud) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  for (const auto& keyword : lexicon.keywords()) {
    for (int speaker : {1, 7, 15}) {
      const SynthUtterance u = synth_utterance(lexicon, {keyword, speaker, 0, 3});
      const auto& s = u.audio.samples;
      const std::size_t pad = 1600;
      EXPECT_EQ(u.onset_sample, pad);
      EXPECT_EQ(s.size() - u.offset_sample, pad);
      double lead = 0.0;
      double tail = 0.0;
      for (std::size_t i = 0; i < pad; ++i) {
        lead += std::abs(s[i]);
        tail += std::abs(s[s.size() - 1 - i]);
      }
      EXPECT_LE(lead / pad, 0.005) << keyword;
      EXPECT_LE(tail / pad, 0.005) << keyword;
      double middle = 0.0;
      const std::size_t third = s.size() / 3;
      for (std::size_t i = third; i < 2 * third; ++i) middle += std::abs(s[i]);
      EXPECT_GE(middle / third, 0.05) << keyword;
      for (double v : s) ASSERT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(SynthWord, HonoursExplicitDurationAndUnknownKeyword) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  const SynthUtterance u = synth_utterance(lexicon, {"one", 1, 800, 1});
  const double voiced_ms = static_cast<double>(u.offset_sample - u.onset_sample) / 16.0;
  EXPECT_NEAR(voiced_ms, 800.0, 800.0 * 0.07 + 1.0);
  EXPECT_EQ(code_of([&] { synth_word(lexicon, {"eleven", 1, 0, 1}); }), ErrorCode::UnknownSyntheticKeyword);
}

TEST(SynthNoise, PadsAreQuietAndNoiseIsLoud) {
  const SynthLexicon& lexicon = SynthLexicon::builtin();
  const AudioBuffer noise = synth_noise(lexicon, 500, 0.15, 3);
  ASSERT_EQ(noise.size(), 1600u + 8000u + 1600u);
  double lead = 0.0;
  double body = 0.0;
  for (std::size_t i = 0; i < 1600; ++i) lead += std::abs(noise.samples[i]);
  for (std::size_t i = 1600; i < 9600; ++i) body += std::abs(noise.samples[i]);
  EXPECT_LE(lead / 1600, 0.005);
  EXPECT_GE(body / 8000, 0.05);
  EXPECT_EQ(noise.samples, synth_noise(lexicon, 500, 0.15, 3).samples);
}

}  // namespace
}  // namespace isoword
