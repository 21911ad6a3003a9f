#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace isoword {

inline constexpr int kDefaultSampleRate = 16000;

// Mono signal, amplitudes nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

// RIFF/WAVE, PCM 16-bit mono only. Samples are scaled by 1/32768.
AudioBuffer read_wav(const std::filesystem::path& path);

// Samples are rounded to the nearest int16 step and clamped to [-32768, 32767].
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct SynthSegment {
  double f1_hz = 0.0;
  double f2_hz = 0.0;
  double weight = 1.0;  // relative share of the word's voiced duration
};

struct SynthWord {
  std::string keyword;
  int duration_ms = 500;  // nominal voiced duration, excluding silence pads
  std::vector<SynthSegment> segments;
};

// Frequency tables and generator constants for the synthetic lexicon. Loaded
// from config/lexicon.json so the tables live outside the code.
struct SynthLexicon {
  int sample_rate_hz = kDefaultSampleRate;
  double amplitude1 = 0.3;
  double amplitude2 = 0.2;
  double noise_std = 0.002;
  int pad_ms = 100;
  int ramp_ms = 5;
  std::vector<SynthWord> words;

  const SynthWord& find(const std::string& keyword) const;
  std::vector<std::string> keywords() const;

  static SynthLexicon load(const std::filesystem::path& path);
  static SynthLexicon parse(const std::string& json_text);
  // The lexicon shipped in the repository's config directory.
  static const SynthLexicon& builtin();
};

struct SynthSpec {
  std::string keyword;
  int speaker_id = 1;
  int duration_ms = 0;  // 0 selects the lexicon's nominal duration
  std::uint64_t seed = 42;
};

// A generated utterance together with the generator's ground-truth voiced
// region [onset_sample, offset_sample).
struct SynthUtterance {
  AudioBuffer audio;
  std::size_t onset_sample = 0;
  std::size_t offset_sample = 0;
};

// Per-speaker perturbation, a pure function of the speaker id.
struct SpeakerProfile {
  double frequency_factor = 1.0;  // within [0.93, 1.07]
  double amplitude_factor = 1.0;  // within [0.6, 1.2]
};
SpeakerProfile speaker_profile(int speaker_id);

SynthUtterance synth_utterance(const SynthLexicon& lexicon, const SynthSpec& spec);
AudioBuffer synth_word(const SynthLexicon& lexicon, const SynthSpec& spec);

// White noise of the given standard deviation between the same silence pads
// the word generator uses; loud enough to pass endpoint detection.
AudioBuffer synth_noise(const SynthLexicon& lexicon, int duration_ms, double noise_std,
                        std::uint64_t seed);

}  // namespace isoword
