#include "isoword/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "isoword/error.hpp"
#include "isoword/rng.hpp"
#include "lexicon_data.hpp"

namespace isoword {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

bool tag_is(const unsigned char* p, const char (&tag)[5]) {
  return std::equal(p, p + 4, reinterpret_cast<const unsigned char*>(tag));
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int ms_to_samples(int ms, int rate) {
  return static_cast<int>(std::lround(static_cast<double>(ms) * rate / 1000.0));
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE")) {
    fail(ErrorCode::NotWav, path.string() + " is not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  AudioBuffer buffer;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* header = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(header + 4);
    const std::size_t body = pos + 8;
    if (tag_is(header, "fmt ")) {
      if (chunk_size < 16 || body + 16 > bytes.size()) {
        fail(ErrorCode::Truncated, path.string() + ": short fmt chunk");
      }
      const std::uint16_t format = read_u16(bytes.data() + body);
      const std::uint16_t channels = read_u16(bytes.data() + body + 2);
      const std::uint32_t rate = read_u32(bytes.data() + body + 4);
      const std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1) fail(ErrorCode::UnsupportedFormat, path.string() + ": not PCM");
      if (channels != 1) fail(ErrorCode::UnsupportedFormat, path.string() + ": not mono");
      if (bits != 16) fail(ErrorCode::UnsupportedFormat, path.string() + ": not 16-bit");
      if (rate == 0) fail(ErrorCode::UnsupportedFormat, path.string() + ": zero sample rate");
      buffer.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (tag_is(header, "data")) {
      if (!have_fmt) fail(ErrorCode::UnsupportedFormat, path.string() + ": data before fmt");
      if (body + chunk_size > bytes.size()) {
        fail(ErrorCode::Truncated, path.string() + ": data chunk shorter than declared");
      }
      const std::size_t count = chunk_size / 2;
      if (count == 0) fail(ErrorCode::EmptyBuffer, path.string() + ": no samples");
      buffer.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        buffer.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return buffer;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  fail(ErrorCode::Truncated, path.string() + ": no data chunk");
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
  if (buffer.empty()) fail(ErrorCode::EmptyBuffer, "refusing to write an empty buffer");
  if (buffer.sample_rate_hz <= 0) fail(ErrorCode::InvalidArgument, "sample rate must be positive");

  const auto data_bytes = static_cast<std::uint32_t>(buffer.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : buffer.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) fail(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------

const SynthWord& SynthLexicon::find(const std::string& keyword) const {
  for (const auto& word : words) {
    if (word.keyword == keyword) return word;
  }
  fail(ErrorCode::UnknownSyntheticKeyword, "'" + keyword + "' is not in the synthetic lexicon");
}

std::vector<std::string> SynthLexicon::keywords() const {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& word : words) out.push_back(word.keyword);
  return out;
}

SynthLexicon SynthLexicon::parse(const std::string& json_text) {
  SynthLexicon lexicon;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    lexicon.sample_rate_hz = doc.value("sample_rate_hz", kDefaultSampleRate);
    lexicon.amplitude1 = doc.value("amplitude1", lexicon.amplitude1);
    lexicon.amplitude2 = doc.value("amplitude2", lexicon.amplitude2);
    lexicon.noise_std = doc.value("noise_std", lexicon.noise_std);
    lexicon.pad_ms = doc.value("pad_ms", lexicon.pad_ms);
    lexicon.ramp_ms = doc.value("ramp_ms", lexicon.ramp_ms);
    for (const auto& entry : doc.at("words")) {
      SynthWord word;
      word.keyword = entry.at("keyword").get<std::string>();
      word.duration_ms = entry.at("duration_ms").get<int>();
      for (const auto& seg : entry.at("segments")) {
        word.segments.push_back({seg.at(0).get<double>(), seg.at(1).get<double>(),
                                 seg.size() > 2 ? seg.at(2).get<double>() : 1.0});
      }
      if (word.segments.empty() || word.duration_ms <= 0) {
        fail(ErrorCode::InvalidArgument, "lexicon word '" + word.keyword + "' is malformed");
      }
      lexicon.words.push_back(std::move(word));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad lexicon: ") + e.what());
  }
  if (lexicon.sample_rate_hz <= 0) fail(ErrorCode::InvalidArgument, "bad lexicon sample rate");
  return lexicon;
}

SynthLexicon SynthLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return parse(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

const SynthLexicon& SynthLexicon::builtin() {
  static const SynthLexicon lexicon = parse(std::string(kBuiltinLexiconJson));
  return lexicon;
}

SpeakerProfile speaker_profile(int speaker_id) {
  Rng rng(mix_seed(0x5be4c3a2ULL, static_cast<std::uint64_t>(speaker_id)));
  SpeakerProfile profile;
  profile.frequency_factor = rng.uniform(0.93, 1.07);
  profile.amplitude_factor = rng.uniform(0.6, 1.2);
  return profile;
}

SynthUtterance synth_utterance(const SynthLexicon& lexicon, const SynthSpec& spec) {
  const SynthWord& word = lexicon.find(spec.keyword);
  const int rate = lexicon.sample_rate_hz;
  const SpeakerProfile speaker = speaker_profile(spec.speaker_id);
  // Segment timing is a per (speaker, keyword) trait: the same speaker says a
  // word with the same rhythm on every repetition.
  Rng timing(mix_seed(static_cast<std::uint64_t>(spec.speaker_id), fnv1a(word.keyword)));
  Rng utterance(mix_seed(spec.seed, mix_seed(static_cast<std::uint64_t>(spec.speaker_id),
                                             fnv1a(word.keyword))));

  const int duration_ms = spec.duration_ms > 0 ? spec.duration_ms : word.duration_ms;
  double weight_sum = 0.0;
  for (const auto& seg : word.segments) weight_sum += seg.weight;

  std::vector<int> seg_samples;
  for (const auto& seg : word.segments) {
    const double ms = duration_ms * seg.weight / weight_sum * timing.uniform(0.93, 1.07);
    seg_samples.push_back(std::max(1, static_cast<int>(std::lround(ms * rate / 1000.0))));
  }

  const int pad = ms_to_samples(lexicon.pad_ms, rate);
  int voiced = 0;
  for (int n : seg_samples) voiced += n;

  SynthUtterance out;
  out.audio.sample_rate_hz = rate;
  out.audio.samples.assign(static_cast<std::size_t>(pad + voiced + pad), 0.0);
  out.onset_sample = static_cast<std::size_t>(pad);
  out.offset_sample = static_cast<std::size_t>(pad + voiced);

  const double jitter = utterance.uniform(0.995, 1.005);
  const double ramp = std::max(1, ms_to_samples(lexicon.ramp_ms, rate));
  const double two_pi = 2.0 * std::numbers::pi;
  std::size_t cursor = static_cast<std::size_t>(pad);
  for (std::size_t s = 0; s < word.segments.size(); ++s) {
    const auto& seg = word.segments[s];
    const double f1 = seg.f1_hz * speaker.frequency_factor * jitter;
    const double f2 = seg.f2_hz * speaker.frequency_factor * jitter;
    const double phase1 = utterance.uniform(0.0, two_pi);
    const double phase2 = utterance.uniform(0.0, two_pi);
    for (int n = 0; n < seg_samples[s]; ++n, ++cursor) {
      const double t = static_cast<double>(n) / rate;
      double value = lexicon.amplitude1 * std::sin(two_pi * f1 * t + phase1) +
                     lexicon.amplitude2 * std::sin(two_pi * f2 * t + phase2);
      const double from_onset = static_cast<double>(cursor - out.onset_sample);
      const double to_offset = static_cast<double>(out.offset_sample - cursor - 1);
      const double edge = std::min(from_onset, to_offset);
      if (edge < ramp) value *= 0.5 - 0.5 * std::cos(std::numbers::pi * edge / ramp);
      out.audio.samples[cursor] = value * speaker.amplitude_factor;
    }
  }
  for (double& sample : out.audio.samples) {
    sample = std::clamp(sample + lexicon.noise_std * utterance.normal(), -1.0, 1.0);
  }
  return out;
}

AudioBuffer synth_word(const SynthLexicon& lexicon, const SynthSpec& spec) {
  return synth_utterance(lexicon, spec).audio;
}

AudioBuffer synth_noise(const SynthLexicon& lexicon, int duration_ms, double noise_std,
                        std::uint64_t seed) {
  if (duration_ms <= 0) fail(ErrorCode::InvalidArgument, "noise duration must be positive");
  const int rate = lexicon.sample_rate_hz;
  const int pad = ms_to_samples(lexicon.pad_ms, rate);
  const int voiced = ms_to_samples(duration_ms, rate);
  Rng rng(mix_seed(seed, 0x4e015eULL));
  AudioBuffer out;
  out.sample_rate_hz = rate;
  out.samples.resize(static_cast<std::size_t>(pad + voiced + pad));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const bool inside = i >= static_cast<std::size_t>(pad) &&
                        i < static_cast<std::size_t>(pad + voiced);
    const double level = inside ? noise_std : lexicon.noise_std;
    out.samples[i] = std::clamp(level * rng.normal(), -1.0, 1.0);
  }
  return out;
}

}  // namespace isoword
