#include "isoword/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include <fmt/format.h>

#include "isoword/error.hpp"

namespace isoword {

namespace {

constexpr double kLogEnergyOffset = 1e-10;

double frame_energy(std::span<const double> frame) {
  double acc = 0.0;
  for (double v : frame) acc += v * v;
  return acc;
}

}  // namespace

void FrontendConfig::validate() const {
  if (!(pre_emphasis_alpha >= 0.0 && pre_emphasis_alpha < 1.0)) {
    fail(ErrorCode::InvalidArgument, "pre-emphasis alpha must lie in [0, 1)");
  }
  if (!(hop_ms > 0 && frame_len_ms > hop_ms)) {
    fail(ErrorCode::InvalidArgument, "need frame_len_ms > hop_ms > 0");
  }
  if (lpc_order < 1 || n_cepstra < 1) {
    fail(ErrorCode::InvalidArgument, "LPC order and cepstrum count must be positive");
  }
  if (!(energy_ratio > 0.0) || min_speech_frames < 1 || !(zero_energy_floor > 0.0)) {
    fail(ErrorCode::InvalidArgument, "endpoint thresholds must be positive");
  }
}

std::size_t FrontendConfig::frame_len_samples(int sample_rate_hz) const {
  return static_cast<std::size_t>(std::lround(frame_len_ms * sample_rate_hz / 1000.0));
}

std::size_t FrontendConfig::hop_samples(int sample_rate_hz) const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

std::vector<double> pre_emphasize(std::span<const double> x, double alpha) {
  if (x.empty()) fail(ErrorCode::EmptyInput, "pre-emphasis of an empty signal");
  std::vector<double> y(x.size());
  y[0] = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) y[n] = x[n] - alpha * x[n - 1];
  return y;
}

Matrix frame_signal(std::span<const double> x, std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || hop == 0) fail(ErrorCode::InvalidArgument, "frame length and hop must be positive");
  if (x.size() < frame_len) {
    fail(ErrorCode::InsufficientSamples,
         fmt::format("{} samples cannot fill a {}-sample frame", x.size(), frame_len));
  }
  const std::size_t count = (x.size() - frame_len) / hop + 1;
  Matrix frames(count, frame_len);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * hop), frame_len, frames.row(i).begin());
  }
  return frames;
}

std::vector<double> hamming_window(std::size_t n) {
  if (n < 2) fail(ErrorCode::BadLength, "Hamming window needs at least 2 points");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom);
  }
  return w;
}

std::vector<double> autocorrelation(std::span<const double> frame, std::size_t max_lag) {
  if (max_lag >= frame.size()) {
    fail(ErrorCode::LagTooLarge,
         fmt::format("lag {} needs more than {} samples", max_lag, frame.size()));
  }
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double acc = 0.0;
    for (std::size_t n = 0; n + k < frame.size(); ++n) acc += frame[n] * frame[n + k];
    r[k] = acc;
  }
  return r;
}

LpcResult levinson_durbin(std::span<const double> r, std::size_t order, double energy_floor) {
  if (order < 1) fail(ErrorCode::InvalidArgument, "LPC order must be at least 1");
  if (r.size() < order + 1) {
    fail(ErrorCode::InvalidArgument,
         fmt::format("order {} needs {} autocorrelation lags", order, order + 1));
  }
  if (!(r[0] > energy_floor)) fail(ErrorCode::ZeroEnergy, "frame energy below floor");

  LpcResult out;
  out.predictor.assign(order, 0.0);
  out.reflection.assign(order, 0.0);
  std::vector<double> previous(order, 0.0);
  double error = r[0];

  for (std::size_t i = 1; i <= order; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc -= out.predictor[j - 1] * r[i - j];
    double k = error > 0.0 ? acc / error : 0.0;
    if (std::abs(k) > kReflectionClamp) {
      k = std::copysign(kReflectionClamp, k);
      ++out.clamped;
    }
    previous = out.predictor;
    out.predictor[i - 1] = k;
    for (std::size_t j = 1; j < i; ++j) out.predictor[j - 1] = previous[j - 1] - k * previous[i - j - 1];
    out.reflection[i - 1] = k;
    error *= (1.0 - k * k);
  }
  out.error = std::max(error, 0.0);
  return out;
}

std::vector<double> lpc_to_cepstrum(std::span<const double> predictor, std::size_t n_cepstra) {
  const std::size_t p = predictor.size();
  std::vector<double> c(n_cepstra, 0.0);
  for (std::size_t m = 1; m <= n_cepstra; ++m) {
    double value = m <= p ? predictor[m - 1] : 0.0;
    for (std::size_t k = 1; k < m; ++k) {
      if (m - k > p) continue;
      value += (static_cast<double>(k) / static_cast<double>(m)) * c[k - 1] * predictor[m - k - 1];
    }
    c[m - 1] = value;
  }
  return c;
}

Endpoints endpoint_detect(const AudioBuffer& buffer, const FrontendConfig& config) {
  config.validate();
  if (buffer.empty()) fail(ErrorCode::EmptyInput, "endpoint detection on an empty buffer");
  const std::size_t frame_len = config.frame_len_samples(buffer.sample_rate_hz);
  const std::size_t hop = config.hop_samples(buffer.sample_rate_hz);
  const Matrix frames = frame_signal(buffer.samples, frame_len, hop);

  std::vector<double> energy(frames.rows());
  for (std::size_t i = 0; i < frames.rows(); ++i) energy[i] = frame_energy(frames.row(i));
  const double peak = *std::max_element(energy.begin(), energy.end());
  if (!(peak > 0.0)) fail(ErrorCode::NoSpeech, "signal has no energy");

  const double threshold = config.energy_ratio * peak;
  std::size_t first = frames.rows();
  std::size_t last = 0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] > threshold) {
      first = std::min(first, i);
      last = i;
      ++active;
    }
  }
  if (active < static_cast<std::size_t>(config.min_speech_frames)) {
    fail(ErrorCode::NoSpeech, fmt::format("only {} frames above the energy threshold", active));
  }

  Endpoints out;
  out.start = first > 0 ? (first - 1) * hop : 0;
  out.end = std::min(buffer.size(), last * hop + frame_len + hop);
  return out;
}

FeatureMatrix extract_features(const AudioBuffer& buffer, const FrontendConfig& config) {
  const Endpoints span = endpoint_detect(buffer, config);
  const std::span<const double> speech(buffer.samples.data() + span.start, span.end - span.start);

  const std::size_t frame_len = config.frame_len_samples(buffer.sample_rate_hz);
  const std::size_t hop = config.hop_samples(buffer.sample_rate_hz);
  const std::vector<double> emphasized = pre_emphasize(speech, config.pre_emphasis_alpha);
  Matrix frames = frame_signal(emphasized, frame_len, hop);
  const std::vector<double> window = hamming_window(frame_len);

  const auto order = static_cast<std::size_t>(config.lpc_order);
  const auto n_cep = static_cast<std::size_t>(config.n_cepstra);
  const std::size_t half = n_cep + 1;

  FeatureMatrix out;
  out.values = Matrix(frames.rows(), config.feature_dim());
  out.frame_starts.resize(frames.rows());
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    auto frame = frames.row(t);
    for (std::size_t n = 0; n < frame_len; ++n) frame[n] *= window[n];
    out.frame_starts[t] = span.start + t * hop;

    auto row = out.values.row(t);
    const std::vector<double> r = autocorrelation(frame, std::min(order, frame_len - 1));
    if (r[0] <= config.zero_energy_floor) {
      // silence vector: zero cepstra
      row[n_cep] = std::log(kLogEnergyOffset);
      ++out.silent_frames;
      continue;
    }
    const LpcResult lpc = levinson_durbin(r, r.size() - 1, config.zero_energy_floor);
    if (lpc.clamped > 0) ++out.unstable_frames;
    const std::vector<double> cep = lpc_to_cepstrum(lpc.predictor, n_cep);
    std::copy(cep.begin(), cep.end(), row.begin());
    row[n_cep] = std::log(r[0] + kLogEnergyOffset);
  }

  for (std::size_t t = 1; t < out.values.rows(); ++t) {
    for (std::size_t d = 0; d < half; ++d) {
      out.values(t, half + d) = out.values(t, d) - out.values(t - 1, d);
    }
  }
  return out;
}

void write_feature_dump(const FeatureMatrix& features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << features.frames() << ' ' << features.dim() << '\n';
  for (std::size_t t = 0; t < features.frames(); ++t) {
    const auto row = features.values.row(t);
    for (std::size_t d = 0; d < row.size(); ++d) {
      if (d > 0) out << ' ';
      out << fmt::format("{:.17g}", row[d]);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace isoword
