#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "isoword/audio.hpp"
#include "isoword/matrix.hpp"

namespace isoword {

struct FrontendConfig {
  double pre_emphasis_alpha = 0.97;
  int frame_len_ms = 25;
  int hop_ms = 10;
  int lpc_order = 10;
  int n_cepstra = 12;
  double energy_ratio = 0.03;  // of the peak frame energy
  int min_speech_frames = 5;
  double zero_energy_floor = 1e-12;

  // Throws InvalidArgument when the geometry or thresholds are unusable.
  void validate() const;

  std::size_t frame_len_samples(int sample_rate_hz) const;
  std::size_t hop_samples(int sample_rate_hz) const;
  // cepstra, log-energy, their first differences
  std::size_t feature_dim() const { return 2 * static_cast<std::size_t>(n_cepstra) + 2; }

  friend bool operator==(const FrontendConfig&, const FrontendConfig&) = default;
};

// Row t holds [c_1..c_n, log-energy, delta c_1..delta c_n, delta log-energy].
struct FeatureMatrix {
  Matrix values;
  std::vector<std::size_t> frame_starts;  // sample index in the source buffer
  std::size_t unstable_frames = 0;        // frames with clamped reflection coefficients
  std::size_t silent_frames = 0;          // frames replaced by the silence vector

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t dim() const noexcept { return values.cols(); }
};

std::vector<double> pre_emphasize(std::span<const double> x, double alpha);

// Rows are frames; frame i covers [i*hop, i*hop + frame_len).
Matrix frame_signal(std::span<const double> x, std::size_t frame_len, std::size_t hop);

std::vector<double> hamming_window(std::size_t n);

// r[k] = sum_n frame[n] * frame[n + k] for k = 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> frame, std::size_t max_lag);

inline constexpr double kReflectionClamp = 1.0 - 1e-6;

struct LpcResult {
  std::vector<double> predictor;   // a_1..a_p, x[n] ~ sum_k a_k x[n-k]
  std::vector<double> reflection;  // k_1..k_p
  double error = 0.0;              // final prediction error E_p
  std::size_t clamped = 0;         // reflection coefficients clamped to +-kReflectionClamp
};

// Throws ZeroEnergy when r[0] <= energy_floor.
LpcResult levinson_durbin(std::span<const double> r, std::size_t order,
                          double energy_floor = 1e-12);

// c_m = a_m + sum_{k=1}^{m-1} (k/m) c_k a_{m-k}, with a_m = 0 beyond the order.
std::vector<double> lpc_to_cepstrum(std::span<const double> predictor, std::size_t n_cepstra);

struct Endpoints {
  std::size_t start = 0;  // first sample of the speech region
  std::size_t end = 0;    // one past the last sample
};

Endpoints endpoint_detect(const AudioBuffer& buffer, const FrontendConfig& config);

FeatureMatrix extract_features(const AudioBuffer& buffer, const FrontendConfig& config);

// Text dump: header "T D", then one frame per line.
void write_feature_dump(const FeatureMatrix& features, const std::filesystem::path& path);

}  // namespace isoword
