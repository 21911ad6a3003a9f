#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "isoword/ann.hpp"
#include "isoword/audio.hpp"
#include "isoword/frontend.hpp"
#include "isoword/hmm.hpp"
#include "isoword/quantizer.hpp"

namespace isoword {

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kPosteriorOffset = 1e-12;

struct TrainConfig {
  FrontendConfig frontend;
  std::size_t codebook_size = 64;
  std::size_t hmm_states = 5;
  int bw_max_iterations = 30;
  double bw_tolerance = 1e-5;
  AnnTrainConfig ann;
  std::size_t pool_segments = 8;
  double lambda = 0.5;
  // Minimum per-frame combined score for acceptance; measured on held-out
  // synthetic words against synthetic noise.
  double theta = -4.0;
  std::uint64_t seed = 42;
  std::size_t min_examples_per_keyword = 3;
  std::size_t min_speakers = 2;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// The trained engine: codebook, one HMM per keyword and the rescoring MLP.
struct WordModelSet {
  int version = kModelFormatVersion;
  std::vector<std::string> vocabulary;
  Normalizer normalization;
  Codebook codebook;
  std::vector<DiscreteHmm> hmms;  // parallel to vocabulary
  Mlp mlp;
  TrainConfig config;             // frontend, lambda, theta, seed and hyperparameters

  // Throws CorruptModel describing the first broken invariant.
  void validate() const;

  friend bool operator==(const WordModelSet&, const WordModelSet&) = default;
};

struct LabeledAudio {
  AudioBuffer audio;
  std::string keyword;
  int speaker = 0;
  std::string source;  // file name used in error messages
};

struct CorpusEntry {
  std::filesystem::path wav;
  std::string keyword;
  int speaker = 0;
};

struct KeywordTrainingSummary {
  std::string keyword;
  std::size_t utterances = 0;
  double final_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct TrainingReport {
  std::vector<KeywordTrainingSummary> keywords;
  double codebook_distortion = 0.0;
  double ann_final_loss = 0.0;    // training loss of the selected MLP
  double ann_heldout_loss = 0.0;
  int ann_best_epoch = 0;
};

// Vocabulary order is the order of first appearance in the corpus.
WordModelSet train_vocabulary(std::span<const LabeledAudio> corpus, const TrainConfig& config,
                              TrainingReport* report = nullptr);
WordModelSet train_vocabulary(std::span<const CorpusEntry> corpus, const TrainConfig& config,
                              TrainingReport* report = nullptr);

struct NBestEntry {
  std::string keyword;
  std::size_t vocabulary_index = 0;
  double hmm_score = 0.0;  // Viterbi log score per frame
  double ann_posterior = 0.0;
  double combined_score = 0.0;
};

struct NBestList {
  std::vector<NBestEntry> entries;  // descending combined score
  std::size_t frames = 0;
};

// Features normalized with the model's statistics.
Matrix normalized_features(const WordModelSet& model, const AudioBuffer& audio);

// Per-frame Viterbi score of every vocabulary word, in vocabulary order.
std::vector<double> hmm_scores(const WordModelSet& model, std::span<const int> symbols);

double combine_scores(double hmm_score, double posterior, double lambda);

NBestList recognize(const WordModelSet& model, const AudioBuffer& audio, std::size_t n);
NBestList recognize_features(const WordModelSet& model, const Matrix& normalized, std::size_t n);

struct Decision {
  bool accepted = false;
  std::string keyword;  // accepted word, or the best rejected candidate
  double score = 0.0;
};

Decision decide(const NBestList& list, double theta);

std::string model_to_json(const WordModelSet& model);
WordModelSet model_from_json(const std::string& text);
void save_model(const WordModelSet& model, const std::filesystem::path& path);
WordModelSet load_model(const std::filesystem::path& path);

}  // namespace isoword
