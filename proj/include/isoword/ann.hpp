#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "isoword/matrix.hpp"

namespace isoword {

// One-hidden-layer perceptron: sigmoid hidden units, softmax outputs.
struct Mlp {
  Matrix w1;               // hidden x inputs
  std::vector<double> b1;  // hidden
  Matrix w2;               // classes x hidden
  std::vector<double> b2;  // classes

  std::size_t inputs() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }
  std::size_t classes() const noexcept { return w2.rows(); }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

// Weights and biases drawn uniformly from [-init_range, init_range].
Mlp make_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, std::uint64_t seed,
             double init_range = 0.2);
// Same shape as `like`, all parameters zero (momentum state, gradients).
Mlp zeros_like(const Mlp& like);

struct MlpOutput {
  std::vector<double> hidden;
  std::vector<double> probabilities;
};

MlpOutput mlp_forward_full(const Mlp& mlp, std::span<const double> x);
std::vector<double> mlp_forward(const Mlp& mlp, std::span<const double> x);

struct Example {
  std::vector<double> input;
  int label = 0;
};

// Mean cross-entropy of the batch.
double mean_cross_entropy(const Mlp& mlp, std::span<const Example> batch);

struct MlpGradient {
  Mlp grad;
  double loss = 0.0;  // mean cross-entropy at the evaluated parameters
};

MlpGradient compute_gradient(const Mlp& mlp, std::span<const Example> batch);

struct AnnTrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 200;
  std::uint64_t seed = 42;
  int patience = 20;
  std::size_t hidden = 32;
  double init_range = 0.2;

  friend bool operator==(const AnnTrainConfig&, const AnnTrainConfig&) = default;
};

// One full-batch update: v <- mu*v - eta*g; w <- w + v.
// Returns the batch loss before the update.
double backprop_step(Mlp& mlp, std::span<const Example> batch, const AnnTrainConfig& config,
                     Mlp& velocity);

struct AnnTrainResult {
  Mlp mlp;                            // parameters at the best held-out loss
  std::vector<double> train_loss;     // per epoch, before the update
  std::vector<double> heldout_loss;   // per epoch, after the update
  int best_epoch = 0;                 // 0 means the initialization was kept
  std::size_t heldout_size = 0;
};

// Full-batch training with a seeded 90/10 train/held-out split. When the
// held-out part is empty, selection falls back to the training loss.
AnnTrainResult train_ann(std::span<const Example> dataset, std::size_t classes,
                         const AnnTrainConfig& config);

// Fixed-length utterance summary: means of `segments` contiguous frame
// groups, the first T mod S groups one frame longer. T < S repeats frames.
std::vector<double> pool_utterance(const Matrix& features, std::size_t segments);

}  // namespace isoword
