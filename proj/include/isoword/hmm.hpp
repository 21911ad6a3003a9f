#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isoword/matrix.hpp"

namespace isoword {

inline constexpr double kStochasticTolerance = 1e-9;
inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr int kLeftRightMaxJump = 2;

// Discrete-observation HMM. A is N x N (transition), B is N x M (emission).
struct DiscreteHmm {
  std::vector<double> pi;
  Matrix transitions;
  Matrix emissions;
  bool left_right = false;

  std::size_t states() const noexcept { return pi.size(); }
  std::size_t symbols() const noexcept { return emissions.cols(); }

  // Description of the first violated invariant, if any.
  std::optional<std::string> find_violation(double tolerance = kStochasticTolerance) const;
  // True when transition i -> j is permitted by the topology.
  bool transition_allowed(std::size_t from, std::size_t to) const;

  friend bool operator==(const DiscreteHmm&, const DiscreteHmm&) = default;
};

// pi = [1, 0, ...]; transitions uniform over {self, +1, +2}; emissions
// uniform with +-1% seeded jitter.
DiscreteHmm init_left_right(std::size_t states, std::size_t symbols, std::uint64_t seed);

struct ForwardResult {
  double log_likelihood = 0.0;  // -infinity when the sequence is impossible
  Matrix alpha;                 // scaled, T x N; each row sums to 1
  std::vector<double> scale;    // c_t = 1 / sum_i alpha_t(i)
};

// Scaled forward pass; log P(obs) = -sum_t log c_t.
ForwardResult forward(const DiscreteHmm& hmm, std::span<const int> obs);

struct BackwardResult {
  Matrix beta;  // scaled with the forward scale factors, T x N
};

BackwardResult backward(const DiscreteHmm& hmm, std::span<const int> obs, const ForwardResult& fwd);
BackwardResult backward(const DiscreteHmm& hmm, std::span<const int> obs);

// log P(obs) recovered from the scaled betas at t = 0.
double backward_log_likelihood(const DiscreteHmm& hmm, std::span<const int> obs,
                               const ForwardResult& fwd, const BackwardResult& bwd);

struct ViterbiResult {
  std::vector<int> path;  // empty when impossible
  double log_score = 0.0;
};

// Log-space Viterbi. Ties prefer the lower state index, both for the final
// state and for every backpointer.
ViterbiResult viterbi(const DiscreteHmm& hmm, std::span<const int> obs);

struct TrainTrace {
  std::vector<double> log_likelihoods;  // total over sequences, one per E-step
  int iterations = 0;                   // re-estimation steps applied
  bool converged = false;
  std::vector<int> starved_states;      // states whose rows were carried over
};

struct BaumWelchOptions {
  int max_iterations = 30;
  double tolerance = 1e-5;  // relative log-likelihood improvement
  double floor = kProbabilityFloor;
  // Invoked after every re-estimation with the iteration number (1-based).
  std::function<void(int, const DiscreteHmm&)> on_iteration;
};

struct BaumWelchResult {
  DiscreteHmm hmm;
  TrainTrace trace;
};

// Multi-sequence EM. Entries that are zero in the initial model stay zero;
// every other entry is kept at or above the floor by a constrained M-step.
BaumWelchResult baum_welch(const DiscreteHmm& initial, std::span<const std::vector<int>> sequences,
                           const BaumWelchOptions& options = {});

}  // namespace isoword
