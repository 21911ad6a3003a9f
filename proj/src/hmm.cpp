#include "isoword/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "isoword/error.hpp"
#include "isoword/rng.hpp"

namespace isoword {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

std::optional<std::string> check_distribution(std::span<const double> row, double tolerance,
                                              const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) return what + " has a negative or non-finite entry";
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) return fmt::format("{} sums to {:.17g}", what, sum);
  return std::nullopt;
}

void validate_observations(const DiscreteHmm& hmm, std::span<const int> obs) {
  if (obs.empty()) fail(ErrorCode::EmptyInput, "observation sequence is empty");
  const auto m = static_cast<int>(hmm.symbols());
  for (int o : obs) {
    if (o < 0 || o >= m) fail(ErrorCode::SymbolOutOfRange, fmt::format("symbol {} outside [0, {})", o, m));
  }
}

// Maximizes sum_k counts[k] log p[k] over the allowed entries subject to
// sum p = 1 and p >= floor. Entries below the floor under proportional
// allocation are pinned to it and the remaining mass is re-shared.
// Returns false when there is no evidence (all counts zero).
bool constrained_reestimate(std::span<const double> counts, std::span<const std::uint8_t> allowed,
                            double floor, std::span<double> out) {
  double total = 0.0;
  std::size_t n_allowed = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (allowed[k]) {
      total += counts[k];
      ++n_allowed;
    }
  }
  if (!(total > 0.0)) return false;
  if (n_allowed == 1) {
    for (std::size_t k = 0; k < counts.size(); ++k) out[k] = allowed[k] ? 1.0 : 0.0;
    return true;
  }

  std::vector<bool> pinned(counts.size(), false);
  for (;;) {
    double free_count = 0.0;
    std::size_t n_pinned = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (!allowed[k]) continue;
      if (pinned[k]) {
        ++n_pinned;
      } else {
        free_count += counts[k];
      }
    }
    const double mass = 1.0 - static_cast<double>(n_pinned) * floor;
    bool changed = false;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (!allowed[k]) {
        out[k] = 0.0;
      } else if (pinned[k]) {
        out[k] = floor;
      } else {
        out[k] = free_count > 0.0 ? mass * counts[k] / free_count : floor;
        if (out[k] < floor) {
          pinned[k] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return true;
}

}  // namespace

bool DiscreteHmm::transition_allowed(std::size_t from, std::size_t to) const {
  if (!left_right) return true;
  return to >= from && to <= from + kLeftRightMaxJump;
}

std::optional<std::string> DiscreteHmm::find_violation(double tolerance) const {
  const std::size_t n = states();
  if (n == 0) return "model has no states";
  if (transitions.rows() != n || transitions.cols() != n) return "transition matrix is not N x N";
  if (emissions.rows() != n || emissions.cols() == 0) return "emission matrix is not N x M";
  if (auto bad = check_distribution(pi, tolerance, "initial distribution")) return bad;
  for (std::size_t i = 0; i < n; ++i) {
    if (auto bad = check_distribution(transitions.row(i), tolerance, fmt::format("transition row {}", i))) {
      return bad;
    }
    if (auto bad = check_distribution(emissions.row(i), tolerance, fmt::format("emission row {}", i))) {
      return bad;
    }
  }
  if (left_right) {
    if (pi[0] != 1.0) return "left-right model must start in state 0";
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!transition_allowed(i, j) && transitions(i, j) != 0.0) {
          return fmt::format("left-right model has transition {} -> {}", i, j);
        }
      }
    }
  }
  return std::nullopt;
}

DiscreteHmm init_left_right(std::size_t states, std::size_t symbols, std::uint64_t seed) {
  if (states < 1 || symbols < 1) fail(ErrorCode::InvalidArgument, "HMM needs at least one state and symbol");
  DiscreteHmm hmm;
  hmm.left_right = true;
  hmm.pi.assign(states, 0.0);
  hmm.pi[0] = 1.0;
  hmm.transitions = Matrix(states, states, 0.0);
  for (std::size_t i = 0; i < states; ++i) {
    const std::size_t last = std::min(states - 1, i + kLeftRightMaxJump);
    const double p = 1.0 / static_cast<double>(last - i + 1);
    for (std::size_t j = i; j <= last; ++j) hmm.transitions(i, j) = p;
  }
  Rng rng(mix_seed(seed, 0xb0b0ULL));
  hmm.emissions = Matrix(states, symbols);
  for (std::size_t i = 0; i < states; ++i) {
    auto row = hmm.emissions.row(i);
    double sum = 0.0;
    for (double& b : row) {
      b = (1.0 + 0.01 * rng.uniform(-1.0, 1.0)) / static_cast<double>(symbols);
      sum += b;
    }
    for (double& b : row) b /= sum;
  }
  return hmm;
}

ForwardResult forward(const DiscreteHmm& hmm, std::span<const int> obs) {
  validate_observations(hmm, obs);
  const std::size_t n = hmm.states();
  const std::size_t steps = obs.size();
  ForwardResult out;
  out.alpha = Matrix(steps, n, 0.0);
  out.scale.assign(steps, 0.0);

  double log_likelihood = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    auto alpha = out.alpha.row(t);
    const auto o = static_cast<std::size_t>(obs[t]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      if (t == 0) {
        acc = hmm.pi[j];
      } else {
        const auto prev = out.alpha.row(t - 1);
        for (std::size_t i = 0; i < n; ++i) acc += prev[i] * hmm.transitions(i, j);
      }
      alpha[j] = acc * hmm.emissions(j, o);
      sum += alpha[j];
    }
    if (!(sum > 0.0)) {
      out.log_likelihood = kNegInf;
      return out;
    }
    const double c = 1.0 / sum;
    for (double& a : alpha) a *= c;
    out.scale[t] = c;
    log_likelihood -= std::log(c);
  }
  out.log_likelihood = log_likelihood;
  return out;
}

BackwardResult backward(const DiscreteHmm& hmm, std::span<const int> obs, const ForwardResult& fwd) {
  validate_observations(hmm, obs);
  if (!std::isfinite(fwd.log_likelihood)) fail(ErrorCode::ImpossibleSequence, "sequence has zero probability");
  const std::size_t n = hmm.states();
  const std::size_t steps = obs.size();
  BackwardResult out;
  out.beta = Matrix(steps, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.beta(steps - 1, i) = fwd.scale[steps - 1];
  for (std::size_t t = steps - 1; t-- > 0;) {
    const auto next = out.beta.row(t + 1);
    const auto o = static_cast<std::size_t>(obs[t + 1]);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += hmm.transitions(i, j) * hmm.emissions(j, o) * next[j];
      out.beta(t, i) = acc * fwd.scale[t];
    }
  }
  return out;
}

BackwardResult backward(const DiscreteHmm& hmm, std::span<const int> obs) {
  return backward(hmm, obs, forward(hmm, obs));
}

double backward_log_likelihood(const DiscreteHmm& hmm, std::span<const int> obs,
                               const ForwardResult& fwd, const BackwardResult& bwd) {
  const auto o = static_cast<std::size_t>(obs[0]);
  double acc = 0.0;
  for (std::size_t i = 0; i < hmm.states(); ++i) acc += hmm.pi[i] * hmm.emissions(i, o) * bwd.beta(0, i);
  // acc = P * prod_t c_t, and sum_t log c_t = -log P from the forward pass.
  double log_scale = 0.0;
  for (double c : fwd.scale) log_scale += std::log(c);
  return std::log(acc) - log_scale;
}

ViterbiResult viterbi(const DiscreteHmm& hmm, std::span<const int> obs) {
  validate_observations(hmm, obs);
  const std::size_t n = hmm.states();
  const std::size_t steps = obs.size();

  Matrix log_a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) log_a(i, j) = safe_log(hmm.transitions(i, j));
  }

  std::vector<double> delta(n);
  std::vector<double> next(n);
  std::vector<int> backpointer(steps * n, 0);
  const auto o0 = static_cast<std::size_t>(obs[0]);
  for (std::size_t i = 0; i < n; ++i) delta[i] = safe_log(hmm.pi[i]) + safe_log(hmm.emissions(i, o0));

  for (std::size_t t = 1; t < steps; ++t) {
    const auto o = static_cast<std::size_t>(obs[t]);
    for (std::size_t j = 0; j < n; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double score = delta[i] + log_a(i, j);
        if (score > best) {
          best = score;
          arg = static_cast<int>(i);
        }
      }
      next[j] = best + safe_log(hmm.emissions(j, o));
      backpointer[t * n + j] = arg;
    }
    std::swap(delta, next);
  }

  ViterbiResult out;
  double best = kNegInf;
  int state = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (delta[i] > best) {
      best = delta[i];
      state = static_cast<int>(i);
    }
  }
  if (best == kNegInf) {
    out.log_score = kNegInf;
    return out;
  }
  out.log_score = best;
  out.path.assign(steps, 0);
  out.path[steps - 1] = state;
  for (std::size_t t = steps - 1; t > 0; --t) {
    state = backpointer[t * n + static_cast<std::size_t>(state)];
    out.path[t - 1] = state;
  }
  return out;
}

BaumWelchResult baum_welch(const DiscreteHmm& initial, std::span<const std::vector<int>> sequences,
                           const BaumWelchOptions& options) {
  if (sequences.empty()) fail(ErrorCode::EmptyTrainingSet, "Baum-Welch needs at least one sequence");
  if (auto bad = initial.find_violation()) fail(ErrorCode::InvalidArgument, "initial model: " + *bad);
  for (const auto& seq : sequences) validate_observations(initial, seq);

  const std::size_t n = initial.states();
  const std::size_t m = initial.symbols();

  // Structural zeros of the starting point are preserved.
  std::vector<std::uint8_t> pi_allowed(n);
  std::vector<std::uint8_t> a_allowed(n * n);
  std::vector<std::uint8_t> b_allowed(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    pi_allowed[i] = initial.pi[i] > 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a_allowed[i * n + j] = initial.transitions(i, j) > 0.0 && initial.transition_allowed(i, j);
    }
    for (std::size_t k = 0; k < m; ++k) b_allowed[i * m + k] = initial.emissions(i, k) > 0.0;
  }

  BaumWelchResult result{initial, {}};
  DiscreteHmm& hmm = result.hmm;
  TrainTrace& trace = result.trace;
  std::vector<bool> starved(n, false);

  for (int iter = 0;; ++iter) {
    std::vector<double> pi_acc(n, 0.0);
    Matrix a_num(n, n, 0.0);
    Matrix b_num(n, m, 0.0);
    double total = 0.0;

    for (const auto& seq : sequences) {
      const ForwardResult fwd = forward(hmm, seq);
      if (!std::isfinite(fwd.log_likelihood)) {
        fail(ErrorCode::ImpossibleSequence, "a training sequence has zero probability under the model");
      }
      const BackwardResult bwd = backward(hmm, seq, fwd);
      total += fwd.log_likelihood;
      const std::size_t steps = seq.size();
      for (std::size_t t = 0; t < steps; ++t) {
        const auto o = static_cast<std::size_t>(seq[t]);
        for (std::size_t i = 0; i < n; ++i) {
          const double gamma = fwd.alpha(t, i) * bwd.beta(t, i) / fwd.scale[t];
          if (t == 0) pi_acc[i] += gamma;
          b_num(i, o) += gamma;
        }
        if (t + 1 == steps) continue;
        const auto next = static_cast<std::size_t>(seq[t + 1]);
        for (std::size_t i = 0; i < n; ++i) {
          const double a_i = fwd.alpha(t, i);
          if (a_i == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            a_num(i, j) += a_i * hmm.transitions(i, j) * hmm.emissions(j, next) * bwd.beta(t + 1, j);
          }
        }
      }
    }

    trace.log_likelihoods.push_back(total);
    if (iter > 0) {
      const double previous = trace.log_likelihoods[trace.log_likelihoods.size() - 2];
      if (total - previous <= options.tolerance * std::abs(previous)) {
        trace.converged = true;
        break;
      }
    }
    if (iter >= options.max_iterations) break;

    const double floor = options.floor;
    if (!constrained_reestimate(pi_acc, pi_allowed, floor, hmm.pi)) {
      fail(ErrorCode::EmptyTrainingSet, "no occupancy at t = 0");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const std::uint8_t> a_mask(a_allowed.data() + i * n, n);
      const std::span<const std::uint8_t> b_mask(b_allowed.data() + i * m, m);
      // A state never occupied (or only at the final frame) keeps its rows.
      const bool a_ok = constrained_reestimate(a_num.row(i), a_mask, floor, hmm.transitions.row(i));
      const bool b_ok = constrained_reestimate(b_num.row(i), b_mask, floor, hmm.emissions.row(i));
      if (!a_ok || !b_ok) starved[i] = true;
    }
    ++trace.iterations;
    if (options.on_iteration) options.on_iteration(trace.iterations, hmm);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (starved[i]) trace.starved_states.push_back(static_cast<int>(i));
  }
  return result;
}

}  // namespace isoword
