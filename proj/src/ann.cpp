#include "isoword/ann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "isoword/error.hpp"
#include "isoword/rng.hpp"

namespace isoword {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Logits {
  std::vector<double> hidden;
  std::vector<double> logits;
};

Logits compute_logits(const Mlp& mlp, std::span<const double> x) {
  if (x.size() != mlp.inputs()) {
    fail(ErrorCode::DimMismatch, fmt::format("MLP expects {} inputs, got {}", mlp.inputs(), x.size()));
  }
  Logits out;
  out.hidden.resize(mlp.hidden());
  for (std::size_t h = 0; h < mlp.hidden(); ++h) {
    const auto w = mlp.w1.row(h);
    double z = mlp.b1[h];
    for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
    out.hidden[h] = sigmoid(z);
  }
  out.logits.resize(mlp.classes());
  for (std::size_t c = 0; c < mlp.classes(); ++c) {
    const auto w = mlp.w2.row(c);
    double z = mlp.b2[c];
    for (std::size_t h = 0; h < out.hidden.size(); ++h) z += w[h] * out.hidden[h];
    out.logits[c] = z;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - peak);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

double example_loss(std::span<const double> logits, int label) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  return -(logits[static_cast<std::size_t>(label)] - peak - std::log(sum));
}

void check_label(const Mlp& mlp, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= mlp.classes()) {
    fail(ErrorCode::InvalidArgument, fmt::format("label {} outside [0, {})", label, mlp.classes()));
  }
}

template <typename Fn>
void for_each_param(Mlp& a, const Mlp& b, Fn fn) {
  for (std::size_t i = 0; i < a.w1.data().size(); ++i) fn(a.w1.data()[i], b.w1.data()[i]);
  for (std::size_t i = 0; i < a.b1.size(); ++i) fn(a.b1[i], b.b1[i]);
  for (std::size_t i = 0; i < a.w2.data().size(); ++i) fn(a.w2.data()[i], b.w2.data()[i]);
  for (std::size_t i = 0; i < a.b2.size(); ++i) fn(a.b2[i], b.b2[i]);
}

}  // namespace

Mlp make_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, std::uint64_t seed,
             double init_range) {
  if (inputs == 0 || hidden == 0 || classes == 0) fail(ErrorCode::InvalidArgument, "MLP layers must be non-empty");
  Rng rng(mix_seed(seed, 0xa11ULL));
  Mlp mlp;
  mlp.w1 = Matrix(hidden, inputs);
  mlp.b1.resize(hidden);
  mlp.w2 = Matrix(classes, hidden);
  mlp.b2.resize(classes);
  for (double& w : mlp.w1.data()) w = rng.uniform(-init_range, init_range);
  for (double& b : mlp.b1) b = rng.uniform(-init_range, init_range);
  for (double& w : mlp.w2.data()) w = rng.uniform(-init_range, init_range);
  for (double& b : mlp.b2) b = rng.uniform(-init_range, init_range);
  return mlp;
}

Mlp zeros_like(const Mlp& like) {
  Mlp out;
  out.w1 = Matrix(like.w1.rows(), like.w1.cols(), 0.0);
  out.b1.assign(like.b1.size(), 0.0);
  out.w2 = Matrix(like.w2.rows(), like.w2.cols(), 0.0);
  out.b2.assign(like.b2.size(), 0.0);
  return out;
}

MlpOutput mlp_forward_full(const Mlp& mlp, std::span<const double> x) {
  Logits z = compute_logits(mlp, x);
  return {std::move(z.hidden), softmax(z.logits)};
}

std::vector<double> mlp_forward(const Mlp& mlp, std::span<const double> x) {
  return softmax(compute_logits(mlp, x).logits);
}

double mean_cross_entropy(const Mlp& mlp, std::span<const Example> batch) {
  if (batch.empty()) fail(ErrorCode::EmptyInput, "loss of an empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    check_label(mlp, ex.label);
    total += example_loss(compute_logits(mlp, ex.input).logits, ex.label);
  }
  return total / static_cast<double>(batch.size());
}

MlpGradient compute_gradient(const Mlp& mlp, std::span<const Example> batch) {
  if (batch.empty()) fail(ErrorCode::EmptyInput, "gradient of an empty batch");
  MlpGradient out{zeros_like(mlp), 0.0};
  Mlp& g = out.grad;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> delta_hidden(mlp.hidden());

  for (const auto& ex : batch) {
    check_label(mlp, ex.label);
    const Logits z = compute_logits(mlp, ex.input);
    out.loss += example_loss(z.logits, ex.label);
    std::vector<double> delta_out = softmax(z.logits);
    delta_out[static_cast<std::size_t>(ex.label)] -= 1.0;

    std::fill(delta_hidden.begin(), delta_hidden.end(), 0.0);
    for (std::size_t c = 0; c < mlp.classes(); ++c) {
      const double d = delta_out[c] * inv;
      g.b2[c] += d;
      auto gw = g.w2.row(c);
      const auto w = mlp.w2.row(c);
      for (std::size_t h = 0; h < mlp.hidden(); ++h) {
        gw[h] += d * z.hidden[h];
        delta_hidden[h] += delta_out[c] * w[h];
      }
    }
    for (std::size_t h = 0; h < mlp.hidden(); ++h) {
      const double d = delta_hidden[h] * z.hidden[h] * (1.0 - z.hidden[h]) * inv;
      g.b1[h] += d;
      auto gw = g.w1.row(h);
      for (std::size_t i = 0; i < ex.input.size(); ++i) gw[i] += d * ex.input[i];
    }
  }
  out.loss *= inv;
  return out;
}

double backprop_step(Mlp& mlp, std::span<const Example> batch, const AnnTrainConfig& config,
                     Mlp& velocity) {
  if (!(config.learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    fail(ErrorCode::InvalidArgument, "momentum must lie in [0, 1)");
  }
  const MlpGradient g = compute_gradient(mlp, batch);
  const double mu = config.momentum;
  const double eta = config.learning_rate;
  for_each_param(velocity, g.grad, [&](double& v, double grad) { v = mu * v - eta * grad; });
  for_each_param(mlp, velocity, [](double& w, double v) { w += v; });
  return g.loss;
}

AnnTrainResult train_ann(std::span<const Example> dataset, std::size_t classes,
                         const AnnTrainConfig& config) {
  if (dataset.empty()) fail(ErrorCode::EmptyTrainingSet, "no training examples");
  std::vector<std::size_t> per_class(classes, 0);
  for (const auto& ex : dataset) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= classes) {
      fail(ErrorCode::InvalidArgument, fmt::format("label {} outside [0, {})", ex.label, classes));
    }
    ++per_class[static_cast<std::size_t>(ex.label)];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) fail(ErrorCode::MissingClass, fmt::format("class {} has no examples", c));
  }
  const std::size_t inputs = dataset.front().input.size();
  for (const auto& ex : dataset) {
    if (ex.input.size() != inputs) fail(ErrorCode::DimMismatch, "examples differ in input size");
  }

  Rng rng(mix_seed(config.seed, 0x5917ULL));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::size_t heldout_count = dataset.size() / 10;
  std::vector<Example> heldout;
  std::vector<Example> train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < heldout_count ? heldout : train).push_back(dataset[order[i]]);
  }
  const std::span<const Example> selection = heldout.empty() ? std::span<const Example>(train)
                                                             : std::span<const Example>(heldout);

  AnnTrainResult result;
  result.heldout_size = heldout.size();
  Mlp mlp = make_mlp(inputs, config.hidden, classes, config.seed, config.init_range);
  result.mlp = mlp;
  Mlp velocity = zeros_like(mlp);
  double best = mean_cross_entropy(mlp, selection);
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    result.train_loss.push_back(backprop_step(mlp, train, config, velocity));
    const double loss = mean_cross_entropy(mlp, selection);
    result.heldout_loss.push_back(loss);
    if (loss < best) {
      best = loss;
      result.mlp = mlp;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

std::vector<double> pool_utterance(const Matrix& features, std::size_t segments) {
  if (features.rows() == 0) fail(ErrorCode::EmptyInput, "pooling an empty feature matrix");
  if (segments == 0) fail(ErrorCode::InvalidArgument, "pooling needs at least one segment");
  const std::size_t frames = features.rows();
  const std::size_t dim = features.cols();
  std::vector<double> out(segments * dim, 0.0);
  if (frames < segments) {
    // Every segment holds the frame covering its share of the timeline.
    for (std::size_t s = 0; s < segments; ++s) {
      const std::size_t t = s * frames / segments;
      std::copy_n(features.row(t).begin(), dim, out.begin() + static_cast<std::ptrdiff_t>(s * dim));
    }
    return out;
  }
  const std::size_t base = frames / segments;
  const std::size_t extra = frames % segments;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t length = base + (s < extra ? 1 : 0);
    for (std::size_t t = cursor; t < cursor + length; ++t) {
      const auto row = features.row(t);
      for (std::size_t d = 0; d < dim; ++d) out[s * dim + d] += row[d];
    }
    for (std::size_t d = 0; d < dim; ++d) out[s * dim + d] /= static_cast<double>(length);
    cursor += length;
  }
  return out;
}

}  // namespace isoword
