#include "isoword/quantizer.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "isoword/error.hpp"
#include "isoword/rng.hpp"

namespace isoword {

Normalizer Normalizer::fit(const Matrix& vectors) {
  if (vectors.rows() == 0) fail(ErrorCode::TooFewVectors, "cannot normalize an empty set");
  const std::size_t dim = vectors.cols();
  const auto count = static_cast<double>(vectors.rows());
  Normalizer out;
  out.mean.assign(dim, 0.0);
  out.scale.assign(dim, 1.0);
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += vectors(r, d);
  }
  for (double& m : out.mean) m /= count;
  std::vector<double> var(dim, 0.0);
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = vectors(r, d) - out.mean[d];
      var[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / count);
    out.scale[d] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return out;
}

void Normalizer::apply(Matrix& vectors) const {
  if (vectors.cols() != dim()) {
    fail(ErrorCode::DimMismatch, fmt::format("normalizer dim {} vs features {}", dim(), vectors.cols()));
  }
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    auto row = vectors.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) row[d] = (row[d] - mean[d]) * scale[d];
  }
}

int nearest_centroid(const Codebook& codebook, std::span<const double> vector) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < codebook.size(); ++m) {
    const double dist = squared_distance(codebook.centroids.row(m), vector);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(m);
    }
  }
  return best;
}

std::vector<int> encode(const Codebook& codebook, const Matrix& features) {
  if (features.cols() != codebook.dim()) {
    fail(ErrorCode::DimMismatch,
         fmt::format("codebook dim {} vs features {}", codebook.dim(), features.cols()));
  }
  std::vector<int> symbols(features.rows());
  for (std::size_t t = 0; t < features.rows(); ++t) symbols[t] = nearest_centroid(codebook, features.row(t));
  return symbols;
}

std::vector<int> encode(const Codebook& codebook, const FeatureMatrix& features) {
  return encode(codebook, features.values);
}

namespace {

struct Assignment {
  std::vector<int> cell;
  std::vector<double> dist;
  double distortion = 0.0;
};

Assignment assign(const Codebook& codebook, const Matrix& vectors) {
  Assignment out;
  out.cell.resize(vectors.rows());
  out.dist.resize(vectors.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    const int m = nearest_centroid(codebook, vectors.row(r));
    out.cell[r] = m;
    out.dist[r] = squared_distance(codebook.centroids.row(static_cast<std::size_t>(m)), vectors.row(r));
    total += out.dist[r];
  }
  out.distortion = total / static_cast<double>(vectors.rows());
  return out;
}

// Centroids become cell means; empty cells take the vector currently farthest
// from its own centroid.
void update_centroids(Codebook& codebook, const Matrix& vectors, const Assignment& assignment) {
  const std::size_t size = codebook.size();
  const std::size_t dim = codebook.dim();
  Matrix sums(size, dim, 0.0);
  std::vector<std::size_t> counts(size, 0);
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    const auto m = static_cast<std::size_t>(assignment.cell[r]);
    auto acc = sums.row(m);
    const auto v = vectors.row(r);
    for (std::size_t d = 0; d < dim; ++d) acc[d] += v[d];
    ++counts[m];
  }
  bool any_empty = false;
  for (std::size_t m = 0; m < size; ++m) {
    if (counts[m] == 0) {
      any_empty = true;
      continue;
    }
    auto c = codebook.centroids.row(m);
    const auto acc = sums.row(m);
    for (std::size_t d = 0; d < dim; ++d) c[d] = acc[d] / static_cast<double>(counts[m]);
  }
  if (!any_empty) return;

  std::vector<double> dist(vectors.rows());
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    dist[r] = squared_distance(
        codebook.centroids.row(static_cast<std::size_t>(assignment.cell[r])), vectors.row(r));
  }
  for (std::size_t m = 0; m < size; ++m) {
    if (counts[m] != 0) continue;
    std::size_t far = 0;
    for (std::size_t r = 1; r < vectors.rows(); ++r) {
      if (dist[r] > dist[far]) far = r;
    }
    const auto v = vectors.row(far);
    std::copy(v.begin(), v.end(), codebook.centroids.row(m).begin());
    dist[far] = 0.0;
  }
}

double refine(Codebook& codebook, const Matrix& vectors, const LbgOptions& options,
              std::vector<double>* trace) {
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    const Assignment assignment = assign(codebook, vectors);
    if (trace != nullptr) trace->push_back(assignment.distortion);
    const double d = assignment.distortion;
    const bool converged =
        d == 0.0 || (std::isfinite(previous) && (previous - d) < options.relative_tolerance * previous);
    if (converged || iter >= options.max_iterations) return d;
    update_centroids(codebook, vectors, assignment);
    previous = d;
  }
}

}  // namespace

Codebook train_codebook(const Matrix& vectors, std::size_t size, std::uint64_t seed,
                        const LbgOptions& options, LbgTrace* trace) {
  if (size == 0 || !std::has_single_bit(size)) {
    fail(ErrorCode::BadSize, fmt::format("codebook size {} is not a power of two", size));
  }
  if (vectors.rows() < size) {
    fail(ErrorCode::TooFewVectors,
         fmt::format("{} vectors cannot train {} centroids", vectors.rows(), size));
  }
  const std::size_t dim = vectors.cols();
  Rng rng(mix_seed(seed, 0x1b9ULL));

  // Per-dimension spread, used only to separate the two children of a
  // centroid that sits at the origin (where the multiplicative split is void).
  std::vector<double> spread(dim, 0.0);
  {
    const Normalizer stats = Normalizer::fit(vectors);
    for (std::size_t d = 0; d < dim; ++d) spread[d] = 1.0 / stats.scale[d];
  }

  Codebook codebook;
  codebook.centroids = Matrix(1, dim, 0.0);
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    for (std::size_t d = 0; d < dim; ++d) codebook.centroids(0, d) += vectors(r, d);
  }
  for (double& v : codebook.centroids.data()) v /= static_cast<double>(vectors.rows());

  if (trace != nullptr) trace->clear();
  auto refine_stage = [&] {
    std::vector<double>* stage = nullptr;
    if (trace != nullptr) {
      trace->emplace_back();
      stage = &trace->back();
    }
    codebook.distortion = refine(codebook, vectors, options, stage);
  };
  refine_stage();

  const double eps = options.split_epsilon;
  while (codebook.size() < size) {
    const std::size_t current = codebook.size();
    Matrix split(2 * current, dim);
    for (std::size_t m = 0; m < current; ++m) {
      const auto c = codebook.centroids.row(m);
      auto plus = split.row(2 * m);
      auto minus = split.row(2 * m + 1);
      for (std::size_t d = 0; d < dim; ++d) {
        plus[d] = c[d] * (1.0 + eps);
        minus[d] = c[d] * (1.0 - eps);
      }
      if (squared_distance(plus, minus) < 1e-24) {
        for (std::size_t d = 0; d < dim; ++d) {
          const double offset = eps * spread[d] * rng.uniform(-1.0, 1.0);
          plus[d] += offset;
          minus[d] -= offset;
        }
      }
    }
    codebook.centroids = std::move(split);
    refine_stage();
  }
  return codebook;
}

}  // namespace isoword
