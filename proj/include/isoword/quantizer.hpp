#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "isoword/frontend.hpp"
#include "isoword/matrix.hpp"

namespace isoword {

// Per-dimension standardization fitted on the codebook training set and
// applied to every feature row before quantization or pooling.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / stddev; 1 where the dimension is constant

  static Normalizer fit(const Matrix& vectors);
  std::size_t dim() const noexcept { return mean.size(); }
  void apply(Matrix& vectors) const;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct Codebook {
  Matrix centroids;       // M x D
  double distortion = 0;  // mean squared distance of the training vectors

  std::size_t size() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct LbgOptions {
  double split_epsilon = 0.01;
  double relative_tolerance = 1e-4;
  int max_iterations = 50;
};

// Distortion after each k-means assignment, one list per codebook size
// (1, 2, 4, ... M).
using LbgTrace = std::vector<std::vector<double>>;

// LBG binary splitting followed by k-means refinement at each size.
Codebook train_codebook(const Matrix& vectors, std::size_t size, std::uint64_t seed,
                        const LbgOptions& options = {}, LbgTrace* trace = nullptr);

// Nearest centroid by squared Euclidean distance; ties go to the lower index.
int nearest_centroid(const Codebook& codebook, std::span<const double> vector);
std::vector<int> encode(const Codebook& codebook, const Matrix& features);
std::vector<int> encode(const Codebook& codebook, const FeatureMatrix& features);

}  // namespace isoword
