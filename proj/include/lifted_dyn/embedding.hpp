/*
 Copyright 2026 The lifted-dyn Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LIFTED_DYN_EMBEDDING_HPP
#define LIFTED_DYN_EMBEDDING_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lifted_dyn/dynamics.hpp"

namespace lifted_dyn {

enum class KernelMode { kNormalized, kScaled };

/**
 * @brief Gaussian kernels sharing one covariance.
 *
 * Normalized mode returns a probability vector over the kernels (the
 * exponents are shifted by their maximum before exponentiation, so a point far
 * from every center encodes as the one-hot of its nearest center instead of
 * 0/0). Scaled mode returns exp(-q_i / 2) / c_i without normalization.
 */
class KernelEmbedding {
 public:
  KernelEmbedding(Eigen::MatrixXd centers, Eigen::MatrixXd covariance,
                  KernelMode mode = KernelMode::kNormalized,
                  std::optional<Eigen::VectorXd> scales = std::nullopt);

  Eigen::Index size() const { return centers_.rows(); }
  Eigen::Index input_dim() const { return centers_.cols(); }
  const Eigen::MatrixXd& centers() const { return centers_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  KernelMode mode() const { return mode_; }
  const std::optional<Eigen::VectorXd>& scales() const { return scales_; }

  Eigen::VectorXd encode(const Eigen::VectorXd& x) const;
  /// Row-wise encoding of a K x d matrix into K x N.
  Eigen::MatrixXd encode_rows(const Eigen::MatrixXd& points) const;

 private:
  Eigen::VectorXd exponents(const Eigen::VectorXd& x) const;

  Eigen::MatrixXd centers_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd whitening_;  // L^{-1} with covariance = L L^T
  Eigen::MatrixXd whitened_centers_;
  KernelMode mode_;
  std::optional<Eigen::VectorXd> scales_;
};

/// Axis-aligned grid of indicator cells; the outermost cells are unbounded.
/// Cell index is row-major with the last dimension varying fastest.
class PartitionEmbedding {
 public:
  explicit PartitionEmbedding(std::vector<std::vector<double>> cell_edges);

  Eigen::Index size() const { return size_; }
  Eigen::Index input_dim() const { return static_cast<Eigen::Index>(edges_.size()); }
  const std::vector<std::vector<double>>& cell_edges() const { return edges_; }

  Eigen::Index cell_index(const Eigen::VectorXd& x) const;
  Eigen::VectorXd encode(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd encode_rows(const Eigen::MatrixXd& points) const;

 private:
  std::vector<std::vector<double>> edges_;
  Eigen::Index size_;
};

/// z = x. Used for synthetic recovery checks and exact linear test models.
class IdentityLifting {
 public:
  explicit IdentityLifting(Eigen::Index dim) : dim_(dim) {}
  Eigen::Index size() const { return dim_; }
  Eigen::Index input_dim() const { return dim_; }
  Eigen::VectorXd encode(const Eigen::VectorXd& x) const { return x; }
  Eigen::MatrixXd encode_rows(const Eigen::MatrixXd& points) const { return points; }

 private:
  Eigen::Index dim_;
};

using Embedding = std::variant<KernelEmbedding, PartitionEmbedding, IdentityLifting>;

Eigen::VectorXd encode(const Embedding& emb, const Eigen::VectorXd& x);
Eigen::MatrixXd encode_rows(const Embedding& emb, const Eigen::MatrixXd& points);
Eigen::Index embedding_size(const Embedding& emb);
Eigen::Index embedding_input_dim(const Embedding& emb);

/// x = sum_i pi_i * center_i, optionally after dividing pi by its sum.
class ExpectationDecoder {
 public:
  explicit ExpectationDecoder(Eigen::MatrixXd centers, bool renormalize = false);

  Eigen::Index size() const { return centers_.rows(); }
  Eigen::Index output_dim() const { return centers_.cols(); }
  const Eigen::MatrixXd& centers() const { return centers_; }
  bool renormalize() const { return renormalize_; }

  /// d x N matrix C with decode(pi) = C pi (renormalize == false).
  Eigen::MatrixXd matrix() const { return centers_.transpose(); }

  Eigen::VectorXd decode(const Eigen::VectorXd& pi) const;

 private:
  Eigen::MatrixXd centers_;
  bool renormalize_;
};

struct ReconstructionReport {
  Eigen::VectorXd errors;
  double max = 0.0;
  double mean = 0.0;
};

/// ||x - decode(encode(x))||_2 for each row of `points`.
ReconstructionReport reconstruction_error(const Embedding& emb, const ExpectationDecoder& dec,
                                          const Eigen::MatrixXd& points);

struct GridEmbedding {
  KernelEmbedding embedding;
  ExpectationDecoder decoder;
};

/// Kernels on the tensor-product grid (endpoints included, first dimension
/// outermost) with covariance sigma^2 I and a decoder over the same centers.
GridEmbedding grid_embedding(const std::vector<Interval>& ranges,
                             const std::vector<int>& counts, double sigma,
                             KernelMode mode = KernelMode::kNormalized);

/// Tensor-product grid points, first dimension outermost.
Eigen::MatrixXd grid_points(const std::vector<Interval>& ranges, const std::vector<int>& counts);

/// Equal-width cells over each range plus two unbounded outer cells per axis,
/// together with a decoder at the cell midpoints (outer cells use the
/// midpoint of a cell of the same width).
std::pair<PartitionEmbedding, ExpectationDecoder> grid_partition(
    const std::vector<Interval>& ranges, const std::vector<int>& inner_counts);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_EMBEDDING_HPP
