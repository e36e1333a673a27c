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
#include "lifted_dyn/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

KernelEmbedding::KernelEmbedding(Eigen::MatrixXd centers, Eigen::MatrixXd covariance,
                                 KernelMode mode, std::optional<Eigen::VectorXd> scales)
    : centers_(std::move(centers)),
      covariance_(std::move(covariance)),
      mode_(mode),
      scales_(std::move(scales)) {
  const Eigen::Index n = centers_.rows();
  const Eigen::Index d = centers_.cols();
  if (n < 1 || d < 1) throw ConfigurationError("kernel embedding: need at least one center");
  if (covariance_.rows() != d || covariance_.cols() != d) {
    throw ConfigurationError("kernel embedding: covariance must be d x d");
  }
  if (!centers_.allFinite() || !covariance_.allFinite()) {
    throw ConfigurationError("kernel embedding: non-finite parameters");
  }
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, covariance_.cwiseAbs().maxCoeff())) {
    throw ConfigurationError("kernel embedding: covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw ConfigurationError("kernel embedding: covariance is not positive definite");
  }
  const Eigen::MatrixXd lower = llt.matrixL();
  whitening_ = lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(d, d));
  whitened_centers_ = centers_ * whitening_.transpose();

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (centers_.row(i) == centers_.row(j)) {
        throw ConfigurationError("kernel embedding: duplicate centers");
      }
    }
  }
  if (mode_ == KernelMode::kScaled) {
    if (!scales_) scales_ = Eigen::VectorXd::Ones(n);
    if (scales_->size() != n || (scales_->array() <= 0.0).any()) {
      throw ConfigurationError("kernel embedding: scales must be N positive values");
    }
  }
}

Eigen::VectorXd KernelEmbedding::exponents(const Eigen::VectorXd& x) const {
  const Eigen::RowVectorXd wx = (whitening_ * x).transpose();
  return -0.5 * (whitened_centers_.rowwise() - wx).rowwise().squaredNorm();
}

Eigen::VectorXd KernelEmbedding::encode(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw ConfigurationError("encode: dimension mismatch");
  if (!x.allFinite()) throw ConfigurationError("encode: non-finite input");
  Eigen::VectorXd e = exponents(x);
  if (mode_ == KernelMode::kScaled) {
    return e.array().exp() / scales_->array();
  }
  const double top = e.maxCoeff();
  Eigen::VectorXd out(size());
  if (!std::isfinite(top)) {
    // Squared distances overflowed; fall back to the nearest center.
    const double s = x.cwiseAbs().maxCoeff();
    Eigen::Index best = 0;
    ((centers_ / s).rowwise() - (x / s).transpose()).rowwise().squaredNorm().minCoeff(&best);
    out.setZero();
    out(best) = 1.0;
    return out;
  }
  out = (e.array() - top).exp();
  out /= out.sum();
  return out;
}

Eigen::MatrixXd KernelEmbedding::encode_rows(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out(points.rows(), size());
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    out.row(k) = encode(points.row(k).transpose()).transpose();
  }
  return out;
}

PartitionEmbedding::PartitionEmbedding(std::vector<std::vector<double>> cell_edges)
    : edges_(std::move(cell_edges)), size_(1) {
  if (edges_.empty()) throw ConfigurationError("partition: need at least one dimension");
  for (const auto& e : edges_) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!std::isfinite(e[i])) throw ConfigurationError("partition: non-finite edge");
      if (i > 0 && !(e[i] > e[i - 1])) {
        throw ConfigurationError("partition: edges must be strictly increasing");
      }
    }
    size_ *= static_cast<Eigen::Index>(e.size() + 1);
  }
}

Eigen::Index PartitionEmbedding::cell_index(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw ConfigurationError("encode: dimension mismatch");
  Eigen::Index index = 0;
  for (std::size_t d = 0; d < edges_.size(); ++d) {
    const auto& e = edges_[d];
    // Cells are half-open [edge_{i-1}, edge_i).
    const auto pos = std::upper_bound(e.begin(), e.end(), x(static_cast<Eigen::Index>(d)));
    index = index * static_cast<Eigen::Index>(e.size() + 1) + (pos - e.begin());
  }
  return index;
}

Eigen::VectorXd PartitionEmbedding::encode(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw ConfigurationError("encode: non-finite input");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size_);
  out(cell_index(x)) = 1.0;
  return out;
}

Eigen::MatrixXd PartitionEmbedding::encode_rows(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), size_);
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    out(k, cell_index(points.row(k).transpose())) = 1.0;
  }
  return out;
}

Eigen::VectorXd encode(const Embedding& emb, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& e) { return e.encode(x); }, emb);
}

Eigen::MatrixXd encode_rows(const Embedding& emb, const Eigen::MatrixXd& points) {
  return std::visit([&](const auto& e) { return e.encode_rows(points); }, emb);
}

Eigen::Index embedding_size(const Embedding& emb) {
  return std::visit([](const auto& e) { return e.size(); }, emb);
}

Eigen::Index embedding_input_dim(const Embedding& emb) {
  return std::visit([](const auto& e) { return e.input_dim(); }, emb);
}

ExpectationDecoder::ExpectationDecoder(Eigen::MatrixXd centers, bool renormalize)
    : centers_(std::move(centers)), renormalize_(renormalize) {
  if (centers_.rows() < 1 || centers_.cols() < 1) {
    throw ConfigurationError("decoder: need at least one center");
  }
}

Eigen::VectorXd ExpectationDecoder::decode(const Eigen::VectorXd& pi) const {
  if (pi.size() != size()) throw ConfigurationError("decode: dimension mismatch");
  if (!renormalize_) return centers_.transpose() * pi;
  const double total = pi.sum();
  if (total == 0.0 || !std::isfinite(total)) {
    throw DegenerateDecodeError("decode: weights sum to zero");
  }
  return centers_.transpose() * (pi / total);
}

ReconstructionReport reconstruction_error(const Embedding& emb, const ExpectationDecoder& dec,
                                          const Eigen::MatrixXd& points) {
  if (points.rows() < 1) throw ConfigurationError("reconstruction_error: no points");
  ReconstructionReport report;
  report.errors.resize(points.rows());
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    const Eigen::VectorXd x = points.row(k).transpose();
    report.errors(k) = (x - dec.decode(encode(emb, x))).norm();
  }
  report.max = report.errors.maxCoeff();
  report.mean = report.errors.mean();
  return report;
}

namespace {

std::vector<double> axis_values(const Interval& iv, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = 0.5 * (iv.lo + iv.hi);
    return v;
  }
  const double step = (iv.hi - iv.lo) / (count - 1);
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = iv.lo + i * step;
  v.back() = iv.hi;
  return v;
}

void check_grid(const std::vector<Interval>& ranges, const std::vector<int>& counts) {
  if (ranges.empty() || ranges.size() != counts.size()) {
    throw ConfigurationError("grid: ranges and counts must be non-empty and equal length");
  }
  for (std::size_t d = 0; d < ranges.size(); ++d) {
    if (counts[d] < 1) throw ConfigurationError("grid: counts must be >= 1");
    if (!(ranges[d].lo < ranges[d].hi)) throw ConfigurationError("grid: need lo < hi");
  }
}

}  // namespace

Eigen::MatrixXd grid_points(const std::vector<Interval>& ranges, const std::vector<int>& counts) {
  check_grid(ranges, counts);
  std::vector<std::vector<double>> axes;
  Eigen::Index total = 1;
  for (std::size_t d = 0; d < ranges.size(); ++d) {
    axes.push_back(axis_values(ranges[d], counts[d]));
    total *= counts[d];
  }
  const auto dims = static_cast<Eigen::Index>(ranges.size());
  Eigen::MatrixXd pts(total, dims);
  for (Eigen::Index k = 0; k < total; ++k) {
    Eigen::Index rem = k;
    for (Eigen::Index d = dims - 1; d >= 0; --d) {
      const auto c = static_cast<Eigen::Index>(counts[static_cast<std::size_t>(d)]);
      pts(k, d) = axes[static_cast<std::size_t>(d)][static_cast<std::size_t>(rem % c)];
      rem /= c;
    }
  }
  return pts;
}

GridEmbedding grid_embedding(const std::vector<Interval>& ranges, const std::vector<int>& counts,
                             double sigma, KernelMode mode) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigurationError("grid_embedding: sigma must be positive");
  }
  Eigen::MatrixXd centers = grid_points(ranges, counts);
  const auto d = centers.cols();
  Eigen::MatrixXd cov = sigma * sigma * Eigen::MatrixXd::Identity(d, d);
  KernelEmbedding emb(centers, cov, mode);
  return GridEmbedding{std::move(emb), ExpectationDecoder(centers, false)};
}

std::pair<PartitionEmbedding, ExpectationDecoder> grid_partition(
    const std::vector<Interval>& ranges, const std::vector<int>& inner_counts) {
  check_grid(ranges, inner_counts);
  std::vector<std::vector<double>> edges;
  std::vector<Interval> mid_ranges;
  std::vector<int> mid_counts;
  for (std::size_t d = 0; d < ranges.size(); ++d) {
    const double w = (ranges[d].hi - ranges[d].lo) / inner_counts[d];
    std::vector<double> e;
    for (int i = 0; i <= inner_counts[d]; ++i) e.push_back(ranges[d].lo + i * w);
    e.back() = ranges[d].hi;
    edges.push_back(std::move(e));
    // Midpoints of the inner cells extended by one cell on each side.
    mid_ranges.push_back({ranges[d].lo - 0.5 * w, ranges[d].hi + 0.5 * w});
    mid_counts.push_back(inner_counts[d] + 2);
  }
  PartitionEmbedding part(std::move(edges));
  return {std::move(part), ExpectationDecoder(grid_points(mid_ranges, mid_counts), false)};
}

}  // namespace lifted_dyn
