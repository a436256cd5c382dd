#pragma once

// Prototype selection by greedy maximization of the MMD-critic objective
//   J_b(S) = 2/(n m) sum_{i, j in S} K_ij - 1/m^2 sum_{j, j' in S} K_jj'

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trance/error.hpp"
#include "trance/linalg.hpp"

namespace trance {

struct KernelMatrix {
  MatrixD k;
  double gamma = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(k.rows()); }
};

/// Median of the pairwise squared distances (i < j); 0 when n < 2.
inline double median_squared_distance(const MatrixD& e) {
  std::vector<double> d;
  const Eigen::Index n = e.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((e.row(i) - e.row(j)).squaredNorm());
  if (d.empty()) return 0.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(d.begin(), mid));
}

/// RBF kernel over the rows of `embeddings`. Without a gamma the median
/// heuristic is used; if every point coincides it falls back to gamma = 1.
inline KernelMatrix rbf_kernel_matrix(const MatrixD& embeddings, std::optional<double> gamma = std::nullopt) {
  require(embeddings.rows() >= 1, ErrorCode::EmptyInput, "no embeddings");
  require(embeddings.allFinite(), ErrorCode::InvalidArgument, "embeddings contain non-finite values");
  KernelMatrix km;
  if (gamma) {
    require(*gamma > 0.0, ErrorCode::InvalidArgument, "gamma must be positive");
    km.gamma = *gamma;
  } else {
    const double med = median_squared_distance(embeddings);
    km.gamma = med > 0.0 ? 1.0 / med : 1.0;
  }
  const Eigen::Index n = embeddings.rows();
  km.k.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    km.k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j)
      km.k(i, j) = km.k(j, i) = std::exp(-km.gamma * (embeddings.row(i) - embeddings.row(j)).squaredNorm());
  }
  return km;
}

inline KernelMatrix rbf_kernel_matrix(std::span<const VectorD> embeddings, std::optional<double> gamma = std::nullopt) {
  require(!embeddings.empty(), ErrorCode::EmptyInput, "no embeddings");
  const Eigen::Index d = embeddings.front().size();
  MatrixD m(static_cast<Eigen::Index>(embeddings.size()), d);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    require(embeddings[i].size() == d, ErrorCode::DimensionMismatch, "embeddings differ in length");
    m.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
  }
  return rbf_kernel_matrix(m, gamma);
}

inline double mmd_objective(const KernelMatrix& km, std::span<const std::size_t> subset) {
  require(!subset.empty(), ErrorCode::EmptySubset, "prototype subset is empty");
  const std::size_t n = km.size();
  for (std::size_t j : subset) require(j < n, ErrorCode::IndexOutOfRange, "subset index " + std::to_string(j));
  const auto m = static_cast<double>(subset.size());
  double cross = 0.0;
  double within = 0.0;
  for (std::size_t j : subset) {
    const auto jj = static_cast<Eigen::Index>(j);
    cross += km.k.col(jj).sum();
    for (std::size_t jp : subset) within += km.k(jj, static_cast<Eigen::Index>(jp));
  }
  return 2.0 / (static_cast<double>(n) * m) * cross - within / (m * m);
}

struct PrototypeSet {
  std::vector<std::size_t> indices;      // in selection order
  std::vector<double> objective_values;  // J_b after each addition
  std::size_t m_star = 0;
};

/// Greedy forward selection; ties go to the lowest index.
inline PrototypeSet select_prototypes(const KernelMatrix& km, std::size_t m_star) {
  const std::size_t n = km.size();
  require(m_star >= 1 && m_star <= n, ErrorCode::BadM,
          "m_star must lie in [1, " + std::to_string(n) + "], got " + std::to_string(m_star));
  // J_b(S + i) from running sums: column sums of S and the within-S total.
  const VectorD colsum = km.k.colwise().sum().transpose();
  VectorD to_selected = VectorD::Zero(static_cast<Eigen::Index>(n));  // sum_{j in S} K_ij
  std::vector<char> taken(n, 0);
  double cross = 0.0;
  double within = 0.0;

  PrototypeSet out;
  out.m_star = m_star;
  for (std::size_t step = 0; step < m_star; ++step) {
    const auto m = static_cast<double>(step + 1);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      const double c = cross + colsum(ii);
      const double w = within + 2.0 * to_selected(ii) + km.k(ii, ii);
      const double j = 2.0 / (static_cast<double>(n) * m) * c - w / (m * m);
      if (j > best) {
        best = j;
        best_i = i;
      }
    }
    const auto bi = static_cast<Eigen::Index>(best_i);
    taken[best_i] = 1;
    cross += colsum(bi);
    within += 2.0 * to_selected(bi) + km.k(bi, bi);
    to_selected += km.k.col(bi);
    out.indices.push_back(best_i);
    out.objective_values.push_back(best);
  }
  return out;
}

/// Cosine between a pooled latent embedding and the axis of concept i.
inline double prototype_similarity(const VectorD& pooled, std::size_t concept_index) {
  require(concept_index < static_cast<std::size_t>(pooled.size()), ErrorCode::IndexOutOfRange,
          "concept index outside the embedding");
  require(pooled.allFinite(), ErrorCode::InvalidArgument, "embedding is not finite");
  const double norm = pooled.norm();
  require(norm > 0.0, ErrorCode::ZeroVector, "pooled embedding is the zero vector");
  return pooled(static_cast<Eigen::Index>(concept_index)) / norm;
}

}  // namespace trance
