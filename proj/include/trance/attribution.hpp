#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trance/archive.hpp"
#include "trance/error.hpp"
#include "trance/faith_report.hpp"
#include "trance/linalg.hpp"
#include "trance/tensor_io.hpp"

namespace trance {

/// Spatial mean of every channel.
inline VectorD global_average_pool(const ActivationTensor& a) {
  VectorD out = VectorD::Zero(static_cast<Eigen::Index>(a.c));
  const std::size_t positions = a.h * a.w;
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t k = 0; k < a.c; ++k) out(static_cast<Eigen::Index>(k)) += a.data[p * a.c + k];
  if (positions) out /= static_cast<double>(positions);
  return out;
}

inline double head_logit(const ClassifierHead& head, const VectorD& pooled, std::size_t class_k) {
  require(class_k < head.num_classes(), ErrorCode::IndexOutOfRange, "class index outside the head");
  require(static_cast<std::size_t>(pooled.size()) == head.channels(), ErrorCode::ShapeMismatch,
          "pooled vector length differs from head width");
  return head.weights.row(static_cast<Eigen::Index>(class_k)).cast<double>().dot(pooled) +
         static_cast<double>(head.bias(static_cast<Eigen::Index>(class_k)));
}

/// logit_k = t_k . gap(A) + bias_k for every class k.
inline VectorD predict_logits(const ClassifierHead& head, const ActivationTensor& a) {
  require(a.c == head.channels(), ErrorCode::ShapeMismatch,
          "tensor has " + std::to_string(a.c) + " channels, head expects " + std::to_string(head.channels()));
  const VectorD pooled = global_average_pool(a);
  return head.weights.cast<double>() * pooled + head.bias.cast<double>();
}

/// Finite-difference sensitivity of the class-k logit along `cav`.
inline double directional_derivative(const ClassifierHead& head, const VectorD& pooled, const VectorD& cav,
                                     std::size_t class_k, double epsilon) {
  require(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  require(cav.size() == pooled.size(), ErrorCode::ShapeMismatch, "cav length differs from pooled length");
  const VectorD shifted = pooled + epsilon * cav;
  return (head_logit(head, shifted, class_k) - head_logit(head, pooled, class_k)) / epsilon;
}

struct ConceptWeights {
  std::vector<double> raw;         // mean directional derivative per concept
  std::vector<double> normalized;  // raw min-max scaled to [0,1] for reporting
  std::size_t target_class = 0;
};

/// Min-max scale to [0,1]; a constant vector maps to all zeros.
inline std::vector<double> min_max_scale(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

inline ConceptWeights concept_weights(const ClassifierHead& head, std::span<const ActivationTensor> activations,
                                      const MatrixD& cav_matrix, std::size_t class_k, double epsilon = 1e-4) {
  require(!activations.empty(), ErrorCode::EmptyInput, "no activations to average over");
  require(static_cast<std::size_t>(cav_matrix.cols()) == head.channels(), ErrorCode::ShapeMismatch,
          "CAV width differs from head width");
  ConceptWeights w;
  w.target_class = class_k;
  w.raw.assign(static_cast<std::size_t>(cav_matrix.rows()), 0.0);
  for (const auto& a : activations) {
    const VectorD pooled = global_average_pool(a);
    for (Eigen::Index i = 0; i < cav_matrix.rows(); ++i)
      w.raw[static_cast<std::size_t>(i)] +=
          directional_derivative(head, pooled, cav_matrix.row(i).transpose(), class_k, epsilon);
  }
  for (double& v : w.raw) v /= static_cast<double>(activations.size());
  w.normalized = min_max_scale(w.raw);
  return w;
}

inline double contribution(double similarity, double zeta_i) { return similarity * zeta_i; }

struct ConceptExplanation {
  std::size_t index = 0;
  double weight = 0.0;      // normalized zeta
  double weight_raw = 0.0;  // raw zeta
  double similarity = 0.0;
  double contribution = 0.0;
  std::vector<std::size_t> prototypes;
  std::vector<std::string> prototype_ids;
  std::vector<double> prototype_similarity;
  std::string heatmap_path;
};

struct ExplanationReport {
  std::string model_name;
  std::string layer_name;
  std::size_t target_class = 0;
  std::string class_name;
  std::string reducer;
  std::vector<ConceptExplanation> concepts;
  double total_contribution = 0.0;
  std::vector<std::size_t> contrasting;
  std::optional<FaithReport> faith;
};

inline double total_contribution(const ExplanationReport& report) {
  double sum = 0.0;
  for (const auto& c : report.concepts) sum += c.contribution;
  return sum;
}

/// Concepts whose standardized weight |(zeta_i - mean) / std| >= delta (population std).
inline std::vector<std::size_t> contrasting_concepts(std::span<const double> zeta, double delta = 0.5) {
  require(zeta.size() >= 2, ErrorCode::InvalidArgument, "need at least two concepts");
  double mean = 0.0, scale = 0.0;
  for (double z : zeta) {
    mean += z;
    scale = std::max(scale, std::abs(z));
  }
  mean /= static_cast<double>(zeta.size());
  double var = 0.0;
  for (double z : zeta) var += (z - mean) * (z - mean);
  const double sd = std::sqrt(var / static_cast<double>(zeta.size()));
  require(sd > 1e-12 * scale && sd > 0.0, ErrorCode::ZeroVariance, "all concept weights are equal");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < zeta.size(); ++i)
    if (std::abs((zeta[i] - mean) / sd) >= delta) out.push_back(i);
  return out;
}

}  // namespace trance
