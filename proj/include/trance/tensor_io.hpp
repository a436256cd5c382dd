#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trance/error.hpp"
#include "trance/linalg.hpp"

namespace trance {

/// A single (h, w, c) activation map stored channel-last, row-major.
struct ActivationTensor {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::vector<float> data;

  ActivationTensor() = default;
  ActivationTensor(std::size_t h_, std::size_t w_, std::size_t c_)
      : h(h_), w(w_), c(c_), data(h_ * w_ * c_, 0.0f) {}
  ActivationTensor(std::size_t h_, std::size_t w_, std::size_t c_, std::vector<float> values)
      : h(h_), w(w_), c(c_), data(std::move(values)) {
    require(data.size() == h * w * c, ErrorCode::ShapeMismatch,
            "tensor data length does not match h*w*c");
  }

  float& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * w + j) * c + k]; }
  float operator()(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * w + j) * c + k]; }

  bool same_shape(const ActivationTensor& o) const { return h == o.h && w == o.w && c == o.c; }
  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;
};

/// Per-column min/max recorded by normalize().
struct NormStats {
  std::vector<float> min;
  std::vector<float> max;

  std::size_t size() const { return min.size(); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

// Row r of the result is the channel vector at spatial position (r / w, r % w).
inline MatrixF flatten_activation(const ActivationTensor& a) {
  MatrixF g(static_cast<Eigen::Index>(a.h * a.w), static_cast<Eigen::Index>(a.c));
  std::copy(a.data.begin(), a.data.end(), g.data());
  return g;
}

inline ActivationTensor unflatten(const MatrixF& g, std::size_t h, std::size_t w) {
  require(static_cast<std::size_t>(g.rows()) == h * w, ErrorCode::ShapeMismatch,
          "row count " + std::to_string(g.rows()) + " != h*w = " + std::to_string(h * w));
  const auto k = static_cast<std::size_t>(g.cols());
  return ActivationTensor(h, w, k, std::vector<float>(g.data(), g.data() + g.size()));
}

/// Stack the flattened tensors of a list vertically, in order.
inline MatrixF stack_rows(std::span<const ActivationTensor> tensors) {
  require(!tensors.empty(), ErrorCode::EmptyInput, "no tensors to stack");
  const auto& first = tensors.front();
  const auto per = static_cast<Eigen::Index>(first.h * first.w);
  MatrixF out(per * static_cast<Eigen::Index>(tensors.size()), static_cast<Eigen::Index>(first.c));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    require(tensors[t].same_shape(first), ErrorCode::ShapeInconsistent, "tensor shapes differ");
    out.middleRows(static_cast<Eigen::Index>(t) * per, per) = flatten_activation(tensors[t]);
  }
  return out;
}

/// Per-column min-max scaling to [0, 1]. Constant columns map to zero.
inline std::pair<MatrixF, NormStats> normalize(const MatrixF& g) {
  NormStats stats;
  const auto cols = static_cast<std::size_t>(g.cols());
  stats.min.resize(cols);
  stats.max.resize(cols);
  MatrixF out(g.rows(), g.cols());
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    const float lo = g.rows() ? g.col(j).minCoeff() : 0.0f;
    const float hi = g.rows() ? g.col(j).maxCoeff() : 0.0f;
    stats.min[j] = lo;
    stats.max[j] = hi;
    if (hi > lo) {
      const double range = static_cast<double>(hi) - lo;
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double v = (static_cast<double>(g(i, j)) - lo) / range;
        out(i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    } else {
      out.col(j).setZero();
    }
  }
  return {std::move(out), std::move(stats)};
}

inline MatrixF denormalize(const MatrixF& gn, const NormStats& stats) {
  require(static_cast<std::size_t>(gn.cols()) == stats.size(), ErrorCode::ShapeMismatch,
          "column count " + std::to_string(gn.cols()) + " != stats length " +
              std::to_string(stats.size()));
  MatrixF out(gn.rows(), gn.cols());
  for (Eigen::Index j = 0; j < gn.cols(); ++j) {
    const double lo = stats.min[j];
    const double range = static_cast<double>(stats.max[j]) - lo;
    for (Eigen::Index i = 0; i < gn.rows(); ++i)
      out(i, j) = static_cast<float>(static_cast<double>(gn(i, j)) * range + lo);
  }
  return out;
}

}  // namespace trance
