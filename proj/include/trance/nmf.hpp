#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "trance/error.hpp"
#include "trance/linalg.hpp"

namespace trance {

/// X (n x c) ~= Z (n x k) * W (k x c), both factors non-negative.
struct NmfModel {
  MatrixD z;
  MatrixD w;
  std::vector<double> objective;  // ||X - ZW||_F after each iteration
};

namespace detail {
inline constexpr double kNmfFloor = 1e-12;

inline void nmf_update_z(const MatrixD& x, const MatrixD& w, MatrixD& z) {
  const MatrixD num = x * w.transpose();
  const MatrixD den = z * (w * w.transpose());
  z.array() *= num.array() / (den.array() + kNmfFloor);
}

inline void nmf_update_w(const MatrixD& x, const MatrixD& z, MatrixD& w) {
  const MatrixD num = z.transpose() * x;
  const MatrixD den = (z.transpose() * z) * w;
  w.array() *= num.array() / (den.array() + kNmfFloor);
}
}  // namespace detail

/// Lee-Seung multiplicative updates for the Frobenius objective.
inline NmfModel nmf_fit(const MatrixD& xn, std::size_t c_prime, int iters, std::uint64_t seed) {
  require(c_prime >= 1, ErrorCode::InvalidArgument, "c' must be >= 1");
  require(iters >= 0, ErrorCode::InvalidArgument, "iteration count must be non-negative");
  require(xn.size() == 0 || xn.minCoeff() >= 0.0, ErrorCode::NegativeInput,
          "NMF input has a negative entry");
  const auto k = static_cast<Eigen::Index>(c_prime);
  const double scale = std::sqrt(std::max(xn.size() ? xn.mean() : 0.0, detail::kNmfFloor) /
                                 static_cast<double>(k));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  NmfModel m;
  m.z.resize(xn.rows(), k);
  m.w.resize(k, xn.cols());
  for (Eigen::Index i = 0; i < m.z.size(); ++i) m.z.data()[i] = scale * dist(rng);
  for (Eigen::Index i = 0; i < m.w.size(); ++i) m.w.data()[i] = scale * dist(rng);
  m.objective.reserve(static_cast<std::size_t>(iters));
  for (int it = 0; it < iters; ++it) {
    detail::nmf_update_w(xn, m.z, m.w);
    detail::nmf_update_z(xn, m.w, m.z);
    m.objective.push_back((xn - m.z * m.w).norm());
  }
  return m;
}

/// Non-negative codes for new rows with the dictionary W held fixed.
inline MatrixD nmf_project(const MatrixD& x, const MatrixD& w, int iters) {
  require(x.cols() == w.cols(), ErrorCode::ShapeMismatch, "column count differs from NMF dictionary");
  require(x.size() == 0 || x.minCoeff() >= 0.0, ErrorCode::NegativeInput, "NMF input has a negative entry");
  const double scale = std::sqrt(std::max(x.size() ? x.mean() : 0.0, detail::kNmfFloor) /
                                 static_cast<double>(w.rows()));
  MatrixD z = MatrixD::Constant(x.rows(), w.rows(), scale);
  for (int it = 0; it < iters; ++it) detail::nmf_update_z(x, w, z);
  return z;
}

}  // namespace trance
