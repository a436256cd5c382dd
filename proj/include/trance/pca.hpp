#pragma once

#include <string>

#include <Eigen/Eigenvalues>

#include "trance/error.hpp"
#include "trance/linalg.hpp"

namespace trance {

struct PcaModel {
  MatrixD components;   // c x c', orthonormal columns, descending variance
  VectorD mean;         // c
  MatrixD projections;  // rows x c'
  VectorD explained_variance;  // eigenvalues of the kept components
  double explained_variance_ratio = 0.0;
  bool rank_deficient = false;
  std::string warning;

  MatrixD project(const MatrixD& x) const {
    require(x.cols() == mean.size(), ErrorCode::ShapeMismatch, "column count differs from PCA mean");
    return (x.rowwise() - mean.transpose()) * components;
  }

  MatrixD reconstruct(const MatrixD& proj) const {
    require(proj.cols() == components.cols(), ErrorCode::ShapeMismatch, "projection width differs from c'");
    MatrixD out = proj * components.transpose();
    out.rowwise() += mean.transpose();
    return out;
  }
};

/// Top-c' principal axes from the eigendecomposition of the sample covariance.
inline PcaModel pca_fit(const MatrixD& xn, std::size_t c_prime) {
  const auto k = static_cast<Eigen::Index>(c_prime);
  require(c_prime >= 1 && k <= xn.cols(), ErrorCode::InvalidArgument, "need 1 <= c' <= c");
  require(xn.rows() >= k, ErrorCode::InvalidArgument,
          "PCA needs at least c' rows (" + std::to_string(xn.rows()) + " < " + std::to_string(k) + ")");

  PcaModel m;
  m.mean = xn.colwise().mean().transpose();
  const MatrixD centered = xn.rowwise() - m.mean.transpose();
  const double denom = xn.rows() > 1 ? static_cast<double>(xn.rows() - 1) : 1.0;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorCode::InvalidArgument, "covariance eigendecomposition failed");

  const auto c = xn.cols();
  m.components.resize(c, k);
  m.explained_variance.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    // Eigen sorts ascending.
    Eigen::VectorXd v = eig.eigenvectors().col(c - 1 - i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.components.col(i) = v;
    m.explained_variance(i) = std::max(0.0, eig.eigenvalues()(c - 1 - i));
  }
  const double total = eig.eigenvalues().cwiseMax(0.0).sum();
  m.explained_variance_ratio = total > 0 ? m.explained_variance.sum() / total : 0.0;
  const double top = m.explained_variance(0);
  if (top <= 0.0 || m.explained_variance(k - 1) <= 1e-12 * top) {
    m.rank_deficient = true;
    m.warning = "RankDeficient: data spans fewer than " + std::to_string(k) + " directions";
  }
  m.projections = centered * m.components;
  return m;
}

}  // namespace trance
