#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "trance/reducer.hpp"
#include "trance/synthetic.hpp"
#include "trance/tensor_io.hpp"

using namespace trance;

namespace {

MatrixD random_nonneg(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Normalized class-0 rows of the default synthetic generator (2000 rows, c = 32).
MatrixF manifold_rows(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  const auto archive = make_synthetic_archive(spec);
  return normalize(stack_rows(archive.classes[0].tensors)).first;
}

double mse(const MatrixF& a, const MatrixF& b) { return (a - b).cast<double>().squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

// Exact rank-2 non-negative data, c' = 2, 500 iterations: relative error <= 1e-3.
TEST(Nmf, ExactRankTwoRecovered) {
  std::string misses;
  for (std::uint64_t i = 0; i < 10; ++i) {
    std::mt19937_64 rng(1000 + i);
    const MatrixD x = random_nonneg(60, 2, rng) * random_nonneg(2, 10, rng);
    const auto m = nmf_fit(x, 2, 500, i);
    EXPECT_GE(m.z.minCoeff(), 0.0);
    EXPECT_GE(m.w.minCoeff(), 0.0);
    const double rel = (x - m.z * m.w).norm() / x.norm();
    if (rel > 1e-3) misses += " [" + std::to_string(i) + "] " + std::to_string(rel);
  }
  EXPECT_TRUE(misses.empty()) << "relative error above 1e-3:" << misses;
}

TEST(Nmf, ObjectiveNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const MatrixD x = random_nonneg(40, 12, rng);
    const auto m = nmf_fit(x, 3, 200, seed);
    ASSERT_EQ(m.objective.size(), 200u);
    for (std::size_t i = 1; i < m.objective.size(); ++i)
      ASSERT_LE(m.objective[i], m.objective[i - 1] + 1e-9) << "seed " << seed << " iter " << i;
  }
}

TEST(Nmf, DeterministicGivenSeed) {
  std::mt19937_64 rng(2);
  const MatrixD x = random_nonneg(30, 8, rng);
  const auto a = nmf_fit(x, 3, 50, 11);
  const auto b = nmf_fit(x, 3, 50, 11);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.w, b.w);
}

TEST(Nmf, NegativeInput) {
  MatrixD x = MatrixD::Constant(4, 3, 0.5);
  x(2, 1) = -1e-9;
  EXPECT_TRANCE_ERROR(nmf_fit(x, 2, 10, 0), ErrorCode::NegativeInput);
  EXPECT_TRANCE_ERROR(nmf_project(x, MatrixD::Ones(2, 3), 10), ErrorCode::NegativeInput);
}

TEST(Nmf, ProjectionRecoversCodes) {
  std::mt19937_64 rng(4);
  const MatrixD w = random_nonneg(3, 9, rng);
  const MatrixD z = random_nonneg(20, 3, rng);
  const MatrixD zh = nmf_project(z * w, w, 2000);
  EXPECT_LE((zh * w - z * w).norm(), 1e-3 * (z * w).norm());
}

TEST(Pca, ExactPlaneRecovered) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixD basis(2, 7), coef(100, 2);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = n(rng);
  MatrixD x = coef * basis;
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(7, 0.1, 0.7);
  const auto m = pca_fit(x, 2);
  EXPECT_LE((m.reconstruct(m.projections) - x).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((m.reconstruct(m.project(x)) - x).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(m.explained_variance_ratio, 1.0, 1e-9);
  EXPECT_FALSE(m.rank_deficient);
}

TEST(Pca, ComponentsOrthonormalAndSorted) {
  std::mt19937_64 rng(6);
  for (std::size_t k : {1, 3, 8}) {
    const MatrixD x = random_nonneg(80, 8, rng);
    const auto m = pca_fit(x, k);
    const MatrixD gram = m.components.transpose() * m.components;
    EXPECT_LE((gram - MatrixD::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-6);
    for (Eigen::Index i = 1; i < m.explained_variance.size(); ++i)
      EXPECT_GE(m.explained_variance(i - 1), m.explained_variance(i));
  }
}

// Isotropic Gaussian noise: a single axis carries about 1/c of the variance.
TEST(Pca, IsotropicExplainedVariance) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Index c = 10;
  MatrixD x(10000, c);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const auto m = pca_fit(x, 1);
  EXPECT_NEAR(m.explained_variance_ratio, 1.0 / c, 0.2 / c);
}

TEST(Pca, RankDeficiencyIsAWarning) {
  MatrixD x(6, 4);
  for (Eigen::Index i = 0; i < 6; ++i) x.row(i) << double(i), 2.0 * i, 0.5, 1.0;
  PcaModel m;
  EXPECT_NO_THROW(m = pca_fit(x, 3));
  EXPECT_TRUE(m.rank_deficient);
  EXPECT_FALSE(m.warning.empty());
}

TEST(Pca, BadLatentWidth) {
  EXPECT_TRANCE_ERROR(pca_fit(MatrixD::Ones(5, 3), 4), ErrorCode::InvalidArgument);
  EXPECT_TRANCE_ERROR(pca_fit(MatrixD::Ones(5, 3), 0), ErrorCode::InvalidArgument);
}

TEST(ReducerKind, ParseAndPrint) {
  for (auto k : {ReducerKind::Vae, ReducerKind::Nmf, ReducerKind::Pca})
    EXPECT_EQ(parse_reducer_kind(to_string(k)), k);
  EXPECT_TRANCE_ERROR(parse_reducer_kind("ica"), ErrorCode::InvalidArgument);
}

TEST(Reducer, CommonInterfaceShapes) {
  const MatrixF x = manifold_rows(1).topRows(400);
  ReducerConfig cfg;
  cfg.train.epochs_max = 5;
  cfg.nmf_iters = 50;
  cfg.nmf_project_iters = 50;
  for (auto kind : {ReducerKind::Vae, ReducerKind::Nmf, ReducerKind::Pca}) {
    const auto r = fit_reducer(kind, x, 6, cfg);
    SCOPED_TRACE(std::string(to_string(kind)));
    EXPECT_EQ(r->kind(), kind);
    EXPECT_EQ(r->input_dim(), 32u);
    EXPECT_EQ(r->latent_dim(), 6u);
    const MatrixF z = r->encode(x);
    EXPECT_EQ(z.rows(), x.rows());
    EXPECT_EQ(z.cols(), 6);
    const MatrixF xh = r->decode(z);
    EXPECT_EQ(xh.rows(), x.rows());
    EXPECT_EQ(xh.cols(), 32);
    const MatrixD dirs = r->concept_directions(x);
    EXPECT_EQ(dirs.rows(), 6);
    EXPECT_EQ(dirs.cols(), 32);
    EXPECT_TRUE(dirs.allFinite());
    if (kind != ReducerKind::Pca) {
      EXPECT_GE(z.minCoeff(), 0.0f);
    }
  }
}

TEST(Reducer, NmfDirectionsInvertTheDictionary) {
  const MatrixF x = manifold_rows(2).topRows(300);
  ReducerConfig cfg;
  cfg.nmf_iters = 100;
  const auto r = fit_reducer(ReducerKind::Nmf, x, 4, cfg);
  const auto& w = dynamic_cast<const NmfReducer&>(*r).model().w;
  // directions are the least-squares encoder: D * W^T = I
  const MatrixD prod = r->concept_directions(x) * w.transpose();
  EXPECT_LE((prod - MatrixD::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reducer, PcaDirectionsAreComponents) {
  const MatrixF x = manifold_rows(3).topRows(300);
  const auto r = fit_reducer(ReducerKind::Pca, x, 4, ReducerConfig{});
  EXPECT_EQ(r->concept_directions(x), dynamic_cast<const PcaReducer&>(*r).model().components.transpose());
}

// Softplus-of-linear manifold: the VAE reconstructs at least as well as NMF at equal c'
// on at least 8 of 10 seeds.
TEST(Reducer, VaeReconstructsNonLinearManifoldBetterThanNmf) {
  int wins = 0;
  std::string log;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatrixF x = manifold_rows(100 + seed);
    ReducerConfig cfg;
    cfg.seed = seed;
    const auto vae = fit_reducer(ReducerKind::Vae, x, 8, cfg);
    const auto nmf = fit_reducer(ReducerKind::Nmf, x, 8, cfg);
    const double ev = mse(vae->decode(vae->encode(x)), x);
    const double en = mse(nmf->decode(nmf->encode(x)), x);
    if (ev <= en) ++wins;
    log += " " + std::to_string(ev) + "/" + std::to_string(en);
  }
  EXPECT_GE(wins, 8) << "vae/nmf mse:" << log;
}
