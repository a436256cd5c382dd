#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/QR>

#include "trance/error.hpp"
#include "trance/linalg.hpp"
#include "trance/nmf.hpp"
#include "trance/pca.hpp"
#include "trance/vae.hpp"

namespace trance {

enum class ReducerKind { Vae, Nmf, Pca };

inline std::string_view to_string(ReducerKind k) {
  switch (k) {
    case ReducerKind::Vae: return "vae";
    case ReducerKind::Nmf: return "nmf";
    case ReducerKind::Pca: return "pca";
  }
  return "?";
}

inline ReducerKind parse_reducer_kind(std::string_view s) {
  if (s == "vae") return ReducerKind::Vae;
  if (s == "nmf") return ReducerKind::Nmf;
  if (s == "pca") return ReducerKind::Pca;
  fail(ErrorCode::InvalidArgument, "unknown reducer '" + std::string(s) + "' (expected vae, nmf or pca)");
}

/// Concept codes z (rows x c') together with the spatial shape of one source map.
struct LatentEmbedding {
  MatrixF z;
  std::size_t h = 0;
  std::size_t w = 0;

  bool rectified() const { return z.size() == 0 || z.minCoeff() >= 0.0f; }
};

struct ReducerConfig {
  TrainConfig train{};
  int nmf_iters = 500;
  int nmf_project_iters = 300;
  std::uint64_t seed = 0;
};

/// Common surface of a fitted decomposition: encode to c' codes, decode back.
class Reducer {
 public:
  virtual ~Reducer() = default;
  virtual ReducerKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual MatrixF encode(const MatrixF& xn) const = 0;
  virtual MatrixF decode(const MatrixF& z) const = 0;
  /// Linearized encoder d z / d xn (c' x c) around the column mean of `xn`;
  /// row i is the concept activation vector of concept i in normalized space.
  virtual MatrixD concept_directions(const MatrixF& xn) const = 0;
};

class VaeReducer final : public Reducer {
 public:
  explicit VaeReducer(VaeModel model, std::optional<TrainHistory> history = std::nullopt)
      : model_(std::move(model)), history_(std::move(history)) {}

  ReducerKind kind() const override { return ReducerKind::Vae; }
  std::size_t input_dim() const override { return model_.layout().input; }
  std::size_t latent_dim() const override { return model_.layout().latent; }
  MatrixF encode(const MatrixF& xn) const override { return model_.encode(xn); }
  MatrixF decode(const MatrixF& z) const override { return model_.decode(z); }
  MatrixD concept_directions(const MatrixF& xn) const override {
    const VectorF x0 = xn.colwise().mean().transpose();
    return model_.mean_jacobian(x0).cast<double>();
  }

  const VaeModel& model() const { return model_; }
  const std::optional<TrainHistory>& history() const { return history_; }

 private:
  VaeModel model_;
  std::optional<TrainHistory> history_;
};

class NmfReducer final : public Reducer {
 public:
  NmfReducer(NmfModel model, int project_iters) : model_(std::move(model)), project_iters_(project_iters) {}

  ReducerKind kind() const override { return ReducerKind::Nmf; }
  std::size_t input_dim() const override { return static_cast<std::size_t>(model_.w.cols()); }
  std::size_t latent_dim() const override { return static_cast<std::size_t>(model_.w.rows()); }
  MatrixF encode(const MatrixF& xn) const override {
    return nmf_project(xn.cast<double>(), model_.w, project_iters_).cast<float>();
  }
  MatrixF decode(const MatrixF& z) const override {
    require(z.cols() == model_.w.rows(), ErrorCode::ShapeMismatch, "latent width differs from NMF rank");
    return (z.cast<double>() * model_.w).cast<float>();
  }
  // The multiplicative projection has no closed-form derivative; its
  // unconstrained least-squares counterpart z = x pinv(W) is used instead.
  MatrixD concept_directions(const MatrixF&) const override {
    return model_.w.transpose().completeOrthogonalDecomposition().pseudoInverse();
  }

  const NmfModel& model() const { return model_; }

 private:
  NmfModel model_;
  int project_iters_;
};

class PcaReducer final : public Reducer {
 public:
  explicit PcaReducer(PcaModel model) : model_(std::move(model)) {}

  ReducerKind kind() const override { return ReducerKind::Pca; }
  std::size_t input_dim() const override { return static_cast<std::size_t>(model_.mean.size()); }
  std::size_t latent_dim() const override { return static_cast<std::size_t>(model_.components.cols()); }
  MatrixF encode(const MatrixF& xn) const override { return model_.project(xn.cast<double>()).cast<float>(); }
  MatrixF decode(const MatrixF& z) const override { return model_.reconstruct(z.cast<double>()).cast<float>(); }
  MatrixD concept_directions(const MatrixF&) const override { return model_.components.transpose(); }

  const PcaModel& model() const { return model_; }

 private:
  PcaModel model_;
};

/// Fits the requested reducer on a normalized matrix.
inline std::unique_ptr<Reducer> fit_reducer(ReducerKind kind, const MatrixF& xn, std::size_t c_prime,
                                            const ReducerConfig& cfg) {
  switch (kind) {
    case ReducerKind::Vae: {
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      auto fit = vae_fit<float>(xn, c_prime, tc);
      return std::make_unique<VaeReducer>(std::move(fit.model), std::move(fit.history));
    }
    case ReducerKind::Nmf:
      return std::make_unique<NmfReducer>(nmf_fit(xn.cast<double>(), c_prime, cfg.nmf_iters, cfg.seed),
                                          cfg.nmf_project_iters);
    case ReducerKind::Pca:
      return std::make_unique<PcaReducer>(pca_fit(xn.cast<double>(), c_prime));
  }
  fail(ErrorCode::InvalidArgument, "unknown reducer kind");
}

}  // namespace trance
