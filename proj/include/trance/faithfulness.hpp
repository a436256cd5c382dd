#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "trance/archive.hpp"
#include "trance/attribution.hpp"
#include "trance/error.hpp"
#include "trance/faith_report.hpp"
#include "trance/parallel.hpp"
#include "trance/reducer.hpp"
#include "trance/spectral.hpp"
#include "trance/tensor_io.hpp"

namespace trance {

/// A' = unflatten(denormalize(decode(encode(Xn)), stats), h, w).
inline ActivationTensor reconstruct_activations(const Reducer& reducer, const MatrixF& xn, const NormStats& stats,
                                                std::size_t h, std::size_t w) {
  require(static_cast<std::size_t>(xn.rows()) == h * w, ErrorCode::ShapeMismatch,
          "matrix has " + std::to_string(xn.rows()) + " rows, expected h*w = " + std::to_string(h * w));
  return unflatten(denormalize(reducer.decode(reducer.encode(xn)), stats), h, w);
}

/// Relative absolute prediction error sum|f - f_hat| / sum|f|.
inline double fidelity_raw(std::span<const double> f, std::span<const double> f_hat) {
  require(f.size() == f_hat.size(), ErrorCode::ShapeMismatch, "prediction series lengths differ");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    err += std::abs(f[i] - f_hat[i]);
    ref += std::abs(f[i]);
  }
  require(ref > 0.0, ErrorCode::DegenerateReference, "reference predictions are all zero");
  return err / ref;
}

/// Agreement score 1 - fidelity_raw, clamped to [0,1].
inline double fidelity_score(std::span<const double> f, std::span<const double> f_hat) {
  return std::clamp(1.0 - fidelity_raw(f, f_hat), 0.0, 1.0);
}

inline double faith_score(double fidelity, double coherence) {
  require(fidelity >= 0.0 && fidelity <= 1.0, ErrorCode::OutOfRange, "fidelity outside [0,1]");
  require(coherence >= 0.0 && coherence <= 1.0, ErrorCode::OutOfRange, "coherence outside [0,1]");
  return (fidelity + coherence) / 2.0;
}

/// Half the distance between the two components; reported as the "+-" spread around faith.
inline double half_gap(double fidelity, double coherence) { return (coherence - fidelity) / 2.0; }

inline FaithReport make_faith_report(std::span<const double> f, std::span<const double> f_hat,
                                     const WelchConfig& cfg) {
  FaithReport r;
  r.n_samples = f.size();
  r.fidelity_raw = fidelity_raw(f, f_hat);
  r.fidelity = std::clamp(1.0 - r.fidelity_raw, 0.0, 1.0);
  try {
    auto coh = coherence_score(f, f_hat, cfg);
    r.coherence = coh.mean;
    r.gamma_sq_bins = std::move(coh.gamma_sq);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroPower) throw;
    // A flat explainer output carries no coherent signal; a flat reference is an error.
    auto self = coherence_score(f, f, cfg);
    r.coherence = 0.0;
    r.gamma_sq_bins.assign(self.gamma_sq.size(), 0.0);
  }
  r.faith = faith_score(r.fidelity, r.coherence);
  r.half_gap = half_gap(r.fidelity, r.coherence);
  return r;
}

struct PredictionPair {
  std::vector<double> original;       // f: target logits on archive tensors
  std::vector<double> reconstructed;  // f_hat: target logits on explainer reconstructions
};

inline PredictionPair prediction_series(const ActivationArchive& archive, const Reducer& reducer,
                                        std::int64_t class_k) {
  const auto& entry = find_class(archive, class_k);
  require(!entry.tensors.empty(), ErrorCode::EmptyInput, "class has no tensors");
  const auto k = static_cast<std::size_t>(class_k);
  const auto& first = entry.tensors.front();
  const auto [xn, stats] = normalize(stack_rows(entry.tensors));
  const MatrixF recon = denormalize(reducer.decode(reducer.encode(xn)), stats);
  const auto per = static_cast<Eigen::Index>(first.h * first.w);

  PredictionPair out;
  for (std::size_t i = 0; i < entry.tensors.size(); ++i) {
    out.original.push_back(predict_logits(archive.head, entry.tensors[i])(static_cast<Eigen::Index>(k)));
    const MatrixF rows = recon.middleRows(static_cast<Eigen::Index>(i) * per, per);
    const auto rebuilt = unflatten(rows, first.h, first.w);
    out.reconstructed.push_back(predict_logits(archive.head, rebuilt)(static_cast<Eigen::Index>(k)));
  }
  return out;
}

/// Fidelity/coherence/faith of an explainer on one class of an archive.
inline FaithReport evaluate_explainer(const ActivationArchive& archive, const Reducer& reducer,
                                      std::int64_t class_k, const WelchConfig& cfg = {}) {
  const auto& entry = find_class(archive, class_k);
  require(entry.tensors.size() >= 2 * cfg.segment_length, ErrorCode::SeriesTooShort,
          "class " + std::to_string(class_k) + " has " + std::to_string(entry.tensors.size()) +
              " samples, needs " + std::to_string(2 * cfg.segment_length));
  const auto series = prediction_series(archive, reducer, class_k);
  return make_faith_report(series.original, series.reconstructed, cfg);
}

struct ReducerComparison {
  ReducerKind kind = ReducerKind::Vae;
  std::vector<std::uint64_t> seeds;
  std::vector<FaithReport> per_seed;
  double fidelity = 0.0;
  double coherence = 0.0;
  double faith = 0.0;
};

/// Fits each reducer once per seed on the class and averages the faith metrics.
inline std::vector<ReducerComparison> compare_reducers(const ActivationArchive& archive, std::int64_t class_k,
                                                       std::size_t c_prime, std::span<const std::uint64_t> seeds,
                                                       std::span<const ReducerKind> kinds,
                                                       const ReducerConfig& base = {}, const WelchConfig& welch = {}) {
  require(!seeds.empty(), ErrorCode::InvalidArgument, "need at least one seed");
  require(!kinds.empty(), ErrorCode::InvalidArgument, "need at least one reducer");
  const auto& entry = find_class(archive, class_k);
  require(!entry.tensors.empty(), ErrorCode::EmptyInput, "class has no tensors");
  const MatrixF xn = normalize(stack_rows(entry.tensors)).first;

  std::vector<ReducerComparison> table(kinds.size());
  for (std::size_t r = 0; r < kinds.size(); ++r) {
    table[r].kind = kinds[r];
    table[r].seeds.assign(seeds.begin(), seeds.end());
    table[r].per_seed.resize(seeds.size());
  }
  parallel_for(kinds.size() * seeds.size(), [&](std::size_t task) {
    const std::size_t r = task / seeds.size();
    const std::size_t s = task % seeds.size();
    ReducerConfig cfg = base;
    cfg.seed = seeds[s];
    const auto reducer = fit_reducer(kinds[r], xn, c_prime, cfg);
    table[r].per_seed[s] = evaluate_explainer(archive, *reducer, class_k, welch);
  });
  for (auto& row : table) {
    for (const auto& rep : row.per_seed) {
      row.fidelity += rep.fidelity;
      row.coherence += rep.coherence;
      row.faith += rep.faith;
    }
    const double n = static_cast<double>(row.per_seed.size());
    row.fidelity /= n;
    row.coherence /= n;
    row.faith /= n;
  }
  return table;
}

}  // namespace trance
