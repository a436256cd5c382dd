#pragma once

// Deterministic synthetic activation archives: each spatial position carries
// softplus(z * W) + noise, where z is a sparse non-negative code of rank `rank`
// (entries gain * U(0,1), gain drawn per image) and W is a class-specific
// Gaussian mixing matrix. A large mixing scale pushes softplus into its
// curved regime, so the activations lie on a non-linear manifold.
// Used by the tests, the acceptance suite and the `synth` subcommand.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "trance/archive.hpp"

namespace trance {

struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::size_t images_per_class = 80;
  std::size_t h = 5;
  std::size_t w = 5;
  std::size_t c = 32;
  std::size_t rank = 4;
  double noise = 0.01;       // std-dev of additive Gaussian noise
  double mixing_scale = 6.0; // std-dev of the mixing matrix entries
  double sparsity = 0.3;     // probability that a code entry is zero
  std::uint64_t seed = 0;
  std::string model_name = "synthetic";
  std::string layer_name = "layer4";
};

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

inline ActivationArchive make_synthetic_archive(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  ActivationArchive archive;
  archive.model_name = spec.model_name;
  archive.layer_name = spec.layer_name;
  archive.metadata = {{"generator", "synthetic"},
                      {"seed", spec.seed},
                      {"noise", spec.noise},
                      {"rank", spec.rank},
                      {"mixing_scale", spec.mixing_scale}};

  const auto k = static_cast<Eigen::Index>(spec.num_classes);
  const auto c = static_cast<Eigen::Index>(spec.c);
  archive.head.weights.resize(k, c);
  archive.head.bias = VectorF::Zero(k);
  for (Eigen::Index i = 0; i < archive.head.weights.size(); ++i)
    archive.head.weights.data()[i] = static_cast<float>(2.0 * uniform(rng) / static_cast<double>(spec.c));

  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    archive.head.class_names.push_back("class_" + std::to_string(cls));
    MatrixD mixing(static_cast<Eigen::Index>(spec.rank), c);
    for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = spec.mixing_scale * normal(rng);

    ClassEntry entry;
    entry.class_id = static_cast<std::int64_t>(cls);
    entry.class_name = archive.head.class_names.back();
    for (std::size_t img = 0; img < spec.images_per_class; ++img) {
      VectorD gain(static_cast<Eigen::Index>(spec.rank));
      for (Eigen::Index r = 0; r < gain.size(); ++r) gain(r) = 0.2 + 1.3 * uniform(rng);
      ActivationTensor t(spec.h, spec.w, spec.c);
      for (std::size_t p = 0; p < spec.h * spec.w; ++p) {
        VectorD code(static_cast<Eigen::Index>(spec.rank));
        for (Eigen::Index r = 0; r < code.size(); ++r)
          code(r) = uniform(rng) < spec.sparsity ? 0.0 : gain(r) * uniform(rng);
        const VectorD pre = mixing.transpose() * code;
        for (Eigen::Index j = 0; j < c; ++j)
          t.data[p * spec.c + static_cast<std::size_t>(j)] =
              static_cast<float>(softplus(pre(j)) + spec.noise * normal(rng));
      }
      entry.tensors.push_back(std::move(t));
      entry.image_ids.push_back(entry.class_name + "/img_" + std::to_string(img));
    }
    archive.classes.push_back(std::move(entry));
  }
  return archive;
}

}  // namespace trance
