#pragma once

// End-to-end explanation of one class: fit or load a reducer, discover
// concepts, render heatmaps, pick prototypes, attribute, and score faith.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "trance/archive.hpp"
#include "trance/attribution.hpp"
#include "trance/error.hpp"
#include "trance/faithfulness.hpp"
#include "trance/heatmap.hpp"
#include "trance/image_io.hpp"
#include "trance/parallel.hpp"
#include "trance/prototypes.hpp"
#include "trance/reducer.hpp"
#include "trance/spectral.hpp"
#include "trance/tensor_io.hpp"
#include "trance/vae.hpp"

namespace trance {

enum class ContributionMode {
  Similarity,  // similarity * normalized zeta
  Weight,      // raw zeta * mean concept presence, a linearized logit share
};

inline std::string_view to_string(ContributionMode m) {
  return m == ContributionMode::Similarity ? "similarity" : "weight";
}

inline ContributionMode parse_contribution_mode(std::string_view s) {
  if (s == "similarity") return ContributionMode::Similarity;
  if (s == "weight") return ContributionMode::Weight;
  fail(ErrorCode::InvalidArgument, "unknown contribution mode '" + std::string(s) + "'");
}

inline constexpr std::string_view kLayerPlaceholder = "{layer}";

struct PipelineConfig {
  std::string archive_path;  // may contain "{layer}", filled from `layer`
  std::string layer;
  std::int64_t target_class = 0;
  std::size_t c_prime = 32;
  ReducerKind reducer = ReducerKind::Vae;
  ReducerConfig reducer_cfg{};
  WelchConfig welch{};
  int bessel_order = 0;
  double scale_band = kDefaultScaleBand;
  std::size_t m_star = 5;
  double alpha = kDefaultOverlayAlpha;
  std::size_t heatmap_size = 224;
  double epsilon = 1e-4;
  double delta = 0.5;
  ContributionMode contribution_mode = ContributionMode::Similarity;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> checkpoint;  // load this VAE instead of training
  std::optional<std::filesystem::path> cache_dir;   // reuse fitted VAEs across runs
  bool render = true;                               // write report, heatmaps and faith.csv
  bool evaluate_faith = true;
  std::uint64_t seed = 0;

  void check() const {
    require(!archive_path.empty(), ErrorCode::InvalidArgument, "archive path is empty");
    require(c_prime >= 1, ErrorCode::InvalidArgument, "c_prime must be >= 1");
    require(m_star >= 1, ErrorCode::BadM, "m_star must be >= 1");
    require(heatmap_size >= 1, ErrorCode::InvalidArgument, "heatmap_size must be >= 1");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
    require(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
    reducer_cfg.train.check();
    welch.check();
  }
};

namespace detail {

/// Re-raises a component error with the pipeline step prepended.
template <class Fn>
auto step(std::string_view name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.detail());
  }
}

inline std::string sanitize(std::string_view s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace detail

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::IoFailure, "SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

/// Substitutes `layer` for "{layer}"; paths without the placeholder pass through.
inline std::filesystem::path resolve_archive_path(const std::string& pattern, const std::string& layer) {
  const auto pos = pattern.find(kLayerPlaceholder);
  if (pos == std::string::npos) return pattern;
  require(!layer.empty(), ErrorCode::InvalidArgument, "archive path has a {layer} placeholder but no layer was given");
  std::string out = pattern;
  out.replace(pos, kLayerPlaceholder.size(), layer);
  return out;
}

/// Reads the archive for cfg.layer. A requested layer that is not the one the
/// archive holds, or whose file does not exist, is LayerMissing.
inline ActivationArchive load_layer_archive(const PipelineConfig& cfg) {
  const auto path = resolve_archive_path(cfg.archive_path, cfg.layer);
  if (!cfg.layer.empty() && !std::filesystem::exists(path))
    fail(ErrorCode::LayerMissing, "no archive for layer '" + cfg.layer + "' at " + path.string());
  auto archive = read_archive(path);
  if (!cfg.layer.empty() && archive.layer_name != cfg.layer)
    fail(ErrorCode::LayerMissing,
         "archive " + path.string() + " holds layer '" + archive.layer_name + "', not '" + cfg.layer + "'");
  return archive;
}

/// Everything the later steps need about the target class.
struct ClassData {
  ActivationArchive archive;
  std::size_t entry_index = 0;
  MatrixF xn;
  NormStats stats;
  std::size_t h = 0;
  std::size_t w = 0;
  std::filesystem::path archive_file;

  const ClassEntry& entry() const { return archive.classes[entry_index]; }
  std::size_t images() const { return entry().tensors.size(); }
};

inline ClassData load_class(const PipelineConfig& cfg) {
  ClassData d;
  d.archive_file = resolve_archive_path(cfg.archive_path, cfg.layer);
  d.archive = detail::step("read archive", [&] { return load_layer_archive(cfg); });
  const auto& entry = find_class(d.archive, cfg.target_class);
  d.entry_index = static_cast<std::size_t>(&entry - d.archive.classes.data());
  require(!entry.tensors.empty(), ErrorCode::EmptyInput, "class has no tensors");
  d.h = entry.tensors.front().h;
  d.w = entry.tensors.front().w;
  auto [xn, stats] = detail::step("normalize", [&] { return normalize(stack_rows(entry.tensors)); });
  d.xn = std::move(xn);
  d.stats = std::move(stats);
  return d;
}

inline std::filesystem::path checkpoint_cache_path(const PipelineConfig& cfg, const ClassData& d) {
  nlohmann::json key{{"archive", file_sha256(d.archive_file)},
                     {"class", cfg.target_class},
                     {"c_prime", cfg.c_prime},
                     {"seed", cfg.seed},
                     {"train", to_json(cfg.reducer_cfg.train)}};
  const std::string digest = sha256_hex(key.dump());
  return *cfg.cache_dir / ("vae_" + digest.substr(0, 24) + ".tvm");
}

/// Loads, reuses or fits the reducer for the class.
inline std::unique_ptr<Reducer> obtain_reducer(const PipelineConfig& cfg, const ClassData& d) {
  const auto c = static_cast<std::size_t>(d.xn.cols());
  require(cfg.c_prime < c, ErrorCode::InvalidArgument,
          "c_prime " + std::to_string(cfg.c_prime) + " must be below the channel count " + std::to_string(c));
  auto check_layout = [&](const VaeModel& m) {
    require(m.layout().input == c && m.layout().latent == cfg.c_prime, ErrorCode::ShapeMismatch,
            "checkpoint layout " + std::to_string(m.layout().input) + "->" + std::to_string(m.layout().latent) +
                " does not match " + std::to_string(c) + "->" + std::to_string(cfg.c_prime));
  };
  if (cfg.reducer == ReducerKind::Vae && cfg.checkpoint) {
    auto model = load_checkpoint(*cfg.checkpoint);
    check_layout(model);
    return std::make_unique<VaeReducer>(std::move(model));
  }
  ReducerConfig rc = cfg.reducer_cfg;
  rc.seed = cfg.seed;
  if (cfg.reducer == ReducerKind::Vae && cfg.cache_dir) {
    const auto path = checkpoint_cache_path(cfg, d);
    if (std::filesystem::exists(path)) {
      auto model = load_checkpoint(path);
      check_layout(model);
      return std::make_unique<VaeReducer>(std::move(model));
    }
    auto fitted = fit_reducer(cfg.reducer, d.xn, cfg.c_prime, rc);
    std::filesystem::create_directories(*cfg.cache_dir);
    save_checkpoint(static_cast<const VaeReducer&>(*fitted).model(), path);
    return fitted;
  }
  return fit_reducer(cfg.reducer, d.xn, cfg.c_prime, rc);
}

/// Encoder directions mapped back to raw activation units: the chain rule
/// through min-max normalization divides column j by its range.
inline MatrixD concept_activation_vectors(const Reducer& reducer, const MatrixF& xn, const NormStats& stats) {
  MatrixD cav = reducer.concept_directions(xn);
  for (Eigen::Index j = 0; j < cav.cols(); ++j) {
    const double range = static_cast<double>(stats.max[static_cast<std::size_t>(j)]) - static_cast<double>(stats.min[static_cast<std::size_t>(j)]);
    cav.col(j) *= range > 0.0 ? 1.0 / range : 0.0;
  }
  return cav;
}

/// Spatial map of concept i for image `img` (rows of z are positions).
inline ConceptHeatmap concept_map(const MatrixF& z, std::size_t img, std::size_t concept_idx, std::size_t h,
                                  std::size_t w) {
  ConceptHeatmap hm(h, w, concept_idx);
  const auto base = static_cast<Eigen::Index>(img * h * w);
  for (std::size_t p = 0; p < h * w; ++p)
    hm.values[p] = z(base + static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(concept_idx));
  return hm;
}

/// Per-image spatial mean of the codes (images x c').
inline MatrixD pooled_latents(const MatrixF& z, std::size_t images, std::size_t positions) {
  MatrixD out(static_cast<Eigen::Index>(images), z.cols());
  for (std::size_t i = 0; i < images; ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        z.middleRows(static_cast<Eigen::Index>(i * positions), static_cast<Eigen::Index>(positions))
            .cast<double>()
            .colwise()
            .mean();
  return out;
}

/// Enhanced concept map, upsampled and laid over a neutral grey base.
inline RgbaImage render_concept(const ConceptHeatmap& map, const PipelineConfig& cfg) {
  const auto enhanced = enhance_heatmap(map, cfg.bessel_order, cfg.scale_band);
  const auto big = resize_bilinear(enhanced, cfg.heatmap_size, cfg.heatmap_size);
  const RgbaImage base(cfg.heatmap_size, cfg.heatmap_size, {128, 128, 128, 255});
  return colorize_overlay(base, big, cfg.alpha);
}

inline std::string class_directory(const std::string& class_name, std::int64_t class_id) {
  return class_name.empty() ? "class_" + std::to_string(class_id) : detail::sanitize(class_name);
}

inline nlohmann::json to_json(const FaithReport& f) {
  return {{"fidelity", f.fidelity},   {"fidelity_raw", f.fidelity_raw}, {"coherence", f.coherence},
          {"faith", f.faith},         {"half_gap", f.half_gap},         {"n_samples", f.n_samples},
          {"gamma_sq_bins", f.gamma_sq_bins}};
}

inline nlohmann::json to_json(const ExplanationReport& r) {
  nlohmann::json concepts = nlohmann::json::array();
  for (const auto& c : r.concepts)
    concepts.push_back({{"index", c.index},
                        {"weight", c.weight},
                        {"weight_raw", c.weight_raw},
                        {"similarity", c.similarity},
                        {"contribution", c.contribution},
                        {"prototypes", c.prototypes},
                        {"prototype_ids", c.prototype_ids},
                        {"prototype_similarity", c.prototype_similarity},
                        {"heatmap", c.heatmap_path}});
  nlohmann::json j{{"model", r.model_name},
                   {"layer", r.layer_name},
                   {"class", r.target_class},
                   {"class_name", r.class_name},
                   {"reducer", r.reducer},
                   {"concepts", concepts},
                   {"total_contribution", r.total_contribution},
                   {"contrasting", r.contrasting}};
  if (r.faith) {
    auto f = to_json(*r.faith);
    f["class"] = r.target_class;
    f["reducer"] = r.reducer;
    j["faith"] = f;
  } else {
    j["faith"] = nullptr;
  }
  return j;
}

inline std::string faith_csv(const ExplanationReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "class,reducer,fidelity,fidelity_raw,coherence,faith,half_gap,n_samples\n";
  if (r.faith)
    os << r.target_class << ',' << r.reducer << ',' << r.faith->fidelity << ',' << r.faith->fidelity_raw << ','
       << r.faith->coherence << ',' << r.faith->faith << ',' << r.faith->half_gap << ',' << r.faith->n_samples
       << '\n';
  return os.str();
}

/// One row per selected prototype, in selection order within each concept.
inline std::string prototypes_csv(const ExplanationReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "concept,rank,image_index,image_id,similarity\n";
  for (const auto& c : r.concepts)
    for (std::size_t k = 0; k < c.prototypes.size(); ++k)
      os << c.index << ',' << k << ',' << c.prototypes[k] << ',' << c.prototype_ids[k] << ','
         << c.prototype_similarity[k] << '\n';
  return os.str();
}

inline ExplanationReport run_explain(const PipelineConfig& cfg) {
  cfg.check();
  const ClassData d = load_class(cfg);
  const auto& entry = d.entry();
  const auto reducer = detail::step("fit reducer", [&] { return obtain_reducer(cfg, d); });
  const MatrixF z = detail::step("encode", [&] { return reducer->encode(d.xn); });
  const std::size_t n_img = d.images();
  const std::size_t positions = d.h * d.w;
  const std::size_t cp = reducer->latent_dim();
  require(cfg.m_star <= n_img, ErrorCode::BadM,
          "m_star " + std::to_string(cfg.m_star) + " exceeds the " + std::to_string(n_img) + " class images");

  ExplanationReport report;
  report.model_name = d.archive.model_name;
  report.layer_name = d.archive.layer_name;
  report.target_class = static_cast<std::size_t>(cfg.target_class);
  report.class_name = entry.class_name;
  report.reducer = std::string(to_string(reducer->kind()));
  report.concepts.resize(cp);

  const MatrixD pooled = pooled_latents(z, n_img, positions);
  const auto weights = detail::step("concept weights", [&] {
    const MatrixD cav = concept_activation_vectors(*reducer, d.xn, d.stats);
    return concept_weights(d.archive.head, entry.tensors, cav, static_cast<std::size_t>(cfg.target_class),
                           cfg.epsilon);
  });

  // A zero pooled code has no direction; it counts as dissimilar to every concept.
  auto similarity = [&](std::size_t img, std::size_t concept_idx) {
    const VectorD p = pooled.row(static_cast<Eigen::Index>(img)).transpose();
    return p.norm() > 0.0 ? prototype_similarity(p, concept_idx) : 0.0;
  };

  const auto out_dir = cfg.out_dir / class_directory(entry.class_name, entry.class_id);
  if (cfg.render) std::filesystem::create_directories(out_dir);

  detail::step("concepts", [&] {
    parallel_for(cp, [&](std::size_t i) {
      MatrixD maps(static_cast<Eigen::Index>(n_img), static_cast<Eigen::Index>(positions));
      for (std::size_t img = 0; img < n_img; ++img)
        maps.row(static_cast<Eigen::Index>(img)) =
            z.block(static_cast<Eigen::Index>(img * positions), static_cast<Eigen::Index>(i),
                    static_cast<Eigen::Index>(positions), 1)
                .cast<double>()
                .transpose();
      const auto protos = select_prototypes(rbf_kernel_matrix(maps), cfg.m_star);

      auto& ce = report.concepts[i];
      ce.index = i;
      ce.weight = weights.normalized[i];
      ce.weight_raw = weights.raw[i];
      ce.prototypes = protos.indices;
      double sum = 0.0;
      for (std::size_t img : protos.indices) {
        ce.prototype_ids.push_back(entry.image_ids[img]);
        ce.prototype_similarity.push_back(similarity(img, i));
        sum += ce.prototype_similarity.back();
      }
      ce.similarity = sum / static_cast<double>(protos.indices.size());
      if (cfg.contribution_mode == ContributionMode::Similarity) {
        ce.contribution = contribution(ce.similarity, ce.weight);
      } else {
        ce.contribution = ce.weight_raw * pooled.col(static_cast<Eigen::Index>(i)).mean();
      }
      if (cfg.render) {
        ce.heatmap_path = "concept_" + std::to_string(i) + ".png";
        write_image(render_concept(concept_map(z, protos.indices.front(), i, d.h, d.w), cfg), out_dir / ce.heatmap_path);
      }
    });
  });
  report.total_contribution = total_contribution(report);

  if (cp >= 2) {
    try {
      report.contrasting = contrasting_concepts(weights.normalized, cfg.delta);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVariance) throw;  // equal weights: nothing stands out
    }
  }

  if (cfg.evaluate_faith)
    report.faith = detail::step("faith", [&] {
      return evaluate_explainer(d.archive, *reducer, cfg.target_class, cfg.welch);
    });

  if (cfg.render) {
    detail::write_text(out_dir / "report.json", to_json(report).dump(2) + "\n");
    detail::write_text(out_dir / "faith.csv", faith_csv(report));
    detail::write_text(out_dir / "prototypes.csv", prototypes_csv(report));
  }
  return report;
}

/// Faith of the configured reducer on the target class, without rendering.
inline FaithReport explain_faith(const PipelineConfig& cfg) {
  cfg.check();
  const ClassData d = load_class(cfg);
  const auto reducer = detail::step("fit reducer", [&] { return obtain_reducer(cfg, d); });
  return detail::step("faith", [&] { return evaluate_explainer(d.archive, *reducer, cfg.target_class, cfg.welch); });
}

struct SweepGrid {
  std::vector<std::string> layers;
  std::vector<std::size_t> c_primes;
  std::vector<std::vector<FaithReport>> cells;  // [layer][c_prime]

  double faith(std::size_t l, std::size_t c) const { return cells[l][c].faith; }
};

inline std::string sweep_csv(const SweepGrid& g) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,c_prime,fidelity,coherence,faith\n";
  for (std::size_t l = 0; l < g.layers.size(); ++l)
    for (std::size_t c = 0; c < g.c_primes.size(); ++c) {
      const auto& f = g.cells[l][c];
      os << g.layers[l] << ',' << g.c_primes[c] << ',' << f.fidelity << ',' << f.coherence << ',' << f.faith << '\n';
    }
  return os.str();
}

/// One faith score per (layer, c') cell; writes out_dir/sweep.csv when rendering.
inline SweepGrid run_layer_sweep(const PipelineConfig& cfg, const std::vector<std::string>& layers,
                                 const std::vector<std::size_t>& c_primes) {
  require(!layers.empty() && !c_primes.empty(), ErrorCode::InvalidArgument, "sweep needs layers and c' values");
  SweepGrid g{layers, c_primes, std::vector<std::vector<FaithReport>>(layers.size(),
                                                                     std::vector<FaithReport>(c_primes.size()))};
  // Surface a missing layer before spending time on training.
  for (const auto& layer : layers) {
    const auto path = resolve_archive_path(cfg.archive_path, layer);
    if (!std::filesystem::exists(path))
      fail(ErrorCode::LayerMissing, "no archive for layer '" + layer + "' at " + path.string());
  }
  parallel_for(layers.size() * c_primes.size(), [&](std::size_t task) {
    PipelineConfig cell = cfg;
    cell.layer = layers[task / c_primes.size()];
    cell.c_prime = c_primes[task % c_primes.size()];
    g.cells[task / c_primes.size()][task % c_primes.size()] = explain_faith(cell);
  });
  if (cfg.render) {
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text(cfg.out_dir / "sweep.csv", sweep_csv(g));
  }
  return g;
}

}  // namespace trance
