#pragma once

// Concept heatmaps: Bessel enhancement, bilinear upsampling, colormap overlay.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trance/bessel.hpp"
#include "trance/error.hpp"

namespace trance {

// Values are kept in double so the elementwise enhancement can be checked
// against an oracle at 1e-9; they are only quantized when colorized.
struct ConceptHeatmap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> values;  // row-major h x w
  std::size_t concept_index = 0;

  ConceptHeatmap() = default;
  ConceptHeatmap(std::size_t h_, std::size_t w_, std::size_t concept_idx = 0)
      : h(h_), w(w_), values(h_ * w_, 0.0), concept_index(concept_idx) {}

  double& operator()(std::size_t y, std::size_t x) { return values[y * w + x]; }
  double operator()(std::size_t y, std::size_t x) const { return values[y * w + x]; }
};

struct RgbaImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGBA

  RgbaImage() = default;
  RgbaImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 4> fill = {0, 0, 0, 255})
      : width(w), height(h), pixels(4 * w * h) {
    for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + 4 * i);
  }

  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[4 * (y * width + x)]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const { return &pixels[4 * (y * width + x)]; }

  friend bool operator==(const RgbaImage&, const RgbaImage&) = default;
};

inline constexpr double kDefaultScaleBand = 3.0;
inline constexpr double kDefaultOverlayAlpha = 0.4;

/// Maps values affinely onto [0, band] and multiplies each by J_nu of itself.
/// A constant map lands on the band midpoint, except an all-zero map (concept
/// absent), which stays at zero.
inline ConceptHeatmap enhance_heatmap(const ConceptHeatmap& zi, int nu = 0, double scale_band = kDefaultScaleBand) {
  require(scale_band > 0.0 && scale_band <= kBesselDomain, ErrorCode::InvalidArgument,
          "scale_band must lie in (0, 50]");
  ConceptHeatmap out = zi;
  if (zi.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(zi.values.begin(), zi.values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : out.values) {
    const double flat = min == 0.0 ? 0.0 : 0.5 * scale_band;
    const double mapped = range > 0.0 ? (v - min) / range * scale_band : flat;
    v = mapped * bessel_j(nu, mapped);
  }
  return out;
}

/// Corner-aligned bilinear resampling: output corners coincide with input corners.
inline ConceptHeatmap resize_bilinear(const ConceptHeatmap& hm, std::size_t out_h, std::size_t out_w) {
  require(out_h >= 1 && out_w >= 1, ErrorCode::InvalidArgument, "resize target must be at least 1x1");
  require(hm.h >= 1 && hm.w >= 1, ErrorCode::EmptyInput, "cannot resize an empty heatmap");
  ConceptHeatmap out(out_h, out_w, hm.concept_index);
  auto source = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
    if (n_out == 1) return 0.5 * static_cast<double>(n_in - 1);
    return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = source(y, out_h, hm.h);
    const auto y0 = std::min(static_cast<std::size_t>(sy), hm.h - 1);
    const auto y1 = std::min(y0 + 1, hm.h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = source(x, out_w, hm.w);
      const auto x0 = std::min(static_cast<std::size_t>(sx), hm.w - 1);
      const auto x1 = std::min(x0 + 1, hm.w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1.0 - fx) * hm(y0, x0) + fx * hm(y0, x1);
      const double bottom = (1.0 - fx) * hm(y1, x0) + fx * hm(y1, x1);
      out(y, x) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

/// Grey below 1/3, grey->blue up to 2/3, blue->red up to 1.
inline std::array<double, 3> colormap(double t) {
  constexpr std::array<double, 3> grey{96, 96, 96};
  constexpr std::array<double, 3> blue{30, 80, 200};
  constexpr std::array<double, 3> red{220, 40, 30};
  t = std::clamp(t, 0.0, 1.0);
  if (t < 1.0 / 3.0) return grey;
  const bool upper = t >= 2.0 / 3.0;
  const auto& a = upper ? blue : grey;
  const auto& b = upper ? red : blue;
  const double u = (t - (upper ? 2.0 / 3.0 : 1.0 / 3.0)) * 3.0;
  return {a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2])};
}

inline RgbaImage colorize_overlay(const RgbaImage& base, const ConceptHeatmap& hm,
                                  double alpha = kDefaultOverlayAlpha) {
  require(hm.h == base.height && hm.w == base.width, ErrorCode::ShapeMismatch,
          "heatmap and base image dimensions differ");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  RgbaImage out = base;
  if (hm.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(hm.values.begin(), hm.values.end());
  const double range = *hi - *lo;
  auto blend = [alpha](std::uint8_t b, double c) {
    return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * b + alpha * c));
  };
  for (std::size_t y = 0; y < hm.h; ++y) {
    for (std::size_t x = 0; x < hm.w; ++x) {
      const double t = range > 0.0 ? (hm(y, x) - *lo) / range : 0.0;
      const auto color = colormap(t);
      const std::uint8_t* src = base.at(x, y);
      std::uint8_t* dst = out.at(x, y);
      for (int ch = 0; ch < 3; ++ch) dst[ch] = blend(src[ch], color[static_cast<std::size_t>(ch)]);
      dst[3] = blend(src[3], 255.0);
    }
  }
  return out;
}

}  // namespace trance
