#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bessel_oracle.hpp"
#include "test_support.hpp"
#include "trance/heatmap.hpp"
#include "trance/image_io.hpp"

using namespace trance;
using trance::testing::TempDir;

namespace {

ConceptHeatmap random_heatmap(std::size_t h, std::size_t w, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  ConceptHeatmap hm(h, w);
  for (auto& v : hm.values) v = u(rng);
  return hm;
}

RgbaImage random_image(std::size_t w, std::size_t h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  RgbaImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

}  // namespace

TEST(Enhance, ConstantMapsToBandMidpoint) {
  ConceptHeatmap hm(3, 4);
  std::fill(hm.values.begin(), hm.values.end(), 7.5);
  for (int nu : {0, 1, 2}) {
    const auto out = enhance_heatmap(hm, nu);
    const double m = 1.5;
    for (double v : out.values) EXPECT_DOUBLE_EQ(v, m * bessel_j(nu, m));
  }
}

TEST(Enhance, AllZeroStaysZero) {
  const auto out = enhance_heatmap(ConceptHeatmap(5, 5), 0);
  for (double v : out.values) EXPECT_EQ(v, 0.0);
}

TEST(Enhance, MatchesElementwiseOracle) {
  const auto hm = random_heatmap(7, 7, 1);
  const auto out = enhance_heatmap(hm, 0);
  const auto [lo, hi] = std::minmax_element(hm.values.begin(), hm.values.end());
  for (std::size_t p = 0; p < hm.values.size(); ++p) {
    const double mapped = (hm.values[p] - *lo) / (*hi - *lo) * 3.0;
    EXPECT_NEAR(out.values[p], mapped * trance::testing::bessel_oracle(0, mapped), 1e-9);
  }
  EXPECT_EQ(out.h, 7u);
  EXPECT_EQ(out.concept_index, hm.concept_index);
}

TEST(Enhance, ElementwisePermutationEquivariant) {
  const auto hm = random_heatmap(6, 5, 2);
  std::vector<std::size_t> perm(hm.values.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  ConceptHeatmap shuffled = hm;
  for (std::size_t p = 0; p < perm.size(); ++p) shuffled.values[p] = hm.values[perm[p]];
  for (int nu : {0, 2}) {
    const auto a = enhance_heatmap(hm, nu);
    const auto b = enhance_heatmap(shuffled, nu);
    for (std::size_t p = 0; p < perm.size(); ++p) EXPECT_EQ(b.values[p], a.values[perm[p]]);
  }
}

TEST(Enhance, FiniteAndBandChecked) {
  const auto hm = random_heatmap(9, 9, 4);
  for (double band : {0.5, 3.0, 20.0, 50.0})
    for (double v : enhance_heatmap(hm, 1, band).values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRANCE_ERROR(enhance_heatmap(hm, 0, 0.0), ErrorCode::InvalidArgument);
  EXPECT_TRANCE_ERROR(enhance_heatmap(hm, 0, 51.0), ErrorCode::InvalidArgument);
}

TEST(Resize, IdentityDims) {
  const auto hm = random_heatmap(4, 6, 5);
  EXPECT_EQ(resize_bilinear(hm, 4, 6).values, hm.values);
}

TEST(Resize, ConstantStaysConstant) {
  ConceptHeatmap hm(3, 3);
  std::fill(hm.values.begin(), hm.values.end(), 0.25);
  for (double v : resize_bilinear(hm, 17, 11).values) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Resize, MiddleColumnInterpolates) {
  ConceptHeatmap hm(2, 2);
  hm.values = {0, 1, 0, 1};
  const auto out = resize_bilinear(hm, 2, 3);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(0, 1), 0.5);
  EXPECT_EQ(out(1, 1), 0.5);
  EXPECT_EQ(out(1, 2), 1.0);
}

TEST(Resize, CornersPreservedAndNoOvershoot) {
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const auto hm = random_heatmap(2 + seed % 5, 3 + seed % 4, seed);
    const auto out = resize_bilinear(hm, 5 + seed, 31 - seed);
    const auto [lo, hi] = std::minmax_element(hm.values.begin(), hm.values.end());
    for (double v : out.values) {
      EXPECT_GE(v, *lo - 1e-12);
      EXPECT_LE(v, *hi + 1e-12);
    }
    EXPECT_DOUBLE_EQ(out(0, 0), hm(0, 0));
    EXPECT_DOUBLE_EQ(out(out.h - 1, out.w - 1), hm(hm.h - 1, hm.w - 1));
  }
}

TEST(Resize, Errors) {
  EXPECT_TRANCE_ERROR(resize_bilinear(random_heatmap(2, 2, 0), 0, 3), ErrorCode::InvalidArgument);
  EXPECT_TRANCE_ERROR(resize_bilinear(ConceptHeatmap(), 2, 2), ErrorCode::EmptyInput);
}

TEST(Colormap, Anchors) {
  EXPECT_EQ(colormap(0.0), (std::array<double, 3>{96, 96, 96}));
  EXPECT_EQ(colormap(0.3), (std::array<double, 3>{96, 96, 96}));
  EXPECT_EQ(colormap(1.0 / 3.0), (std::array<double, 3>{96, 96, 96}));
  EXPECT_EQ(colormap(2.0 / 3.0), (std::array<double, 3>{30, 80, 200}));
  EXPECT_EQ(colormap(1.0), (std::array<double, 3>{220, 40, 30}));
  const auto mid = colormap(0.5);
  EXPECT_NEAR(mid[0], 63, 1e-9);
  EXPECT_NEAR(mid[1], 88, 1e-9);
  EXPECT_NEAR(mid[2], 148, 1e-9);
}

TEST(Overlay, HotPixelOverBlack) {
  ConceptHeatmap hm(1, 2);
  hm.values = {0.0, 1.0};
  const auto out = colorize_overlay(RgbaImage(2, 1), hm, 0.4);
  const std::uint8_t* hot = out.at(1, 0);
  EXPECT_EQ(hot[0], 88);
  EXPECT_EQ(hot[1], 16);
  EXPECT_EQ(hot[2], 12);
  EXPECT_EQ(hot[3], 255);
  const std::uint8_t* cold = out.at(0, 0);
  EXPECT_EQ(cold[0], 38);  // 0.4 * 96 = 38.4
}

TEST(Overlay, AlphaZeroIsIdentity) {
  const auto base = random_image(13, 7, 6);
  EXPECT_EQ(colorize_overlay(base, random_heatmap(7, 13, 7), 0.0), base);
}

TEST(Overlay, AlphaOneConstantIsUniformColour) {
  ConceptHeatmap hm(4, 4);
  std::fill(hm.values.begin(), hm.values.end(), 3.0);
  const auto out = colorize_overlay(random_image(4, 4, 8), hm, 1.0);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(out.pixels[4 * i + 0], 96);
    EXPECT_EQ(out.pixels[4 * i + 1], 96);
    EXPECT_EQ(out.pixels[4 * i + 2], 96);
    EXPECT_EQ(out.pixels[4 * i + 3], 255);
  }
}

TEST(Overlay, Errors) {
  EXPECT_TRANCE_ERROR(colorize_overlay(RgbaImage(3, 2), ConceptHeatmap(3, 2)), ErrorCode::ShapeMismatch);
  EXPECT_TRANCE_ERROR(colorize_overlay(RgbaImage(2, 2), ConceptHeatmap(2, 2), 1.5), ErrorCode::InvalidArgument);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir;
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{1, 1}, {224, 224}, {5, 17}}) {
    const auto img = random_image(w, h, static_cast<std::uint32_t>(w * h));
    write_image(img, dir / "x.png");
    EXPECT_EQ(read_png(dir / "x.png"), img);
    EXPECT_EQ(trance::testing::slurp(dir / "x.png").substr(1, 3), "PNG");
  }
}

TEST(ImageIo, PpmRoundTripCompositesOverWhite) {
  TempDir dir;
  auto img = random_image(6, 3, 9);
  for (std::size_t i = 0; i < 18; ++i) img.pixels[4 * i + 3] = 255;
  write_image(img, dir / "x.ppm");
  EXPECT_EQ(read_ppm(dir / "x.ppm"), img);

  RgbaImage clear(1, 1, {10, 20, 30, 0});
  write_image(clear, dir / "c.ppm");
  const auto back = read_ppm(dir / "c.ppm");
  EXPECT_EQ(back.at(0, 0)[0], 255);
  EXPECT_EQ(back.at(0, 0)[2], 255);
}

TEST(ImageIo, Failures) {
  const RgbaImage img(2, 2);
  EXPECT_TRANCE_ERROR(write_image(img, "/nonexistent-dir/a.png"), ErrorCode::IoFailure);
  EXPECT_TRANCE_ERROR(write_image(img, "/nonexistent-dir/a.ppm"), ErrorCode::IoFailure);
  EXPECT_TRANCE_ERROR(read_png("/nonexistent-dir/a.png"), ErrorCode::IoFailure);
  EXPECT_TRANCE_ERROR(read_ppm("/nonexistent-dir/a.ppm"), ErrorCode::IoFailure);
}
