#pragma once

// PNG (libpng simplified API) and binary PPM output for RgbaImage.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <png.h>

#include "trance/error.hpp"
#include "trance/heatmap.hpp"

namespace trance {

inline void write_png(const RgbaImage& img, const std::filesystem::path& path) {
  require(img.width > 0 && img.height > 0 && img.pixels.size() == 4 * img.width * img.height,
          ErrorCode::ShapeMismatch, "invalid image buffer");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGBA;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::IoFailure, "cannot write " + path.string() + ": " + msg);
  }
}

inline RgbaImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    fail(ErrorCode::IoFailure, "cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGBA;
  RgbaImage out(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::IoFailure, "cannot decode " + path.string() + ": " + msg);
  }
  return out;
}

/// P6 has no alpha channel, so pixels are composited over white first.
inline void write_ppm(const RgbaImage& img, const std::filesystem::path& path) {
  require(img.width > 0 && img.height > 0 && img.pixels.size() == 4 * img.width * img.height,
          ErrorCode::ShapeMismatch, "invalid image buffer");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string row(3 * img.width, '\0');
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const unsigned v = (p[ch] * p[3] + 255u * (255u - p[3]) + 127u) / 255u;
        row[3 * x + static_cast<std::size_t>(ch)] = static_cast<char>(v);
      }
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline RgbaImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0;
  int maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w == 0 || h == 0)
    fail(ErrorCode::IoFailure, "unsupported PPM header in " + path.string());
  is.get();
  RgbaImage out(w, h);
  std::string row(3 * w, '\0');
  for (std::size_t y = 0; y < h; ++y) {
    if (!is.read(row.data(), static_cast<std::streamsize>(row.size())))
      fail(ErrorCode::IoFailure, "truncated PPM " + path.string());
    for (std::size_t x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        out.at(x, y)[ch] = static_cast<std::uint8_t>(row[3 * x + static_cast<std::size_t>(ch)]);
  }
  return out;
}

/// Chooses the encoder from the extension: ".ppm" writes PPM, anything else PNG.
inline void write_image(const RgbaImage& img, const std::filesystem::path& path) {
  if (path.extension() == ".ppm")
    write_ppm(img, path);
  else
    write_png(img, path);
}

}  // namespace trance
