#pragma once

// Binary 8-bit grayscale raster output (portable graymap, "P5", maxval 255).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "inamp/errors.hpp"

namespace inamp {

/// Min-max normalize to the full 0..255 range. A constant input has no
/// contrast to stretch, so it maps to an all-zero raster by convention.
template <typename T>
std::vector<std::uint8_t> normalize_to_gray(const std::vector<T>& v) {
  if (v.empty()) throw EmptyInput("normalize_to_gray: no samples");
  T lo = v[0], hi = v[0];
  for (T x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<std::uint8_t> out(v.size(), 0);
  if (hi > lo) {
    const double scale = 255.0 / (static_cast<double>(hi) - static_cast<double>(lo));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = (static_cast<double>(v[i]) - static_cast<double>(lo)) * scale;
      out[i] = static_cast<std::uint8_t>(g + 0.5);
    }
  }
  return out;
}

inline void write_pgm(const std::string& path, std::size_t width, std::size_t height,
                      const std::vector<std::uint8_t>& pixels) {
  if (width == 0 || height == 0 || pixels.size() != width * height)
    throw InvalidShape("write_pgm: pixel buffer does not match " + std::to_string(width) + "x" +
                       std::to_string(height));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pgm: cannot open " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!f) throw IoError("write_pgm: short write to " + path);
}

}  // namespace inamp
