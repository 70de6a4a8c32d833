#pragma once

#include <string>
#include <vector>

#include "layerfield/common.hpp"

namespace lf {

// Float image in [0,1], row-major [y][x][c]. channels is 3 (RGB) or
// 4 (RGBA, alpha carries the mask). PNG on disk is 8-bit.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, int c, float fill = 0.f)
      : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }

  ImageF rgb() const {
    if (channels == 3) return *this;
    ImageF out(width, height, 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = at(x, y, c);
    return out;
  }

  // Alpha plane as a single-channel image; all-ones when there is no alpha.
  ImageF alpha() const {
    ImageF out(width, height, 1, 1.f);
    if (channels == 4)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(x, y, 0) = at(x, y, 3);
    return out;
  }
};

void write_png(const std::string& path, const ImageF& img);
ImageF read_png(const std::string& path);

}  // namespace lf
