#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sobolattr {

/// Row-major image with pixel values in [0,1]; channels interleaved.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;  // 1 or 3
  std::vector<double> pixels;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return pixels[(r * width + c) * channels + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
  std::size_t pixel_count() const { return height * width; }
  bool same_shape(const ImageTensor& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

/// PNG or binary PPM (P6) by file magic. 8-bit content mapped to [0,1].
ImageTensor load_image(const std::string& path);

/// 8-bit quantization (round(v*255), clamped) on write.
void save_png(const ImageTensor& image, const std::string& path);
void save_ppm(const ImageTensor& image, const std::string& path);

}  // namespace sobolattr
