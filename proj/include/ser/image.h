#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ser {

// 8-bit grayscale image, row-major, row 0 at the top.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<size_t>(row) * width + col];
  }
  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<size_t>(row) * width + col];
  }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// PNG I/O (8-bit grayscale only).
void write_png(const std::string& path, const GrayImage& img);
GrayImage read_png(const std::string& path);

}  // namespace ser
