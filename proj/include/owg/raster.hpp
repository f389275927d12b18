#pragma once
#include <cstdint>
#include <vector>

#include "owg/errors.hpp"

namespace owg {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// Row-major raster. (u, v) = (column, row); data index v * width + u.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool same_size(int w, int h) const { return width_ == w && height_ == h; }

  T& at(int u, int v) { return data_[static_cast<size_t>(v) * width_ + u]; }
  const T& at(int u, int v) const { return data_[static_cast<size_t>(v) * width_ + u]; }

  bool in_bounds(int u, int v) const { return u >= 0 && u < width_ && v >= 0 && v < height_; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RgbImage = Image<Rgb>;
using GrayU8 = Image<uint8_t>;
using GrayU16 = Image<uint16_t>;
using GrayF32 = Image<float>;

inline void require_same_size(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) raise(Err::DimensionMismatch, what);
}

}  // namespace owg
