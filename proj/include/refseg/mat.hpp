#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "refseg/errors.hpp"

namespace refseg {

/// Dense row-major matrix templated on scalar. Rows are "items" (pixels,
/// words, queries), columns are channels.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;
using VecD = Vec<double>;

/// RGB image, float values in [0,1], row-major H x W x 3.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int height, int width, float fill = 0.f)
      : h(height), w(width), data(static_cast<size_t>(height) * width * 3, fill) {}

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  bool empty() const { return data.empty(); }
};

/// Binary mask, row-major H x W, values 0/1.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int height, int width, uint8_t fill = 0)
      : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (uint8_t b : v) n += (b != 0);
    return n;
  }
  bool same_shape(const Mask& o) const { return h == o.h && w == o.w; }
  bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

/// Flatten an image into an (H*W) x 3 matrix of scalar type S.
template <typename S>
Mat<S> image_to_matrix(const Image& img) {
  Mat<S> m(static_cast<Eigen::Index>(img.h) * img.w, 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) m(static_cast<Eigen::Index>(y) * img.w + x, c) = static_cast<S>(img.at(y, x, c));
  return m;
}

}  // namespace refseg
