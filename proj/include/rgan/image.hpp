#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rgan/tensor.hpp"

namespace rgan {

// 8-bit RGB raster, interleaved row-major. The on-disk format is binary PPM
// (P6, maxval 255) with the exact header "P6\n<w> <h>\n255\n"; round-trips
// are bit-exact.

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // height * width * 3

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), pixels(size_t(w) * h * 3, 0) {}

  uint8_t& at(int y, int x, int c) {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }
};

enum class Domain { kLow, kHigh };

// One raster plus provenance: where it came from and, for synthetic images,
// the seed that produced it.
struct ImageSample {
  ImageU8 image;
  Domain domain = Domain::kLow;
  std::string source;
  uint64_t seed = 0;
};

ImageU8 decode_ppm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_ppm(const ImageU8& img);

ImageU8 load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const ImageU8& img);

// Pixel p maps to p/127.5 - 1 in [-1,1], planar [3,H,W].
template <typename T>
Tensor<T> normalize(const ImageU8& img) {
  Tensor<T> t(Shape{3, img.height, img.width});
  const int64_t hw = int64_t(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.data()[c * hw + int64_t(y) * img.width + x] =
            T(img.at(y, x, c) / 127.5 - 1.0);
  return t;
}

// Inverse of normalize: clamp to [0,255] and round half away from zero.
template <typename T>
ImageU8 denormalize(const Tensor<T>& t) {
  if (t.ndim() != 3 || t.dim(0) != 3)
    tensor_fail("denormalize: expected [3,H,W], got " + shape_str(t.shape()));
  ImageU8 img(t.dim(2), t.dim(1));
  const int64_t hw = int64_t(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = (double(t.data()[c * hw + int64_t(y) * img.width + x]) + 1.0) * 127.5;
        img.at(y, x, c) = uint8_t(std::min(255.0, std::max(0.0, std::round(v))));
      }
  return img;
}

}  // namespace rgan
