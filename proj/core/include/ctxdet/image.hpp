/* Copyright 2026 The ctxdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef CTXDET_IMAGE_HPP_
#define CTXDET_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ctxdet/tensor.hpp"

namespace ctxdet {

/// File-system failure carrying the offending path in its message.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB raster, interleaved, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(std::size_t(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

/// Binary PPM (P6) read/write.
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5) write of an 8-bit single-channel raster.
void write_pgm(const std::vector<std::uint8_t>& gray, int height, int width,
               const std::filesystem::path& path);

Image resize_image(const Image& image, int height, int width);
Image flip_horizontal(const Image& image);

/// Converts to a (1, 3, H', W') map scaled to roughly [-1, 1], zero padded on
/// the bottom/right so H' and W' are multiples of `multiple`.
FeatureMap image_to_tensor(const Image& image, int multiple);

}  // namespace ctxdet

#endif  // CTXDET_IMAGE_HPP_
