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

#include "ctxdet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace ctxdet {

namespace {

void write_netpbm(const char* magic, const std::uint8_t* data, std::size_t bytes,
                  int height, int width, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << magic << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

}  // namespace

void write_ppm(const Image& image, const std::filesystem::path& path) {
  write_netpbm("P6", image.rgb.data(), image.rgb.size(), image.height, image.width, path);
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (next_token(in) != "P6") throw IoError("'" + path.string() + "' is not a binary PPM");
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PPM header in '" + path.string() + "'");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw IoError("unsupported PPM geometry in '" + path.string() + "'");
  }
  in.get();  // single whitespace before the raster
  Image img(h, w);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw IoError("truncated PPM raster in '" + path.string() + "'");
  }
  return img;
}

void write_pgm(const std::vector<std::uint8_t>& gray, int height, int width,
               const std::filesystem::path& path) {
  if (gray.size() != std::size_t(height) * width) {
    throw std::invalid_argument("write_pgm: raster size does not match dimensions");
  }
  write_netpbm("P5", gray.data(), gray.size(), height, width, path);
}

Image resize_image(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("resize_image: empty target");
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ly = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double lx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1 - lx) + image.at(y0, x1, c) * lx;
        const double bot = image.at(y1, x0, c) * (1 - lx) + image.at(y1, x1, c) * lx;
        out.at(y, x, c) = static_cast<std::uint8_t>(
            std::clamp(std::lround(top * (1 - ly) + bot * ly), 0L, 255L));
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
    }
  }
  return out;
}

FeatureMap image_to_tensor(const Image& image, int multiple) {
  const int m = std::max(multiple, 1);
  const int h = (image.height + m - 1) / m * m;
  const int w = (image.width + m - 1) / m * m;
  FeatureMap t(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    float* plane = t.plane(0, c);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        plane[std::size_t(y) * w + x] = image.at(y, x, c) / 127.5f - 1.0f;
      }
    }
  }
  return t;
}

}  // namespace ctxdet
