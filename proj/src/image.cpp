// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace nqa {

Image::Image(int width, int height, const Eigen::Vector3d& fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ImageError("image extents must be positive");
  data_.resize(std::size_t(width) * std::size_t(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.x();
    data_[i + 1] = fill.y();
    data_[i + 2] = fill.z();
  }
}

Eigen::Vector3d Image::pixel(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) throw ImageError("pixel out of range");
  const std::size_t i = index(x, y);
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set_pixel(int x, int y, const Eigen::Vector3d& rgb) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) throw ImageError("pixel out of range");
  const std::size_t i = index(x, y);
  data_[i] = rgb.x();
  data_[i + 1] = rgb.y();
  data_[i + 2] = rgb.z();
}

std::vector<double> Image::luminance() const {
  std::vector<double> out(std::size_t(width_) * std::size_t(height_));
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = 0.299 * data_[3 * p] + 0.587 * data_[3 * p + 1] + 0.114 * data_[3 * p + 2];
  }
  return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw ImageError("PPM header truncated");
  return bytes.substr(start, pos - start);
}

int parse_positive(const std::string& token, const char* what) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || value <= 0) throw ImageError(std::string("bad PPM ") + what);
  return value;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw ImageError(path.string() + ": not a P6 PPM");
  const int width = parse_positive(next_token(bytes, pos), "width");
  const int height = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval > 255) throw ImageError(path.string() + ": 16-bit PPM unsupported");
  ++pos;  // single whitespace byte before the raster

  const std::size_t needed = std::size_t(width) * std::size_t(height) * 3;
  if (bytes.size() < pos + needed) throw ImageError(path.string() + ": raster truncated");

  Image image(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = pos + (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3;
      image.set_pixel(x, y,
                      Eigen::Vector3d(static_cast<unsigned char>(bytes[i]),
                                      static_cast<unsigned char>(bytes[i + 1]),
                                      static_cast<unsigned char>(bytes[i + 2])) /
                          double(maxval));
    }
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::string raster;
  raster.reserve(image.data().size());
  for (double v : image.data()) {
    raster.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  out.write(raster.data(), std::streamsize(raster.size()));
  if (!out) throw ImageError("write failed for " + path.string());
}

}  // namespace nqa
