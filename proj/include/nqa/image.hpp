// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NQA_IMAGE_HPP
#define NQA_IMAGE_HPP

#include <Eigen/Core>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace nqa {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major interleaved RGB image with double channels, nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, const Eigen::Vector3d& fill = Eigen::Vector3d::Zero());

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  Eigen::Vector3d pixel(int x, int y) const;
  void set_pixel(int x, int y, const Eigen::Vector3d& rgb);
  double channel(int x, int y, int c) const { return data_[index(x, y) + std::size_t(c)]; }

  // Rec. 601 luma, one value per pixel, row-major.
  std::vector<double> luminance() const;

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t index(int x, int y) const {
    return (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Binary PPM (P6), maxval <= 255.
Image read_ppm(const std::filesystem::path& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace nqa

#endif  // NQA_IMAGE_HPP
