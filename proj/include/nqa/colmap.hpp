// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Readers and writers for COLMAP sparse models (cameras, images, points3D) in
// both the binary and text variants, plus assembly of a posed-view bundle.
//
// Binary layouts, little-endian:
//   cameras.bin   u64 count; { u32 id, i32 model, u64 width, u64 height, f64 params[] }
//   images.bin    u64 count; { u32 id, f64 qw qx qy qz, f64 tx ty tz, u32 camera_id,
//                              char name[] '\0', u64 n2d, { f64 x, f64 y, u64 point3d_id } }
//   points3D.bin  u64 count; { u64 id, f64 xyz[3], u8 rgb[3], f64 error, u64 track_len,
//                              { u32 image_id, u32 point2d_idx } }
// Only SIMPLE_PINHOLE (0) and PINHOLE (1) cameras are accepted.

#ifndef NQA_COLMAP_HPP
#define NQA_COLMAP_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nqa/geometry.hpp"

namespace nqa {

class ColmapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kUnmatchedPoint3d = std::numeric_limits<std::uint64_t>::max();

enum class CameraModel : std::int32_t { kSimplePinhole = 0, kPinhole = 1 };

using CameraMap = std::map<std::uint32_t, PinholeCamera>;

struct Point2D {
  double x = 0.0;
  double y = 0.0;
  std::uint64_t point3d_id = kUnmatchedPoint3d;
  bool operator==(const Point2D&) const = default;
};

struct ImageRecord {
  std::uint32_t image_id = 0;
  RigidPose pose;
  std::uint32_t camera_id = 0;
  std::string name;
  std::vector<Point2D> points2d;
  // Set when the stored quaternion was off unit length (within 1e-3) and got
  // normalized on read.
  bool quaternion_renormalized = false;
};

struct TrackElement {
  std::uint32_t image_id = 0;
  std::uint32_t point2d_index = 0;
  bool operator==(const TrackElement&) const = default;
};

struct SparsePoint {
  std::uint64_t id = 0;
  Vec3 xyz = Vec3::Zero();
  std::array<std::uint8_t, 3> rgb{};
  double reproj_error = 0.0;
  std::vector<TrackElement> track;

  bool untracked() const { return track.empty(); }
  std::vector<std::uint32_t> track_image_ids() const;
};

struct SceneBundle {
  CameraMap cameras;
  std::vector<PosedView> views;
  std::vector<SparsePoint> points;

  // Every track image id resolves to a view; path indices are unique.
  void validate() const;
};

CameraMap read_cameras_binary(const std::filesystem::path& path);
CameraMap read_cameras_text(const std::filesystem::path& path);
std::vector<ImageRecord> read_images_binary(const std::filesystem::path& path);
std::vector<ImageRecord> read_images_text(const std::filesystem::path& path);
std::vector<SparsePoint> read_points3d_binary(const std::filesystem::path& path);
std::vector<SparsePoint> read_points3d_text(const std::filesystem::path& path);

// Dispatch on the ".bin" / ".txt" extension.
CameraMap read_cameras(const std::filesystem::path& path);
std::vector<ImageRecord> read_images(const std::filesystem::path& path);
std::vector<SparsePoint> read_points3d(const std::filesystem::path& path);

// Writers always emit the PINHOLE model.
void write_cameras_binary(const std::filesystem::path& path, const CameraMap& cameras);
void write_cameras_text(const std::filesystem::path& path, const CameraMap& cameras);
void write_images_binary(const std::filesystem::path& path, const std::vector<ImageRecord>& images);
void write_images_text(const std::filesystem::path& path, const std::vector<ImageRecord>& images);
void write_points3d_binary(const std::filesystem::path& path,
                           const std::vector<SparsePoint>& points);
void write_points3d_text(const std::filesystem::path& path,
                         const std::vector<SparsePoint>& points);

// Locates cameras/images/points3D in `model_dir`, preferring binary files.
struct ModelFiles {
  std::filesystem::path cameras;
  std::filesystem::path images;
  std::filesystem::path points3d;
};
ModelFiles find_model_files(const std::filesystem::path& model_dir);

struct BundleOptions {
  // Image name -> path index. Empty: order by image name.
  std::map<std::string, int> ordering;
  // Points with a larger reprojection error are dropped.
  double max_reproj_error = std::numeric_limits<double>::infinity();
  // Extra diagnostics (renormalized quaternions) are appended here when set.
  std::vector<std::string>* warnings = nullptr;
};

// Reads the sparse model and the PPM images named in images.*, relative to
// `images_dir`.
SceneBundle load_bundle(const std::filesystem::path& model_dir,
                        const std::filesystem::path& images_dir, const BundleOptions& options = {});

std::vector<SparsePoint> filter_by_reprojection_error(const std::vector<SparsePoint>& points,
                                                      double max_error);

// Uniform subset without replacement, deterministic in (seed, round) and in
// the set of input ids; returned sorted by point id.
std::vector<SparsePoint> sample_points(const std::vector<SparsePoint>& points, std::size_t count,
                                       std::uint64_t seed, std::uint64_t round);

}  // namespace nqa

#endif  // NQA_COLMAP_HPP
