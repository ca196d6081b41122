// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Pinhole cameras, rigid poses and the per-point spherical frame used to
// describe the directions from which a surface point is observed.
//
// Conventions follow COLMAP: the pose maps world to camera coordinates,
// x_cam = R * x_world + t, with the camera looking down +z, x to the right
// and y down. Pixel coordinates place texel (i, j) at (u, v) = (i, j).

#ifndef NQA_GEOMETRY_HPP
#define NQA_GEOMETRY_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nqa/image.hpp"

namespace nqa {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PinholeCamera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws GeometryError when focal lengths or the principal point are invalid.
  void validate() const;
  bool operator==(const PinholeCamera&) const = default;
};

// World-to-camera rigid transform with a unit quaternion.
class RigidPose {
 public:
  RigidPose() = default;
  // Throws when |q| deviates from 1 by more than 1e-6.
  RigidPose(const Eigen::Quaterniond& rotation, const Vec3& translation);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const;
  Vec3 to_camera(const Vec3& world) const { return rotation_matrix() * world + translation_; }

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vec3 translation_ = Vec3::Zero();
};

struct PosedView {
  Image image;
  PinholeCamera camera;
  RigidPose pose;
  int path_index = 0;
  std::uint32_t image_id = 0;
  std::string name;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct SphericalAngles {
  double azimuth = 0.0;  // [-pi, pi)
  double polar = 0.0;    // [0, pi]
};

// Orthonormal right-handed basis; angles are measured against z.
struct LocalFrame {
  Vec3 x = Vec3::UnitX();
  Vec3 y = Vec3::UnitY();
  Vec3 z = Vec3::UnitZ();
};

// One pixel looking at a surface point.
struct ObservationRay {
  Vec3 viewpoint = Vec3::Zero();
  Vec3 pixel_value = Vec3::Zero();
  double azimuth = 0.0;
  double polar = 0.0;
  int path_index = 0;
};

struct PointObservations {
  Vec3 origin = Vec3::Zero();
  LocalFrame frame;
  std::vector<ObservationRay> rays;  // ordered by path_index
};

Vec3 camera_center(const RigidPose& pose);

// Pinhole projection; nullopt when behind the camera or outside
// [0, width-1] x [0, height-1]. Throws if the point is the camera center.
std::optional<PixelCoord> project(const Vec3& point, const PinholeCamera& camera,
                                  const RigidPose& pose);
std::optional<PixelCoord> project(const Vec3& point, const PosedView& view);

// Bilinear interpolation of the four texels around (u, v).
Vec3 sample_pixel(const Image& image, double u, double v);
inline Vec3 sample_pixel(const PosedView& view, double u, double v) {
  return sample_pixel(view.image, u, v);
}

SphericalAngles to_spherical(const Vec3& viewpoint, const Vec3& origin, const LocalFrame& frame);
// Unit direction for the given angles, expressed in world coordinates.
Vec3 from_spherical(const SphericalAngles& angles, const LocalFrame& frame);

// Angle x_a o x_b in [0, pi].
double angular_disparity(const Vec3& a, const Vec3& b, const Vec3& origin);

// z = mean unit direction from origin to the viewpoints; x = world_up
// projected onto the tangent plane, falling back to world x when parallel.
LocalFrame make_local_frame(const Vec3& origin, std::span<const Vec3> viewpoints,
                            const Vec3& world_up = Vec3::UnitZ());

// Gathers the pixels observing `point`. With a track, only the listed image ids
// are considered; without one, every view is tested geometrically. The result
// does not depend on the order of `views`.
PointObservations observe_point(const Vec3& point, std::span<const PosedView> views,
                                std::optional<std::span<const std::uint32_t>> track,
                                const Vec3& world_up = Vec3::UnitZ());

std::vector<ObservationRay> visibility_filter(
    const Vec3& point, std::span<const PosedView> views,
    std::optional<std::span<const std::uint32_t>> track = std::nullopt);

}  // namespace nqa

#endif  // NQA_GEOMETRY_HPP
