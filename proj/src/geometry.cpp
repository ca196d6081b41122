// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace nqa {

void PinholeCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw GeometryError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw GeometryError("image extents must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw GeometryError("principal point outside the image");
  }
}

RigidPose::RigidPose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (std::abs(rotation.norm() - 1.0) > 1e-6) {
    throw GeometryError("pose quaternion is not unit length");
  }
  if (!translation.allFinite()) throw GeometryError("pose translation is not finite");
}

Mat3 RigidPose::rotation_matrix() const {
  const double w = rotation_.w(), x = rotation_.x(), y = rotation_.y(), z = rotation_.z();
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec3 camera_center(const RigidPose& pose) {
  return -pose.rotation_matrix().transpose() * pose.translation();
}

std::optional<PixelCoord> project(const Vec3& point, const PinholeCamera& camera,
                                  const RigidPose& pose) {
  const Vec3 p = pose.to_camera(point);
  if (p.squaredNorm() == 0.0) throw GeometryError("point coincides with the camera center");
  if (p.z() <= 0.0) return std::nullopt;
  const PixelCoord px{camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy};
  if (!(px.u >= 0.0 && px.u <= camera.width - 1 && px.v >= 0.0 && px.v <= camera.height - 1)) {
    return std::nullopt;
  }
  return px;
}

std::optional<PixelCoord> project(const Vec3& point, const PosedView& view) {
  return project(point, view.camera, view.pose);
}

Vec3 sample_pixel(const Image& image, double u, double v) {
  if (!(u >= 0.0 && u <= image.width() - 1 && v >= 0.0 && v <= image.height() - 1)) {
    throw GeometryError("sample coordinates outside the image");
  }
  const int x0 = std::min(int(std::floor(u)), image.width() - 1);
  const int y0 = std::min(int(std::floor(v)), image.height() - 1);
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double ax = u - x0, ay = v - y0;
  return (1 - ax) * (1 - ay) * image.pixel(x0, y0) + ax * (1 - ay) * image.pixel(x1, y0) +
         (1 - ax) * ay * image.pixel(x0, y1) + ax * ay * image.pixel(x1, y1);
}

SphericalAngles to_spherical(const Vec3& viewpoint, const Vec3& origin, const LocalFrame& frame) {
  const Vec3 d = viewpoint - origin;
  const double n = d.norm();
  if (!(n > 0.0)) throw GeometryError("viewpoint coincides with the spherical origin");
  const Vec3 dir = d / n;
  SphericalAngles out;
  out.polar = std::acos(std::clamp(dir.dot(frame.z), -1.0, 1.0));
  out.azimuth = std::atan2(dir.dot(frame.y), dir.dot(frame.x));
  if (out.azimuth >= std::numbers::pi) out.azimuth -= 2.0 * std::numbers::pi;
  return out;
}

Vec3 from_spherical(const SphericalAngles& angles, const LocalFrame& frame) {
  const double s = std::sin(angles.polar);
  return s * std::cos(angles.azimuth) * frame.x + s * std::sin(angles.azimuth) * frame.y +
         std::cos(angles.polar) * frame.z;
}

double angular_disparity(const Vec3& a, const Vec3& b, const Vec3& origin) {
  const Vec3 da = a - origin, db = b - origin;
  if (da.squaredNorm() == 0.0 || db.squaredNorm() == 0.0) {
    throw GeometryError("angular disparity with a point at the origin");
  }
  // atan2 form keeps precision near 0 and pi where acos(dot) does not.
  return std::atan2(da.cross(db).norm(), da.dot(db));
}

LocalFrame make_local_frame(const Vec3& origin, std::span<const Vec3> viewpoints,
                            const Vec3& world_up) {
  Vec3 z = Vec3::Zero();
  for (const Vec3& v : viewpoints) {
    const Vec3 d = v - origin;
    const double n = d.norm();
    if (n > 0.0) z += d / n;
  }
  z = z.norm() > 1e-12 ? Vec3(z.normalized()) : Vec3(world_up.normalized());

  LocalFrame frame;
  frame.z = z;
  for (const Vec3& candidate : {world_up, Vec3(Vec3::UnitX()), Vec3(Vec3::UnitY())}) {
    const Vec3 tangent = candidate - candidate.dot(z) * z;
    if (tangent.norm() > 1e-9) {
      frame.x = tangent.normalized();
      break;
    }
  }
  frame.y = frame.z.cross(frame.x);
  return frame;
}

PointObservations observe_point(const Vec3& point, std::span<const PosedView> views,
                                std::optional<std::span<const std::uint32_t>> track,
                                const Vec3& world_up) {
  std::unordered_set<std::uint32_t> allowed;
  if (track) allowed.insert(track->begin(), track->end());

  std::vector<const PosedView*> ordered;
  ordered.reserve(views.size());
  for (const PosedView& v : views) ordered.push_back(&v);
  std::sort(ordered.begin(), ordered.end(),
            [](const PosedView* a, const PosedView* b) { return a->path_index < b->path_index; });

  PointObservations obs;
  obs.origin = point;
  std::vector<Vec3> viewpoints;
  for (const PosedView* view : ordered) {
    if (track && !allowed.contains(view->image_id)) continue;
    const Vec3 center = camera_center(view->pose);
    if ((center - point).squaredNorm() == 0.0) continue;
    const auto px = project(point, *view);
    if (!px) continue;
    ObservationRay ray;
    ray.viewpoint = center;
    ray.pixel_value = sample_pixel(*view, px->u, px->v);
    ray.path_index = view->path_index;
    obs.rays.push_back(ray);
    viewpoints.push_back(center);
  }

  obs.frame = make_local_frame(point, viewpoints, world_up);
  for (ObservationRay& ray : obs.rays) {
    const SphericalAngles a = to_spherical(ray.viewpoint, point, obs.frame);
    ray.azimuth = a.azimuth;
    ray.polar = a.polar;
  }
  return obs;
}

std::vector<ObservationRay> visibility_filter(const Vec3& point, std::span<const PosedView> views,
                                              std::optional<std::span<const std::uint32_t>> track) {
  return observe_point(point, views, track).rays;
}

}  // namespace nqa
