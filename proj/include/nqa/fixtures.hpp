// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic synthetic scenes: a plane or sphere with procedural shading seen by
// a rig of pinhole cameras. Everything is closed-form, so renders double as
// oracles for projection, spherical angles and gradient features.

#ifndef NQA_FIXTURES_HPP
#define NQA_FIXTURES_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "nqa/colmap.hpp"
#include "nqa/geometry.hpp"

namespace nqa::fixtures {

// Square patch centered at `center`, spanning +-half_extent along the two
// tangent axes of its local frame. Only the side facing `normal` is visible.
struct Plane {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double half_extent = 1.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

using Surface = std::variant<Plane, Sphere>;

struct Wave {
  double freq_s = 0.0;
  double freq_t = 0.0;
  double phase = 0.0;
  Vec3 amplitude = Vec3::Zero();
};

// base + sum of sinusoids over the surface parameterization (s, t).
struct Texture {
  Vec3 base = Vec3::Constant(0.5);
  std::vector<Wave> waves;

  Vec3 eval(double s, double t) const;
  static Texture constant(const Vec3& color) { return {color, {}}; }
  static Texture random(std::uint64_t seed, int wave_count = 4, double amplitude = 0.15);
};

// View-independent color.
struct Lambertian {
  Texture albedo;
};

// Color grows linearly with the viewing angles measured in the hit point's
// normal frame: albedo + k_azi * azimuth + k_pol * polar (all channels).
struct AngularLinear {
  Texture albedo;
  double k_azi = 0.0;
  double k_pol = 0.0;
};

using Shading = std::variant<Lambertian, AngularLinear>;

struct RigCamera {
  PinholeCamera camera;
  RigidPose pose;
};

struct AnalyticScene {
  Surface surface = Plane{};
  Shading shading = Lambertian{};
  std::vector<RigCamera> rig;
  Vec3 background = Vec3::Constant(0.5);
  // Optional per-view gray offset added to the whole rendered image; used to
  // inject view-dependent distortion. Empty means no offsets.
  std::vector<double> view_offsets;
};

struct SurfaceHit {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double s = 0.0;  // texture coordinates
  double t = 0.0;
};

// 64x64 with f = 64 and the principal point at the image center.
PinholeCamera default_camera(int size = 64, double focal = 64.0);

// World-to-camera pose looking from `eye` at `target`; image y points away
// from `up` where possible.
RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

// n cameras evenly spaced in azimuth at a fixed elevation above the xy-plane.
std::vector<RigCamera> orbit_rig(int n, double radius, double elevation, const Vec3& target = Vec3::Zero(),
                                 const PinholeCamera& camera = default_camera());

// n cameras on an arc in the xz-plane, tilted from +z toward +x by angles
// evenly spaced over [from, to] (negative angles lean toward -x).
std::vector<RigCamera> polar_arc_rig(int n, double radius, double from, double to,
                                     const Vec3& target = Vec3::Zero(),
                                     const PinholeCamera& camera = default_camera());

// Unit world-space direction of the ray through pixel (u, v); the inverse
// of pinhole projection.
Vec3 unproject(const PinholeCamera& camera, const RigidPose& pose, double u, double v);

std::optional<SurfaceHit> intersect(const Surface& surface, const Vec3& origin, const Vec3& direction);

// Frame used by the shading: z along the surface normal, x from world up.
LocalFrame shading_frame(const SurfaceHit& hit);

// Color of `hit` seen from `viewpoint`, without view offsets.
Vec3 shade(const Shading& shading, const SurfaceHit& hit, const Vec3& viewpoint);

Image render(const AnalyticScene& scene, std::size_t view);

// Random points on the visible surface. Plane points stay within
// `inner_fraction` of the half extent; sphere points lie on the upper cap.
std::vector<SurfaceHit> sample_surface(const Surface& surface, std::size_t count, std::uint64_t seed,
                                       double inner_fraction = 0.5);

// Renders every rig view and attaches `point_count` surface points whose
// tracks list exactly the views that see them in bounds and front-facing.
// Views get path_index = rig order and image_id = index + 1; one camera id
// per distinct intrinsics.
SceneBundle build_bundle(const AnalyticScene& scene, std::size_t point_count, std::uint64_t seed);

// Writes <dir>/sparse/{cameras,images,points3D}.bin and <dir>/images/*.ppm.
// 2D point indices are renumbered in point-id order.
void export_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

}  // namespace nqa::fixtures

#endif  // NQA_FIXTURES_HPP
