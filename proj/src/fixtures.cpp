// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>

namespace nqa::fixtures {

namespace {

constexpr double kPi = std::numbers::pi;

LocalFrame plane_frame(const Plane& plane) {
  const Vec3 n = plane.normal.normalized();
  const Vec3 probe = n + n;  // any point on the normal side
  const Vec3 origin = Vec3::Zero();
  const Vec3 views[] = {probe};
  return make_local_frame(origin, views);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

Vec3 Texture::eval(double s, double t) const {
  Vec3 c = base;
  for (const Wave& w : waves) c += w.amplitude * std::sin(w.freq_s * s + w.freq_t * t + w.phase);
  return c;
}

Texture Texture::random(std::uint64_t seed, int wave_count, double amplitude) {
  auto rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> freq(2.0, 12.0), phase(0.0, 2.0 * kPi),
      unit(-1.0, 1.0), base(0.35, 0.65);
  Texture tex;
  tex.base = Vec3(base(rng), base(rng), base(rng));
  for (int i = 0; i < wave_count; ++i) {
    Wave w;
    w.freq_s = freq(rng) * (unit(rng) < 0 ? -1 : 1);
    w.freq_t = freq(rng) * (unit(rng) < 0 ? -1 : 1);
    w.phase = phase(rng);
    w.amplitude = amplitude / wave_count * Vec3(unit(rng), unit(rng), unit(rng));
    tex.waves.push_back(w);
  }
  return tex;
}

PinholeCamera default_camera(int size, double focal) {
  PinholeCamera cam;
  cam.fx = cam.fy = focal;
  cam.cx = cam.cy = (size - 1) / 2.0;
  cam.width = cam.height = size;
  return cam;
}

RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  Eigen::Quaterniond q(r);
  q.normalize();
  return RigidPose(q, -(r * eye));
}

std::vector<RigCamera> orbit_rig(int n, double radius, double elevation, const Vec3& target,
                                 const PinholeCamera& camera) {
  std::vector<RigCamera> rig;
  for (int k = 0; k < n; ++k) {
    const double azimuth = 2.0 * kPi * k / n;
    const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                            std::cos(elevation) * std::sin(azimuth),
                                            std::sin(elevation));
    rig.push_back({camera, look_at(eye, target)});
  }
  return rig;
}

std::vector<RigCamera> polar_arc_rig(int n, double radius, double from, double to,
                                     const Vec3& target, const PinholeCamera& camera) {
  std::vector<RigCamera> rig;
  for (int k = 0; k < n; ++k) {
    const double angle = n == 1 ? from : from + (to - from) * k / (n - 1);
    const Vec3 eye = target + radius * Vec3(std::sin(angle), 0.0, std::cos(angle));
    rig.push_back({camera, look_at(eye, target, Vec3::UnitY())});
  }
  return rig;
}

Vec3 unproject(const PinholeCamera& camera, const RigidPose& pose, double u, double v) {
  const Vec3 d_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  return (pose.rotation_matrix().transpose() * d_cam).normalized();
}

std::optional<SurfaceHit> intersect(const Surface& surface, const Vec3& origin, const Vec3& direction) {
  if (const auto* plane = std::get_if<Plane>(&surface)) {
    const Vec3 n = plane->normal.normalized();
    const double denom = direction.dot(n);
    if (!(denom < 0.0)) return std::nullopt;  // parallel or back side
    const double t = (plane->center - origin).dot(n) / denom;
    if (!(t > 0.0)) return std::nullopt;
    const Vec3 p = origin + t * direction;
    const LocalFrame f = plane_frame(*plane);
    const double s = (p - plane->center).dot(f.x), tt = (p - plane->center).dot(f.y);
    if (std::abs(s) > plane->half_extent || std::abs(tt) > plane->half_extent) return std::nullopt;
    return SurfaceHit{p, n, s, tt};
  }
  const auto& sphere = std::get<Sphere>(surface);
  const Vec3 oc = origin - sphere.center;
  const double b = oc.dot(direction);
  const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - c * direction.squaredNorm();
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  double t = (-b - root) / direction.squaredNorm();
  if (!(t > 0.0)) t = (-b + root) / direction.squaredNorm();
  if (!(t > 0.0)) return std::nullopt;
  const Vec3 p = origin + t * direction;
  const Vec3 n = (p - sphere.center).normalized();
  return SurfaceHit{p, n, std::atan2(n.y(), n.x()), std::asin(std::clamp(n.z(), -1.0, 1.0))};
}

LocalFrame shading_frame(const SurfaceHit& hit) {
  const Vec3 views[] = {hit.point + hit.normal};
  return make_local_frame(hit.point, views);
}

Vec3 shade(const Shading& shading, const SurfaceHit& hit, const Vec3& viewpoint) {
  if (const auto* lam = std::get_if<Lambertian>(&shading)) return lam->albedo.eval(hit.s, hit.t);
  const auto& lin = std::get<AngularLinear>(shading);
  const SphericalAngles a = to_spherical(viewpoint, hit.point, shading_frame(hit));
  return lin.albedo.eval(hit.s, hit.t) +
         Vec3::Constant(lin.k_azi * a.azimuth + lin.k_pol * a.polar);
}

Image render(const AnalyticScene& scene, std::size_t view) {
  const RigCamera& rc = scene.rig.at(view);
  const double offset = view < scene.view_offsets.size() ? scene.view_offsets[view] : 0.0;
  const Vec3 eye = camera_center(rc.pose);
  Image image(rc.camera.width, rc.camera.height);
  for (int y = 0; y < rc.camera.height; ++y) {
    for (int x = 0; x < rc.camera.width; ++x) {
      const auto hit = intersect(scene.surface, eye, unproject(rc.camera, rc.pose, x, y));
      const Vec3 color = hit ? shade(scene.shading, *hit, eye) : scene.background;
      image.set_pixel(x, y, color + Vec3::Constant(offset));
    }
  }
  return image;
}

std::vector<SurfaceHit> sample_surface(const Surface& surface, std::size_t count, std::uint64_t seed,
                                       double inner_fraction) {
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<SurfaceHit> hits;
  hits.reserve(count);
  if (const auto* plane = std::get_if<Plane>(&surface)) {
    const LocalFrame f = plane_frame(*plane);
    const double h = plane->half_extent * inner_fraction;
    for (std::size_t i = 0; i < count; ++i) {
      const double s = h * unit(rng), t = h * unit(rng);
      hits.push_back({plane->center + s * f.x + t * f.y, f.z, s, t});
    }
    return hits;
  }
  const auto& sphere = std::get<Sphere>(surface);
  // Uniform on the cap of half-angle inner_fraction * pi/2 around +z.
  const double cos_max = std::cos(inner_fraction * kPi / 2.0);
  std::uniform_real_distribution<double> cz(cos_max, 1.0), az(-kPi, kPi);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = cz(rng), phi = az(rng), r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 n(r * std::cos(phi), r * std::sin(phi), z);
    hits.push_back({sphere.center + sphere.radius * n, n, std::atan2(n.y(), n.x()),
                    std::asin(std::clamp(n.z(), -1.0, 1.0))});
  }
  return hits;
}

SceneBundle build_bundle(const AnalyticScene& scene, std::size_t point_count, std::uint64_t seed) {
  SceneBundle bundle;
  std::vector<std::uint32_t> camera_ids;
  for (std::size_t k = 0; k < scene.rig.size(); ++k) {
    const RigCamera& rc = scene.rig[k];
    std::uint32_t cam_id = 0;
    for (const auto& [id, cam] : bundle.cameras) {
      if (cam == rc.camera) cam_id = id;
    }
    if (cam_id == 0) {
      cam_id = std::uint32_t(bundle.cameras.size() + 1);
      bundle.cameras.emplace(cam_id, rc.camera);
    }
    PosedView view;
    view.image = render(scene, k);
    view.camera = rc.camera;
    view.pose = rc.pose;
    view.path_index = int(k);
    view.image_id = std::uint32_t(k + 1);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu.ppm", k);
    view.name = name;
    bundle.views.push_back(std::move(view));
  }

  std::vector<std::uint32_t> next_2d(scene.rig.size(), 0);
  const auto hits = sample_surface(scene.surface, point_count, seed);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    SparsePoint p;
    p.id = i + 1;
    p.xyz = hits[i].point;
    const Vec3 albedo = shade(scene.shading, hits[i], hits[i].point + hits[i].normal);
    for (int c = 0; c < 3; ++c) {
      p.rgb[std::size_t(c)] = std::uint8_t(std::lround(std::clamp(albedo[c], 0.0, 1.0) * 255.0));
    }
    for (std::size_t k = 0; k < bundle.views.size(); ++k) {
      const PosedView& v = bundle.views[k];
      if ((camera_center(v.pose) - hits[i].point).dot(hits[i].normal) <= 0.0) continue;
      if (!project(hits[i].point, v)) continue;
      p.track.push_back({v.image_id, next_2d[k]++});
    }
    bundle.points.push_back(std::move(p));
  }
  bundle.validate();
  return bundle;
}

void export_bundle(const SceneBundle& bundle, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "sparse");
  fs::create_directories(dir / "images");

  std::map<std::uint32_t, std::size_t> slot;
  std::vector<ImageRecord> records;
  for (const PosedView& v : bundle.views) {
    std::uint32_t cam_id = 0;
    for (const auto& [id, cam] : bundle.cameras) {
      if (cam == v.camera) cam_id = id;
    }
    if (cam_id == 0) throw ColmapError("view " + v.name + " has no matching camera");
    slot[v.image_id] = records.size();
    records.push_back({v.image_id, v.pose, cam_id, v.name, {}, false});
    write_ppm(dir / "images" / v.name, v.image);
  }

  std::vector<SparsePoint> points = bundle.points;
  std::sort(points.begin(), points.end(),
            [](const SparsePoint& a, const SparsePoint& b) { return a.id < b.id; });
  for (SparsePoint& p : points) {
    for (TrackElement& t : p.track) {
      ImageRecord& rec = records.at(slot.at(t.image_id));
      const PosedView& view = bundle.views[slot.at(t.image_id)];
      const auto px = project(p.xyz, view);
      t.point2d_index = std::uint32_t(rec.points2d.size());
      rec.points2d.push_back({px ? px->u : -1.0, px ? px->v : -1.0, p.id});
    }
  }
  write_cameras_binary(dir / "sparse" / "cameras.bin", bundle.cameras);
  write_images_binary(dir / "sparse" / "images.bin", records);
  write_points3d_binary(dir / "sparse" / "points3D.bin", points);
}

}  // namespace nqa::fixtures
