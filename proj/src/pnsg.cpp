// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/pnsg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

namespace nqa {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  return a >= kPi ? a - 2.0 * kPi : a;
}

}  // namespace

void PnsgConfig::validate() const {
  if (bins < 1) throw std::invalid_argument("bin count must be at least 1");
  if (resample_length < 1) throw std::invalid_argument("resample length must be at least 1");
  if (!(min_angle >= 0.0)) throw std::invalid_argument("minimum angle must be non-negative");
}

std::optional<NsgSample> nsg(const ObservationRay& a, const ObservationRay& b, const Vec3& origin,
                             double min_angle) {
  const double angle = angular_disparity(a.viewpoint, b.viewpoint, origin);
  if (!(angle > min_angle)) return std::nullopt;
  NsgSample s;
  s.gradient = (a.pixel_value - b.pixel_value) / angle;
  const double sx = std::cos(a.azimuth) + std::cos(b.azimuth);
  const double sy = std::sin(a.azimuth) + std::sin(b.azimuth);
  s.mid_azimuth = (sx == 0.0 && sy == 0.0) ? a.azimuth : wrap_angle(std::atan2(sy, sx));
  s.mid_polar = 0.5 * (a.polar + b.polar);
  return s;
}

int bin_index(double angle, double lo, double hi, int bins) {
  const double width = (hi - lo) / bins;
  const int idx = int(std::ceil((angle - lo) / width)) - 1;
  return std::clamp(idx, 0, bins - 1);
}

BinnedRays bin_rays(const PointObservations& obs, int bins) {
  if (bins < 1) throw std::invalid_argument("bin count must be at least 1");
  BinnedRays out;
  out.azimuthal.resize(std::size_t(bins));
  out.polar.resize(std::size_t(bins));
  for (const ObservationRay& ray : obs.rays) {
    out.azimuthal[std::size_t(bin_index(ray.polar, 0.0, kPi, bins))].push_back(ray);
    out.polar[std::size_t(bin_index(ray.azimuth, -kPi, kPi, bins))].push_back(ray);
  }
  for (auto& bin : out.azimuthal) {
    std::stable_sort(bin.begin(), bin.end(), [](const ObservationRay& a, const ObservationRay& b) {
      return a.azimuth != b.azimuth ? a.azimuth < b.azimuth : a.path_index < b.path_index;
    });
  }
  for (auto& bin : out.polar) {
    std::stable_sort(bin.begin(), bin.end(), [](const ObservationRay& a, const ObservationRay& b) {
      return a.polar != b.polar ? a.polar < b.polar : a.path_index < b.path_index;
    });
  }
  return out;
}

std::vector<std::vector<NsgSample>> nsg_axis(const std::vector<std::vector<ObservationRay>>& bins,
                                             const Vec3& origin, GradientAxis axis,
                                             const PnsgConfig& config) {
  std::vector<std::vector<NsgSample>> out(bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& bin = bins[i];
    for (std::size_t j = 0; j + 1 < bin.size(); ++j) {
      if (auto s = nsg(bin[j], bin[j + 1], origin, config.min_angle)) out[i].push_back(*s);
    }
    if (config.wrap_azimuth && axis == GradientAxis::kAzimuthal && bin.size() >= 3) {
      if (auto s = nsg(bin.back(), bin.front(), origin, config.min_angle)) out[i].push_back(*s);
    }
  }
  return out;
}

std::size_t PnsgFeature::sample_count() const {
  std::size_t n = 0;
  for (const auto& b : azimuthal) n += b.size();
  for (const auto& b : polar) n += b.size();
  return n;
}

PnsgFeature point_pnsg(const SurfacePointObservations& point, const PnsgConfig& config) {
  config.validate();
  const BinnedRays binned = bin_rays(point.obs, config.bins);
  PnsgFeature f;
  f.point_id = point.point_id;
  f.xyz = point.obs.origin;
  f.azimuthal = nsg_axis(binned.azimuthal, point.obs.origin, GradientAxis::kAzimuthal, config);
  f.polar = nsg_axis(binned.polar, point.obs.origin, GradientAxis::kPolar, config);
  return f;
}

std::vector<PnsgFeature> pnsg_scene(std::span<const SurfacePointObservations> points,
                                    const PnsgConfig& config) {
  std::vector<PnsgFeature> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(point_pnsg(p, config));
  std::stable_sort(out.begin(), out.end(),
                   [](const PnsgFeature& a, const PnsgFeature& b) { return a.point_id < b.point_id; });
  return out;
}

std::vector<SurfacePointObservations> collect_observations(std::span<const SparsePoint> points,
                                                           std::span<const PosedView> views,
                                                           bool use_tracks) {
  std::vector<SurfacePointObservations> out;
  out.reserve(points.size());
  for (const SparsePoint& p : points) {
    SurfacePointObservations s;
    s.point_id = p.id;
    if (use_tracks) {
      const auto ids = p.track_image_ids();
      s.obs = observe_point(p.xyz, views, std::span<const std::uint32_t>(ids));
    } else {
      s.obs = observe_point(p.xyz, views, std::nullopt);
    }
    out.push_back(std::move(s));
  }
  return out;
}

PnsgTensor::PnsgTensor(int bins_, int length_) : bins(bins_), length(length_) {
  if (bins < 1 || length < 1) throw std::invalid_argument("tensor extents must be positive");
  values.assign(std::size_t(2 * bins * length * 3), 0.0);
  mask.assign(std::size_t(2 * bins), 0);
}

std::vector<Vec3> resample_sequence(std::span<const double> coords, std::span<const Vec3> values,
                                    int length) {
  if (coords.size() != values.size()) throw std::invalid_argument("coordinate/value size mismatch");
  if (values.empty()) throw std::invalid_argument("cannot resample an empty sequence");
  if (length < 1) throw std::invalid_argument("resample length must be at least 1");
  const std::size_t m = values.size();
  std::vector<Vec3> out(std::size_t(length), values.front());
  if (m == 1) return out;

  // Interpolation abscissae: the coordinates, or indices when they collapse.
  std::vector<double> x(coords.begin(), coords.end());
  const double span = x.back() - x.front();
  if (!(span > 1e-12 * std::max(1.0, std::abs(x.front())))) {
    for (std::size_t i = 0; i < m; ++i) x[i] = double(i);
  }
  const double lo = x.front(), hi = x.back();
  for (int k = 0; k < length; ++k) {
    double t = length == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (length - 1);
    if (k == length - 1 && length > 1) t = hi;
    const auto upper = std::upper_bound(x.begin(), x.end(), t);
    std::size_t j = std::size_t(std::max<std::ptrdiff_t>(0, (upper - x.begin()) - 1));
    j = std::min(j, m - 2);
    const double gap = x[j + 1] - x[j];
    const double w = gap > 0.0 ? std::clamp((t - x[j]) / gap, 0.0, 1.0) : 0.0;
    out[std::size_t(k)] = (1.0 - w) * values[j] + w * values[j + 1];
  }
  return out;
}

PnsgTensor to_tensor(const PnsgFeature& feature, int length) {
  const int bins = int(feature.azimuthal.size());
  if (bins < 1 || feature.polar.size() != feature.azimuthal.size()) {
    throw std::invalid_argument("feature has inconsistent bin counts");
  }
  PnsgTensor t(bins, length);
  for (int axis = 0; axis < 2; ++axis) {
    const auto& bin_list = feature.axis(GradientAxis(axis));
    for (int b = 0; b < bins; ++b) {
      const auto& samples = bin_list[std::size_t(b)];
      if (samples.empty()) continue;
      std::vector<double> coords;
      std::vector<Vec3> grads;
      for (const NsgSample& s : samples) {
        double c = axis == 0 ? s.mid_azimuth : s.mid_polar;
        // A closing pair crosses the azimuth cut; keep coordinates increasing.
        if (axis == 0 && !coords.empty() && c < coords.back()) c += 2.0 * kPi;
        coords.push_back(c);
        grads.push_back(s.gradient);
      }
      const auto row = resample_sequence(coords, grads, length);
      for (int p = 0; p < length; ++p) {
        for (int c = 0; c < 3; ++c) t.values[t.offset(axis, b, p, c)] = row[std::size_t(p)][c];
      }
      t.mask[std::size_t(axis * bins + b)] = 1;
    }
  }
  return t;
}

// --- dump container ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'Q', 'A', 'P', 'N', 'S', 'G', '1'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& label) {
  if (in.size() - pos < sizeof(T)) {
    throw PnsgDumpError(label + ": truncated at byte offset " + std::to_string(pos));
  }
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_pnsg_dump(const std::filesystem::path& path, std::span<const PnsgRecord> records,
                     int bins, int length, std::uint32_t flags) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kPnsgDumpVersion);
  put<std::uint32_t>(out, flags);
  put<std::uint32_t>(out, std::uint32_t(bins));
  put<std::uint32_t>(out, std::uint32_t(length));
  put<std::uint64_t>(out, records.size());
  for (const PnsgRecord& r : records) {
    if (r.tensor.bins != bins || r.tensor.length != length) {
      throw PnsgDumpError("record " + std::to_string(r.point_id) + " has mismatched tensor shape");
    }
    put<std::uint64_t>(out, r.point_id);
    for (int k = 0; k < 3; ++k) put<double>(out, r.xyz[k]);
    for (double v : r.tensor.values) put<double>(out, v);
    for (std::uint8_t m : r.tensor.mask) put<std::uint8_t>(out, m);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PnsgDumpError("cannot write " + path.string());
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw PnsgDumpError("write failed for " + path.string());
}

PnsgDump read_pnsg_dump(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PnsgDumpError("cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string label = path.string();
  if (in.size() < 16 || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw PnsgDumpError(label + ": bad magic, not a PNSG dump");
  }
  std::size_t pos = 8;
  const auto version = take<std::uint32_t>(in, pos, label);
  if (version != kPnsgDumpVersion) {
    throw PnsgDumpError(label + ": unsupported version " + std::to_string(version));
  }
  PnsgDump dump;
  dump.flags = take<std::uint32_t>(in, pos, label);
  dump.bins = int(take<std::uint32_t>(in, pos, label));
  dump.length = int(take<std::uint32_t>(in, pos, label));
  const auto count = take<std::uint64_t>(in, pos, label);
  if (dump.bins < 1 || dump.length < 1 || dump.bins > 4096 || dump.length > 4096) {
    throw PnsgDumpError(label + ": implausible tensor shape");
  }
  const std::size_t record_bytes =
      8 + 24 + std::size_t(2 * dump.bins * dump.length * 3) * 8 + std::size_t(2 * dump.bins);
  if (count != (in.size() - pos) / record_bytes || (in.size() - pos) % record_bytes != 0) {
    throw PnsgDumpError(label + ": record count disagrees with payload length");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    PnsgRecord r;
    r.point_id = take<std::uint64_t>(in, pos, label);
    for (int k = 0; k < 3; ++k) r.xyz[k] = take<double>(in, pos, label);
    r.tensor = PnsgTensor(dump.bins, dump.length);
    for (double& v : r.tensor.values) v = take<double>(in, pos, label);
    for (std::uint8_t& m : r.tensor.mask) m = take<std::uint8_t>(in, pos, label);
    dump.records.push_back(std::move(r));
  }
  return dump;
}

}  // namespace nqa
