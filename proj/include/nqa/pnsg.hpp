// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Normalized spherical gradients: per surface point, pixel differences between
// angularly adjacent observations divided by their angular separation, binned
// along the azimuthal and polar axes and resampled to a fixed-shape tensor.

#ifndef NQA_PNSG_HPP
#define NQA_PNSG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nqa/colmap.hpp"
#include "nqa/geometry.hpp"

namespace nqa {

struct PnsgConfig {
  int bins = 8;
  int resample_length = 16;
  // Pairs closer than this (radians) are skipped.
  double min_angle = 1e-6;
  // Close the azimuthal loop with a last->first pair in bins of >= 3 rays.
  bool wrap_azimuth = false;

  void validate() const;
};

enum class GradientAxis : int { kAzimuthal = 0, kPolar = 1 };

struct NsgSample {
  Vec3 gradient = Vec3::Zero();  // per radian, RGB
  double mid_azimuth = 0.0;
  double mid_polar = 0.0;
};

// A surface point with the rays that observe it.
struct SurfacePointObservations {
  std::uint64_t point_id = 0;
  PointObservations obs;
};

// (I(a) - I(b)) / angle(a, o, b); nullopt when the angle is below min_angle.
std::optional<NsgSample> nsg(const ObservationRay& a, const ObservationRay& b, const Vec3& origin,
                             double min_angle = 1e-6);

// Bin of `angle` among `bins` equal slices of [lo, hi]; a value on a shared
// boundary belongs to the lower bin.
int bin_index(double angle, double lo, double hi, int bins);

struct BinnedRays {
  // Bins over polar angle, each sorted by azimuth (then path index).
  std::vector<std::vector<ObservationRay>> azimuthal;
  // Bins over azimuth, each sorted by polar angle (then path index).
  std::vector<std::vector<ObservationRay>> polar;
};

BinnedRays bin_rays(const PointObservations& obs, int bins);

// Adjacent-pair gradients within each sorted bin.
std::vector<std::vector<NsgSample>> nsg_axis(const std::vector<std::vector<ObservationRay>>& bins,
                                             const Vec3& origin, GradientAxis axis,
                                             const PnsgConfig& config = {});

struct PnsgFeature {
  std::uint64_t point_id = 0;
  Vec3 xyz = Vec3::Zero();
  std::vector<std::vector<NsgSample>> azimuthal;
  std::vector<std::vector<NsgSample>> polar;

  const std::vector<std::vector<NsgSample>>& axis(GradientAxis a) const {
    return a == GradientAxis::kAzimuthal ? azimuthal : polar;
  }
  std::size_t sample_count() const;
};

PnsgFeature point_pnsg(const SurfacePointObservations& point, const PnsgConfig& config = {});

// Per-point features ordered by point id, independent of input order.
std::vector<PnsgFeature> pnsg_scene(std::span<const SurfacePointObservations> points,
                                    const PnsgConfig& config = {});

// Gathers observations for each point. With `use_tracks`, only the views in
// the point's COLMAP track are considered.
std::vector<SurfacePointObservations> collect_observations(std::span<const SparsePoint> points,
                                                           std::span<const PosedView> views,
                                                           bool use_tracks = true);

// Fixed-shape encoding: values[axis][bin][position][rgb] with a presence mask
// per (axis, bin).
struct PnsgTensor {
  int bins = 0;
  int length = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  PnsgTensor() = default;
  PnsgTensor(int bins, int length);
  std::size_t offset(int axis, int bin, int pos, int channel) const {
    return ((std::size_t(axis) * std::size_t(bins) + std::size_t(bin)) * std::size_t(length) +
            std::size_t(pos)) * 3 + std::size_t(channel);
  }
  double at(int axis, int bin, int pos, int channel) const {
    return values[offset(axis, bin, pos, channel)];
  }
  bool present(int axis, int bin) const { return mask[std::size_t(axis * bins + bin)] != 0; }
  bool operator==(const PnsgTensor&) const = default;
};

// Each bin's samples are linearly interpolated against their mid-angle
// coordinate onto `length` evenly spaced positions spanning the first to the
// last sample. One sample fills the row; no samples leave zeros and mask 0.
PnsgTensor to_tensor(const PnsgFeature& feature, int length);

// Piecewise-linear resampling used by to_tensor, exposed for testing. Falls
// back to index spacing when all coordinates coincide.
std::vector<Vec3> resample_sequence(std::span<const double> coords, std::span<const Vec3> values,
                                    int length);

// Feature dump container, little-endian:
//   char magic[8] = "NQAPNSG1"; u32 version; u32 flags  (16 bytes)
//   u32 bins; u32 length; u64 count
//   count x { u64 point_id; f64 xyz[3]; f64 values[2*bins*length*3]; u8 mask[2*bins] }
struct PnsgRecord {
  std::uint64_t point_id = 0;
  Vec3 xyz = Vec3::Zero();
  PnsgTensor tensor;
};

inline constexpr std::uint32_t kPnsgDumpVersion = 1;

class PnsgDumpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_pnsg_dump(const std::filesystem::path& path, std::span<const PnsgRecord> records,
                     int bins, int length, std::uint32_t flags = 0);

struct PnsgDump {
  std::uint32_t flags = 0;
  int bins = 0;
  int length = 0;
  std::vector<PnsgRecord> records;
};
PnsgDump read_pnsg_dump(const std::filesystem::path& path);

}  // namespace nqa

#endif  // NQA_PNSG_HPP
