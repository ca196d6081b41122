// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "nqa/fixtures.hpp"
#include "nqa/pnsg.hpp"

namespace nqa {
namespace {

constexpr double kPi = std::numbers::pi;

// Ray seen from the given angles at distance 2 in the canonical frame.
ObservationRay ray_at(double azimuth, double polar, const Vec3& value, int path_index = 0) {
  ObservationRay r;
  r.viewpoint = 2.0 * from_spherical({azimuth, polar}, LocalFrame{});
  r.pixel_value = value;
  r.azimuth = azimuth;
  r.polar = polar;
  r.path_index = path_index;
  return r;
}

PointObservations random_observations(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> az(-kPi, kPi), pol(0.05, kPi - 0.05), val(0.0, 1.0);
  PointObservations obs;
  for (int i = 0; i < n; ++i) {
    obs.rays.push_back(ray_at(az(rng), pol(rng), Vec3(val(rng), val(rng), val(rng)), i));
  }
  return obs;
}

TEST(NsgTest, IdenticalValuesGiveZero) {
  const auto s = nsg(ray_at(0.1, 0.5, Vec3(0.3, 0.3, 0.3)), ray_at(0.7, 0.9, Vec3(0.3, 0.3, 0.3)),
                     Vec3::Zero());
  ASSERT_TRUE(s);
  EXPECT_EQ(s->gradient, Vec3::Zero());
}

TEST(NsgTest, DirectSubstitution) {
  // Two viewpoints 0.3 rad apart in the equatorial plane.
  const auto s = nsg(ray_at(0.0, kPi / 2, Vec3(0.8, 0.4, 0.2)), ray_at(0.3, kPi / 2, Vec3(0.2, 0.4, 0.8)),
                     Vec3::Zero());
  ASSERT_TRUE(s);
  EXPECT_LT((s->gradient - Vec3(2.0, 0.0, -2.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s->mid_azimuth, 0.15, 1e-15);
  EXPECT_NEAR(s->mid_polar, kPi / 2, 1e-15);
}

TEST(NsgTest, CoincidentViewpointsAreRejected) {
  const auto a = ray_at(0.4, 1.0, Vec3(1, 0, 0));
  EXPECT_FALSE(nsg(a, a, Vec3::Zero()));
  EXPECT_FALSE(nsg(a, ray_at(0.4 + 5e-7, 1.0, Vec3::Zero()), Vec3::Zero()));
}

TEST(NsgTest, MidAzimuthAcrossTheCut) {
  const auto s = nsg(ray_at(kPi - 0.1, 1.0, Vec3::Zero()), ray_at(-kPi + 0.1, 1.0, Vec3::Ones()),
                     Vec3::Zero());
  ASSERT_TRUE(s);
  EXPECT_NEAR(std::abs(s->mid_azimuth), kPi, 1e-12);
  EXPECT_LT(s->mid_azimuth, kPi);
}

TEST(NsgPropertyTest, AntisymmetryLinearityAndShiftInvariance) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> scale(-3.0, 3.0), shift(-0.5, 0.5);
  for (int trial = 0; trial < 500; ++trial) {
    const PointObservations obs = random_observations(rng, 2);
    const auto& a = obs.rays[0];
    const auto& b = obs.rays[1];
    const auto ab = nsg(a, b, Vec3::Zero());
    const auto ba = nsg(b, a, Vec3::Zero());
    ASSERT_TRUE(ab && ba);
    EXPECT_EQ(ab->gradient, -ba->gradient);

    const double c = scale(rng);
    ObservationRay as = a, bs = b;
    as.pixel_value *= c;
    bs.pixel_value *= c;
    const auto scaled = nsg(as, bs, Vec3::Zero());
    EXPECT_LT((scaled->gradient - c * ab->gradient).norm(), 1e-12 * (1 + ab->gradient.norm()));
    // Powers of two scale without rounding.
    as.pixel_value = a.pixel_value * 4.0;
    bs.pixel_value = b.pixel_value * 4.0;
    EXPECT_EQ(nsg(as, bs, Vec3::Zero())->gradient, 4.0 * ab->gradient);

    const Vec3 offset = Vec3::Constant(shift(rng));
    as.pixel_value = a.pixel_value + offset;
    bs.pixel_value = b.pixel_value + offset;
    EXPECT_LT((nsg(as, bs, Vec3::Zero())->gradient - ab->gradient).norm(), 1e-12);
  }
}

TEST(BinIndexTest, BoundaryGoesToLowerBin) {
  EXPECT_EQ(bin_index(0.0, 0.0, kPi, 4), 0);
  EXPECT_EQ(bin_index(kPi / 2, 0.0, kPi, 4), 1);
  EXPECT_EQ(bin_index(kPi / 2 + 1e-12, 0.0, kPi, 4), 2);
  EXPECT_EQ(bin_index(kPi, 0.0, kPi, 4), 3);
  EXPECT_EQ(bin_index(-kPi, -kPi, kPi, 8), 0);
  EXPECT_EQ(bin_index(0.0, -kPi, kPi, 2), 0);
}

TEST(BinRaysTest, SingleBinSortedByAzimuth) {
  PointObservations obs;
  obs.rays = {ray_at(0.5, 1.0, Vec3::Zero(), 0), ray_at(-1.0, 2.0, Vec3::Zero(), 1),
              ray_at(2.0, 0.3, Vec3::Zero(), 2)};
  const BinnedRays b = bin_rays(obs, 1);
  ASSERT_EQ(b.azimuthal.size(), 1u);
  ASSERT_EQ(b.azimuthal[0].size(), 3u);
  EXPECT_EQ(b.azimuthal[0][0].path_index, 1);
  EXPECT_EQ(b.azimuthal[0][1].path_index, 0);
  EXPECT_EQ(b.azimuthal[0][2].path_index, 2);
  EXPECT_EQ(b.polar[0][0].path_index, 2);  // sorted by polar
}

TEST(BinRaysTest, EqualAnglesBreakTiesByPathIndex) {
  PointObservations obs;
  obs.rays = {ray_at(0.5, 1.0, Vec3::Zero(), 7), ray_at(0.5, 1.2, Vec3::Zero(), 3)};
  const BinnedRays b = bin_rays(obs, 1);
  EXPECT_EQ(b.azimuthal[0][0].path_index, 3);
  EXPECT_EQ(b.azimuthal[0][1].path_index, 7);
}

TEST(BinRaysPropertyTest, ConservesRaysAndSortsEachBin) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = int(rng() % 30), bins = 1 + int(rng() % 9);
    const PointObservations obs = random_observations(rng, n);
    const BinnedRays b = bin_rays(obs, bins);
    std::vector<int> seen_azi, seen_pol;
    for (int i = 0; i < bins; ++i) {
      const auto& azi = b.azimuthal[std::size_t(i)];
      const auto& pol = b.polar[std::size_t(i)];
      for (std::size_t j = 0; j < azi.size(); ++j) {
        seen_azi.push_back(azi[j].path_index);
        EXPECT_EQ(bin_index(azi[j].polar, 0, kPi, bins), i);
        if (j) EXPECT_LE(azi[j - 1].azimuth, azi[j].azimuth);
      }
      for (std::size_t j = 0; j < pol.size(); ++j) {
        seen_pol.push_back(pol[j].path_index);
        EXPECT_EQ(bin_index(pol[j].azimuth, -kPi, kPi, bins), i);
        if (j) EXPECT_LE(pol[j - 1].polar, pol[j].polar);
      }
    }
    std::sort(seen_azi.begin(), seen_azi.end());
    std::sort(seen_pol.begin(), seen_pol.end());
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[std::size_t(i)] = i;
    EXPECT_EQ(seen_azi, all);
    EXPECT_EQ(seen_pol, all);
  }
}

TEST(NsgAxisTest, CountsAndOrder) {
  std::vector<std::vector<ObservationRay>> bins(3);
  bins[0] = {ray_at(0.1, 1.0, Vec3(0.1, 0, 0))};
  bins[1] = {ray_at(0.1, 1.0, Vec3(0.1, 0, 0)), ray_at(0.4, 1.0, Vec3(0.4, 0, 0)),
             ray_at(0.9, 1.0, Vec3(0.2, 0, 0))};
  const auto out = nsg_axis(bins, Vec3::Zero(), GradientAxis::kAzimuthal);
  EXPECT_TRUE(out[0].empty());
  EXPECT_TRUE(out[2].empty());
  ASSERT_EQ(out[1].size(), 2u);
  const auto first = nsg(bins[1][0], bins[1][1], Vec3::Zero());
  const auto second = nsg(bins[1][1], bins[1][2], Vec3::Zero());
  EXPECT_EQ(out[1][0].gradient, first->gradient);
  EXPECT_EQ(out[1][1].gradient, second->gradient);

  PnsgConfig wrap;
  wrap.wrap_azimuth = true;
  EXPECT_EQ(nsg_axis(bins, Vec3::Zero(), GradientAxis::kAzimuthal, wrap)[1].size(), 3u);
  EXPECT_EQ(nsg_axis(bins, Vec3::Zero(), GradientAxis::kPolar, wrap)[1].size(), 2u);
}

TEST(NsgAxisTest, ConstantColorGivesZeros) {
  std::mt19937_64 rng(23);
  PointObservations obs = random_observations(rng, 25);
  for (auto& r : obs.rays) r.pixel_value = Vec3(0.2, 0.6, 0.9);
  const PnsgFeature f = point_pnsg({1, obs});
  EXPECT_GT(f.sample_count(), 0u);
  for (int axis = 0; axis < 2; ++axis) {
    for (const auto& bin : f.axis(GradientAxis(axis))) {
      for (const auto& s : bin) EXPECT_EQ(s.gradient, Vec3::Zero());
    }
  }
}

TEST(PnsgPropertyTest, SampleCountIsSumOfBinSizesMinusOne) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    PnsgConfig config;
    config.bins = 1 + int(rng() % 8);
    const PointObservations obs = random_observations(rng, int(rng() % 40));
    const BinnedRays b = bin_rays(obs, config.bins);
    const PnsgFeature f = point_pnsg({0, obs}, config);
    for (int i = 0; i < config.bins; ++i) {
      const auto bi = std::size_t(i);
      EXPECT_EQ(f.azimuthal[bi].size(), std::max<std::size_t>(1, b.azimuthal[bi].size()) - 1);
      EXPECT_EQ(f.polar[bi].size(), std::max<std::size_t>(1, b.polar[bi].size()) - 1);
    }
  }
}

TEST(PnsgSceneTest, SinglePointTwoRaysLandsInTheRightBin) {
  PointObservations obs;
  obs.rays = {ray_at(0.1, kPi / 2 - 0.2, Vec3(0.8, 0.4, 0.2), 0),
              ray_at(0.4, kPi / 2 - 0.2, Vec3(0.2, 0.4, 0.8), 1)};
  const auto features = pnsg_scene(std::vector<SurfacePointObservations>{{5, obs}});
  ASSERT_EQ(features.size(), 1u);
  const PnsgFeature& f = features[0];
  EXPECT_EQ(f.point_id, 5u);
  // Polar pi/2 - 0.2 falls into bin 3 of 8; both azimuths into bin 4.
  for (int i = 0; i < 8; ++i) EXPECT_EQ(f.azimuthal[std::size_t(i)].size(), i == 3 ? 1u : 0u);
  EXPECT_EQ(f.polar[4].size(), 1u);
  const double angle = angular_disparity(obs.rays[0].viewpoint, obs.rays[1].viewpoint, Vec3::Zero());
  EXPECT_EQ(f.azimuthal[3][0].gradient, (obs.rays[0].pixel_value - obs.rays[1].pixel_value) / angle);
}

fixtures::AnalyticScene textured_orbit_scene(std::uint64_t seed) {
  fixtures::AnalyticScene scene;
  scene.shading = fixtures::AngularLinear{fixtures::Texture::random(seed), 0.2, 0.3};
  scene.rig = fixtures::orbit_rig(10, 3.0, 0.9);
  return scene;
}

void expect_bitwise_equal(const std::vector<PnsgFeature>& a, const std::vector<PnsgFeature>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].point_id, b[i].point_id);
    for (int axis = 0; axis < 2; ++axis) {
      const auto& x = a[i].axis(GradientAxis(axis));
      const auto& y = b[i].axis(GradientAxis(axis));
      ASSERT_EQ(x.size(), y.size());
      for (std::size_t k = 0; k < x.size(); ++k) {
        ASSERT_EQ(x[k].size(), y[k].size());
        for (std::size_t j = 0; j < x[k].size(); ++j) {
          EXPECT_EQ(x[k][j].gradient, y[k][j].gradient);
          EXPECT_EQ(x[k][j].mid_azimuth, y[k][j].mid_azimuth);
          EXPECT_EQ(x[k][j].mid_polar, y[k][j].mid_polar);
        }
      }
    }
  }
}

TEST(PnsgSceneTest, InvariantToViewAndPointOrder) {
  const SceneBundle bundle = fixtures::build_bundle(textured_orbit_scene(3), 40, 7);
  const auto reference = pnsg_scene(collect_observations(bundle.points, bundle.views));
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    auto views = bundle.views;
    auto points = bundle.points;
    std::shuffle(views.begin(), views.end(), rng);
    std::shuffle(points.begin(), points.end(), rng);
    expect_bitwise_equal(pnsg_scene(collect_observations(points, views)), reference);
  }
}

TEST(PnsgSceneTest, LambertianSceneHasVanishingGradients) {
  fixtures::AnalyticScene scene;
  scene.shading = fixtures::Lambertian{fixtures::Texture::constant(Vec3(0.25, 0.5, 0.75))};
  scene.rig = fixtures::orbit_rig(12, 3.0, 0.8);
  const SceneBundle bundle = fixtures::build_bundle(scene, 64, 3);
  const auto features = pnsg_scene(collect_observations(bundle.points, bundle.views));
  double worst = 0.0;
  std::size_t samples = 0;
  for (const auto& f : features) {
    samples += f.sample_count();
    for (int axis = 0; axis < 2; ++axis)
      for (const auto& bin : f.axis(GradientAxis(axis)))
        for (const auto& s : bin) worst = std::max(worst, s.gradient.cwiseAbs().maxCoeff());
  }
  EXPECT_GT(samples, 64u * 8u);
  EXPECT_LT(worst, 1e-6);
}

TEST(PnsgSceneTest, PolarSlopeIsRecoveredOnAnArc) {
  fixtures::AnalyticScene scene;
  scene.surface = fixtures::Plane{Vec3::Zero(), Vec3::UnitZ(), 0.5};
  scene.shading = fixtures::AngularLinear{fixtures::Texture::constant(Vec3::Constant(0.2)), 0.0, 0.5};
  scene.rig = fixtures::polar_arc_rig(16, 3.0, -1.0, 1.0);
  const SceneBundle bundle = fixtures::build_bundle(scene, 32, 4);
  const auto features = pnsg_scene(collect_observations(bundle.points, bundle.views));
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : features) {
    for (const auto& bin : f.polar) {
      for (const auto& s : bin) {
        // Sorted by increasing polar angle, so each pair sees the slope negated.
        EXPECT_LT(s.gradient.x(), 0.0);
        sum += s.gradient.x();
        ++n;
      }
    }
  }
  ASSERT_GT(n, 32u * 10u);
  EXPECT_NEAR(-sum / double(n), 0.5, 0.025);
}

TEST(ResampleTest, ExactLengthEvenlySpacedIsPreserved) {
  std::vector<double> coords;
  std::vector<Vec3> values;
  for (int i = 0; i < 16; ++i) {
    coords.push_back(0.25 * i - 1.0);
    values.push_back(Vec3(i, -i, i * i));
  }
  const auto out = resample_sequence(coords, values, 16);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(out[std::size_t(i)], values[std::size_t(i)]);
}

TEST(ResampleTest, SingleValueFillsAndCoincidentCoordinatesUseIndices) {
  const std::vector<double> one{0.3};
  const std::vector<Vec3> v1{Vec3(1, 2, 3)};
  for (const Vec3& v : resample_sequence(one, v1, 5)) EXPECT_EQ(v, Vec3(1, 2, 3));

  const std::vector<double> same{0.7, 0.7, 0.7};
  const std::vector<Vec3> v3{Vec3::Zero(), Vec3::Ones(), Vec3::Constant(4)};
  const auto out = resample_sequence(same, v3, 5);
  EXPECT_EQ(out[1], Vec3::Constant(0.5));
  EXPECT_EQ(out[4], Vec3::Constant(4));
}

// Resample onto a fixed grid and interpolate back at the original coordinates:
// for piecewise-linear data the round trip error is bounded by the sequence's
// Lipschitz constant times the coarser spacing.
TEST(ResamplePropertyTest, RoundTripErrorWithinLipschitzBound) {
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + int(rng() % 30), length = 2 + int(rng() % 24);
    std::vector<double> coords(static_cast<std::size_t>(m));
    for (double& c : coords) c = 3.0 * u(rng);
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    if (coords.size() < 2) continue;
    std::vector<Vec3> values;
    for (double c : coords) values.push_back(Vec3(std::sin(3 * c), c * c, u(rng)));
    double lipschitz = 0.0, max_gap = 0.0;
    for (std::size_t i = 1; i < coords.size(); ++i) {
      const double gap = coords[i] - coords[i - 1];
      max_gap = std::max(max_gap, gap);
      lipschitz = std::max(lipschitz, (values[i] - values[i - 1]).cwiseAbs().maxCoeff() / gap);
    }
    const auto grid_values = resample_sequence(coords, values, length);
    const double lo = coords.front(), hi = coords.back(), step = (hi - lo) / (length - 1);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double pos = std::min((coords[i] - lo) / step, double(length - 1));
      const auto k = std::min<std::size_t>(std::size_t(pos), std::size_t(length - 2));
      const double w = pos - double(k);
      const Vec3 back = (1 - w) * grid_values[k] + w * grid_values[k + 1];
      EXPECT_LE((back - values[i]).cwiseAbs().maxCoeff(),
                lipschitz * std::max(max_gap, step) + 1e-12);
    }
  }
}

TEST(ToTensorTest, ShapeMaskAndValues) {
  PnsgFeature f;
  f.azimuthal.resize(2);
  f.polar.resize(2);
  for (int i = 0; i < 4; ++i) f.azimuthal[1].push_back({Vec3(i, 0, 0), 0.1 * i, 1.0});
  f.polar[0].push_back({Vec3(5, 6, 7), 0.0, 0.4});
  const PnsgTensor t = to_tensor(f, 4);
  EXPECT_EQ(t.values.size(), 2u * 2 * 4 * 3);
  EXPECT_FALSE(t.present(0, 0));
  EXPECT_TRUE(t.present(0, 1));
  EXPECT_TRUE(t.present(1, 0));
  EXPECT_FALSE(t.present(1, 1));
  for (int p = 0; p < 4; ++p) {
    EXPECT_NEAR(t.at(0, 1, p, 0), p, 1e-12);
    EXPECT_EQ(t.at(0, 0, p, 0), 0.0);
    EXPECT_EQ(t.at(1, 0, p, 2), 7.0);
    EXPECT_EQ(t.at(1, 1, p, 1), 0.0);
  }
}

TEST(ToTensorTest, WrappedSampleKeepsCoordinatesIncreasing) {
  PnsgFeature f;
  f.azimuthal.resize(1);
  f.polar.resize(1);
  f.azimuthal[0] = {{Vec3::Zero(), 2.0, 1}, {Vec3::Ones(), 2.8, 1}, {Vec3::Constant(2), -3.0, 1}};
  const PnsgTensor t = to_tensor(f, 3);
  EXPECT_EQ(t.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(t.at(0, 0, 2, 0), 2.0);
}

TEST(PnsgDumpTest, RoundTripAndHeaderChecks) {
  const auto path = std::filesystem::temp_directory_path() / "nqa_pnsg_dump.bin";
  const SceneBundle bundle = fixtures::build_bundle(textured_orbit_scene(5), 6, 2);
  const PnsgConfig config{4, 6};
  std::vector<PnsgRecord> records;
  for (const auto& f : pnsg_scene(collect_observations(bundle.points, bundle.views), config)) {
    records.push_back({f.point_id, f.xyz, to_tensor(f, config.resample_length)});
  }
  write_pnsg_dump(path, records, 4, 6, 3);
  const PnsgDump dump = read_pnsg_dump(path);
  EXPECT_EQ(dump.flags, 3u);
  EXPECT_EQ(dump.bins, 4);
  EXPECT_EQ(dump.length, 6);
  ASSERT_EQ(dump.records.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(dump.records[i].point_id, records[i].point_id);
    EXPECT_EQ(dump.records[i].xyz, records[i].xyz);
    EXPECT_EQ(dump.records[i].tensor, records[i].tensor);
  }

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  EXPECT_EQ(bytes.substr(0, 8), "NQAPNSG1");
  auto rewrite = [&](const std::string& b) {
    std::ofstream(path, std::ios::binary).write(b.data(), std::streamsize(b.size()));
  };
  rewrite("NQAPNSG2" + bytes.substr(8));
  EXPECT_THROW(read_pnsg_dump(path), PnsgDumpError);
  rewrite(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_pnsg_dump(path), PnsgDumpError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace nqa
