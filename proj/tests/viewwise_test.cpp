// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "nqa/grad_check.hpp"
#include "nqa/viewwise.hpp"

namespace nqa {
namespace {

Image gray_image(int w, int h, const std::function<double(int, int)>& f) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = f(x, y);
      img.set_pixel(x, y, Vec3(v, v, v));
    }
  }
  return img;
}

Image uniform_noise_image(int w, int h, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  return gray_image(w, h, [&](int, int) { return d(rng); });
}

TEST(FitGgd, GaussianSamplesGiveShapeTwo) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.5);
    std::vector<double> x(20000);
    for (double& v : x) v = n(rng);
    const GgdFit fit = fit_ggd(x);
    EXPECT_GE(fit.shape, 1.8);
    EXPECT_LE(fit.shape, 2.2);
    EXPECT_NEAR(fit.variance, 2.25, 0.1);
  }
}

TEST(FitGgd, LaplaceSamplesGiveShapeOne) {
  // Laplace is the shape-1 member of the family.
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> x(50000);
  for (double& v : x) v = sign(rng) ? e(rng) : -e(rng);
  EXPECT_NEAR(fit_ggd(x).shape, 1.0, 0.05);
}

TEST(FitGgd, DegenerateConvention) {
  const std::vector<double> zeros(10, 0.0);
  const GgdFit fit = fit_ggd(zeros);
  EXPECT_EQ(fit.shape, 2.0);
  EXPECT_EQ(fit.variance, 0.0);
}

TEST(FitAggd, AsymmetricGaussianHalves) {
  // Left half-normal scale 1 and right scale 2, each side chosen with
  // probability proportional to its scale: an asymmetric Gaussian whose mean
  // is (sr - sl) * sqrt(2 / pi).
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution right(2.0 / 3.0);
  std::vector<double> x(200000);
  for (double& v : x) v = right(rng) ? 2.0 * std::abs(n(rng)) : -std::abs(n(rng));
  const AggdFit fit = fit_aggd(x);
  EXPECT_NEAR(fit.shape, 2.0, 0.1);
  EXPECT_NEAR(fit.left_variance, 1.0, 0.03);
  EXPECT_NEAR(fit.right_variance, 4.0, 0.1);
  EXPECT_NEAR(fit.mean, std::sqrt(2.0 / std::numbers::pi), 0.03);
}

TEST(FitAggd, OneSidedAndZeroInputs) {
  const AggdFit zero = fit_aggd(std::vector<double>(5, 0.0));
  EXPECT_EQ(zero.shape, 2.0);
  EXPECT_EQ(zero.mean, 0.0);
  const AggdFit pos = fit_aggd(std::vector<double>{0.5, 1.0, 2.0, 0.0});
  EXPECT_TRUE(std::isfinite(pos.shape));
  EXPECT_EQ(pos.left_variance, 0.0);
  EXPECT_GT(pos.mean, 0.0);
}

TEST(Mscn, ConstantImageIsExactlyZero) {
  const std::vector<double> flat(32 * 24, 0.37);
  for (double v : mscn(flat, 32, 24)) EXPECT_EQ(v, 0.0);
  const NssFeatures f = nss_features(gray_image(32, 24, [](int, int) { return 0.37; }));
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(f[std::size_t(18 * s)], 2.0);
    EXPECT_EQ(f[std::size_t(18 * s + 1)], 0.0);
    for (int k = 0; k < 4; ++k) {
      const std::size_t o = std::size_t(18 * s + 2 + 4 * k);
      EXPECT_EQ(f[o], 2.0);
      EXPECT_EQ(f[o + 1], 0.0);
      EXPECT_EQ(f[o + 2], 0.0);
      EXPECT_EQ(f[o + 3], 0.0);
    }
  }
}

TEST(Mscn, MatchesBruteForceWindow) {
  // Direct 2-D evaluation of the normalized Gaussian window at interior and
  // border pixels.
  const int w = 20;
  const int h = 18;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<double> img(std::size_t(w * h));
  for (double& v : img) v = d(rng);
  const std::vector<double> m = mscn(img, w, h);
  const double sigma = 7.0 / 6.0;
  for (auto [x, y] : std::vector<std::pair<int, int>>{{0, 0}, {10, 9}, {19, 3}, {5, 17}}) {
    double wsum = 0.0, mu = 0.0, sq = 0.0;
    for (int dy = -3; dy <= 3; ++dy) {
      for (int dx = -3; dx <= 3; ++dx) {
        const int xi = x + dx, yi = y + dy;
        if (xi < 0 || xi >= w || yi < 0 || yi >= h) continue;
        const double wt = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        const double v = img[std::size_t(yi * w + xi)];
        wsum += wt;
        mu += wt * v;
        sq += wt * v * v;
      }
    }
    mu /= wsum;
    const double var = sq / wsum - mu * mu;
    const double expected = (img[std::size_t(y * w + x)] - mu) / (std::sqrt(var) + 1.0 / 255.0);
    EXPECT_NEAR(m[std::size_t(y * w + x)], expected, 1e-9) << x << "," << y;
  }
}

TEST(NssFeatures, WhiteNoiseGgdShapeNearGaussian) {
  // The moment-matching estimator applied to unit-variance white-noise
  // images, averaged over a seed ensemble.
  std::mt19937_64 rng(0);
  double total = 0.0;
  const int seeds = 8;
  for (int s = 0; s < seeds; ++s) {
    std::normal_distribution<double> n(0.0, 1.0);
    const Image img = gray_image(64, 64, [&](int, int) { return n(rng); });
    const double shape = fit_ggd(img.luminance()).shape;
    EXPECT_GE(shape, 1.8);
    EXPECT_LE(shape, 2.2);
    total += shape;
  }
  EXPECT_NEAR(total / seeds, 2.0, 0.05);
}

TEST(NssFeatures, WhiteNoiseMscnIsBoundedAndPlatykurtic) {
  // With centre weight w0, |x0 - mu| / sigma <= sqrt((1 - w0) / w0) for any
  // window contents, so the normalized map is bounded and its fitted shape
  // exceeds the Gaussian value.
  const double sigma = 7.0 / 6.0;
  double tap_sum = 0.0;
  for (int d = -3; d <= 3; ++d) tap_sum += std::exp(-d * d / (2 * sigma * sigma));
  const double w0 = 1.0 / (tap_sum * tap_sum);
  const double bound = std::sqrt((1.0 - w0) / w0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  const int w = 64;
  std::vector<double> img(std::size_t(w * w));
  for (double& v : img) v = n(rng);
  const std::vector<double> m = mscn(img, w, w);
  for (int y = 3; y < w - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) EXPECT_LE(std::abs(m[std::size_t(y * w + x)]), bound);
  }
  EXPECT_GT(fit_ggd(m).shape, 2.2);
}

TEST(NssFeatures, FiniteOnRandomImagesAndSizeChecked) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NssFeatures f = nss_features(uniform_noise_image(16 + int(seed) * 7, 20, seed, 0, 1));
    for (double v : f) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(nss_features(Image(15, 40)), ImageError);
  EXPECT_THROW(nss_features(Image(40, 15)), ImageError);
}

TEST(NssFeatures, InvariantToIntensityShift) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image base = uniform_noise_image(48, 40, seed, 0.0, 0.85);
    const NssFeatures f0 = nss_features(base);
    for (double shift : {0.01, 0.05, 0.1}) {
      Image shifted = base;
      for (int y = 0; y < base.height(); ++y) {
        for (int x = 0; x < base.width(); ++x) {
          shifted.set_pixel(x, y, base.pixel(x, y) + Vec3::Constant(shift));
        }
      }
      const NssFeatures f1 = nss_features(shifted);
      for (int i = 0; i < kNssFeatureCount; ++i) {
        EXPECT_LT(std::abs(f1[std::size_t(i)] - f0[std::size_t(i)]) / shift, 1e-3) << i;
      }
    }
  }
}

TEST(ViewFeatures, ParallelMatchesSerialAndTensorLayout) {
  std::vector<PosedView> views(5);
  for (std::size_t i = 0; i < views.size(); ++i) {
    views[i].image = uniform_noise_image(24, 24, i, 0, 1);
    views[i].path_index = std::uint32_t(i);
  }
  const auto serial = view_features(views, 1);
  const auto threaded = view_features(views, 3);
  EXPECT_EQ(serial, threaded);
  const Tensor t = view_feature_tensor(serial);
  ASSERT_EQ(t.shape(), (Shape{36, 5}));
  EXPECT_EQ(t.values()[7 * 5 + 3], serial[3][7]);
  EXPECT_THROW(view_feature_tensor({}), TensorError);
}

TEST(ViewFeatures, CsvDump) {
  const auto dir = std::filesystem::temp_directory_path() / "nqa_viewwise_csv";
  std::filesystem::create_directories(dir);
  NssFeatures row{};
  row[0] = 1.5;
  row[35] = -0.25;
  const std::vector<NssFeatures> rows = {row};
  const std::vector<std::uint32_t> idx = {4};
  write_view_features_csv(dir / "f.csv", idx, rows);
  std::ifstream in(dir / "f.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header.substr(0, 17), "path_index,f0,f1,");
  EXPECT_EQ(line.substr(0, 6), "4,1.5,");
  EXPECT_EQ(line.substr(line.size() - 6), ",-0.25");
  std::filesystem::remove_all(dir);
}

class PathStack : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(42);
    add_viewwise_params(store, config, rng);
  }
  Tensor random_feats(std::size_t l, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<real_t> v(36 * l);
    for (auto& x : v) x = n(rng);
    return Tensor({36, l}, std::move(v));
  }
  ViewwiseConfig config;
  ParameterStore store;
};

TEST_F(PathStack, OutputDimensionIndependentOfLength) {
  const Params p = store.bind(false);
  for (std::size_t l : {1u, 2u, 7u, 300u}) {
    const Tensor out = path_stack_forward(random_feats(l, l), p, config);
    ASSERT_EQ(out.shape(), (Shape{64})) << l;
    for (real_t v : out.values()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(path_stack_forward(Tensor::zeros({35, 4}), p, config), TensorError);
}

TEST_F(PathStack, GradientCheckAtLengthFive) {
  const Params bound = store.bind(true);
  // Only trainable weights are differentiated; buffers stay fixed.
  std::vector<Tensor> inputs = {random_feats(5, 9)};
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < bound.tensors().size(); ++i) {
    if (bound.tensors()[i].requires_grad()) {
      inputs.push_back(bound.tensors()[i]);
      slots.push_back(i);
    }
  }
  // Random projection to a scalar exercises every output coordinate.
  std::vector<real_t> proj(64);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& w : proj) w = n(rng);
  const auto f = [&](const std::vector<Tensor>& in) {
    std::vector<Tensor> all = bound.tensors();
    for (std::size_t k = 0; k < slots.size(); ++k) all[slots[k]] = in[k + 1];
    const Params p = bound.with_tensors(std::move(all));
    return weighted_sum(path_stack_forward(in[0], p, config), proj);
  };
  const GradCheckReport report = grad_check(f, inputs, 1e-6, 6, 17);
  EXPECT_LT(report.max_error, 1e-3) << "input " << report.worst_input << " index "
                                    << report.worst_index;
}

TEST_F(PathStack, StandardizationBuffersApply) {
  const Tensor x = random_feats(6, 3);
  ParameterStore shifted = store;
  auto& mean = shifted.get("view.norm.mean").values;
  for (std::size_t f = 0; f < mean.size(); ++f) mean[f] = float(0.125 * double(f));
  // Shifting the input by the stored mean reproduces the unshifted output.
  std::vector<real_t> moved(x.values().begin(), x.values().end());
  for (std::size_t f = 0; f < 36; ++f) {
    for (std::size_t v = 0; v < 6; ++v) moved[f * 6 + v] += 0.125 * double(f);
  }
  const Tensor a = path_stack_forward(x, store.bind(false), config);
  const Tensor b = path_stack_forward(Tensor({36, 6}, moved), shifted.bind(false), config);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-12);
}

TEST_F(PathStack, SqueezeExciteZeroLogitsIsIdentity) {
  ParameterStore zeroed = store;
  for (auto* name : {"view.s3b1.se2.w", "view.s3b1.se2.b"}) {
    for (float& v : zeroed.get(name).values) v = 0.0f;
  }
  const Tensor x = random_feats(4, 5).reshape({36, 4});
  std::vector<real_t> wide(512 * 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : wide) v = n(rng);
  const Tensor h({512, 4}, wide);
  const Tensor same = squeeze_excite(h, zeroed.bind(false), "view.s3b1");
  for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_EQ(same.values()[i], h.values()[i]);

  // With trained-looking weights each channel is scaled by a factor in (0, 2).
  const Tensor gated = squeeze_excite(h, store.bind(false), "view.s3b1");
  for (std::size_t c = 0; c < 512; ++c) {
    const double ratio = gated.values()[c * 4] / h.values()[c * 4];
    EXPECT_GT(ratio, 0.0);
    EXPECT_LT(ratio, 2.0);
    for (std::size_t l = 1; l < 4; ++l) {
      EXPECT_NEAR(gated.values()[c * 4 + l] / h.values()[c * 4 + l], ratio, 1e-12);
    }
  }
}

TEST_F(PathStack, InitializationIsSeeded) {
  ParameterStore again;
  std::mt19937_64 rng(42);
  add_viewwise_params(again, config, rng);
  ASSERT_EQ(again.entries().size(), store.entries().size());
  for (std::size_t i = 0; i < again.entries().size(); ++i) {
    EXPECT_EQ(again.entries()[i].values, store.entries()[i].values);
  }
  ViewwiseConfig bad = config;
  bad.kernel = 2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace nqa
