// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "nqa/metrics.hpp"

namespace nqa {
namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Independent Pearson via raw sums.
double pearson_sums(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

TEST(Rmse, ExamplesAndSymmetry) {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), std::sqrt(12.5), 1e-12);
  std::mt19937_64 rng(1);
  auto p = random_vector(rng, 9);
  auto t = random_vector(rng, 9);
  const double base = rmse(p, t);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> p2, t2;
  for (auto i : perm) {
    p2.push_back(p[i]);
    t2.push_back(t[i]);
  }
  EXPECT_NEAR(rmse(p2, t2), base, 1e-12);
  EXPECT_THROW(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), MetricError);
}

TEST(Srcc, Examples) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> rev = {5, 4, 3, 2, 1};
  EXPECT_NEAR(srcc(x, std::vector<double>{2, 4, 8, 16, 32}), 1.0, 1e-12);
  EXPECT_NEAR(srcc(x, rev), -1.0, 1e-12);
  const std::vector<double> p = {1, 2, 2, 3};
  const std::vector<double> t = {1, 3, 2, 4};
  const double expected = pearson_sums(brute_ranks(p), brute_ranks(t));
  EXPECT_NEAR(srcc(p, t), expected, 1e-12);
  EXPECT_THROW(srcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), MetricError);
}

TEST(Srcc, RanksMatchBruteForceWithTies) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(12);
    for (double& v : x) v = d(rng);
    EXPECT_EQ(average_ranks(x), brute_ranks(x));
  }
}

TEST(Srcc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_vector(rng, 15);
    auto t = random_vector(rng, 15);
    const double base = srcc(p, t);
    std::vector<double> pe(p.size()), tc(t.size());
    std::transform(p.begin(), p.end(), pe.begin(), [](double v) { return std::exp(v); });
    std::transform(t.begin(), t.end(), tc.begin(), [](double v) { return v * v * v - 4.0; });
    EXPECT_NEAR(srcc(pe, tc), base, 1e-12);
  }
}

TEST(Plcc, ExamplesAndOracle) {
  const std::vector<double> x = {0.5, 1.0, 2.5, 3.0, -1.0};
  std::vector<double> y(x.size()), z(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return 2 * v + 1; });
  std::transform(x.begin(), x.end(), z.begin(), [](double v) { return -v; });
  EXPECT_NEAR(plcc(x, y), 1.0, 1e-12);
  EXPECT_NEAR(plcc(x, z), -1.0, 1e-12);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_vector(rng, 10);
    auto t = random_vector(rng, 10);
    EXPECT_NEAR(plcc(p, t), pearson_sums(p, t), 1e-12);
  }
  EXPECT_THROW(plcc(std::vector<double>{1, 2}, std::vector<double>{3, 3}), MetricError);
  EXPECT_THROW(plcc(std::vector<double>{1}, std::vector<double>{3}), MetricError);
}

TEST(Plcc, AffineInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> a(0.1, 10.0), b(-5.0, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_vector(rng, 12);
    auto t = random_vector(rng, 12);
    const double base = plcc(p, t);
    const double s = a(rng), o = b(rng);
    std::vector<double> q(p.size());
    std::transform(p.begin(), p.end(), q.begin(), [&](double v) { return s * v + o; });
    EXPECT_NEAR(plcc(q, t), base, 1e-12);
    std::transform(p.begin(), p.end(), q.begin(), [&](double v) { return -s * v + o; });
    EXPECT_NEAR(plcc(q, t), -base, 1e-12);
  }
}

TEST(OutlierRatio, ExamplesAndInvariances) {
  const std::vector<double> zeros(8, 0.0);
  EXPECT_EQ(outlier_ratio(std::vector<double>(6, 2.0), std::vector<double>(6, 1.0)), 0.0);
  std::vector<double> r = {0, 0, 0, 0, 0, 0, 0, 100};
  EXPECT_NEAR(outlier_ratio(r, zeros), 1.0 / 8.0, 1e-12);
  EXPECT_THROW(outlier_ratio(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}),
               MetricError);

  std::mt19937_64 rng(6);
  std::student_t_distribution<double> heavy(1.5);
  std::uniform_real_distribution<double> c(0.01, 100.0), shift(-50, 50);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> p(20);
    for (double& v : p) v = heavy(rng);
    const std::vector<double> t(20, 0.0);
    const double base = outlier_ratio(p, t);
    const double k = c(rng), s = shift(rng);
    std::vector<double> scaled(p.size()), moved(p.size());
    std::transform(p.begin(), p.end(), scaled.begin(), [&](double v) { return k * v; });
    std::transform(p.begin(), p.end(), moved.begin(), [&](double v) { return v + s; });
    EXPECT_EQ(outlier_ratio(scaled, t), base);
    EXPECT_EQ(outlier_ratio(moved, t), base);
  }
}

TEST(Quantile, Type7Oracle) {
  // h = (n - 1) p interpolation, checked by hand on {1, 2, 4, 8}.
  const std::vector<double> x = {8, 1, 4, 2};
  EXPECT_NEAR(quantile_type7(x, 0.25), 1.75, 1e-12);
  EXPECT_NEAR(quantile_type7(x, 0.5), 3.0, 1e-12);
  EXPECT_NEAR(quantile_type7(x, 0.75), 5.0, 1e-12);
  EXPECT_EQ(quantile_type7(x, 0.0), 1.0);
  EXPECT_EQ(quantile_type7(x, 1.0), 8.0);
}

TEST(Psnr, ExamplesAndOracle) {
  Image a(4, 3, Eigen::Vector3d(0.2, 0.4, 0.6));
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Image b = a;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) b.set_pixel(x, y, a.pixel(x, y) + Eigen::Vector3d::Constant(0.1));
  }
  EXPECT_NEAR(psnr(a, b, 1.0), 20.0, 1e-9);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Image c(5, 5), e(5, 5);
  double sq = 0.0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const Eigen::Vector3d u(d(rng), d(rng), d(rng)), v(d(rng), d(rng), d(rng));
      c.set_pixel(x, y, u);
      e.set_pixel(x, y, v);
      sq += (u - v).squaredNorm();
    }
  }
  EXPECT_NEAR(psnr(c, e, 2.0), 10.0 * std::log10(4.0 / (sq / 75.0)), 1e-12);
  EXPECT_THROW(psnr(c, a), MetricError);
}

TEST(Evaluate, PerfectPredictionsAndReport) {
  const std::vector<double> t = {-1.0, -0.5, -2.0, -3.0, 0.0};
  const EvalReport r = evaluate(t, t);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_NEAR(r.srcc, 1.0, 1e-12);
  EXPECT_NEAR(r.plcc, 1.0, 1e-12);
  EXPECT_EQ(r.outlier_ratio, 0.0);
  EXPECT_EQ(r.n, 5u);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("n"), 5);
  EXPECT_NE(format_table(r).find("SRCC"), std::string::npos);
}

TEST(ScoreCsv, RoundTripAndJoin) {
  const auto dir = std::filesystem::temp_directory_path() / "nqa_metrics_csv";
  std::filesystem::create_directories(dir);
  const std::vector<ScoreRow> pred = {{"s1", "nerf", -0.5}, {"s2", "nerf", -1.25}};
  write_score_csv(dir / "pred.csv", pred, "pred");
  {
    std::ofstream t(dir / "truth.csv");
    t << "scene_id,method_id,dataset,truth\ns2,nerf,lab,-1.0\ns1,nerf,lab,-0.25\n";
  }
  const auto p = read_score_csv(dir / "pred.csv", "pred");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].value, -1.25);
  const auto t = read_score_csv(dir / "truth.csv", "truth");
  const JoinedScores joined = join_scores(p, t);
  EXPECT_EQ(joined.truth, (std::vector<double>{-0.25, -1.0}));

  const std::vector<ScoreRow> extra = {{"s1", "nerf", 0}, {"s3", "nerf", 0}};
  try {
    join_scores(extra, t);
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("s3/nerf"), std::string::npos);
  }
  EXPECT_THROW(join_scores(std::vector<ScoreRow>{{"s1", "nerf", 0}}, t), MetricError);
  EXPECT_THROW(read_score_csv(dir / "truth.csv", "pred"), MetricError);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "scene_id,method_id,pred\ns1,m,abc\n";
  }
  EXPECT_THROW(read_score_csv(dir / "bad.csv", "pred"), MetricError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace nqa
