// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Agreement measures between predicted and reference quality scores, plus
// PSNR as a full-reference baseline.

#ifndef NQA_METRICS_HPP
#define NQA_METRICS_HPP

#include <filesystem>
#include <json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nqa/image.hpp"

namespace nqa {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double rmse(std::span<const double> pred, std::span<const double> truth);
// Pearson correlation; throws on a constant side or fewer than 2 samples.
double plcc(std::span<const double> pred, std::span<const double> truth);
// Pearson correlation of average ranks (ties share their mean rank).
double srcc(std::span<const double> pred, std::span<const double> truth);
// Fraction of residuals pred - truth strictly outside Tukey's fences
// [Q1 - 1.5 IQR, Q3 + 1.5 IQR]; needs at least 4 samples.
double outlier_ratio(std::span<const double> pred, std::span<const double> truth);

// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> x);
// Linear interpolation between order statistics at h = (n - 1) p.
double quantile_type7(std::span<const double> x, double p);

// 10 log10(peak^2 / MSE) over all channels; +infinity for identical images.
double psnr(const Image& a, const Image& b, double peak = 1.0);

struct EvalReport {
  double rmse = 0.0;
  double srcc = 0.0;
  double plcc = 0.0;
  double outlier_ratio = 0.0;
  std::size_t n = 0;
};

EvalReport evaluate(std::span<const double> pred, std::span<const double> truth);
nlohmann::json to_json(const EvalReport& report);
// Aligned two-column text table.
std::string format_table(const EvalReport& report);

// One row of a score CSV keyed by (scene_id, method_id).
struct ScoreRow {
  std::string scene_id;
  std::string method_id;
  double value = 0.0;
};

// Reads a headed CSV with columns scene_id, method_id and `value_column`
// (other columns ignored). Throws on missing columns or malformed numbers.
std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path,
                                     const std::string& value_column);
void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows,
                     const std::string& value_column);

struct JoinedScores {
  std::vector<std::string> keys;  // "scene_id/method_id"
  std::vector<double> pred;
  std::vector<double> truth;
};

// Pairs rows on (scene_id, method_id); any key present on one side only, or
// repeated, is an error naming that key.
JoinedScores join_scores(std::span<const ScoreRow> pred, std::span<const ScoreRow> truth);

}  // namespace nqa

#endif  // NQA_METRICS_HPP
