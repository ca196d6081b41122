// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace nqa {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n,
                const char* what) {
  if (a.size() != b.size()) {
    throw MetricError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < min_n) {
    throw MetricError(std::string(what) + ": needs at least " + std::to_string(min_n) +
                      " samples, got " + std::to_string(a.size()));
  }
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 1, "rmse");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - truth[i];
    total += r * r;
  }
  return std::sqrt(total / double(pred.size()));
}

double plcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "plcc");
  const double mp = mean_of(pred);
  const double mt = mean_of(truth);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mp;
    const double dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b];
  });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "srcc");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return plcc(rp, rt);
}

double quantile_type7(std::span<const double> x, double p) {
  if (x.empty()) throw MetricError("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw MetricError("quantile level outside [0, 1]");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double h = double(s.size() - 1) * p;
  const std::size_t lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - double(lo)) * (s[hi] - s[lo]);
}

double outlier_ratio(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 4, "outlier_ratio");
  std::vector<double> r(pred.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = pred[i] - truth[i];
  const double q1 = quantile_type7(r, 0.25);
  const double q3 = quantile_type7(r, 0.75);
  const double iqr = q3 - q1;
  const double lo = q1 - 1.5 * iqr;
  const double hi = q3 + 1.5 * iqr;
  const auto outside = std::count_if(r.begin(), r.end(), [&](double v) { return v < lo || v > hi; });
  return double(outside) / double(r.size());
}

double psnr(const Image& a, const Image& b, double peak) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw MetricError("psnr: image dimensions differ");
  }
  if (a.empty()) throw MetricError("psnr: empty image");
  double total = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    total += d * d;
  }
  const double mse = total / double(a.data().size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

EvalReport evaluate(std::span<const double> pred, std::span<const double> truth) {
  EvalReport r;
  r.n = pred.size();
  r.rmse = rmse(pred, truth);
  r.srcc = srcc(pred, truth);
  r.plcc = plcc(pred, truth);
  r.outlier_ratio = outlier_ratio(pred, truth);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"rmse", r.rmse},
          {"srcc", r.srcc},
          {"plcc", r.plcc},
          {"outlier_ratio", r.outlier_ratio},
          {"n", r.n}};
}

std::string format_table(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "metric          value\n"
                "RMSE     %12.6f\n"
                "SRCC     %12.6f\n"
                "PLCC     %12.6f\n"
                "OR       %12.6f\n"
                "n        %12zu\n",
                r.rmse, r.srcc, r.plcc, r.outlier_ratio, r.n);
  return buf;
}

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path,
                                     const std::string& value_column) {
  std::ifstream in(path);
  if (!in) throw MetricError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw MetricError(path.string() + ": empty CSV");
  const auto header = split_csv_line(line);
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MetricError(path.string() + ": missing column " + name);
    return std::size_t(it - header.begin());
  };
  const std::size_t scene = column("scene_id");
  const std::size_t method = column("method_id");
  const std::size_t value = column(value_column);
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw MetricError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields");
    }
    ScoreRow row{fields[scene], fields[method], 0.0};
    try {
      std::size_t used = 0;
      row.value = std::stod(fields[value], &used);
      if (used != fields[value].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw MetricError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                        fields[value] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows,
                     const std::string& value_column) {
  std::ofstream out(path);
  if (!out) throw MetricError("cannot open " + path.string() + " for writing");
  out << "scene_id,method_id," << value_column << '\n';
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.scene_id << ',' << r.method_id << ',' << buf << '\n';
  }
  if (!out) throw MetricError("failed writing " + path.string());
}

JoinedScores join_scores(std::span<const ScoreRow> pred, std::span<const ScoreRow> truth) {
  const auto key = [](const ScoreRow& r) { return r.scene_id + "/" + r.method_id; };
  std::map<std::string, double> truth_by_key;
  for (const auto& r : truth) {
    if (!truth_by_key.emplace(key(r), r.value).second) {
      throw MetricError("duplicate reference row for key " + key(r));
    }
  }
  JoinedScores out;
  std::map<std::string, bool> used;
  for (const auto& r : pred) {
    const std::string k = key(r);
    const auto it = truth_by_key.find(k);
    if (it == truth_by_key.end()) throw MetricError("no reference score for key " + k);
    if (used[k]) throw MetricError("duplicate prediction row for key " + k);
    used[k] = true;
    out.keys.push_back(k);
    out.pred.push_back(r.value);
    out.truth.push_back(it->second);
  }
  for (const auto& [k, v] : truth_by_key) {
    if (!used.contains(k)) throw MetricError("no prediction for key " + k);
  }
  return out;
}

}  // namespace nqa
