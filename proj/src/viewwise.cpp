// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/viewwise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "nqa/parallel.hpp"

namespace nqa {

namespace {

// Gamma ratio r(a) = G(1/a) G(3/a) / G(2/a)^2, strictly decreasing in a.
double gamma_ratio(double a) {
  return std::exp(std::lgamma(1.0 / a) + std::lgamma(3.0 / a) - 2.0 * std::lgamma(2.0 / a));
}

// Solves gamma_ratio(a) = target by bisection on log a over [0.05, 20].
double solve_shape(double target) {
  double lo = std::log(0.05);
  double hi = std::log(20.0);
  if (!(target < gamma_ratio(std::exp(lo)))) return std::exp(lo);
  if (!(target > gamma_ratio(std::exp(hi)))) return std::exp(hi);
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_ratio(std::exp(mid)) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

std::array<double, 7> gaussian_taps() {
  std::array<double, 7> taps{};
  const double sigma = 7.0 / 6.0;
  double total = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double d = i - 3;
    taps[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[std::size_t(i)];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable weighted average with in-bounds renormalization.
std::vector<double> local_average(std::span<const double> x, int w, int h) {
  static const std::array<double, 7> taps = gaussian_taps();
  std::vector<double> tmp(x.size());
  std::vector<double> out(x.size());
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w; ++i) {
      double acc = 0.0;
      double norm = 0.0;
      for (int k = -3; k <= 3; ++k) {
        const int xi = i + k;
        if (xi < 0 || xi >= w) continue;
        acc += taps[std::size_t(k + 3)] * x[std::size_t(y * w + xi)];
        norm += taps[std::size_t(k + 3)];
      }
      tmp[std::size_t(y * w + i)] = acc / norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w; ++i) {
      double acc = 0.0;
      double norm = 0.0;
      for (int k = -3; k <= 3; ++k) {
        const int yi = y + k;
        if (yi < 0 || yi >= h) continue;
        acc += taps[std::size_t(k + 3)] * tmp[std::size_t(yi * w + i)];
        norm += taps[std::size_t(k + 3)];
      }
      out[std::size_t(y * w + i)] = acc / norm;
    }
  }
  return out;
}

void append_scale(std::span<const double> intensity, int w, int h, double* out) {
  const std::vector<double> m = mscn(intensity, w, h);
  const GgdFit g = fit_ggd(m);
  out[0] = g.shape;
  out[1] = g.variance;
  // (dx, dy) neighbours: horizontal, vertical, main diagonal, anti-diagonal.
  constexpr std::array<std::array<int, 2>, 4> kShifts = {{{1, 0}, {0, 1}, {1, 1}, {-1, 1}}};
  std::vector<double> products;
  products.reserve(m.size());
  for (std::size_t s = 0; s < kShifts.size(); ++s) {
    const int dx = kShifts[s][0];
    const int dy = kShifts[s][1];
    products.clear();
    for (int y = 0; y + dy < h; ++y) {
      for (int x = std::max(0, -dx); x < w && x + dx < w; ++x) {
        products.push_back(m[std::size_t(y * w + x)] * m[std::size_t((y + dy) * w + x + dx)]);
      }
    }
    const AggdFit a = fit_aggd(products);
    double* dst = out + 2 + 4 * s;
    dst[0] = a.shape;
    dst[1] = a.mean;
    dst[2] = a.left_variance;
    dst[3] = a.right_variance;
  }
}

std::string block(int stage, int index) {
  return "view.s" + std::to_string(stage) + "b" + std::to_string(index);
}

void add_conv(ParameterStore& store, const std::string& name, int out, int in_per_group,
              int kernel, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in_per_group * kernel));
  store.add_uniform(name + ".w", {std::size_t(out), std::size_t(in_per_group), std::size_t(kernel)},
                    bound, rng);
  store.add_uniform(name + ".b", {std::size_t(out)}, bound, rng);
}

void add_linear(ParameterStore& store, const std::string& name, int out, int in,
                std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  store.add_uniform(name + ".w", {std::size_t(out), std::size_t(in)}, bound, rng);
  store.add_uniform(name + ".b", {std::size_t(out)}, bound, rng);
}

void add_fused(ParameterStore& store, const std::string& name, int in, int out,
               const ViewwiseConfig& c, std::mt19937_64& rng) {
  add_conv(store, name + ".expand", in * c.expansion, in, c.kernel, rng);
  add_conv(store, name + ".project", out, in * c.expansion, 1, rng);
}

void add_mb(ParameterStore& store, const std::string& name, int in, int out,
            const ViewwiseConfig& c, std::mt19937_64& rng) {
  const int hidden = in * c.expansion;
  const int squeeze = std::max(1, in / c.se_reduction);
  add_conv(store, name + ".expand", hidden, in, 1, rng);
  add_conv(store, name + ".depthwise", hidden, 1, c.kernel, rng);
  add_linear(store, name + ".se1", squeeze, hidden, rng);
  add_linear(store, name + ".se2", hidden, squeeze, rng);
  add_conv(store, name + ".project", out, hidden, 1, rng);
}

Tensor conv(const Tensor& x, const Params& p, const std::string& name, int padding,
            int groups = 1) {
  return conv1d(x, p[name + ".w"], p[name + ".b"], 1, padding, groups);
}

Tensor fused_mbconv(const Tensor& x, const Params& p, const std::string& name,
                    const ViewwiseConfig& c) {
  Tensor h = silu(conv(x, p, name + ".expand", c.kernel / 2));
  Tensor y = conv(h, p, name + ".project", 0);
  return y.shape() == x.shape() ? add(y, x) : y;
}

Tensor mbconv(const Tensor& x, const Params& p, const std::string& name,
              const ViewwiseConfig& c) {
  Tensor h = silu(conv(x, p, name + ".expand", 0));
  const int hidden = int(h.dim(0));
  h = silu(conv(h, p, name + ".depthwise", c.kernel / 2, hidden));
  h = squeeze_excite(h, p, name);
  Tensor y = conv(h, p, name + ".project", 0);
  return y.shape() == x.shape() ? add(y, x) : y;
}

}  // namespace

GgdFit fit_ggd(std::span<const double> x) {
  if (x.empty()) return {};
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (double v : x) {
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  const double n = double(x.size());
  const double mean_abs = abs_sum / n;
  const double variance = sq_sum / n;
  if (mean_abs == 0.0 || variance == 0.0) return {2.0, 0.0};
  return {solve_shape(variance / (mean_abs * mean_abs)), variance};
}

AggdFit fit_aggd(std::span<const double> x) {
  if (x.empty()) return {};
  double left_sq = 0.0;
  double right_sq = 0.0;
  std::size_t left_n = 0;
  std::size_t right_n = 0;
  double abs_sum = 0.0;
  for (double v : x) {
    abs_sum += std::abs(v);
    if (v < 0.0) {
      left_sq += v * v;
      ++left_n;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++right_n;
    }
  }
  const double n = double(x.size());
  const double second = (left_sq + right_sq) / n;
  if (second == 0.0) return {2.0, 0.0, 0.0, 0.0};
  const double left_var = left_n ? left_sq / double(left_n) : 0.0;
  const double right_var = right_n ? right_sq / double(right_n) : 0.0;
  const double sigma_l = std::sqrt(left_var);
  const double sigma_r = std::sqrt(right_var);
  const double mean_abs = abs_sum / n;
  const double r_hat = mean_abs * mean_abs / second;
  // One-sided data is the limit gamma -> 0 or infinity, where the correction
  // factor tends to 1.
  double big_r = r_hat;
  if (sigma_l > 0.0 && sigma_r > 0.0) {
    const double g = sigma_l / sigma_r;
    big_r = r_hat * (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));
  }
  const double shape = solve_shape(1.0 / big_r);
  const double spread = std::sqrt(std::exp(std::lgamma(1.0 / shape) - std::lgamma(3.0 / shape)));
  const double mean = (sigma_r - sigma_l) * spread *
                      std::exp(std::lgamma(2.0 / shape) - std::lgamma(1.0 / shape));
  return {shape, mean, left_var, right_var};
}

std::vector<double> mscn(std::span<const double> intensity, int width, int height) {
  if (width <= 0 || height <= 0 || intensity.size() != std::size_t(width) * std::size_t(height)) {
    throw std::invalid_argument("mscn: intensity size does not match dimensions");
  }
  // The map is invariant to a global offset; subtracting a reference pixel
  // keeps a constant image exactly zero and improves conditioning.
  const double offset = intensity[0];
  std::vector<double> centered(intensity.size());
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] = intensity[i] - offset;

  const std::vector<double> mu = local_average(centered, width, height);
  // Windowed variance E[I^2] - mu^2, clamped against rounding below zero.
  std::vector<double> dev2(centered.size());
  for (std::size_t i = 0; i < centered.size(); ++i) dev2[i] = centered[i] * centered[i];
  const std::vector<double> second = local_average(dev2, width, height);
  std::vector<double> out(centered.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double var = std::max(0.0, second[i] - mu[i] * mu[i]);
    out[i] = (centered[i] - mu[i]) / (std::sqrt(var) + kMscnC);
  }
  return out;
}

NssFeatures nss_features(const Image& image) {
  if (image.width() < 16 || image.height() < 16) {
    throw ImageError("nss_features needs an image of at least 16x16, got " +
                     std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  NssFeatures out{};
  const int w = image.width();
  const int h = image.height();
  const std::vector<double> lum = image.luminance();
  append_scale(lum, w, h, out.data());

  const int w2 = w / 2;
  const int h2 = h / 2;
  std::vector<double> half(std::size_t(w2) * std::size_t(h2));
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      const auto at = [&](int xi, int yi) { return lum[std::size_t(yi * w + xi)]; };
      half[std::size_t(y * w2 + x)] =
          0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) +
                  at(2 * x + 1, 2 * y + 1));
    }
  }
  append_scale(half, w2, h2, out.data() + 18);
  return out;
}

std::vector<NssFeatures> view_features(std::span<const PosedView> views, int threads) {
  std::vector<NssFeatures> out(views.size());
  parallel_for(views.size(), [&](std::size_t i) { out[i] = nss_features(views[i]); }, threads);
  return out;
}

Tensor view_feature_tensor(std::span<const NssFeatures> rows) {
  if (rows.empty()) throw TensorError("view_feature_tensor: no views");
  const std::size_t l = rows.size();
  std::vector<real_t> values(std::size_t(kNssFeatureCount) * l);
  for (std::size_t v = 0; v < l; ++v) {
    for (std::size_t f = 0; f < std::size_t(kNssFeatureCount); ++f) {
      values[f * l + v] = rows[v][f];
    }
  }
  return Tensor({std::size_t(kNssFeatureCount), l}, std::move(values));
}

void write_view_features_csv(const std::filesystem::path& path,
                             std::span<const std::uint32_t> path_indices,
                             std::span<const NssFeatures> rows) {
  if (path_indices.size() != rows.size()) {
    throw std::invalid_argument("write_view_features_csv: index/row count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "path_index";
  for (int f = 0; f < kNssFeatureCount; ++f) out << ",f" << f;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << path_indices[i];
    for (double v : rows[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void ViewwiseConfig::validate() const {
  if (features <= 0 || width1 <= 0 || width2 <= 0 || expansion <= 0 || se_reduction <= 0 ||
      embedding <= 0) {
    throw std::invalid_argument("viewwise config: sizes must be positive");
  }
  if (kernel <= 0 || kernel % 2 == 0) {
    throw std::invalid_argument("viewwise config: kernel must be odd and positive");
  }
}

void add_viewwise_params(ParameterStore& store, const ViewwiseConfig& c, std::mt19937_64& rng) {
  c.validate();
  store.add_constant("view.norm.mean", {std::size_t(c.features)}, 0.0f, false);
  store.add_constant("view.norm.scale", {std::size_t(c.features)}, 1.0f, false);
  add_fused(store, block(1, 1), c.features, c.width1, c, rng);
  add_fused(store, block(1, 2), c.width1, c.width1, c, rng);
  add_fused(store, block(2, 1), c.width1, c.width2, c, rng);
  add_fused(store, block(2, 2), c.width2, c.width2, c, rng);
  add_mb(store, block(3, 1), c.width2, c.width2, c, rng);
  add_mb(store, block(3, 2), c.width2, c.width2, c, rng);
  add_linear(store, "view.head", c.embedding, c.width2, rng);
}

Tensor squeeze_excite(const Tensor& x, const Params& p, const std::string& prefix) {
  Tensor s = mean_over_length(x);
  s = silu(linear(s, p[prefix + ".se1.w"], p[prefix + ".se1.b"]));
  Tensor gates = scale(sigmoid(linear(s, p[prefix + ".se2.w"], p[prefix + ".se2.b"])), 2.0);
  return scale_channels(x, gates);
}

Tensor path_stack_forward(const Tensor& feats, const Params& p, const ViewwiseConfig& c) {
  if (feats.rank() != 2 || feats.dim(0) != std::size_t(c.features) || feats.dim(1) == 0) {
    throw TensorError("path_stack_forward expects [" + std::to_string(c.features) +
                      " x L>=1], got " + shape_string(feats.shape()));
  }
  const std::size_t l = feats.dim(1);
  // Standardize each feature channel with the stored buffers.
  const auto mean_v = p["view.norm.mean"].values();
  std::vector<real_t> offsets(feats.numel());
  for (std::size_t f = 0; f < std::size_t(c.features); ++f) {
    std::fill_n(offsets.begin() + std::ptrdiff_t(f * l), l, mean_v[f]);
  }
  Tensor x = scale_channels(sub(feats, Tensor(feats.shape(), std::move(offsets))),
                            p["view.norm.scale"].detach());

  x = fused_mbconv(x, p, block(1, 1), c);
  x = fused_mbconv(x, p, block(1, 2), c);
  x = max_pool_pairs(x);
  x = fused_mbconv(x, p, block(2, 1), c);
  x = fused_mbconv(x, p, block(2, 2), c);
  x = max_pool_pairs(x);
  x = mbconv(x, p, block(3, 1), c);
  x = mbconv(x, p, block(3, 2), c);
  Tensor pooled = max_pool_global(x);
  Tensor out = silu(linear(pooled, p["view.head.w"], p["view.head.b"]));
  for (real_t v : out.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("viewwise embedding is not finite");
  }
  return out;
}

}  // namespace nqa
