// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/pointwise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nqa/parallel.hpp"

namespace nqa {

namespace {

std::string conv_name(int i) { return "point.conv" + std::to_string(i); }

void add_linear(ParameterStore& store, const std::string& name, int out, int in,
                std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  store.add_uniform(name + ".w", {std::size_t(out), std::size_t(in)}, bound, rng);
  store.add_uniform(name + ".b", {std::size_t(out)}, bound, rng);
}

}  // namespace

void PointwiseConfig::validate() const {
  if (bins < 1 || length < 1) throw std::invalid_argument("pointwise config: bins/length < 1");
  for (int c : channels) {
    if (c < 1) throw std::invalid_argument("pointwise config: channel count < 1");
  }
  if (point_embedding < 1 || shared_width < 1 || embedding < 1) {
    throw std::invalid_argument("pointwise config: sizes must be positive");
  }
}

void add_pointwise_params(ParameterStore& store, const PointwiseConfig& c, std::mt19937_64& rng) {
  c.validate();
  store.add_constant("point.input.scale", {1}, 1.0f, false);
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    const int out = c.channels[std::size_t(i)];
    const double bound = 1.0 / std::sqrt(double(in * 27));
    store.add_uniform(conv_name(i) + ".w",
                      {std::size_t(out), std::size_t(in), 3, 3, 3}, bound, rng);
    store.add_uniform(conv_name(i) + ".b", {std::size_t(out)}, bound, rng);
    in = out;
  }
  const int flat = c.channels[3] * 2 * c.bins * c.reduced_length();
  add_linear(store, "point.mlp1", c.point_embedding, flat, rng);
  add_linear(store, "point.mlp2", c.point_embedding, c.point_embedding, rng);
  add_linear(store, "point.shared", c.shared_width, c.point_embedding + 3, rng);
  add_linear(store, "point.head", c.embedding, c.shared_width, rng);
}

Tensor pnsg_input(const PnsgTensor& t) {
  return Tensor({2, std::size_t(t.bins), std::size_t(t.length), 3}, t.values);
}

Tensor distill_point(const Tensor& input, std::span<const std::uint8_t> mask, const Params& p,
                     const PointwiseConfig& c) {
  const Shape expected = {2, std::size_t(c.bins), std::size_t(c.length), 3};
  if (input.shape() != expected) {
    throw TensorError("distill_point expects " + shape_string(expected) + ", got " +
                      shape_string(input.shape()));
  }
  if (mask.size() != std::size_t(2 * c.bins)) throw TensorError("distill_point: mask size");

  // Zero absent bins and apply the stored input scale in one constant
  // multiplier broadcast over positions and RGB.
  const real_t input_scale = p["point.input.scale"].values()[0];
  std::vector<real_t> keep(input.numel());
  const std::size_t row = std::size_t(c.length) * 3;
  for (std::size_t ab = 0; ab < mask.size(); ++ab) {
    std::fill_n(keep.begin() + std::ptrdiff_t(ab * row), row, mask[ab] ? input_scale : 0.0);
  }
  Tensor x = mul(input, Tensor(input.shape(), std::move(keep)));
  // RGB becomes the channel axis: [3 x axis x bin x position].
  x = permute4(x, {3, 0, 1, 2});
  for (int i = 0; i < 4; ++i) {
    const std::array<int, 3> stride = {1, 1, i == 1 ? 2 : 1};
    x = silu(conv3d(x, p[conv_name(i) + ".w"], p[conv_name(i) + ".b"], stride, {1, 1, 1}));
  }
  x = x.reshape({x.numel()});
  x = silu(linear(x, p["point.mlp1.w"], p["point.mlp1.b"]));
  return silu(linear(x, p["point.mlp2.w"], p["point.mlp2.b"]));
}

Tensor distill_point(const PnsgTensor& t, const Params& p, const PointwiseConfig& c) {
  if (t.bins != c.bins || t.length != c.length) {
    throw TensorError("PNSG tensor is " + std::to_string(t.bins) + "x" + std::to_string(t.length) +
                      " but the model expects " + std::to_string(c.bins) + "x" +
                      std::to_string(c.length));
  }
  return distill_point(pnsg_input(t), t.mask, p, c);
}

std::vector<Vec3> normalize_positions(std::span<const Vec3> xyz) {
  if (xyz.empty()) return {};
  Vec3 lo = xyz[0];
  Vec3 hi = xyz[0];
  for (const Vec3& v : xyz) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff();
  std::vector<Vec3> out;
  out.reserve(xyz.size());
  for (const Vec3& v : xyz) {
    out.push_back(half > 0.0 ? Vec3((v - center) / half) : Vec3::Zero());
  }
  return out;
}

Tensor point_shared_mlp(const Tensor& embedding, const Vec3& xyz, const Params& p) {
  const Tensor pos({3}, {xyz.x(), xyz.y(), xyz.z()});
  return silu(linear(concat({embedding, pos}), p["point.shared.w"], p["point.shared.b"]));
}

Tensor point_head(const Tensor& pooled, const Params& p) {
  return silu(linear(pooled, p["point.head.w"], p["point.head.b"]));
}

Tensor aggregate_points(std::span<const Tensor> embeddings, std::span<const Vec3> xyz,
                        const Params& p, const PointwiseConfig& c) {
  if (embeddings.empty()) throw TensorError("aggregate_points: empty point set");
  if (embeddings.size() != xyz.size()) throw TensorError("aggregate_points: xyz count mismatch");
  std::vector<Tensor> rows;
  rows.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].shape() != Shape{std::size_t(c.point_embedding)}) {
      throw TensorError("aggregate_points: embedding shape " +
                        shape_string(embeddings[i].shape()));
    }
    const Vec3& v = xyz[i];
    rows.push_back(concat({embeddings[i], Tensor({3}, {v.x(), v.y(), v.z()})}));
  }
  // [n x (D_p+3)] -> [n x shared] -> [shared x n] -> max over points.
  Tensor h = silu(linear(stack_rows(rows), p["point.shared.w"], p["point.shared.b"]));
  return point_head(max_pool_global(transpose(h)), p);
}

Tensor pointwise_forward(std::span<const PnsgRecord> records, const Params& p,
                         const PointwiseConfig& c, int threads) {
  if (records.empty()) throw TensorError("pointwise_forward: no points");
  std::vector<Tensor> embeddings(records.size());
  parallel_for(records.size(),
               [&](std::size_t i) { embeddings[i] = distill_point(records[i].tensor, p, c); },
               threads);
  std::vector<Vec3> xyz;
  xyz.reserve(records.size());
  for (const auto& r : records) xyz.push_back(r.xyz);
  return aggregate_points(embeddings, normalize_positions(xyz), p, c);
}

}  // namespace nqa
