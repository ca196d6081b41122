// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Pointwise branch: 3-D convolutions distill each point's PNSG tensor into an
// embedding, then a PointNet-style shared MLP and channelwise max aggregate
// the points using their normalized positions.

#ifndef NQA_POINTWISE_HPP
#define NQA_POINTWISE_HPP

#include <array>
#include <random>
#include <span>
#include <vector>

#include "nqa/geometry.hpp"
#include "nqa/params.hpp"
#include "nqa/pnsg.hpp"
#include "nqa/tensor.hpp"

namespace nqa {

struct PointwiseConfig {
  int bins = 8;
  int length = 16;
  std::array<int, 4> channels = {16, 32, 32, 32};
  int point_embedding = 64;  // D_p
  int shared_width = 128;
  int embedding = 64;  // D_q

  void validate() const;
  // Position-axis length after the strided layer.
  int reduced_length() const { return (length - 1) / 2 + 1; }
  bool operator==(const PointwiseConfig&) const = default;
};

// Registers weights under "point." plus the non-trainable input scale
// "point.input.scale" (defaults to 1).
void add_pointwise_params(ParameterStore& store, const PointwiseConfig& config,
                          std::mt19937_64& rng);

// Constant [2 x b x L x 3] view of a PNSG tensor's values.
Tensor pnsg_input(const PnsgTensor& t);

// input [2 x b x L x 3] with one mask byte per (axis, bin) -> [D_p]. Masked
// bins are zeroed and the rest multiplied by the input scale before the first
// convolution.
Tensor distill_point(const Tensor& input, std::span<const std::uint8_t> mask, const Params& params,
                     const PointwiseConfig& config);
Tensor distill_point(const PnsgTensor& t, const Params& params, const PointwiseConfig& config);

// Centres on the bounding box and divides by its largest half-extent, so the
// result lies in [-1, 1]^3. A degenerate box maps every point to the origin.
std::vector<Vec3> normalize_positions(std::span<const Vec3> xyz);

// Per-point shared MLP on concat(embedding, xyz), channelwise max over points,
// then the head -> [D_q]. `xyz` must already be normalized.
Tensor aggregate_points(std::span<const Tensor> embeddings, std::span<const Vec3> xyz,
                        const Params& params, const PointwiseConfig& config);

// Shared per-point MLP alone -> [shared_width]; exposed for testing.
Tensor point_shared_mlp(const Tensor& embedding, const Vec3& xyz, const Params& params);
// Head applied to the pooled vector -> [D_q]; exposed for testing.
Tensor point_head(const Tensor& pooled, const Params& params);

// Full branch for one scene: distill every record (in parallel), normalize
// positions, aggregate.
Tensor pointwise_forward(std::span<const PnsgRecord> records, const Params& params,
                         const PointwiseConfig& config, int threads = 1);

}  // namespace nqa

#endif  // NQA_POINTWISE_HPP
