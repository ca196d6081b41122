// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Viewwise branch: a natural-scene-statistics summary per rendered view,
// followed by a 1-D convolutional stack that runs along the camera path.

#ifndef NQA_VIEWWISE_HPP
#define NQA_VIEWWISE_HPP

#include <array>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nqa/geometry.hpp"
#include "nqa/image.hpp"
#include "nqa/params.hpp"
#include "nqa/tensor.hpp"

namespace nqa {

inline constexpr int kNssFeatureCount = 36;
using NssFeatures = std::array<double, kNssFeatureCount>;

// MSCN stabilizer on the [0, 1] intensity scale.
inline constexpr double kMscnC = 1.0 / 255.0;

struct GgdFit {
  double shape = 2.0;
  double variance = 0.0;
};

struct AggdFit {
  double shape = 2.0;
  double mean = 0.0;
  double left_variance = 0.0;
  double right_variance = 0.0;
};

// Moment-matching estimators; all-zero input yields shape 2 and zero spread.
GgdFit fit_ggd(std::span<const double> x);
AggdFit fit_aggd(std::span<const double> x);

// Mean-subtracted contrast-normalized coefficients of a row-major w x h
// intensity map (7x7 Gaussian window, sigma 7/6, taps renormalized at borders).
std::vector<double> mscn(std::span<const double> intensity, int width, int height);

// 18 statistics per scale at full and half resolution:
//   [ggd shape, ggd variance] then, for the horizontal, vertical, main- and
//   anti-diagonal neighbour products, [shape, mean, left var, right var].
NssFeatures nss_features(const Image& image);
inline NssFeatures nss_features(const PosedView& view) { return nss_features(view.image); }

// Per-view features for a path, in the order given (callers sort by path
// index). Runs across views in parallel.
std::vector<NssFeatures> view_features(std::span<const PosedView> views, int threads = 0);

// [F x L] tensor from per-view rows.
Tensor view_feature_tensor(std::span<const NssFeatures> rows);

// CSV with a header row: path_index,f0..f35.
void write_view_features_csv(const std::filesystem::path& path,
                             std::span<const std::uint32_t> path_indices,
                             std::span<const NssFeatures> rows);

struct ViewwiseConfig {
  int features = kNssFeatureCount;
  int width1 = 64;
  int width2 = 128;
  int expansion = 4;
  int se_reduction = 4;
  int kernel = 3;
  int embedding = 64;

  void validate() const;
  bool operator==(const ViewwiseConfig&) const = default;
};

// Registers the stack's weights under "view." plus the non-trainable input
// standardization buffers "view.norm.mean" / "view.norm.scale".
void add_viewwise_params(ParameterStore& store, const ViewwiseConfig& config,
                         std::mt19937_64& rng);

// feats [F x L], L >= 1 -> embedding [D_v]. Throws NonFiniteError when the
// output is not finite.
Tensor path_stack_forward(const Tensor& feats, const Params& params,
                          const ViewwiseConfig& config);

// Squeeze-and-excitation on x [C x L] with weights "<prefix>.se1.*" and
// "<prefix>.se2.*": x * 2*sigmoid(logits), so zero logits are the identity.
Tensor squeeze_excite(const Tensor& x, const Params& params, const std::string& prefix);

}  // namespace nqa

#endif  // NQA_VIEWWISE_HPP
