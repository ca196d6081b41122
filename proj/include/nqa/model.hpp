// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Quality model: viewwise and pointwise embeddings fused by an MLP into a JOD
// estimate, its training loop, and the on-disk model format.

#ifndef NQA_MODEL_HPP
#define NQA_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nqa/params.hpp"
#include "nqa/pnsg.hpp"
#include "nqa/pointwise.hpp"
#include "nqa/viewwise.hpp"

namespace nqa {

struct ModelConfig {
  ViewwiseConfig viewwise;
  PointwiseConfig pointwise;
  int fusion_hidden = 64;
  // "Without pointwise": the fusion MLP sees the viewwise embedding only and
  // no pointwise weights exist.
  bool ablate_pointwise = false;

  void validate() const;
  int fusion_input() const {
    return viewwise.embedding + (ablate_pointwise ? 0 : pointwise.embedding);
  }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Everything the model consumes for one rendered scene.
struct SceneInputs {
  std::string scene_id;
  std::string method_id;
  std::string dataset;
  std::vector<NssFeatures> views;  // ordered by path index
  std::vector<PnsgRecord> points;
  std::optional<double> label;  // JOD
};

class QualityModel {
 public:
  QualityModel() = default;
  QualityModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParameterStore& store() const { return store_; }
  ParameterStore& store() { return store_; }

  // Differentiable forward with explicitly bound weights -> [1].
  Tensor forward(const SceneInputs& scene, const Params& params, int threads = 1) const;
  // Pure function of (weights, inputs).
  double predict(const SceneInputs& scene, int threads = 1) const;

  // Output affine map applied to the fusion MLP: y = raw * scale + offset.
  // Stored as non-trainable buffers so labels can be standardized.
  void set_label_standardization(double offset, double scale);
  // Per-feature view standardization and the PNSG input scale.
  void set_input_standardization(std::span<const double> view_mean,
                                 std::span<const double> view_scale, double pnsg_scale);

 private:
  ModelConfig config_;
  ParameterStore store_;
};

// Model file, little-endian:
//   char magic[8] = "NQAMDL1\0"; u32 version; u32 header_bytes
//   header_bytes of JSON {"config": ..., "tensors": [{name, shape, trainable}]}
//   u64 FNV-1a 64 hash of the canonical config JSON
//   f32 values of every tensor in manifest order
inline constexpr std::uint32_t kModelFileVersion = 1;

class ModelFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t config_hash(const ModelConfig& config);
void save_model(const std::filesystem::path& path, const QualityModel& model);
QualityModel load_model(const std::filesystem::path& path);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 10;
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Hold out one scene per dataset tag (datasets with >= 2 scenes) for
  // checkpoint selection.
  bool hold_out_validation = true;
  // Fit view/PNSG input and label standardization on the training split.
  bool standardize = true;
  int threads = 1;
  // Optional directory receiving "epoch_NNN.nqamdl" after every epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct EpochLog {
  int epoch = 0;           // 1-based
  double train_loss = 0.0;  // MSE over the training split after the epoch
  double validation_loss = 0.0;  // NaN without a validation split
};

struct TrainResult {
  QualityModel model;  // best checkpoint
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 = initial weights
  bool diverged = false;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

// Shuffled mini-batches for one epoch; the last may be partial.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size,
                                                    std::mt19937_64& rng);

// Examples held out for validation: all examples of the first scene id of
// every dataset tag that has at least two distinct scene ids.
std::vector<std::size_t> validation_split(std::span<const SceneInputs> data);

// MSE on JOD with Adam. Stops at the first non-finite loss and returns the
// last finite checkpoint with diverged = true. Throws when a scene lacks a
// label or the dataset is empty.
TrainResult train(std::span<const SceneInputs> data, const ModelConfig& config,
                  const TrainConfig& train_config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

double mean_squared_error(const QualityModel& model, std::span<const SceneInputs> data,
                          std::span<const std::size_t> indices, int threads = 1);

}  // namespace nqa

#endif  // NQA_MODEL_HPP
