// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Named learnable weights. Values are stored as 32-bit floats (what the model
// file holds) and widened into autodiff leaves for each forward pass.

#ifndef NQA_PARAMS_HPP
#define NQA_PARAMS_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nqa/tensor.hpp"

namespace nqa {

struct ParamEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
  // Non-trainable entries are fixed buffers (e.g. input normalization).
  bool trainable = true;
};

class Params;

class ParameterStore {
 public:
  ParamEntry& add(std::string name, Shape shape, std::vector<float> values, bool trainable = true);
  // Uniform in [-bound, bound].
  ParamEntry& add_uniform(std::string name, Shape shape, double bound, std::mt19937_64& rng);
  ParamEntry& add_constant(std::string name, Shape shape, float value, bool trainable = true);

  bool contains(const std::string& name) const { return index_.contains(name); }
  const ParamEntry& get(const std::string& name) const;
  ParamEntry& get(const std::string& name);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  std::size_t scalar_count() const;

  // Fresh leaf tensors; trainable entries get requires_grad when asked.
  Params bind(bool requires_grad) const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tensors bound for one forward pass, addressable by parameter name.
class Params {
 public:
  Params() = default;
  Params(std::vector<std::string> names, std::vector<Tensor> tensors);

  const Tensor& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  // Same names, different tensors (used for finite-difference checks).
  Params with_tensors(std::vector<Tensor> tensors) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update in place. Throws on non-finite gradients or
// size mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

// Adam over every trainable entry of a store, reading gradients from tensors
// bound by ParameterStore::bind(true).
class AdamOptimizer {
 public:
  AdamOptimizer(const ParameterStore& store, AdamConfig config);
  void step(ParameterStore& store, const Params& bound);
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<AdamState> states_;
};

}  // namespace nqa

#endif  // NQA_PARAMS_HPP
