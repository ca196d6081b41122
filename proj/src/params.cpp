// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/params.hpp"

#include <cmath>

namespace nqa {

ParamEntry& ParameterStore::add(std::string name, Shape shape, std::vector<float> values,
                                bool trainable) {
  if (index_.contains(name)) throw TensorError("duplicate parameter " + name);
  if (shape_numel(shape) != values.size()) {
    throw TensorError("parameter " + name + " has " + std::to_string(values.size()) +
                      " values for shape " + shape_string(shape));
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(shape), std::move(values), trainable});
  return entries_.back();
}

ParamEntry& ParameterStore::add_uniform(std::string name, Shape shape, double bound,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = float(dist(rng));
  return add(std::move(name), std::move(shape), std::move(values));
}

ParamEntry& ParameterStore::add_constant(std::string name, Shape shape, float value,
                                         bool trainable) {
  std::vector<float> values(shape_numel(shape), value);
  return add(std::move(name), std::move(shape), std::move(values), trainable);
}

const ParamEntry& ParameterStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw TensorError("unknown parameter " + name);
  return entries_[it->second];
}

ParamEntry& ParameterStore::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw TensorError("unknown parameter " + name);
  return entries_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

Params ParameterStore::bind(bool requires_grad) const {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  names.reserve(entries_.size());
  tensors.reserve(entries_.size());
  for (const auto& e : entries_) {
    names.push_back(e.name);
    tensors.emplace_back(e.shape, std::vector<real_t>(e.values.begin(), e.values.end()),
                         requires_grad && e.trainable);
  }
  return Params(std::move(names), std::move(tensors));
}

Params::Params(std::vector<std::string> names, std::vector<Tensor> tensors)
    : names_(std::move(names)), tensors_(std::move(tensors)) {
  if (names_.size() != tensors_.size()) throw TensorError("parameter name/tensor count mismatch");
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

const Tensor& Params::operator[](const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw TensorError("unbound parameter " + name);
  return tensors_[it->second];
}

Params Params::with_tensors(std::vector<Tensor> tensors) const {
  if (tensors.size() != tensors_.size()) throw TensorError("parameter count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].shape() != tensors_[i].shape()) {
      throw TensorError("shape mismatch rebinding " + names_[i]);
    }
  }
  return Params(names_, std::move(tensors));
}

namespace {

template <typename T>
void adam_update(std::span<T> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& config) {
  if (params.size() != grads.size()) throw TensorError("adam: parameter/gradient size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NonFiniteError("adam: non-finite gradient");
  }
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) throw TensorError("adam: state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[i] * grads[i];
    const double update = config.learning_rate * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
    params[i] = T(double(params[i]) - update);
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  adam_update(params, grads, state, config);
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  adam_update(params, grads, state, config);
}

AdamOptimizer::AdamOptimizer(const ParameterStore& store, AdamConfig config)
    : config_(config), states_(store.entries().size()) {}

void AdamOptimizer::step(ParameterStore& store, const Params& bound) {
  auto& entries = store.entries();
  if (entries.size() != states_.size() || bound.tensors().size() != entries.size()) {
    throw TensorError("optimizer/store mismatch");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    const Tensor& t = bound.tensors()[i];
    adam_step(std::span<float>(entries[i].values), t.grad(), states_[i], config_);
  }
}

}  // namespace nqa
