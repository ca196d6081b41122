// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace nqa {

namespace {

void add_linear(ParameterStore& store, const std::string& name, int out, int in,
                std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  store.add_uniform(name + ".w", {std::size_t(out), std::size_t(in)}, bound, rng);
  store.add_uniform(name + ".b", {std::size_t(out)}, bound, rng);
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ModelFileError("model file truncated reading " + what);
  }
  return v;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr char kModelMagic[8] = {'N', 'Q', 'A', 'M', 'D', 'L', '1', '\0'};

}  // namespace

void ModelConfig::validate() const {
  viewwise.validate();
  if (!ablate_pointwise) pointwise.validate();
  if (fusion_hidden < 1) throw std::invalid_argument("model config: fusion_hidden < 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["viewwise"] = {{"features", c.viewwise.features},   {"width1", c.viewwise.width1},
                   {"width2", c.viewwise.width2},       {"expansion", c.viewwise.expansion},
                   {"se_reduction", c.viewwise.se_reduction}, {"kernel", c.viewwise.kernel},
                   {"embedding", c.viewwise.embedding}};
  j["pointwise"] = {{"bins", c.pointwise.bins},
                    {"length", c.pointwise.length},
                    {"channels", c.pointwise.channels},
                    {"point_embedding", c.pointwise.point_embedding},
                    {"shared_width", c.pointwise.shared_width},
                    {"embedding", c.pointwise.embedding}};
  j["fusion_hidden"] = c.fusion_hidden;
  j["ablate_pointwise"] = c.ablate_pointwise;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    const auto& v = j.at("viewwise");
    c.viewwise.features = v.at("features");
    c.viewwise.width1 = v.at("width1");
    c.viewwise.width2 = v.at("width2");
    c.viewwise.expansion = v.at("expansion");
    c.viewwise.se_reduction = v.at("se_reduction");
    c.viewwise.kernel = v.at("kernel");
    c.viewwise.embedding = v.at("embedding");
    const auto& p = j.at("pointwise");
    c.pointwise.bins = p.at("bins");
    c.pointwise.length = p.at("length");
    c.pointwise.channels = p.at("channels").get<std::array<int, 4>>();
    c.pointwise.point_embedding = p.at("point_embedding");
    c.pointwise.shared_width = p.at("shared_width");
    c.pointwise.embedding = p.at("embedding");
    c.fusion_hidden = j.at("fusion_hidden");
    c.ablate_pointwise = j.at("ablate_pointwise");
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

QualityModel::QualityModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  add_viewwise_params(store_, config_.viewwise, rng);
  if (!config_.ablate_pointwise) add_pointwise_params(store_, config_.pointwise, rng);
  add_linear(store_, "fusion.l1", config_.fusion_hidden, config_.fusion_input(), rng);
  add_linear(store_, "fusion.l2", 1, config_.fusion_hidden, rng);
  store_.add_constant("fusion.label.offset", {1}, 0.0f, false);
  store_.add_constant("fusion.label.scale", {1}, 1.0f, false);
}

Tensor QualityModel::forward(const SceneInputs& scene, const Params& p, int threads) const {
  if (scene.views.empty()) throw TensorError("scene " + scene.scene_id + " has no views");
  Tensor x = path_stack_forward(view_feature_tensor(scene.views), p, config_.viewwise);
  if (!config_.ablate_pointwise) {
    x = concat({x, pointwise_forward(scene.points, p, config_.pointwise, threads)});
  }
  Tensor h = silu(linear(x, p["fusion.l1.w"], p["fusion.l1.b"]));
  Tensor y = linear(h, p["fusion.l2.w"], p["fusion.l2.b"]);
  y = add_scalar(scale(y, p["fusion.label.scale"].values()[0]),
                 p["fusion.label.offset"].values()[0]);
  if (!std::isfinite(y.item())) throw NonFiniteError("non-finite prediction");
  return y;
}

double QualityModel::predict(const SceneInputs& scene, int threads) const {
  return forward(scene, store_.bind(false), threads).item();
}

void QualityModel::set_label_standardization(double offset, double scale_factor) {
  store_.get("fusion.label.offset").values[0] = float(offset);
  store_.get("fusion.label.scale").values[0] = float(scale_factor);
}

void QualityModel::set_input_standardization(std::span<const double> view_mean,
                                             std::span<const double> view_scale,
                                             double pnsg_scale) {
  auto& mean = store_.get("view.norm.mean").values;
  auto& sc = store_.get("view.norm.scale").values;
  if (view_mean.size() != mean.size() || view_scale.size() != sc.size()) {
    throw TensorError("view standardization size mismatch");
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] = float(view_mean[i]);
    sc[i] = float(view_scale[i]);
  }
  if (store_.contains("point.input.scale")) {
    store_.get("point.input.scale").values[0] = float(pnsg_scale);
  }
}

std::uint64_t config_hash(const ModelConfig& config) { return fnv1a(to_json(config).dump()); }

void save_model(const std::filesystem::path& path, const QualityModel& model) {
  nlohmann::json header;
  header["config"] = to_json(model.config());
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : model.store().entries()) {
    header["tensors"].push_back({{"name", e.name}, {"shape", e.shape}, {"trainable", e.trainable}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFileError("cannot open " + path.string() + " for writing");
  out.write(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(out, kModelFileVersion);
  put<std::uint32_t>(out, std::uint32_t(text.size()));
  out.write(text.data(), std::streamsize(text.size()));
  put<std::uint64_t>(out, config_hash(model.config()));
  for (const auto& e : model.store().entries()) {
    out.write(reinterpret_cast<const char*>(e.values.data()),
              std::streamsize(e.values.size() * sizeof(float)));
  }
  if (!out) throw ModelFileError("failed writing " + path.string());
}

QualityModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError("cannot open model file " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw ModelFileError("not a model file (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kModelFileVersion) {
    throw ModelFileError("unsupported model file version " + std::to_string(version));
  }
  const auto header_bytes = get<std::uint32_t>(in, "header size");
  std::string text(header_bytes, '\0');
  if (!in.read(text.data(), std::streamsize(header_bytes))) {
    throw ModelFileError("model file truncated reading header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(std::string("model header is not valid JSON: ") + e.what());
  }
  const ModelConfig config = model_config_from_json(header.at("config"));
  const auto stored_hash = get<std::uint64_t>(in, "config hash");
  if (stored_hash != config_hash(config)) throw ModelFileError("model config hash mismatch");

  QualityModel model(config, 0);
  auto& entries = model.store().entries();
  const auto& manifest = header.at("tensors");
  if (manifest.size() != entries.size()) throw ModelFileError("model tensor manifest mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = manifest[i];
    if (m.at("name") != entries[i].name || m.at("shape").get<Shape>() != entries[i].shape ||
        m.at("trainable").get<bool>() != entries[i].trainable) {
      throw ModelFileError("model tensor manifest mismatch at " + entries[i].name);
    }
    auto& values = entries[i].values;
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 std::streamsize(values.size() * sizeof(float)))) {
      throw ModelFileError("model file truncated in tensor " + entries[i].name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ModelFileError("trailing bytes after model tensors");
  }
  return model;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size,
                                                    std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += std::size_t(batch_size)) {
    const std::size_t end = std::min(count, i + std::size_t(batch_size));
    batches.emplace_back(order.begin() + std::ptrdiff_t(i), order.begin() + std::ptrdiff_t(end));
  }
  return batches;
}

std::vector<std::size_t> validation_split(std::span<const SceneInputs> data) {
  // Every example of the held-out scene (all methods and sampling rounds)
  // leaves training together.
  std::map<std::string, std::set<std::string>> scenes;
  for (const auto& s : data) scenes[s.dataset].insert(s.scene_id);
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ids = scenes.at(data[i].dataset);
    if (ids.size() >= 2 && data[i].scene_id == *ids.begin()) held.push_back(i);
  }
  return held;
}

double mean_squared_error(const QualityModel& model, std::span<const SceneInputs> data,
                          std::span<const std::size_t> indices, int threads) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (std::size_t i : indices) {
    const double r = model.predict(data[i], threads) - data[i].label.value();
    total += r * r;
  }
  return total / double(indices.size());
}

namespace {

void fit_standardization(QualityModel& model, std::span<const SceneInputs> data,
                         std::span<const std::size_t> train) {
  std::vector<double> sum(kNssFeatureCount, 0.0);
  std::vector<double> sq(kNssFeatureCount, 0.0);
  double views = 0.0;
  double pnsg_sq = 0.0;
  double pnsg_n = 0.0;
  double label_sum = 0.0;
  double label_sq = 0.0;
  for (std::size_t i : train) {
    for (const auto& f : data[i].views) {
      for (std::size_t k = 0; k < f.size(); ++k) {
        sum[k] += f[k];
        sq[k] += f[k] * f[k];
      }
      views += 1.0;
    }
    for (const auto& r : data[i].points) {
      const PnsgTensor& t = r.tensor;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < t.bins; ++b) {
          if (!t.present(a, b)) continue;
          for (int l = 0; l < t.length; ++l) {
            for (int ch = 0; ch < 3; ++ch) {
              const double v = t.at(a, b, l, ch);
              pnsg_sq += v * v;
              pnsg_n += 1.0;
            }
          }
        }
      }
    }
    label_sum += *data[i].label;
    label_sq += *data[i].label * *data[i].label;
  }
  std::vector<double> mean(kNssFeatureCount, 0.0);
  std::vector<double> inv_std(kNssFeatureCount, 1.0);
  if (views > 0.0) {
    for (std::size_t k = 0; k < mean.size(); ++k) {
      mean[k] = sum[k] / views;
      const double var = std::max(0.0, sq[k] / views - mean[k] * mean[k]);
      inv_std[k] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
  const double pnsg_rms = pnsg_n > 0.0 ? std::sqrt(pnsg_sq / pnsg_n) : 0.0;
  model.set_input_standardization(mean, inv_std, pnsg_rms > 1e-12 ? 1.0 / pnsg_rms : 1.0);
  const double n = double(train.size());
  const double label_mean = label_sum / n;
  const double label_var = std::max(0.0, label_sq / n - label_mean * label_mean);
  model.set_label_standardization(label_mean, label_var > 1e-24 ? std::sqrt(label_var) : 1.0);
}

}  // namespace

TrainResult train(std::span<const SceneInputs> data, const ModelConfig& config,
                  const TrainConfig& tc, const std::function<void(const EpochLog&)>& on_epoch) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& s : data) {
    if (!s.label) throw std::invalid_argument("train: scene " + s.scene_id + " has no label");
  }
  if (tc.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");

  TrainResult result;
  result.validation_indices = tc.hold_out_validation ? validation_split(data)
                                                     : std::vector<std::size_t>{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::binary_search(result.validation_indices.begin(), result.validation_indices.end(),
                            i)) {
      result.train_indices.push_back(i);
    }
  }
  const auto& train_idx = result.train_indices;
  const auto& val_idx = result.validation_indices;

  QualityModel model(config, tc.seed);
  if (tc.standardize) fit_standardization(model, data, train_idx);

  std::seed_seq seq{std::uint32_t(tc.seed), std::uint32_t(tc.seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  AdamOptimizer optimizer(model.store(), tc.adam);

  const auto selection_loss = [&](const QualityModel& m) {
    return mean_squared_error(m, data, val_idx.empty() ? train_idx : val_idx, tc.threads);
  };
  double best_loss = selection_loss(model);
  ParameterStore best = model.store();
  ParameterStore last_finite = model.store();
  result.best_epoch = 0;

  for (int epoch = 1; epoch <= tc.epochs && !result.diverged; ++epoch) {
    for (const auto& batch : epoch_batches(train_idx.size(), tc.batch_size, rng)) {
      const Params bound = model.store().bind(true);
      std::vector<Tensor> preds;
      std::vector<real_t> targets;
      try {
        for (std::size_t k : batch) {
          const SceneInputs& s = data[train_idx[k]];
          preds.push_back(model.forward(s, bound, tc.threads));
          targets.push_back(*s.label);
        }
        Tensor loss = mse_loss(concat(preds), Tensor({targets.size()}, targets));
        if (!std::isfinite(loss.item())) throw NonFiniteError("non-finite loss");
        loss.backward();
        optimizer.step(model.store(), bound);
      } catch (const NonFiniteError&) {
        result.diverged = true;
        break;
      }
    }
    if (result.diverged) break;

    EpochLog entry;
    entry.epoch = epoch;
    try {
      entry.train_loss = mean_squared_error(model, data, train_idx, tc.threads);
      entry.validation_loss = mean_squared_error(model, data, val_idx, tc.threads);
    } catch (const NonFiniteError&) {
      result.diverged = true;
      break;
    }
    if (!std::isfinite(entry.train_loss)) {
      result.diverged = true;
      break;
    }
    last_finite = model.store();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (tc.checkpoint_dir) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.nqamdl", epoch);
      save_model(*tc.checkpoint_dir / name, model);
    }
    const double metric = val_idx.empty() ? entry.train_loss : entry.validation_loss;
    if (metric < best_loss) {
      best_loss = metric;
      best = model.store();
      result.best_epoch = epoch;
    }
  }

  if (result.diverged) {
    // Last finite checkpoint rather than the best one.
    model.store() = last_finite;
    result.best_epoch = result.log.empty() ? 0 : result.log.back().epoch;
  } else {
    model.store() = best;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace nqa
