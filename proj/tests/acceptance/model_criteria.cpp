// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Criteria 5 and 6: gradient checks and architectural contracts.

#include <algorithm>
#include <functional>
#include <random>

#include "acceptance.hpp"
#include "nqa/grad_check.hpp"
#include "nqa/model.hpp"
#include "nqa/pointwise.hpp"
#include "nqa/viewwise.hpp"

namespace nqa::acceptance {

namespace {

constexpr double kTolerance = 1e-3;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<real_t> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

// Scalarizes an arbitrary output with fixed random weights.
Tensor project(const Tensor& out, std::uint64_t seed) {
  if (out.numel() == 1) return sum(out);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<real_t> w(out.numel());
  for (auto& x : w) x = n(rng);
  return weighted_sum(out, w);
}

struct Worst {
  double error = 0.0;
  std::string where;
  std::size_t layers = 0;
  std::size_t coordinates = 0;
};

void check_layer(Check& c, Worst& worst, const std::string& name,
                 const std::function<Tensor(const std::vector<Tensor>&)>& layer,
                 const std::vector<Tensor>& inputs, std::size_t max_coords = 0) {
  const auto f = [&](const std::vector<Tensor>& in) { return project(layer(in), 7); };
  const GradCheckReport r = grad_check(f, inputs, 1e-6, max_coords, 11);
  ++worst.layers;
  worst.coordinates += r.coordinates_checked;
  if (r.max_error > worst.error) {
    worst.error = r.max_error;
    worst.where = name;
  }
  c.expect(r.max_error < kTolerance, name + " rel-err " + fmt("%.3g", r.max_error));
}

// Trainable tensors of a bound store plus the slots they occupy.
struct Trainable {
  std::vector<Tensor> tensors;
  std::vector<std::size_t> slots;
};

Trainable trainable(const Params& bound) {
  Trainable t;
  for (std::size_t i = 0; i < bound.tensors().size(); ++i) {
    if (!bound.tensors()[i].requires_grad()) continue;
    t.tensors.push_back(bound.tensors()[i]);
    t.slots.push_back(i);
  }
  return t;
}

Params rebind(const Params& bound, const Trainable& t, const std::vector<Tensor>& in,
              std::size_t first) {
  std::vector<Tensor> all = bound.tensors();
  for (std::size_t k = 0; k < t.slots.size(); ++k) all[t.slots[k]] = in[first + k];
  return bound.with_tensors(std::move(all));
}

// b = 2, L = 4 and narrow widths: the reduced configuration.
ModelConfig reduced_config() {
  ModelConfig c;
  c.viewwise.width1 = 6;
  c.viewwise.width2 = 8;
  c.viewwise.expansion = 2;
  c.viewwise.embedding = 5;
  c.pointwise.bins = 2;
  c.pointwise.length = 4;
  c.pointwise.channels = {3, 4, 4, 4};
  c.pointwise.point_embedding = 6;
  c.pointwise.shared_width = 7;
  c.pointwise.embedding = 5;
  c.fusion_hidden = 6;
  return c;
}

PnsgRecord random_record(std::mt19937_64& rng, int bins, int length, std::uint64_t id,
                         double magnitude = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  PnsgRecord r;
  r.point_id = id;
  r.xyz = Vec3(n(rng), n(rng), n(rng));
  r.tensor = PnsgTensor(bins, length);
  for (std::size_t i = 0; i < r.tensor.mask.size(); ++i) r.tensor.mask[i] = (rng() % 5) != 0;
  for (double& v : r.tensor.values) v = magnitude * n(rng);
  return r;
}

SceneInputs random_scene(std::mt19937_64& rng, const ModelConfig& c, std::size_t views,
                         std::size_t points) {
  std::normal_distribution<double> n(0.0, 1.0);
  SceneInputs s;
  s.scene_id = "s";
  s.method_id = "m";
  s.dataset = "d";
  for (std::size_t v = 0; v < views; ++v) {
    NssFeatures f{};
    for (double& x : f) x = n(rng);
    s.views.push_back(f);
  }
  for (std::size_t p = 0; p < points; ++p) {
    s.points.push_back(random_record(rng, c.pointwise.bins, c.pointwise.length, p));
  }
  return s;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

void differentiation_suite(Check& c) {
  std::mt19937_64 rng(505);
  Worst worst;
  const auto rt = [&](Shape s) { return random_tensor(rng, std::move(s)); };

  check_layer(c, worst, "matmul", [](const auto& in) { return matmul(in[0], in[1]); },
              {rt({3, 4}), rt({4, 2})});
  check_layer(c, worst, "linear", [](const auto& in) { return linear(in[0], in[1], in[2]); },
              {rt({2, 5}), rt({3, 5}), rt({3})});
  check_layer(c, worst, "linear/vector", [](const auto& in) { return linear(in[0], in[1], in[2]); },
              {rt({5}), rt({3, 5}), rt({3})});
  check_layer(c, worst, "add", [](const auto& in) { return add(in[0], in[1]); }, {rt({6}), rt({6})});
  check_layer(c, worst, "sub", [](const auto& in) { return sub(in[0], in[1]); }, {rt({6}), rt({6})});
  check_layer(c, worst, "mul", [](const auto& in) { return mul(in[0], in[1]); }, {rt({6}), rt({6})});
  check_layer(c, worst, "scale", [](const auto& in) { return add_scalar(scale(in[0], -1.7), 0.3); },
              {rt({6})});
  check_layer(c, worst, "relu", [](const auto& in) { return relu(in[0]); }, {rt({10})});
  check_layer(c, worst, "sigmoid", [](const auto& in) { return sigmoid(in[0]); }, {rt({10})});
  check_layer(c, worst, "silu", [](const auto& in) { return silu(in[0]); }, {rt({10})});
  check_layer(c, worst, "conv1d",
              [](const auto& in) { return conv1d(in[0], in[1], in[2], 2, 1, 1); },
              {rt({3, 7}), rt({4, 3, 3}), rt({4})});
  check_layer(c, worst, "conv1d/groups",
              [](const auto& in) { return conv1d(in[0], in[1], in[2], 1, 1, 4); },
              {rt({4, 6}), rt({4, 1, 3}), rt({4})});
  check_layer(c, worst, "conv3d",
              [](const auto& in) { return conv3d(in[0], in[1], in[2], {1, 1, 2}, {1, 1, 1}); },
              {rt({2, 3, 3, 4}), rt({2, 2, 3, 3, 3}), rt({2})});
  check_layer(c, worst, "max_pool_global", [](const auto& in) { return max_pool_global(in[0]); },
              {rt({3, 5})});
  check_layer(c, worst, "max_pool_pairs", [](const auto& in) { return max_pool_pairs(in[0]); },
              {rt({3, 5})});
  check_layer(c, worst, "mean_over_length", [](const auto& in) { return mean_over_length(in[0]); },
              {rt({3, 5})});
  check_layer(c, worst, "scale_channels",
              [](const auto& in) { return scale_channels(in[0], in[1]); }, {rt({3, 4}), rt({3})});
  check_layer(c, worst, "transpose", [](const auto& in) { return transpose(in[0]); }, {rt({3, 4})});
  check_layer(c, worst, "concat", [](const auto& in) { return concat({in[0], in[1]}); },
              {rt({3}), rt({2, 2})});
  check_layer(c, worst, "stack_rows", [](const auto& in) { return stack_rows({in[0], in[1]}); },
              {rt({4}), rt({4})});
  check_layer(c, worst, "permute4",
              [](const auto& in) { return permute4(in[0], {3, 0, 1, 2}); }, {rt({2, 3, 2, 3})});
  check_layer(c, worst, "sum", [](const auto& in) { return sum(in[0]); }, {rt({2, 3})});
  check_layer(c, worst, "mean", [](const auto& in) { return mean(in[0]); }, {rt({2, 3})});
  check_layer(c, worst, "mse_loss",
              [](const auto& in) { return mse_loss(in[0], Tensor({4}, {0.1, -0.2, 0.3, 2.0})); },
              {rt({4})});

  const ModelConfig config = reduced_config();

  // Viewwise stack and its squeeze-excite block.
  {
    ParameterStore store;
    std::mt19937_64 init(1);
    add_viewwise_params(store, config.viewwise, init);
    const Params bound = store.bind(true);
    const Trainable t = trainable(bound);
    std::vector<Tensor> inputs = {rt({36, 5})};
    inputs.insert(inputs.end(), t.tensors.begin(), t.tensors.end());
    check_layer(
        c, worst, "viewwise stack",
        [&](const auto& in) { return path_stack_forward(in[0], rebind(bound, t, in, 1), config.viewwise); },
        inputs);
    const int hidden = config.viewwise.width2 * config.viewwise.expansion;
    check_layer(
        c, worst, "squeeze-excite",
        [&](const auto& in) { return squeeze_excite(in[0], rebind(bound, t, in, 1), "view.s3b1"); },
        [&] {
          std::vector<Tensor> v = {rt({std::size_t(hidden), 3})};
          v.insert(v.end(), t.tensors.begin(), t.tensors.end());
          return v;
        }());
  }

  // Pointwise distillation and aggregation.
  {
    ParameterStore store;
    std::mt19937_64 init(2);
    add_pointwise_params(store, config.pointwise, init);
    const Params bound = store.bind(true);
    const Trainable t = trainable(bound);
    const PnsgRecord rec = random_record(rng, 2, 4, 0);
    std::vector<Tensor> inputs = {Tensor(Shape{2, 2, 4, 3}, std::vector<real_t>(rec.tensor.values), true)};
    inputs.insert(inputs.end(), t.tensors.begin(), t.tensors.end());
    check_layer(
        c, worst, "point distillation",
        [&](const auto& in) {
          return distill_point(in[0], rec.tensor.mask, rebind(bound, t, in, 1), config.pointwise);
        },
        inputs);
    const std::vector<Vec3> xyz = {Vec3(0.1, -0.5, 0.9), Vec3(-1, 0.2, 0.3), Vec3(0.7, 0.7, -0.2)};
    std::vector<Tensor> agg = {rt({6}), rt({6}), rt({6})};
    agg.insert(agg.end(), t.tensors.begin(), t.tensors.end());
    check_layer(
        c, worst, "point aggregation",
        [&](const auto& in) {
          const std::vector<Tensor> emb = {in[0], in[1], in[2]};
          return aggregate_points(emb, xyz, rebind(bound, t, in, 3), config.pointwise);
        },
        agg);
  }

  // Full reduced model: 8 views, 4 points, every trainable coordinate.
  {
    const QualityModel model(config, 3);
    const SceneInputs scene = random_scene(rng, config, 8, 4);
    const Params bound = model.store().bind(true);
    const Trainable t = trainable(bound);
    check_layer(
        c, worst, "full model",
        [&](const auto& in) {
          return mse_loss(model.forward(scene, rebind(bound, t, in, 0)), Tensor({1}, {-1.5}));
        },
        t.tensors);
  }

  c.note(std::to_string(worst.layers) + " checks, " + std::to_string(worst.coordinates) +
         " coordinates, worst rel-err " + fmt("%.2g", worst.error) + " (" + worst.where + ")");
}

void architecture_suite(Check& c) {
  std::mt19937_64 rng(606);

  // Viewwise output size is independent of the path length.
  {
    const ViewwiseConfig vc;
    ParameterStore store;
    std::mt19937_64 init(4);
    add_viewwise_params(store, vc, init);
    const Params p = store.bind(false);
    for (std::size_t l : {1u, 7u, 300u}) {
      const Tensor out = path_stack_forward(random_tensor(rng, {36, l}).detach(), p, vc);
      c.expect(out.shape() == Shape{std::size_t(vc.embedding)},
               "viewwise output " + shape_string(out.shape()) + " at L=" + std::to_string(l));
    }
  }

  // PointNet aggregation: permutation and duplication invariance, bitwise.
  {
    const PointwiseConfig pc;
    ParameterStore store;
    std::mt19937_64 init(5);
    add_pointwise_params(store, pc, init);
    const Params p = store.bind(false);
    std::vector<Tensor> emb;
    std::vector<Vec3> xyz;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 12; ++i) {
      emb.push_back(random_tensor(rng, {std::size_t(pc.point_embedding)}).detach());
      xyz.emplace_back(u(rng), u(rng), u(rng));
    }
    const Tensor base = aggregate_points(emb, xyz, p, pc);
    bool perm_ok = true, dup_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::size_t> order(emb.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<Tensor> e2;
      std::vector<Vec3> x2;
      for (std::size_t i : order) {
        e2.push_back(emb[i]);
        x2.push_back(xyz[i]);
      }
      perm_ok = perm_ok && bitwise_equal(aggregate_points(e2, x2, p, pc), base);
      const std::size_t d = rng() % emb.size();
      e2.push_back(emb[d]);
      x2.push_back(xyz[d]);
      dup_ok = dup_ok && bitwise_equal(aggregate_points(e2, x2, p, pc), base);
    }
    c.expect(perm_ok, "aggregation depends on point order");
    c.expect(dup_ok, "aggregation changes under duplication");
  }

  // Ablation: predictions ignore pointwise inputs entirely.
  {
    ModelConfig mc = reduced_config();
    mc.ablate_pointwise = true;
    const QualityModel ablated(mc, 6);
    const SceneInputs scene = random_scene(rng, mc, 8, 4);
    const double base = ablated.predict(scene);
    bool invariant = true;
    for (int trial = 0; trial < 8; ++trial) {
      SceneInputs other = scene;
      other.points.clear();
      for (int k = 0; k < trial * 3; ++k) {
        other.points.push_back(random_record(rng, 2, 4, std::uint64_t(k), 10.0 * (trial + 1)));
      }
      invariant = invariant && ablated.predict(other) == base;
    }
    c.expect(invariant, "ablated model responds to pointwise inputs");
    c.expect(!ablated.store().contains("point.conv0.w"), "ablated model carries pointwise weights");

    const QualityModel full(reduced_config(), 6);
    SceneInputs changed = scene;
    for (auto& r : changed.points)
      for (double& v : r.tensor.values) v *= 5.0;
    c.expect(full.predict(scene) != full.predict(changed), "full model ignores pointwise inputs");
  }
}

}  // namespace nqa::acceptance
