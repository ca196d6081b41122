// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// nqa: batch front end for synthesis, feature extraction, training,
// prediction and evaluation. Failures print one "error: ..." line to stderr
// and exit nonzero.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nqa/metrics.hpp"
#include "nqa/model.hpp"
#include "nqa/parallel.hpp"
#include "nqa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nqa;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedScene {
  SceneManifest manifest;
  SceneFeatures features;
};

std::vector<LoadedScene> load_scenes(const std::vector<std::string>& manifests) {
  std::vector<LoadedScene> out;
  for (const auto& path : manifests) {
    SceneManifest m = read_manifest(path);
    SceneFeatures f = read_features(m.features_dir);
    out.push_back({std::move(m), std::move(f)});
  }
  return out;
}

// --------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig config;
  std::string out;
  double label = std::numeric_limits<double>::quiet_NaN();
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Render an analytic fixture scene with COLMAP model and manifest");
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--scene-id", a.config.scene_id, "Scene id")->capture_default_str();
  cmd->add_option("--method-id", a.config.method_id, "Method id")->capture_default_str();
  cmd->add_option("--dataset", a.config.dataset, "Dataset tag")->capture_default_str();
  cmd->add_option("--surface", a.config.surface, "plane | sphere")
      ->check(CLI::IsMember({"plane", "sphere"}))
      ->capture_default_str();
  cmd->add_option("--shading", a.config.shading, "lambertian | angular")
      ->check(CLI::IsMember({"lambertian", "angular"}))
      ->capture_default_str();
  cmd->add_option("--rig", a.config.rig, "orbit | polar_arc")
      ->check(CLI::IsMember({"orbit", "polar_arc"}))
      ->capture_default_str();
  cmd->add_option("--views", a.config.views, "Number of views")->capture_default_str();
  cmd->add_option("--image-size", a.config.image_size, "Square image size in pixels")->capture_default_str();
  cmd->add_option("--radius", a.config.radius, "Camera distance")->capture_default_str();
  cmd->add_option("--elevation", a.config.elevation, "Orbit elevation (radians)")->capture_default_str();
  cmd->add_option("--k-azi", a.config.k_azi, "Angular shading slope in azimuth")->capture_default_str();
  cmd->add_option("--k-pol", a.config.k_pol, "Angular shading slope in polar angle")->capture_default_str();
  cmd->add_option("--view-noise", a.config.view_noise, "Alternating per-view gray offset")
      ->capture_default_str();
  cmd->add_option("--points", a.config.points, "Sparse surface points")->capture_default_str();
  cmd->add_option("--seed", a.config.seed, "Seed")->capture_default_str();
  cmd->add_option("--label", a.label, "JOD label stored in the manifest");
}

int run_synth(SynthArgs& a) {
  if (!std::isnan(a.label)) a.config.label = a.label;
  write_synth_scene(a.config, a.out);
  std::printf("%s\n", (fs::path(a.out) / "manifest.json").string().c_str());
  return 0;
}

// ------------------------------------------------------------- extract

struct ExtractArgs {
  std::vector<std::string> manifests;
  ExtractConfig config;
  bool geometric = false;
  std::string out;
};

void add_extract(CLI::App& app, ExtractArgs& a) {
  auto* cmd = app.add_subcommand("extract", "Compute view NSS features and per-round PNSG dumps");
  cmd->add_option("manifests", a.manifests, "Scene manifests")->required()->check(CLI::ExistingFile);
  cmd->add_option("--bins,-b", a.config.pnsg.bins, "Angular bins per axis")->capture_default_str();
  cmd->add_option("--resample,-L", a.config.pnsg.resample_length, "Resampled sequence length")
      ->capture_default_str();
  cmd->add_option("--points,-N", a.config.points, "Points sampled per round")->capture_default_str();
  cmd->add_option("--seed,-S", a.config.seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--rounds,-R", a.config.rounds, "Sampling rounds")->capture_default_str();
  cmd->add_option("--max-reproj-error", a.config.max_reproj_error, "Drop points above this error");
  cmd->add_flag("--wrap-azimuth", a.config.pnsg.wrap_azimuth, "Close azimuthal loops");
  cmd->add_flag("--geometric", a.geometric, "Use projection instead of COLMAP tracks for visibility");
  cmd->add_option("--out", a.out, "Feature directory (single manifest only; default from manifest)");
}

int run_extract(ExtractArgs& a) {
  a.config.use_tracks = !a.geometric;
  a.config.threads = resolve_threads(0);
  a.config.validate();
  if (!a.out.empty() && a.manifests.size() != 1) {
    throw UsageError("--out requires exactly one manifest");
  }
  for (const auto& path : a.manifests) {
    const SceneManifest m = read_manifest(path);
    const SceneFeatures f = extract_features(load_manifest_bundle(m, a.config.max_reproj_error), a.config);
    const fs::path dir = a.out.empty() ? m.features_dir : fs::path(a.out);
    write_features(dir, f, a.config.pnsg.wrap_azimuth ? 1u : 0u);
    std::printf("%s/%s: %zu views, %d rounds -> %s\n", m.scene_id.c_str(), m.method_id.c_str(),
                f.views.size(), int(f.rounds.size()), dir.string().c_str());
  }
  return 0;
}

// --------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::string log = "";
  std::string model_config;
  std::string checkpoints;
  TrainConfig config;
  bool ablate = false;
  bool no_validation = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a quality model on labeled scenes");
  cmd->add_option("manifests", a.manifests, "Labeled scene manifests")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Model file")->required();
  cmd->add_option("--log", a.log, "Training log CSV (default <out>.log.csv)");
  cmd->add_option("--epochs", a.config.epochs, "Epochs")->capture_default_str();
  cmd->add_option("--batch", a.config.batch_size, "Batch size")->capture_default_str();
  cmd->add_option("--lr", a.config.adam.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", a.config.seed, "Initialization and shuffling seed")->capture_default_str();
  cmd->add_flag("--ablate-pointwise", a.ablate, "Drop the pointwise branch");
  cmd->add_flag("--no-validation", a.no_validation, "Train on every scene; select by training loss");
  cmd->add_option("--model-config", a.model_config, "JSON merged over the default architecture")
      ->check(CLI::ExistingFile);
  cmd->add_option("--checkpoints", a.checkpoints, "Directory for per-epoch checkpoints");
}

ModelConfig model_config_for(const std::string& override_path, const SceneFeatures& features,
                             bool ablate) {
  ModelConfig base;
  base.pointwise.bins = features.bins;
  base.pointwise.length = features.length;
  nlohmann::json j = to_json(base);
  if (!override_path.empty()) {
    std::ifstream in(override_path);
    nlohmann::json patch;
    try {
      in >> patch;
    } catch (const nlohmann::json::exception&) {
      throw UsageError("invalid JSON in " + override_path);
    }
    j.merge_patch(patch);
  }
  if (ablate) j["ablate_pointwise"] = true;
  return model_config_from_json(j);
}

int run_train(TrainArgs& a) {
  const auto scenes = load_scenes(a.manifests);
  std::vector<SceneInputs> data;
  for (const auto& s : scenes) {
    if (!s.manifest.label) throw UsageError("no label for scene " + s.manifest.scene_id + "/" + s.manifest.method_id);
    if (s.features.bins != scenes[0].features.bins || s.features.length != scenes[0].features.length) {
      throw UsageError("feature shape of " + s.manifest.scene_id + " differs from " +
                       scenes[0].manifest.scene_id);
    }
    const auto examples = scene_examples(s.manifest, s.features);
    data.insert(data.end(), examples.begin(), examples.end());
  }
  const ModelConfig config = model_config_for(a.model_config, scenes[0].features, a.ablate);
  if (!config.ablate_pointwise &&
      (config.pointwise.bins != scenes[0].features.bins || config.pointwise.length != scenes[0].features.length)) {
    throw UsageError("model config expects b=" + std::to_string(config.pointwise.bins) +
                     " L=" + std::to_string(config.pointwise.length) + " but features have b=" +
                     std::to_string(scenes[0].features.bins) + " L=" + std::to_string(scenes[0].features.length));
  }
  a.config.hold_out_validation = !a.no_validation;
  a.config.threads = resolve_threads(0);
  if (!a.checkpoints.empty()) a.config.checkpoint_dir = a.checkpoints;
  if (a.config.epochs <= 0 || a.config.batch_size <= 0) throw UsageError("--epochs and --batch must be positive");

  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.csv") : fs::path(a.log);
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot open " + log_path.string() + " for writing");
  log << "epoch,train_loss,validation_loss\n";
  const TrainResult result = train(data, config, a.config, [&](const EpochLog& e) {
    char line[96];
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.validation_loss);
    log << line << std::flush;
  });
  save_model(a.out, result.model);
  if (result.diverged) {
    std::fprintf(stderr, "warning: training diverged after epoch %zu; kept epoch %d\n",
                 result.log.size(), result.best_epoch);
  }
  std::printf("%zu examples (%zu held out), best epoch %d -> %s\n", data.size(),
              result.validation_indices.size(), result.best_epoch, a.out.c_str());
  return 0;
}

// ------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::vector<std::string> manifests;
  std::string out;
};

void add_predict(CLI::App& app, PredictArgs& a) {
  auto* cmd = app.add_subcommand("predict", "Estimate JOD for scenes (mean over sampling rounds)");
  cmd->add_option("model", a.model, "Model file")->required()->check(CLI::ExistingFile);
  cmd->add_option("manifests", a.manifests, "Scene manifests")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "CSV output (default stdout)");
}

int run_predict(PredictArgs& a) {
  const QualityModel model = load_model(a.model);
  const auto scenes = load_scenes(a.manifests);
  const int threads = resolve_threads(0);
  std::vector<ScoreRow> rows;
  for (const auto& s : scenes) {
    const auto& pc = model.config().pointwise;
    if (!model.config().ablate_pointwise && (s.features.bins != pc.bins || s.features.length != pc.length)) {
      throw UsageError("scene " + s.manifest.scene_id + " has features b=" + std::to_string(s.features.bins) +
                       " L=" + std::to_string(s.features.length) + " but the model expects b=" +
                       std::to_string(pc.bins) + " L=" + std::to_string(pc.length));
    }
    double total = 0.0;
    const auto examples = scene_examples(s.manifest, s.features);
    for (const auto& e : examples) total += model.predict(e, threads);
    rows.push_back({s.manifest.scene_id, s.manifest.method_id, total / double(examples.size())});
  }
  if (a.out.empty()) {
    std::printf("scene_id,method_id,pred\n");
    for (const auto& r : rows) std::printf("%s,%s,%.17g\n", r.scene_id.c_str(), r.method_id.c_str(), r.value);
  } else {
    write_score_csv(a.out, rows, "pred");
  }
  return 0;
}

// -------------------------------------------------------------- labels

struct LabelsArgs {
  std::vector<std::string> manifests;
  std::string out;
};

void add_labels(CLI::App& app, LabelsArgs& a) {
  auto* cmd = app.add_subcommand("labels", "Write the reference JOD CSV of labeled manifests");
  cmd->add_option("manifests", a.manifests, "Scene manifests")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "CSV output")->required();
}

int run_labels(LabelsArgs& a) {
  std::vector<ScoreRow> rows;
  for (const auto& path : a.manifests) {
    const SceneManifest m = read_manifest(path);
    if (!m.label) throw UsageError("no label for scene " + m.scene_id + "/" + m.method_id);
    rows.push_back({m.scene_id, m.method_id, *m.label});
  }
  write_score_csv(a.out, rows, "jod");
  return 0;
}

// ------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string pred;
  std::string truth;
  std::string pred_column = "pred";
  std::string truth_column = "jod";
  std::string json;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Compare predictions with reference scores");
  cmd->add_option("pred", a.pred, "Prediction CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("truth", a.truth, "Reference CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--pred-column", a.pred_column, "Prediction column")->capture_default_str();
  cmd->add_option("--truth-column", a.truth_column, "Reference column")->capture_default_str();
  cmd->add_option("--json", a.json, "Also write the report as JSON ('-' for stdout)");
}

int run_evaluate(EvaluateArgs& a) {
  const auto pred = read_score_csv(a.pred, a.pred_column);
  const auto truth = read_score_csv(a.truth, a.truth_column);
  const JoinedScores joined = join_scores(pred, truth);
  const EvalReport report = evaluate(joined.pred, joined.truth);
  if (a.json == "-") {
    std::printf("%s\n", to_json(report).dump(2).c_str());
    return 0;
  }
  std::printf("%s", format_table(report).c_str());
  if (!a.json.empty()) {
    std::ofstream out(a.json);
    if (!out) throw std::runtime_error("cannot open " + a.json + " for writing");
    out << to_json(report).dump(2) << '\n';
  }
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeRF quality assessment toolkit"};
  app.require_subcommand(1);
  SynthArgs synth;
  ExtractArgs extract;
  TrainArgs train_args;
  PredictArgs predict;
  LabelsArgs labels;
  EvaluateArgs eval;
  add_synth(app, synth);
  add_extract(app, extract);
  add_train(app, train_args);
  add_predict(app, predict);
  add_labels(app, labels);
  add_evaluate(app, eval);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 2;
  }
  try {
    if (app.got_subcommand("synth")) return run_synth(synth);
    if (app.got_subcommand("extract")) return run_extract(extract);
    if (app.got_subcommand("train")) return run_train(train_args);
    if (app.got_subcommand("predict")) return run_predict(predict);
    if (app.got_subcommand("labels")) return run_labels(labels);
    if (app.got_subcommand("evaluate")) return run_evaluate(eval);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 1;
}
