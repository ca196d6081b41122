// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Scene manifests and feature extraction: the glue between COLMAP outputs
// on disk and model-ready SceneInputs.

#ifndef NQA_PIPELINE_HPP
#define NQA_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nqa/colmap.hpp"
#include "nqa/fixtures.hpp"
#include "nqa/model.hpp"
#include "nqa/pnsg.hpp"
#include "nqa/viewwise.hpp"

namespace nqa {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One rendered path. Relative paths resolve against the manifest's folder;
// `views` lists image names in path order.
struct SceneManifest {
  std::string scene_id;
  std::string method_id;
  std::string dataset;
  std::filesystem::path model_dir;
  std::filesystem::path images_dir;
  std::filesystem::path features_dir;  // default "<manifest dir>/features"
  std::vector<std::string> views;
  std::optional<double> label;  // JOD
};

// Structural checks only (required fields, unique non-empty views).
SceneManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
// Paths are written relative to `base_dir` when they live beneath it.
nlohmann::json manifest_to_json(const SceneManifest& m, const std::filesystem::path& base_dir);
// Parses and checks that the model dir, images dir and every view resolve.
SceneManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const SceneManifest& m);
void check_manifest_paths(const SceneManifest& m);

// Loads the bundle with path order taken from the manifest; every listed
// view must be registered in the model and vice versa.
SceneBundle load_manifest_bundle(const SceneManifest& m, double max_reproj_error =
                                                             std::numeric_limits<double>::infinity());

struct ExtractConfig {
  PnsgConfig pnsg;
  std::size_t points = 1024;
  std::uint64_t seed = 0;
  int rounds = 10;
  double max_reproj_error = std::numeric_limits<double>::infinity();
  bool use_tracks = true;
  int threads = 0;

  void validate() const;
};

struct SceneFeatures {
  std::vector<std::uint32_t> path_indices;
  std::vector<NssFeatures> views;
  std::vector<std::vector<PnsgRecord>> rounds;  // PNSG of each sampling round
  int bins = 0;
  int length = 0;
};

// PNSG records for one sampling round over an already filtered point set.
std::vector<PnsgRecord> pnsg_round(const SceneBundle& bundle, const std::vector<SparsePoint>& points,
                                   const ExtractConfig& config, std::uint64_t round);
SceneFeatures extract_features(const SceneBundle& bundle, const ExtractConfig& config);

// <dir>/views.csv plus <dir>/pnsg_round_<r>.bin (r zero-padded to 3 digits).
void write_features(const std::filesystem::path& dir, const SceneFeatures& features,
                    std::uint32_t flags = 0);
// Reads every round dump present, in round order; at least one is required.
SceneFeatures read_features(const std::filesystem::path& dir);
std::filesystem::path round_dump_path(const std::filesystem::path& dir, int round);

std::vector<NssFeatures> read_view_features_csv(const std::filesystem::path& path,
                                                std::vector<std::uint32_t>* path_indices = nullptr);

// One training or test example per sampling round, sharing the view rows.
std::vector<SceneInputs> scene_examples(const SceneManifest& m, const SceneFeatures& features);

// Fixture scene written as <dir>/sparse, <dir>/images and <dir>/manifest.json.
struct SynthConfig {
  std::string scene_id = "synth";
  std::string method_id = "fixture";
  std::string dataset = "synthetic";
  std::string surface = "plane";     // plane | sphere
  std::string shading = "lambertian";  // lambertian | angular
  std::string rig = "orbit";         // orbit | polar_arc
  int views = 8;
  int image_size = 64;
  double radius = 3.0;
  double elevation = 0.8;  // orbit only, radians
  double k_azi = 0.0;      // angular shading slopes
  double k_pol = 0.0;
  // Per-view gray offsets +view_noise, -view_noise, ... along the path.
  double view_noise = 0.0;
  std::size_t points = 400;
  std::uint64_t seed = 0;
  std::optional<double> label;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
fixtures::AnalyticScene synth_scene(const SynthConfig& config);
SceneManifest write_synth_scene(const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace nqa

#endif  // NQA_PIPELINE_HPP
