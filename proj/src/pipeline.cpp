// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "nqa/parallel.hpp"

namespace nqa {

namespace fs = std::filesystem;

namespace {

std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw ManifestError(std::string("manifest: '") + key + "' must be a non-empty string");
  }
  return j.at(key).get<std::string>();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string relative_or_absolute(const fs::path& p, const fs::path& base) {
  const fs::path rel = p.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

}  // namespace

SceneManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ManifestError("manifest: top level must be an object");
  SceneManifest m;
  m.scene_id = required_string(j, "scene_id");
  m.method_id = required_string(j, "method_id");
  m.dataset = required_string(j, "dataset");
  m.model_dir = resolve(base_dir, required_string(j, "model_dir"));
  m.images_dir = resolve(base_dir, required_string(j, "images_dir"));
  m.features_dir = resolve(base_dir, j.contains("features_dir")
                                         ? required_string(j, "features_dir")
                                         : std::string("features"));
  if (!j.contains("views") || !j.at("views").is_array() || j.at("views").empty()) {
    throw ManifestError("manifest: 'views' must be a non-empty array");
  }
  std::set<std::string> seen;
  for (const auto& v : j.at("views")) {
    if (!v.is_string() || v.get<std::string>().empty()) {
      throw ManifestError("manifest: view names must be non-empty strings");
    }
    if (!seen.insert(v.get<std::string>()).second) {
      throw ManifestError("manifest: duplicate view " + v.get<std::string>());
    }
    m.views.push_back(v.get<std::string>());
  }
  if (j.contains("label") && !j.at("label").is_null()) {
    if (!j.at("label").is_number()) throw ManifestError("manifest: 'label' must be a number");
    m.label = j.at("label").get<double>();
  }
  return m;
}

nlohmann::json manifest_to_json(const SceneManifest& m, const fs::path& base_dir) {
  nlohmann::json j;
  j["scene_id"] = m.scene_id;
  j["method_id"] = m.method_id;
  j["dataset"] = m.dataset;
  j["model_dir"] = relative_or_absolute(m.model_dir, base_dir);
  j["images_dir"] = relative_or_absolute(m.images_dir, base_dir);
  if (!m.features_dir.empty()) j["features_dir"] = relative_or_absolute(m.features_dir, base_dir);
  j["views"] = m.views;
  if (m.label) j["label"] = *m.label;
  return j;
}

void check_manifest_paths(const SceneManifest& m) {
  if (!fs::is_directory(m.model_dir)) {
    throw ManifestError("manifest " + m.scene_id + ": missing COLMAP model dir " +
                        m.model_dir.string());
  }
  if (!fs::is_directory(m.images_dir)) {
    throw ManifestError("manifest " + m.scene_id + ": missing images dir " + m.images_dir.string());
  }
  for (const auto& v : m.views) {
    if (!fs::is_regular_file(m.images_dir / v)) {
      throw ManifestError("manifest " + m.scene_id + ": missing view " + (m.images_dir / v).string());
    }
  }
}

SceneManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("manifest " + path.string() + ": invalid JSON");
  }
  SceneManifest m = manifest_from_json(j, fs::absolute(path).parent_path());
  check_manifest_paths(m);
  return m;
}

void write_manifest(const fs::path& path, const SceneManifest& m) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot open " + path.string() + " for writing");
  out << manifest_to_json(m, fs::absolute(path).parent_path()).dump(2) << '\n';
  if (!out) throw ManifestError("failed writing " + path.string());
}

SceneBundle load_manifest_bundle(const SceneManifest& m, double max_reproj_error) {
  BundleOptions options;
  for (std::size_t i = 0; i < m.views.size(); ++i) options.ordering[m.views[i]] = int(i);
  options.max_reproj_error = max_reproj_error;
  SceneBundle bundle = load_bundle(m.model_dir, m.images_dir, options);
  if (bundle.views.size() != m.views.size()) {
    std::set<std::string> found;
    for (const auto& v : bundle.views) found.insert(v.name);
    for (const auto& v : m.views) {
      if (!found.contains(v)) {
        throw ManifestError("manifest " + m.scene_id + ": view " + v +
                            " is not registered in the COLMAP model");
      }
    }
  }
  return bundle;
}

void ExtractConfig::validate() const {
  pnsg.validate();
  if (points == 0) throw std::invalid_argument("extract: --points must be positive");
  if (rounds <= 0) throw std::invalid_argument("extract: --rounds must be positive");
}

std::vector<PnsgRecord> pnsg_round(const SceneBundle& bundle, const std::vector<SparsePoint>& points,
                                   const ExtractConfig& config, std::uint64_t round) {
  const auto sample = sample_points(points, config.points, config.seed, round);
  const auto obs = collect_observations(sample, bundle.views, config.use_tracks);
  const auto features = pnsg_scene(obs, config.pnsg);
  std::vector<PnsgRecord> records(features.size());
  parallel_for(
      features.size(),
      [&](std::size_t i) {
        records[i].point_id = features[i].point_id;
        records[i].xyz = features[i].xyz;
        records[i].tensor = to_tensor(features[i], config.pnsg.resample_length);
      },
      config.threads);
  return records;
}

SceneFeatures extract_features(const SceneBundle& bundle, const ExtractConfig& config) {
  config.validate();
  SceneFeatures out;
  out.bins = config.pnsg.bins;
  out.length = config.pnsg.resample_length;
  for (const auto& v : bundle.views) out.path_indices.push_back(std::uint32_t(v.path_index));
  out.views = view_features(bundle.views, config.threads);
  const auto kept = filter_by_reprojection_error(bundle.points, config.max_reproj_error);
  for (int r = 0; r < config.rounds; ++r) {
    out.rounds.push_back(pnsg_round(bundle, kept, config, std::uint64_t(r)));
  }
  return out;
}

fs::path round_dump_path(const fs::path& dir, int round) {
  char name[32];
  std::snprintf(name, sizeof(name), "pnsg_round_%03d.bin", round);
  return dir / name;
}

void write_features(const fs::path& dir, const SceneFeatures& features, std::uint32_t flags) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_view_features_csv(dir / "views.csv", features.path_indices, features.views);
  // Stale dumps from an earlier run with more rounds would otherwise be read back.
  for (int r = int(features.rounds.size());; ++r) {
    if (!fs::remove(round_dump_path(dir, r))) break;
  }
  for (std::size_t r = 0; r < features.rounds.size(); ++r) {
    write_pnsg_dump(round_dump_path(dir, int(r)), features.rounds[r], features.bins,
                    features.length, flags);
  }
}

std::vector<NssFeatures> read_view_features_csv(const fs::path& path,
                                                std::vector<std::uint32_t>* path_indices) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("path_index", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing header");
  }
  std::vector<NssFeatures> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(fields, field, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size() && field.substr(used) != "\r") throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": bad number '" + field + "'");
      }
    }
    if (values.size() != std::size_t(kNssFeatureCount) + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(kNssFeatureCount + 1) + " fields");
    }
    if (path_indices) path_indices->push_back(std::uint32_t(values[0]));
    NssFeatures row{};
    std::copy(values.begin() + 1, values.end(), row.begin());
    rows.push_back(row);
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no views");
  return rows;
}

SceneFeatures read_features(const fs::path& dir) {
  SceneFeatures out;
  out.views = read_view_features_csv(dir / "views.csv", &out.path_indices);
  for (int r = 0; fs::exists(round_dump_path(dir, r)); ++r) {
    PnsgDump dump = read_pnsg_dump(round_dump_path(dir, r));
    if (r == 0) {
      out.bins = dump.bins;
      out.length = dump.length;
    } else if (dump.bins != out.bins || dump.length != out.length) {
      throw PnsgDumpError(round_dump_path(dir, r).string() + ": shape differs from round 0");
    }
    out.rounds.push_back(std::move(dump.records));
  }
  if (out.rounds.empty()) throw PnsgDumpError(dir.string() + ": no PNSG dumps (run extract)");
  return out;
}

std::vector<SceneInputs> scene_examples(const SceneManifest& m, const SceneFeatures& features) {
  std::vector<SceneInputs> out;
  for (const auto& round : features.rounds) {
    SceneInputs s;
    s.scene_id = m.scene_id;
    s.method_id = m.method_id;
    s.dataset = m.dataset;
    s.views = features.views;
    s.points = round;
    s.label = m.label;
    out.push_back(std::move(s));
  }
  return out;
}

void SynthConfig::validate() const {
  if (scene_id.empty() || method_id.empty() || dataset.empty()) {
    throw std::invalid_argument("synth: scene, method and dataset ids must be non-empty");
  }
  if (surface != "plane" && surface != "sphere") {
    throw std::invalid_argument("synth: surface must be plane or sphere");
  }
  if (shading != "lambertian" && shading != "angular") {
    throw std::invalid_argument("synth: shading must be lambertian or angular");
  }
  if (rig != "orbit" && rig != "polar_arc") {
    throw std::invalid_argument("synth: rig must be orbit or polar_arc");
  }
  if (views < 2) throw std::invalid_argument("synth: need at least 2 views");
  if (image_size < 16) throw std::invalid_argument("synth: image size must be >= 16");
  if (!(radius > 0.0)) throw std::invalid_argument("synth: radius must be positive");
  if (!(view_noise >= 0.0)) throw std::invalid_argument("synth: view noise must be >= 0");
  if (points == 0) throw std::invalid_argument("synth: points must be positive");
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j = {{"scene_id", c.scene_id}, {"method_id", c.method_id},
                      {"dataset", c.dataset},   {"surface", c.surface},
                      {"shading", c.shading},   {"rig", c.rig},
                      {"views", c.views},       {"image_size", c.image_size},
                      {"radius", c.radius},     {"elevation", c.elevation},
                      {"k_azi", c.k_azi},       {"k_pol", c.k_pol},
                      {"view_noise", c.view_noise}, {"points", c.points},
                      {"seed", c.seed}};
  if (c.label) j["label"] = *c.label;
  return j;
}

fixtures::AnalyticScene synth_scene(const SynthConfig& c) {
  c.validate();
  fixtures::AnalyticScene scene;
  if (c.surface == "sphere") {
    scene.surface = fixtures::Sphere{};
  } else {
    scene.surface = fixtures::Plane{};
  }
  const fixtures::Texture albedo = fixtures::Texture::random(c.seed);
  if (c.shading == "angular") {
    scene.shading = fixtures::AngularLinear{albedo, c.k_azi, c.k_pol};
  } else {
    scene.shading = fixtures::Lambertian{albedo};
  }
  // Focal length scales with the image so the field of view stays fixed.
  const auto camera = fixtures::default_camera(c.image_size, double(c.image_size));
  scene.rig = c.rig == "orbit"
                  ? fixtures::orbit_rig(c.views, c.radius, c.elevation, Vec3::Zero(), camera)
                  : fixtures::polar_arc_rig(c.views, c.radius, -0.6, 0.6, Vec3::Zero(), camera);
  if (c.view_noise > 0.0) {
    // Alternating-sign flicker along the path: every pair of neighbouring
    // views differs by exactly 2 * view_noise.
    for (int k = 0; k < c.views; ++k) {
      scene.view_offsets.push_back(k % 2 ? -c.view_noise : c.view_noise);
    }
  }
  return scene;
}

SceneManifest write_synth_scene(const SynthConfig& c, const fs::path& dir) {
  const fixtures::AnalyticScene scene = synth_scene(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  const SceneBundle bundle = fixtures::build_bundle(scene, c.points, c.seed);
  fixtures::export_bundle(bundle, dir);
  SceneManifest m;
  m.scene_id = c.scene_id;
  m.method_id = c.method_id;
  m.dataset = c.dataset;
  m.model_dir = fs::absolute(dir / "sparse");
  m.images_dir = fs::absolute(dir / "images");
  m.features_dir = fs::absolute(dir / "features");
  for (const auto& v : bundle.views) m.views.push_back(v.name);
  m.label = c.label;
  write_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace nqa
