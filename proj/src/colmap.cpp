// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/colmap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace nqa {

static_assert(std::endian::native == std::endian::little,
              "COLMAP binary I/O assumes a little-endian host");

namespace fs = std::filesystem;

std::vector<std::uint32_t> SparsePoint::track_image_ids() const {
  std::vector<std::uint32_t> ids;
  ids.reserve(track.size());
  for (const TrackElement& t : track) ids.push_back(t.image_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void SceneBundle::validate() const {
  std::unordered_set<std::uint32_t> image_ids;
  std::unordered_set<int> path_indices;
  for (const PosedView& v : views) {
    image_ids.insert(v.image_id);
    if (!path_indices.insert(v.path_index).second) {
      throw ColmapError("duplicate path index " + std::to_string(v.path_index));
    }
  }
  for (const SparsePoint& p : points) {
    for (const TrackElement& t : p.track) {
      if (!image_ids.contains(t.image_id)) {
        throw ColmapError("point " + std::to_string(p.id) + " references unknown image " +
                          std::to_string(t.image_id));
      }
    }
  }
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ColmapError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Bounds-checked little-endian cursor over a whole file.
class ByteReader {
 public:
  ByteReader(std::string bytes, std::string label) : bytes_(std::move(bytes)), label_(std::move(label)) {}

  template <typename T>
  T read() {
    ensure(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string read_cstring() {
    const std::size_t end = bytes_.find('\0', pos_);
    if (end == std::string::npos) {
      throw ColmapError(label_ + ": unterminated string at byte offset " + std::to_string(pos_));
    }
    std::string s = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  // Rejects a record count that cannot fit in the remaining bytes.
  void expect_records(std::uint64_t count, std::size_t min_record_bytes) {
    const std::size_t left = remaining();
    if (min_record_bytes > 0 && count > left / min_record_bytes) {
      throw ColmapError(label_ + ": truncated; " + std::to_string(count) +
                        " records declared but only " + std::to_string(left) +
                        " bytes remain at byte offset " + std::to_string(pos_));
    }
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw ColmapError(label_ + ": record count disagrees with payload; " +
                        std::to_string(bytes_.size() - pos_) +
                        " trailing bytes at byte offset " + std::to_string(pos_));
    }
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void ensure(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ColmapError(label_ + ": truncated at byte offset " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " bytes, file has " +
                        std::to_string(bytes_.size()) + ")");
    }
  }

  std::string bytes_;
  std::string label_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  template <typename T>
  void write(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void write_cstring(const std::string& s) {
    bytes_.append(s);
    bytes_.push_back('\0');
  }
  void save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ColmapError("cannot write " + path.string());
    out.write(bytes_.data(), std::streamsize(bytes_.size()));
    if (!out) throw ColmapError("write failed for " + path.string());
  }

 private:
  std::string bytes_;
};

std::size_t param_count(std::int32_t model) {
  switch (model) {
    case int(CameraModel::kSimplePinhole): return 3;
    case int(CameraModel::kPinhole): return 4;
    default: return 0;
  }
}

PinholeCamera make_camera(std::int32_t model, std::uint64_t width, std::uint64_t height,
                          const std::vector<double>& params, const std::string& where) {
  PinholeCamera cam;
  if (params.size() != param_count(model)) {
    throw ColmapError(where + ": expected " + std::to_string(param_count(model)) +
                      " parameters, got " + std::to_string(params.size()));
  }
  if (width > std::uint64_t(std::numeric_limits<int>::max()) ||
      height > std::uint64_t(std::numeric_limits<int>::max())) {
    throw ColmapError(where + ": image extents too large");
  }
  cam.width = int(width);
  cam.height = int(height);
  if (model == int(CameraModel::kSimplePinhole)) {
    cam.fx = cam.fy = params[0];
    cam.cx = params[1];
    cam.cy = params[2];
  } else {
    cam.fx = params[0];
    cam.fy = params[1];
    cam.cx = params[2];
    cam.cy = params[3];
  }
  try {
    cam.validate();
  } catch (const GeometryError& e) {
    throw ColmapError(where + ": " + e.what());
  }
  return cam;
}

RigidPose make_pose(double qw, double qx, double qy, double qz, const Vec3& t, bool& renormalized,
                    const std::string& where) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double norm = q.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-3) {
    throw ColmapError(where + ": quaternion norm " + std::to_string(norm) + " is not unit");
  }
  renormalized = std::abs(norm - 1.0) > 1e-9;
  if (renormalized) q.normalize();
  if (!t.allFinite()) throw ColmapError(where + ": non-finite translation");
  return RigidPose(q, t);
}

std::int32_t model_from_name(const std::string& name, const std::string& where) {
  if (name == "SIMPLE_PINHOLE") return int(CameraModel::kSimplePinhole);
  if (name == "PINHOLE") return int(CameraModel::kPinhole);
  throw ColmapError(where + ": unsupported camera model " + name);
}

// Non-comment lines with their 1-based line numbers. Blank lines are kept
// because images.txt uses them for images without 2D points.
std::vector<std::pair<std::size_t, std::string>> data_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    lines.emplace_back(number, line);
  }
  return lines;
}

bool is_blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

template <typename T>
T parse_field(std::istringstream& in, const std::string& location, const char* what) {
  T value{};
  if (!(in >> value)) throw ColmapError(location + ": cannot parse " + what);
  return value;
}

// %.17g keeps doubles exact across a text round-trip.
std::string exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// --- cameras ----------------------------------------------------------------

CameraMap read_cameras_binary(const fs::path& path) {
  ByteReader in(read_file(path), path.string());
  const auto count = in.read<std::uint64_t>();
  in.expect_records(count, 4 + 4 + 8 + 8);
  CameraMap cameras;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_offset = in.offset();
    const auto id = in.read<std::uint32_t>();
    const auto model = in.read<std::int32_t>();
    const auto width = in.read<std::uint64_t>();
    const auto height = in.read<std::uint64_t>();
    const std::string location = path.string() + " camera " + std::to_string(id) +
                                 " at byte offset " + std::to_string(record_offset);
    const std::size_t n = param_count(model);
    if (n == 0) {
      throw ColmapError(location + ": unsupported camera model id " + std::to_string(model));
    }
    std::vector<double> params(n);
    for (double& p : params) p = in.read<double>();
    if (!cameras.emplace(id, make_camera(model, width, height, params, location)).second) {
      throw ColmapError(location + ": duplicate camera id");
    }
  }
  in.expect_end();
  return cameras;
}

CameraMap read_cameras_text(const fs::path& path) {
  CameraMap cameras;
  for (const auto& [number, line] : data_lines(path)) {
    if (is_blank(line)) continue;
    const std::string loc = where(path, number);
    std::istringstream in(line);
    const auto id = parse_field<std::uint32_t>(in, loc, "camera id");
    const auto model = model_from_name(parse_field<std::string>(in, loc, "model"), loc);
    const auto width = parse_field<std::uint64_t>(in, loc, "width");
    const auto height = parse_field<std::uint64_t>(in, loc, "height");
    std::vector<double> params;
    double p;
    while (in >> p) params.push_back(p);
    if (!in.eof()) throw ColmapError(loc + ": cannot parse camera parameters");
    if (!cameras.emplace(id, make_camera(model, width, height, params, loc)).second) {
      throw ColmapError(loc + ": duplicate camera id");
    }
  }
  return cameras;
}

void write_cameras_binary(const fs::path& path, const CameraMap& cameras) {
  ByteWriter out;
  out.write<std::uint64_t>(cameras.size());
  for (const auto& [id, cam] : cameras) {
    out.write<std::uint32_t>(id);
    out.write<std::int32_t>(int(CameraModel::kPinhole));
    out.write<std::uint64_t>(std::uint64_t(cam.width));
    out.write<std::uint64_t>(std::uint64_t(cam.height));
    for (double p : {cam.fx, cam.fy, cam.cx, cam.cy}) out.write<double>(p);
  }
  out.save(path);
}

void write_cameras_text(const fs::path& path, const CameraMap& cameras) {
  std::ofstream out(path);
  if (!out) throw ColmapError("cannot write " + path.string());
  out << "# Camera list with one line of data per camera:\n"
      << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
      << "# Number of cameras: " << cameras.size() << '\n';
  for (const auto& [id, cam] : cameras) {
    out << id << " PINHOLE " << cam.width << ' ' << cam.height << ' ' << exact(cam.fx) << ' '
        << exact(cam.fy) << ' ' << exact(cam.cx) << ' ' << exact(cam.cy) << '\n';
  }
}

// --- images -----------------------------------------------------------------

std::vector<ImageRecord> read_images_binary(const fs::path& path) {
  ByteReader in(read_file(path), path.string());
  const auto count = in.read<std::uint64_t>();
  in.expect_records(count, 4 + 7 * 8 + 4 + 1 + 8);
  std::vector<ImageRecord> images;
  images.reserve(std::size_t(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_offset = in.offset();
    ImageRecord rec;
    rec.image_id = in.read<std::uint32_t>();
    double q[4];
    for (double& v : q) v = in.read<double>();
    Vec3 t;
    for (int k = 0; k < 3; ++k) t[k] = in.read<double>();
    rec.camera_id = in.read<std::uint32_t>();
    rec.name = in.read_cstring();
    const std::string location = path.string() + " image " + std::to_string(rec.image_id) +
                                 " at byte offset " + std::to_string(record_offset);
    rec.pose = make_pose(q[0], q[1], q[2], q[3], t, rec.quaternion_renormalized, location);
    const auto n2d = in.read<std::uint64_t>();
    in.expect_records(n2d, 24);
    rec.points2d.resize(std::size_t(n2d));
    for (Point2D& p : rec.points2d) {
      p.x = in.read<double>();
      p.y = in.read<double>();
      p.point3d_id = in.read<std::uint64_t>();
    }
    images.push_back(std::move(rec));
  }
  in.expect_end();
  return images;
}

std::vector<ImageRecord> read_images_text(const fs::path& path) {
  const auto lines = data_lines(path);
  std::vector<ImageRecord> images;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& [number, line] = lines[i];
    if (is_blank(line)) continue;
    const std::string loc = where(path, number);
    std::istringstream in(line);
    ImageRecord rec;
    rec.image_id = parse_field<std::uint32_t>(in, loc, "image id");
    double q[4];
    for (double& v : q) v = parse_field<double>(in, loc, "quaternion");
    Vec3 t;
    for (int k = 0; k < 3; ++k) t[k] = parse_field<double>(in, loc, "translation");
    rec.camera_id = parse_field<std::uint32_t>(in, loc, "camera id");
    rec.name = parse_field<std::string>(in, loc, "name");
    rec.pose = make_pose(q[0], q[1], q[2], q[3], t, rec.quaternion_renormalized, loc);

    // The following line holds the 2D points, possibly empty.
    if (i + 1 < lines.size()) {
      ++i;
      const std::string ploc = where(path, lines[i].first);
      std::istringstream pts(lines[i].second);
      double x;
      while (pts >> x) {
        Point2D p;
        p.x = x;
        p.y = parse_field<double>(pts, ploc, "point y");
        const auto id = parse_field<long long>(pts, ploc, "point3d id");
        p.point3d_id = id < 0 ? kUnmatchedPoint3d : std::uint64_t(id);
        rec.points2d.push_back(p);
      }
      if (!pts.eof()) throw ColmapError(ploc + ": cannot parse 2D points");
    }
    images.push_back(std::move(rec));
  }
  return images;
}

void write_images_binary(const fs::path& path, const std::vector<ImageRecord>& images) {
  ByteWriter out;
  out.write<std::uint64_t>(images.size());
  for (const ImageRecord& rec : images) {
    out.write<std::uint32_t>(rec.image_id);
    const auto& q = rec.pose.rotation();
    for (double v : {q.w(), q.x(), q.y(), q.z()}) out.write<double>(v);
    for (int k = 0; k < 3; ++k) out.write<double>(rec.pose.translation()[k]);
    out.write<std::uint32_t>(rec.camera_id);
    out.write_cstring(rec.name);
    out.write<std::uint64_t>(rec.points2d.size());
    for (const Point2D& p : rec.points2d) {
      out.write<double>(p.x);
      out.write<double>(p.y);
      out.write<std::uint64_t>(p.point3d_id);
    }
  }
  out.save(path);
}

void write_images_text(const fs::path& path, const std::vector<ImageRecord>& images) {
  std::ofstream out(path);
  if (!out) throw ColmapError("cannot write " + path.string());
  out << "# Image list with two lines of data per image:\n"
      << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
      << "# Number of images: " << images.size() << '\n';
  for (const ImageRecord& rec : images) {
    const auto& q = rec.pose.rotation();
    const Vec3& t = rec.pose.translation();
    out << rec.image_id << ' ' << exact(q.w()) << ' ' << exact(q.x()) << ' ' << exact(q.y()) << ' '
        << exact(q.z()) << ' ' << exact(t.x()) << ' ' << exact(t.y()) << ' ' << exact(t.z()) << ' '
        << rec.camera_id << ' ' << rec.name << '\n';
    for (std::size_t i = 0; i < rec.points2d.size(); ++i) {
      const Point2D& p = rec.points2d[i];
      if (i) out << ' ';
      out << exact(p.x) << ' ' << exact(p.y) << ' ';
      if (p.point3d_id == kUnmatchedPoint3d) {
        out << -1;
      } else {
        out << p.point3d_id;
      }
    }
    out << '\n';
  }
}

// --- points3D ---------------------------------------------------------------

std::vector<SparsePoint> read_points3d_binary(const fs::path& path) {
  ByteReader in(read_file(path), path.string());
  const auto count = in.read<std::uint64_t>();
  in.expect_records(count, 8 + 24 + 3 + 8 + 8);
  std::vector<SparsePoint> points;
  points.reserve(std::size_t(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_offset = in.offset();
    SparsePoint p;
    p.id = in.read<std::uint64_t>();
    for (int k = 0; k < 3; ++k) p.xyz[k] = in.read<double>();
    for (auto& c : p.rgb) c = in.read<std::uint8_t>();
    p.reproj_error = in.read<double>();
    if (!p.xyz.allFinite()) {
      throw ColmapError(path.string() + ": non-finite point at byte offset " +
                        std::to_string(record_offset));
    }
    const auto track_len = in.read<std::uint64_t>();
    in.expect_records(track_len, 8);
    p.track.resize(std::size_t(track_len));
    for (TrackElement& t : p.track) {
      t.image_id = in.read<std::uint32_t>();
      t.point2d_index = in.read<std::uint32_t>();
    }
    points.push_back(std::move(p));
  }
  in.expect_end();
  return points;
}

std::vector<SparsePoint> read_points3d_text(const fs::path& path) {
  std::vector<SparsePoint> points;
  for (const auto& [number, line] : data_lines(path)) {
    if (is_blank(line)) continue;
    const std::string loc = where(path, number);
    std::istringstream in(line);
    SparsePoint p;
    p.id = parse_field<std::uint64_t>(in, loc, "point id");
    for (int k = 0; k < 3; ++k) p.xyz[k] = parse_field<double>(in, loc, "xyz");
    for (auto& c : p.rgb) {
      const auto v = parse_field<int>(in, loc, "rgb");
      if (v < 0 || v > 255) throw ColmapError(loc + ": color out of range");
      c = std::uint8_t(v);
    }
    p.reproj_error = parse_field<double>(in, loc, "error");
    if (!p.xyz.allFinite()) throw ColmapError(loc + ": non-finite point");
    std::uint32_t image_id;
    while (in >> image_id) {
      p.track.push_back({image_id, parse_field<std::uint32_t>(in, loc, "point2d index")});
    }
    if (!in.eof()) throw ColmapError(loc + ": cannot parse track");
    points.push_back(std::move(p));
  }
  return points;
}

void write_points3d_binary(const fs::path& path, const std::vector<SparsePoint>& points) {
  ByteWriter out;
  out.write<std::uint64_t>(points.size());
  for (const SparsePoint& p : points) {
    out.write<std::uint64_t>(p.id);
    for (int k = 0; k < 3; ++k) out.write<double>(p.xyz[k]);
    for (auto c : p.rgb) out.write<std::uint8_t>(c);
    out.write<double>(p.reproj_error);
    out.write<std::uint64_t>(p.track.size());
    for (const TrackElement& t : p.track) {
      out.write<std::uint32_t>(t.image_id);
      out.write<std::uint32_t>(t.point2d_index);
    }
  }
  out.save(path);
}

void write_points3d_text(const fs::path& path, const std::vector<SparsePoint>& points) {
  std::ofstream out(path);
  if (!out) throw ColmapError("cannot write " + path.string());
  out << "# 3D point list with one line of data per point:\n"
      << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
      << "# Number of points: " << points.size() << '\n';
  for (const SparsePoint& p : points) {
    out << p.id << ' ' << exact(p.xyz.x()) << ' ' << exact(p.xyz.y()) << ' ' << exact(p.xyz.z())
        << ' ' << int(p.rgb[0]) << ' ' << int(p.rgb[1]) << ' ' << int(p.rgb[2]) << ' '
        << exact(p.reproj_error);
    for (const TrackElement& t : p.track) out << ' ' << t.image_id << ' ' << t.point2d_index;
    out << '\n';
  }
}

// --- dispatch and bundle ----------------------------------------------------

namespace {

bool is_text(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".txt") return true;
  if (ext == ".bin") return false;
  throw ColmapError(path.string() + ": expected a .bin or .txt extension");
}

}  // namespace

CameraMap read_cameras(const fs::path& path) {
  return is_text(path) ? read_cameras_text(path) : read_cameras_binary(path);
}

std::vector<ImageRecord> read_images(const fs::path& path) {
  return is_text(path) ? read_images_text(path) : read_images_binary(path);
}

std::vector<SparsePoint> read_points3d(const fs::path& path) {
  return is_text(path) ? read_points3d_text(path) : read_points3d_binary(path);
}

ModelFiles find_model_files(const fs::path& model_dir) {
  auto pick = [&](const std::string& stem) {
    for (const char* ext : {".bin", ".txt"}) {
      fs::path candidate = model_dir / (stem + ext);
      if (fs::exists(candidate)) return candidate;
    }
    throw ColmapError("missing COLMAP " + stem + ".bin/.txt in " + model_dir.string());
  };
  return {pick("cameras"), pick("images"), pick("points3D")};
}

SceneBundle load_bundle(const fs::path& model_dir, const fs::path& images_dir,
                        const BundleOptions& options) {
  const ModelFiles files = find_model_files(model_dir);
  SceneBundle bundle;
  bundle.cameras = read_cameras(files.cameras);
  std::vector<ImageRecord> images = read_images(files.images);
  bundle.points = filter_by_reprojection_error(read_points3d(files.points3d),
                                               options.max_reproj_error);

  std::sort(images.begin(), images.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.name < b.name; });
  int next_index = 0;
  for (const ImageRecord& rec : images) {
    const auto cam = bundle.cameras.find(rec.camera_id);
    if (cam == bundle.cameras.end()) {
      throw ColmapError("image " + rec.name + " references unknown camera " +
                        std::to_string(rec.camera_id));
    }
    int path_index = next_index++;
    if (!options.ordering.empty()) {
      const auto it = options.ordering.find(rec.name);
      if (it == options.ordering.end()) continue;  // not part of the synthesized path
      path_index = it->second;
    }
    if (rec.quaternion_renormalized && options.warnings) {
      options.warnings->push_back("image " + rec.name + ": quaternion renormalized");
    }
    PosedView view;
    view.image = read_ppm(images_dir / rec.name);
    if (view.image.width() != cam->second.width || view.image.height() != cam->second.height) {
      throw ColmapError("image " + rec.name + " size does not match camera " +
                        std::to_string(rec.camera_id));
    }
    view.camera = cam->second;
    view.pose = rec.pose;
    view.path_index = path_index;
    view.image_id = rec.image_id;
    view.name = rec.name;
    bundle.views.push_back(std::move(view));
  }
  std::sort(bundle.views.begin(), bundle.views.end(),
            [](const PosedView& a, const PosedView& b) { return a.path_index < b.path_index; });

  // Track entries pointing at images outside the path are dropped.
  std::unordered_set<std::uint32_t> present;
  for (const PosedView& v : bundle.views) present.insert(v.image_id);
  for (SparsePoint& p : bundle.points) {
    std::erase_if(p.track, [&](const TrackElement& t) { return !present.contains(t.image_id); });
  }
  bundle.validate();
  return bundle;
}

std::vector<SparsePoint> filter_by_reprojection_error(const std::vector<SparsePoint>& points,
                                                      double max_error) {
  std::vector<SparsePoint> kept;
  for (const SparsePoint& p : points) {
    if (!(p.reproj_error > max_error)) kept.push_back(p);
  }
  return kept;
}

std::vector<SparsePoint> sample_points(const std::vector<SparsePoint>& points, std::size_t count,
                                       std::uint64_t seed, std::uint64_t round) {
  std::vector<SparsePoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const SparsePoint& a, const SparsePoint& b) { return a.id < b.id; });
  if (count >= sorted.size()) return sorted;

  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(round),
                    std::uint32_t(round >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> index(sorted.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
  }
  index.resize(count);
  std::sort(index.begin(), index.end());
  std::vector<SparsePoint> out;
  out.reserve(count);
  for (std::size_t i : index) out.push_back(sorted[i]);
  return out;
}

}  // namespace nqa
