#include "owg/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "owg/png_io.hpp"

namespace owg::imaging {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneObservation::validate() const {
  if (rgb.width() < 32 || rgb.height() < 32)
    raise(Err::FormatError, "observation must be at least 32x32");
  require_same_size(rgb.width(), rgb.height(), depth_m.width(), depth_m.height(),
                    "rgb/depth size mismatch");
  camera.validate();
  for (float d : depth_m.data())
    if (!std::isfinite(d) || d < 0) raise(Err::FormatError, "depth values must be finite and >= 0");
}

int LabelMask::num_segments() const {
  std::array<bool, 256> seen{};
  int max_id = 0;
  for (uint8_t l : labels.data()) {
    seen[l] = true;
    max_id = std::max<int>(max_id, l);
  }
  for (int id = 1; id <= max_id; ++id)
    if (!seen[id])
      raise(Err::NonContiguousIds, "segment ID " + std::to_string(id) + " missing from 1.." +
                                       std::to_string(max_id));
  return max_id;
}

namespace {

GrayF32 depth_mm_to_m(const GrayU16& mm) {
  GrayF32 out(mm.width(), mm.height());
  for (size_t i = 0; i < mm.data().size(); ++i)
    out.data()[i] = static_cast<float>(mm.data()[i]) * 0.001f;
  return out;
}

GrayU16 depth_m_to_mm(const GrayF32& m) {
  GrayU16 out(m.width(), m.height());
  for (size_t i = 0; i < m.data().size(); ++i) {
    const double mm = std::llround(static_cast<double>(m.data()[i]) * 1000.0);
    out.data()[i] = static_cast<uint16_t>(std::clamp(mm, 0.0, 65535.0));
  }
  return out;
}

}  // namespace

SceneFile load_scene(const std::string& descriptor_path) {
  std::ifstream f(descriptor_path);
  if (!f) raise(Err::MissingFile, descriptor_path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    raise(Err::FormatError, descriptor_path + ": " + e.what());
  }

  SceneFile scene;
  try {
    const fs::path base = fs::path(descriptor_path).parent_path();
    const auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    scene.obs.rgb = read_png_rgb8(resolve(doc.at("rgb").get<std::string>()));
    scene.obs.depth_m = depth_mm_to_m(read_png_gray16(resolve(doc.at("depth_mm").get<std::string>())));
    scene.mask.labels = read_png_gray8(resolve(doc.at("labels").get<std::string>()));

    const json& cam = doc.at("camera");
    scene.obs.camera.fx = cam.at("fx").get<double>();
    scene.obs.camera.fy = cam.at("fy").get<double>();
    scene.obs.camera.cx = cam.at("cx").get<double>();
    scene.obs.camera.cy = cam.at("cy").get<double>();
    const auto m = cam.at("world_from_camera").get<std::vector<double>>();
    if (m.size() != 16) raise(Err::FormatError, "world_from_camera must have 16 entries");
    std::copy(m.begin(), m.end(), scene.obs.camera.world_from_camera.m.begin());
    scene.table_z = doc.at("table_z").get<double>();
  } catch (const json::exception& e) {
    raise(Err::FormatError, descriptor_path + ": " + e.what());
  }

  scene.obs.validate();
  require_same_size(scene.obs.width(), scene.obs.height(), scene.mask.width(),
                    scene.mask.height(), "labels size differs from rgb/depth");
  scene.mask.num_segments();
  return scene;
}

std::string save_scene(const std::string& dir, const std::string& name,
                       const SceneObservation& obs, const LabelMask& mask, double table_z) {
  fs::create_directories(dir);
  const fs::path base(dir);
  write_png((base / (name + ".png")).string(), obs.rgb);
  write_png((base / (name + "_d.png")).string(), depth_m_to_mm(obs.depth_m));
  write_png((base / (name + "_m.png")).string(), mask.labels);

  json cam;
  cam["fx"] = obs.camera.fx;
  cam["fy"] = obs.camera.fy;
  cam["cx"] = obs.camera.cx;
  cam["cy"] = obs.camera.cy;
  cam["world_from_camera"] = obs.camera.world_from_camera.m;

  json doc;
  doc["rgb"] = name + ".png";
  doc["depth_mm"] = name + "_d.png";
  doc["labels"] = name + "_m.png";
  doc["camera"] = cam;
  doc["table_z"] = table_z;

  const std::string path = (base / (name + ".json")).string();
  std::ofstream f(path);
  f << doc.dump(2) << "\n";
  return path;
}

std::vector<SegmentStats> segment_stats(const LabelMask& mask, const SceneObservation& obs) {
  require_same_size(mask.width(), mask.height(), obs.width(), obs.height(),
                    "mask/observation size mismatch");
  const int n = mask.num_segments();
  std::vector<SegmentStats> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].id = i + 1;
    out[i].bbox = {mask.width(), mask.height(), -1, -1};
  }

  std::vector<double> sum_u(n, 0), sum_v(n, 0);
  std::vector<Vec3> sum_w(n);
  std::vector<long> n_world(n, 0);

  for (int v = 0; v < mask.height(); ++v)
    for (int u = 0; u < mask.width(); ++u) {
      const int id = mask.labels.at(u, v);
      if (id == 0) continue;
      SegmentStats& s = out[id - 1];
      s.area_px += 1;
      sum_u[id - 1] += u;
      sum_v[id - 1] += v;
      s.bbox.u_min = std::min(s.bbox.u_min, u);
      s.bbox.v_min = std::min(s.bbox.v_min, v);
      s.bbox.u_max = std::max(s.bbox.u_max, u);
      s.bbox.v_max = std::max(s.bbox.v_max, v);
      const float d = obs.depth_m.at(u, v);
      if (d > 0) {
        const Vec3 p = obs.camera.world_from_camera.transform_point(deproject(u, v, d, obs.camera));
        sum_w[id - 1] = sum_w[id - 1] + p;
        n_world[id - 1] += 1;
      }
    }

  for (int i = 0; i < n; ++i) {
    SegmentStats& s = out[i];
    s.centroid_u = sum_u[i] / static_cast<double>(s.area_px);
    s.centroid_v = sum_v[i] / static_cast<double>(s.area_px);
    if (n_world[i] > 0) s.world_centroid = sum_w[i] * (1.0 / static_cast<double>(n_world[i]));
  }
  return out;
}

Heightmap orthographic_heightmap(const SceneObservation& obs, const WorldRect& bounds,
                                 double resolution, double table_z) {
  if (!(resolution > 0)) raise(Err::FormatError, "heightmap resolution must be > 0");
  if (!(bounds.width() > 0) || !(bounds.height() > 0))
    raise(Err::FormatError, "heightmap bounds are degenerate");

  Heightmap hm;
  hm.resolution = resolution;
  hm.origin_x = bounds.x_min;
  hm.origin_y = bounds.y_min;
  hm.table_z = table_z;
  const int gw = std::max(1, static_cast<int>(std::ceil(bounds.width() / resolution)));
  const int gh = std::max(1, static_cast<int>(std::ceil(bounds.height() / resolution)));
  hm.cells = GrayF32(gw, gh, 0.0f);
  hm.color_cells = RgbImage(gw, gh, Rgb{0, 0, 0});
  // Tracks the z of the point that set each cell so color follows the highest hit.
  GrayF32 best_z(gw, gh, std::numeric_limits<float>::infinity());

  long hits = 0;
  for (int v = 0; v < obs.height(); ++v)
    for (int u = 0; u < obs.width(); ++u) {
      const float d = obs.depth_m.at(u, v);
      if (!(d > 0)) continue;
      const Vec3 p = obs.camera.world_from_camera.transform_point(deproject(u, v, d, obs.camera));
      const int ix = static_cast<int>(std::floor((p.x - bounds.x_min) / resolution));
      const int iy = static_cast<int>(std::floor((p.y - bounds.y_min) / resolution));
      if (ix < 0 || ix >= gw || iy < 0 || iy >= gh) continue;
      ++hits;
      const float height = static_cast<float>(std::max(0.0, table_z - p.z));
      if (height > hm.cells.at(ix, iy)) hm.cells.at(ix, iy) = height;
      if (static_cast<float>(p.z) < best_z.at(ix, iy)) {
        best_z.at(ix, iy) = static_cast<float>(p.z);
        hm.color_cells->at(ix, iy) = obs.rgb.at(u, v);
      }
    }
  if (hits == 0) raise(Err::EmptyProjection, "no valid depth pixel lands in the requested bounds");
  return hm;
}

SceneObservation mask_rgbd(const SceneObservation& obs, const LabelMask& mask, int id) {
  require_same_size(mask.width(), mask.height(), obs.width(), obs.height(),
                    "mask/observation size mismatch");
  if (id < 1 || id > 255) raise(Err::UnknownSegment, "segment id out of range: " + std::to_string(id));
  SceneObservation out;
  out.camera = obs.camera;
  out.rgb = RgbImage(obs.width(), obs.height());
  out.depth_m = GrayF32(obs.width(), obs.height(), 0.0f);
  bool found = false;
  for (int v = 0; v < obs.height(); ++v)
    for (int u = 0; u < obs.width(); ++u)
      if (mask.labels.at(u, v) == id) {
        found = true;
        out.rgb.at(u, v) = obs.rgb.at(u, v);
        out.depth_m.at(u, v) = obs.depth_m.at(u, v);
      }
  if (!found) raise(Err::UnknownSegment, "segment id has no pixels: " + std::to_string(id));
  return out;
}

PixelBox segment_bbox(const LabelMask& mask, int id) {
  PixelBox box{mask.width(), mask.height(), -1, -1};
  for (int v = 0; v < mask.height(); ++v)
    for (int u = 0; u < mask.width(); ++u)
      if (mask.labels.at(u, v) == id) {
        box.u_min = std::min(box.u_min, u);
        box.v_min = std::min(box.v_min, v);
        box.u_max = std::max(box.u_max, u);
        box.v_max = std::max(box.v_max, v);
      }
  if (box.u_max < 0) raise(Err::UnknownSegment, "segment id has no pixels: " + std::to_string(id));
  return box;
}

}  // namespace owg::imaging
