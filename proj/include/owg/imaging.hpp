#pragma once
#include <optional>
#include <string>
#include <vector>

#include "owg/camera.hpp"
#include "owg/raster.hpp"

namespace owg::imaging {

// Registered RGB + depth pair. Depth is metric z-depth in meters, 0 = invalid.
struct SceneObservation {
  RgbImage rgb;
  GrayF32 depth_m;
  CameraModel camera;

  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
  void validate() const;
};

// 8-bit label raster: 0 = background, 1..N = segments. IDs must be contiguous.
struct LabelMask {
  GrayU8 labels;

  int width() const { return labels.width(); }
  int height() const { return labels.height(); }
  // Returns N; raises NonContiguousIds on gaps in 1..max.
  int num_segments() const;
};

struct PixelBox {
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  int width() const { return u_max - u_min + 1; }
  int height() const { return v_max - v_min + 1; }
  bool operator==(const PixelBox&) const = default;
};

struct SegmentStats {
  int id = 0;
  double centroid_u = 0, centroid_v = 0;
  PixelBox bbox;
  long area_px = 0;
  std::optional<Vec3> world_centroid;
};

struct WorldRect {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

// Top-down orthographic height raster. Heights are meters above the table
// plane, clamped at 0; cell (ix, iy) covers world
// [origin_x + ix*res, origin_x + (ix+1)*res) x [origin_y + iy*res, ...).
struct Heightmap {
  GrayF32 cells;
  double resolution = 0;
  double origin_x = 0, origin_y = 0;
  double table_z = 0;
  std::optional<RgbImage> color_cells;

  int grid_w() const { return cells.width(); }
  int grid_h() const { return cells.height(); }
  double cell_center_x(int ix) const { return origin_x + (ix + 0.5) * resolution; }
  double cell_center_y(int iy) const { return origin_y + (iy + 0.5) * resolution; }
};

// One scene on disk: observation + labels + the table plane height the
// descriptor carries.
struct SceneFile {
  SceneObservation obs;
  LabelMask mask;
  double table_z = 0;
};

SceneFile load_scene(const std::string& descriptor_path);

// Writes rgb/depth/label PNGs plus the JSON descriptor; returns descriptor path.
std::string save_scene(const std::string& dir, const std::string& name,
                       const SceneObservation& obs, const LabelMask& mask, double table_z);

std::vector<SegmentStats> segment_stats(const LabelMask& mask, const SceneObservation& obs);

Heightmap orthographic_heightmap(const SceneObservation& obs, const WorldRect& bounds,
                                 double resolution, double table_z);

SceneObservation mask_rgbd(const SceneObservation& obs, const LabelMask& mask, int id);

// Pixel bbox of one segment; raises UnknownSegment if id has no pixels.
PixelBox segment_bbox(const LabelMask& mask, int id);

}  // namespace owg::imaging
