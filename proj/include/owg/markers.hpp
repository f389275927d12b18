#pragma once
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "owg/imaging.hpp"

namespace owg::markers {

using imaging::LabelMask;
using imaging::PixelBox;
using imaging::SceneObservation;

struct MarkerStyle {
  double fill_alpha = 0.4;
  bool overlay_ids = true;
  bool draw_boxes = false;
  int upscale = 1;
  int label_px = 14;
  std::vector<Rgb> palette;

  void validate() const;
};

// Default look: translucent fills, ID overlays, no boxes, 20-color palette.
// `long_side` picks an upscale factor so the output long side is >= 1024.
MarkerStyle default_style(int image_w, int image_h, int long_side = 1024);
std::vector<Rgb> default_palette(int n = 20);

struct MarkedImage {
  RgbImage raster;
  std::map<int, PixelBox> placements;
  std::vector<int> source_ids;
};

struct RoiCrop {
  RgbImage raster;
  int offset_u = 0, offset_v = 0;
  int segment_id = 0;
};

enum class VisualTransformKind {
  rectangle,
  ellipse,
  contour,
  blur_reverse,
  gray_reverse,
  white_background,
  crop,
};

struct TransformParams {
  int blur_radius = 11;
  int stroke_px = 4;
};

MarkedImage overlay_som(const SceneObservation& obs, const LabelMask& mask,
                        const MarkerStyle& style);

RoiCrop crop_roi(const SceneObservation& obs, const LabelMask& mask, int id, double margin_frac,
                 int min_side);

// Grasp descriptor in parent-frame pixels for drawing.
struct PixelGrasp {
  double u = 0, v = 0;
  double yaw = 0;
  double width_px = 0;
};

MarkedImage draw_grasp_markers(const RoiCrop& crop, const std::vector<PixelGrasp>& grasps,
                               const MarkerStyle& style);

// Corners counter-clockwise starting at (-w/2, -h/2) before rotation; the
// width axis is the gripper-opening axis.
std::array<std::pair<double, double>, 4> rectangle_corners(double cu, double cv, double yaw,
                                                           double width, double height);

RgbImage apply_transform(const SceneObservation& obs, const LabelMask& mask, int id,
                         VisualTransformKind kind, const TransformParams& params = {});

// Fixed 5x7 digit strings drawn at an integer scale; exposed for tests.
void draw_text(RgbImage& img, int x, int y, const std::string& digits, Rgb color, int scale);
std::pair<int, int> text_extent(const std::string& digits, int scale);

}  // namespace owg::markers
