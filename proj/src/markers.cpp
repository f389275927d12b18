#include "owg/markers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace owg::markers {

namespace {

// 5x7 digit glyphs; bit 4 of each row byte is the leftmost column.
constexpr uint8_t kDigitRows[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

Rgb hsv_full(double hue_deg) {
  const double h = hue_deg / 60.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  const auto q = [](double c) { return static_cast<uint8_t>(std::lround(c * 255.0)); };
  return Rgb{q(r), q(g), q(b)};
}

RgbImage upscale_nn(const RgbImage& in, int s) {
  if (s == 1) return in;
  RgbImage out(in.width() * s, in.height() * s);
  for (int v = 0; v < out.height(); ++v)
    for (int u = 0; u < out.width(); ++u) out.at(u, v) = in.at(u / s, v / s);
  return out;
}

int font_scale(int label_px) { return std::max(1, label_px / 7); }

struct Candidate {
  PixelBox box;
  long overlap = 0;
  double dist = 0;
};

long box_intersection_area(const PixelBox& a, const PixelBox& b) {
  const int w = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min) + 1;
  const int h = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min) + 1;
  return (w > 0 && h > 0) ? static_cast<long>(w) * h : 0;
}

PixelBox clamp_box(PixelBox b, int w, int h) {
  if (b.u_min < 0) { b.u_max -= b.u_min; b.u_min = 0; }
  if (b.v_min < 0) { b.v_max -= b.v_min; b.v_min = 0; }
  if (b.u_max >= w) { b.u_min -= b.u_max - (w - 1); b.u_max = w - 1; }
  if (b.v_max >= h) { b.v_min -= b.v_max - (h - 1); b.v_max = h - 1; }
  b.u_min = std::max(0, b.u_min);
  b.v_min = std::max(0, b.v_min);
  return b;
}

void paint_dot(RgbImage& img, int u, int v, Rgb color, int thickness) {
  for (int dv = 0; dv < thickness; ++dv)
    for (int du = 0; du < thickness; ++du)
      if (img.in_bounds(u + du, v + dv)) img.at(u + du, v + dv) = color;
}

void draw_line(RgbImage& img, double u0, double v0, double u1, double v1, Rgb color,
               int thickness) {
  const double len = std::hypot(u1 - u0, v1 - v0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int u = static_cast<int>(std::lround(u0 + (u1 - u0) * t)) - thickness / 2;
    const int v = static_cast<int>(std::lround(v0 + (v1 - v0) * t)) - thickness / 2;
    paint_dot(img, u, v, color, thickness);
  }
}

bool in_box(const PixelBox& b, int u, int v) {
  return u >= b.u_min && u <= b.u_max && v >= b.v_min && v <= b.v_max;
}

}  // namespace

void MarkerStyle::validate() const {
  if (fill_alpha < 0 || fill_alpha > 1) raise(Err::FormatError, "fill_alpha must be in [0,1]");
  if (upscale < 1) raise(Err::FormatError, "upscale must be >= 1");
  if (label_px < 8) raise(Err::FormatError, "label_px must be >= 8");
  for (size_t i = 0; i < palette.size(); ++i)
    for (size_t j = i + 1; j < palette.size(); ++j)
      if (palette[i] == palette[j]) raise(Err::FormatError, "palette colors must be distinct");
}

std::vector<Rgb> default_palette(int n) {
  std::vector<Rgb> colors;
  colors.reserve(n);
  for (int i = 0; i < n; ++i) colors.push_back(hsv_full(360.0 * i / n));
  return colors;
}

MarkerStyle default_style(int image_w, int image_h, int long_side) {
  MarkerStyle s;
  s.palette = default_palette();
  const int longest = std::max(image_w, image_h);
  s.upscale = std::max(1, (long_side + longest - 1) / longest);
  return s;
}

std::pair<int, int> text_extent(const std::string& digits, int scale) {
  const int n = static_cast<int>(digits.size());
  if (n == 0) return {0, 0};
  return {n * 5 * scale + (n - 1) * scale, 7 * scale};
}

void draw_text(RgbImage& img, int x, int y, const std::string& digits, Rgb color, int scale) {
  int cursor = x;
  for (char ch : digits) {
    if (ch < '0' || ch > '9') {
      cursor += 6 * scale;
      continue;
    }
    const uint8_t* rows = kDigitRows[ch - '0'];
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if ((rows[r] >> (4 - c)) & 1)
          for (int dv = 0; dv < scale; ++dv)
            for (int du = 0; du < scale; ++du)
              if (img.in_bounds(cursor + c * scale + du, y + r * scale + dv))
                img.at(cursor + c * scale + du, y + r * scale + dv) = color;
    cursor += 6 * scale;
  }
}

MarkedImage overlay_som(const SceneObservation& obs, const LabelMask& mask,
                        const MarkerStyle& style) {
  style.validate();
  require_same_size(obs.width(), obs.height(), mask.width(), mask.height(),
                    "mask/observation size mismatch");
  const int n = mask.num_segments();
  if (n > static_cast<int>(style.palette.size()))
    raise(Err::PaletteExhausted, std::to_string(n) + " segments exceed palette of " +
                                     std::to_string(style.palette.size()));

  RgbImage base = obs.rgb;
  if (style.fill_alpha > 0) {
    const double a = style.fill_alpha;
    for (int v = 0; v < base.height(); ++v)
      for (int u = 0; u < base.width(); ++u) {
        const int id = mask.labels.at(u, v);
        if (id == 0) continue;
        const Rgb& c = style.palette[id - 1];
        Rgb& p = base.at(u, v);
        p.r = static_cast<uint8_t>(std::lround((1 - a) * p.r + a * c.r));
        p.g = static_cast<uint8_t>(std::lround((1 - a) * p.g + a * c.g));
        p.b = static_cast<uint8_t>(std::lround((1 - a) * p.b + a * c.b));
      }
  }

  std::vector<PixelBox> bboxes(n);
  std::vector<std::pair<double, double>> centroids(n);
  if (n > 0) {
    const auto stats = imaging::segment_stats(mask, obs);
    for (int i = 0; i < n; ++i) {
      bboxes[i] = stats[i].bbox;
      centroids[i] = {stats[i].centroid_u, stats[i].centroid_v};
    }
  }

  if (style.draw_boxes)
    for (int i = 0; i < n; ++i) {
      const PixelBox& b = bboxes[i];
      const Rgb c = style.palette[i];
      for (int u = b.u_min; u <= b.u_max; ++u) {
        base.at(u, b.v_min) = c;
        base.at(u, b.v_max) = c;
      }
      for (int v = b.v_min; v <= b.v_max; ++v) {
        base.at(b.u_min, v) = c;
        base.at(b.u_max, v) = c;
      }
    }

  MarkedImage out;
  out.raster = upscale_nn(base, style.upscale);
  for (int i = 1; i <= n; ++i) out.source_ids.push_back(i);
  if (n == 0) return out;

  const int s = style.upscale;
  const int fs = font_scale(style.label_px);
  const int w = out.raster.width(), h = out.raster.height();
  const auto label_at = [&](int u, int v) { return mask.labels.at(u / s, v / s); };

  for (int id = 1; id <= n; ++id) {
    const std::string text = std::to_string(id);
    const auto [tw, th] = text_extent(text, fs);
    const PixelBox bb{bboxes[id - 1].u_min * s, bboxes[id - 1].v_min * s,
                      (bboxes[id - 1].u_max + 1) * s - 1, (bboxes[id - 1].v_max + 1) * s - 1};
    const double cu = centroids[id - 1].first * s;
    const double cv = centroids[id - 1].second * s;

    std::vector<std::pair<int, int>> centers;
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i)
        centers.push_back({bb.u_min + (bb.u_max - bb.u_min) * i / 4,
                           bb.v_min + (bb.v_max - bb.v_min) * j / 4});
    const int mid_u = (bb.u_min + bb.u_max) / 2, mid_v = (bb.v_min + bb.v_max) / 2;
    centers.push_back({mid_u, bb.v_min - th / 2 - 2});
    centers.push_back({mid_u, bb.v_max + th / 2 + 2});
    centers.push_back({bb.u_min - tw / 2 - 2, mid_v});
    centers.push_back({bb.u_max + tw / 2 + 2, mid_v});

    Candidate best;
    best.overlap = std::numeric_limits<long>::max();
    for (const auto& [pu, pv] : centers) {
      Candidate cand;
      cand.box = clamp_box({pu - tw / 2, pv - th / 2, pu - tw / 2 + tw - 1, pv - th / 2 + th - 1},
                           w, h);
      for (int v = cand.box.v_min; v <= cand.box.v_max; ++v)
        for (int u = cand.box.u_min; u <= cand.box.u_max; ++u) {
          const int l = label_at(u, v);
          if (l != 0 && l != id) ++cand.overlap;
        }
      for (const auto& [other_id, placed] : out.placements) {
        (void)other_id;
        cand.overlap += box_intersection_area(cand.box, placed);
      }
      cand.dist = std::hypot((cand.box.u_min + cand.box.u_max) / 2.0 - cu,
                             (cand.box.v_min + cand.box.v_max) / 2.0 - cv);
      if (cand.overlap < best.overlap ||
          (cand.overlap == best.overlap && cand.dist < best.dist))
        best = cand;
    }

    if (style.overlay_ids)
      draw_text(out.raster, best.box.u_min, best.box.v_min, text, style.palette[id - 1], fs);
    out.placements[id] = best.box;
  }
  return out;
}

RoiCrop crop_roi(const SceneObservation& obs, const LabelMask& mask, int id, double margin_frac,
                 int min_side) {
  if (margin_frac < 0) raise(Err::FormatError, "margin_frac must be >= 0");
  const PixelBox bb = imaging::segment_bbox(mask, id);
  const long du = std::lround(margin_frac * (bb.u_max - bb.u_min));
  const long dv = std::lround(margin_frac * (bb.v_max - bb.v_min));
  long u0 = bb.u_min - du, u1 = bb.u_max + du;
  long v0 = bb.v_min - dv, v1 = bb.v_max + dv;
  if (u1 - u0 + 1 < min_side) {
    const long need = min_side - (u1 - u0 + 1);
    u0 -= need / 2;
    u1 += need - need / 2;
  }
  if (v1 - v0 + 1 < min_side) {
    const long need = min_side - (v1 - v0 + 1);
    v0 -= need / 2;
    v1 += need - need / 2;
  }
  u0 = std::max(0l, u0);
  v0 = std::max(0l, v0);
  u1 = std::min<long>(obs.width() - 1, u1);
  v1 = std::min<long>(obs.height() - 1, v1);

  RoiCrop crop;
  crop.offset_u = static_cast<int>(u0);
  crop.offset_v = static_cast<int>(v0);
  crop.segment_id = id;
  crop.raster = RgbImage(static_cast<int>(u1 - u0 + 1), static_cast<int>(v1 - v0 + 1));
  for (int v = 0; v < crop.raster.height(); ++v)
    for (int u = 0; u < crop.raster.width(); ++u)
      crop.raster.at(u, v) = obs.rgb.at(static_cast<int>(u0) + u, static_cast<int>(v0) + v);
  return crop;
}

std::array<std::pair<double, double>, 4> rectangle_corners(double cu, double cv, double yaw,
                                                           double width, double height) {
  if (!(width > 0) || !(height > 0))
    raise(Err::DegenerateRectangle, "rectangle width and height must be > 0");
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hw = width / 2, hh = height / 2;
  const std::array<std::pair<double, double>, 4> local = {
      {{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<std::pair<double, double>, 4> out;
  for (int i = 0; i < 4; ++i)
    out[i] = {cu + c * local[i].first - s * local[i].second,
              cv + s * local[i].first + c * local[i].second};
  return out;
}

MarkedImage draw_grasp_markers(const RoiCrop& crop, const std::vector<PixelGrasp>& grasps,
                               const MarkerStyle& style) {
  style.validate();
  const int k = static_cast<int>(grasps.size());
  if (k > static_cast<int>(style.palette.size()))
    raise(Err::PaletteExhausted, "more grasps than palette colors");
  for (const PixelGrasp& g : grasps) {
    const double lu = g.u - crop.offset_u, lv = g.v - crop.offset_v;
    if (lu < 0 || lu >= crop.raster.width() || lv < 0 || lv >= crop.raster.height())
      raise(Err::GraspOutsideCrop, "grasp center falls outside the crop");
  }

  const int s = style.upscale;
  const int fs = font_scale(style.label_px);
  MarkedImage out;
  out.raster = upscale_nn(crop.raster, s);
  const int thickness = std::max(1, s);
  for (int i = 0; i < k; ++i) {
    const PixelGrasp& g = grasps[i];
    const Rgb color = style.palette[i];
    const double cu = (g.u - crop.offset_u) * s, cv = (g.v - crop.offset_v) * s;
    const auto corners = rectangle_corners(cu, cv, g.yaw, std::max(1.0, g.width_px * s),
                                           std::max(1.0, g.width_px * s / 2));
    for (int e = 0; e < 4; ++e)
      draw_line(out.raster, corners[e].first, corners[e].second, corners[(e + 1) % 4].first,
                corners[(e + 1) % 4].second, color, thickness);

    const std::string text = std::to_string(i + 1);
    const auto [tw, th] = text_extent(text, fs);
    double min_u = corners[0].first, min_v = corners[0].second;
    for (const auto& [u, v] : corners) {
      min_u = std::min(min_u, u);
      min_v = std::min(min_v, v);
    }
    const PixelBox box = clamp_box({static_cast<int>(std::lround(min_u)),
                                    static_cast<int>(std::lround(min_v)) - th - 2,
                                    static_cast<int>(std::lround(min_u)) + tw - 1,
                                    static_cast<int>(std::lround(min_v)) - 3},
                                   out.raster.width(), out.raster.height());
    draw_text(out.raster, box.u_min, box.v_min, text, color, fs);
    out.placements[i + 1] = box;
    out.source_ids.push_back(i + 1);
  }
  return out;
}

RgbImage apply_transform(const SceneObservation& obs, const LabelMask& mask, int id,
                         VisualTransformKind kind, const TransformParams& params) {
  const PixelBox bb = imaging::segment_bbox(mask, id);
  const int w = obs.width(), h = obs.height();
  const auto member = [&](int u, int v) { return mask.labels.at(u, v) == id; };
  const Rgb red{255, 0, 0};

  switch (kind) {
    case VisualTransformKind::crop: {
      RgbImage out(bb.width(), bb.height());
      for (int v = 0; v < out.height(); ++v)
        for (int u = 0; u < out.width(); ++u) out.at(u, v) = obs.rgb.at(bb.u_min + u, bb.v_min + v);
      return out;
    }
    case VisualTransformKind::white_background: {
      RgbImage out(w, h, Rgb{255, 255, 255});
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          if (member(u, v)) out.at(u, v) = obs.rgb.at(u, v);
      return out;
    }
    case VisualTransformKind::gray_reverse: {
      RgbImage out = obs.rgb;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          if (!member(u, v)) {
            const Rgb& p = out.at(u, v);
            const uint8_t luma = static_cast<uint8_t>(
                std::lround(0.299 * p.r + 0.587 * p.g + 0.114 * p.b));
            out.at(u, v) = Rgb{luma, luma, luma};
          }
      return out;
    }
    case VisualTransformKind::blur_reverse: {
      const int r = params.blur_radius;
      // Summed-area tables per channel for an O(1) box average.
      const int sw = w + 1;
      std::vector<std::array<long, 3>> sat(static_cast<size_t>(sw) * (h + 1), {0, 0, 0});
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const Rgb& p = obs.rgb.at(u, v);
          auto& cur = sat[static_cast<size_t>(v + 1) * sw + (u + 1)];
          const auto& up = sat[static_cast<size_t>(v) * sw + (u + 1)];
          const auto& left = sat[static_cast<size_t>(v + 1) * sw + u];
          const auto& diag = sat[static_cast<size_t>(v) * sw + u];
          cur = {up[0] + left[0] - diag[0] + p.r, up[1] + left[1] - diag[1] + p.g,
                 up[2] + left[2] - diag[2] + p.b};
        }
      RgbImage out = obs.rgb;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          if (member(u, v)) continue;
          const int u0 = std::max(0, u - r), u1 = std::min(w - 1, u + r);
          const int v0 = std::max(0, v - r), v1 = std::min(h - 1, v + r);
          const long count = static_cast<long>(u1 - u0 + 1) * (v1 - v0 + 1);
          const auto& a = sat[static_cast<size_t>(v1 + 1) * sw + (u1 + 1)];
          const auto& b = sat[static_cast<size_t>(v0) * sw + (u1 + 1)];
          const auto& c = sat[static_cast<size_t>(v1 + 1) * sw + u0];
          const auto& d = sat[static_cast<size_t>(v0) * sw + u0];
          const auto avg = [&](int ch) {
            return static_cast<uint8_t>(
                std::lround(static_cast<double>(a[ch] - b[ch] - c[ch] + d[ch]) / count));
          };
          out.at(u, v) = Rgb{avg(0), avg(1), avg(2)};
        }
      return out;
    }
    case VisualTransformKind::rectangle: {
      RgbImage out = obs.rgb;
      const int s = params.stroke_px;
      for (int v = bb.v_min; v <= bb.v_max; ++v)
        for (int u = bb.u_min; u <= bb.u_max; ++u) {
          const bool interior = u >= bb.u_min + s && u <= bb.u_max - s && v >= bb.v_min + s &&
                                v <= bb.v_max - s;
          if (!interior) out.at(u, v) = red;
        }
      return out;
    }
    case VisualTransformKind::ellipse: {
      RgbImage out = obs.rgb;
      const double cu = (bb.u_min + bb.u_max) / 2.0, cv = (bb.v_min + bb.v_max) / 2.0;
      const double a = std::max(1.0, (bb.u_max - bb.u_min) / 2.0);
      const double b = std::max(1.0, (bb.v_max - bb.v_min) / 2.0);
      const double ai = a - params.stroke_px, bi = b - params.stroke_px;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const double fu = (u - cu) / a, fv = (v - cv) / b;
          const double f = fu * fu + fv * fv;
          if (f > 1.0) continue;
          bool inner = false;
          if (ai > 0 && bi > 0) {
            const double gu = (u - cu) / ai, gv = (v - cv) / bi;
            inner = gu * gu + gv * gv < 1.0;
          }
          if (!inner) out.at(u, v) = red;
        }
      return out;
    }
    case VisualTransformKind::contour: {
      RgbImage out = obs.rgb;
      const int s = params.stroke_px;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          if (!member(u, v)) continue;
          const bool edge = u == 0 || v == 0 || u == w - 1 || v == h - 1 || !member(u - 1, v) ||
                            !member(u + 1, v) || !member(u, v - 1) || !member(u, v + 1);
          if (!edge) continue;
          for (int dv = -s / 2; dv < s - s / 2; ++dv)
            for (int du = -s / 2; du < s - s / 2; ++du)
              if (out.in_bounds(u + du, v + dv)) out.at(u + du, v + dv) = red;
        }
      return out;
    }
  }
  raise(Err::FormatError, "unknown transform kind");
}

}  // namespace owg::markers
