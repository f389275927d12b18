#include "owg/grasping.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "owg/png_io.hpp"

namespace owg::grasping {

using nlohmann::json;

namespace {
constexpr double kSentinelCost = 1e6;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

void GraspMaps::validate() const {
  require_same_size(quality.width(), quality.height(), angle.width(), angle.height(),
                    "quality/angle size mismatch");
  require_same_size(quality.width(), quality.height(), width.width(), width.height(),
                    "quality/width size mismatch");
  for (float q : quality.data())
    if (!(q >= 0.0f) || !(q <= 1.0f)) raise(Err::FormatError, "quality values must be in [0,1]");
}

double normalize_yaw(double yaw) {
  double y = std::fmod(yaw + M_PI_2, M_PI);
  if (y < 0) y += M_PI;
  return y - M_PI_2;
}

std::vector<Grasp4Dof> decode_grasps(const GraspMaps& maps, int k, double nms_radius,
                                     double min_quality) {
  if (k < 1) raise(Err::FormatError, "k must be >= 1");
  if (nms_radius < 0) raise(Err::FormatError, "nms_radius must be >= 0");
  maps.validate();
  const int w = maps.quality.width(), h = maps.quality.height();

  struct Peak {
    float q;
    int u, v;
  };
  std::vector<Peak> peaks;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const float q = maps.quality.at(u, v);
      if (q < min_quality) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1 && is_max; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          if (maps.quality.in_bounds(u + du, v + dv) && maps.quality.at(u + du, v + dv) > q) {
            is_max = false;
            break;
          }
        }
      if (is_max) peaks.push_back({q, u, v});
    }
  if (peaks.empty()) raise(Err::NoViableGrasp, "no quality peak reaches the threshold");

  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.q != b.q) return a.q > b.q;
    if (a.v != b.v) return a.v < b.v;
    return a.u < b.u;
  });

  std::vector<Grasp4Dof> out;
  for (const Peak& p : peaks) {
    if (static_cast<int>(out.size()) >= k) break;
    bool suppressed = false;
    for (const Grasp4Dof& g : out)
      if (std::hypot(p.u - g.u, p.v - g.v) <= nms_radius) {
        suppressed = true;
        break;
      }
    if (suppressed) continue;
    Grasp4Dof g;
    g.u = p.u;
    g.v = p.v;
    g.quality = p.q;
    g.yaw = normalize_yaw(maps.angle.at(p.u, p.v));
    g.width_px = maps.width.at(p.u, p.v);
    out.push_back(g);
  }
  return out;
}

GraspMaps synthesize_antipodal(const Heightmap& hm, const GrayU8& mask_cells) {
  require_same_size(hm.cells.width(), hm.cells.height(), mask_cells.width(), mask_cells.height(),
                    "heightmap/mask size mismatch");
  const int w = hm.cells.width(), h = hm.cells.height();
  bool any = false;
  for (uint8_t m : mask_cells.data()) any = any || m != 0;
  if (!any) raise(Err::EmptyTarget, "target mask has no cells");

  // 4-connected distance from each member cell to the nearest outside cell.
  GrayF32 dist(w, h, 0.0f);
  std::deque<std::pair<int, int>> queue;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (mask_cells.at(u, v) == 0) {
        dist.at(u, v) = 0;
        queue.push_back({u, v});
      } else {
        dist.at(u, v) = -1;
      }
  float max_dist = 1;
  while (!queue.empty()) {
    const auto [u, v] = queue.front();
    queue.pop_front();
    const int du[] = {1, -1, 0, 0}, dv[] = {0, 0, 1, -1};
    for (int i = 0; i < 4; ++i) {
      const int nu = u + du[i], nv = v + dv[i];
      if (!dist.in_bounds(nu, nv) || dist.at(nu, nv) >= 0) continue;
      dist.at(nu, nv) = dist.at(u, v) + 1;
      max_dist = std::max(max_dist, dist.at(nu, nv));
      queue.push_back({nu, nv});
    }
  }
  for (float& d : dist.data())
    if (d < 0) d = max_dist;  // member region touching no boundary (full-grid mask)

  GraspMaps maps;
  maps.quality = GrayF32(w, h, 0.0f);
  maps.angle = GrayF32(w, h, 0.0f);
  maps.width = GrayF32(w, h, 0.0f);

  const int march_limit =
      static_cast<int>(std::ceil(kMaxOpeningM / hm.resolution)) + 2;
  const auto height_at = [&](int u, int v) -> double {
    return hm.cells.in_bounds(u, v) ? hm.cells.at(u, v) : 0.0;
  };

  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      if (mask_cells.at(u, v) == 0) continue;
      const double cell_h = hm.cells.at(u, v);
      if (cell_h < kFingerDropM) continue;  // nothing a finger can drop below

      double best_extent = kInf;
      double best_width = 0;
      int best_yaw_index = -1;
      for (int i = 0; i < 8; ++i) {
        const double yaw = i * M_PI / 8 - M_PI_2;
        const double dx = std::cos(yaw), dy = std::sin(yaw);
        const auto member = [&](int su, int sv) {
          return mask_cells.in_bounds(su, sv) && mask_cells.at(su, sv) != 0;
        };
        // First cell past the target per side; fingers touch down there.
        int out_step[2] = {0, 0};
        for (int side = 0; side < 2; ++side) {
          const double sign = side == 0 ? 1.0 : -1.0;
          for (int t = 1; t <= march_limit && out_step[side] == 0; ++t) {
            const int su = u + static_cast<int>(std::lround(sign * t * dx));
            const int sv = v + static_cast<int>(std::lround(sign * t * dy));
            if (!member(su, sv)) out_step[side] = t;
          }
        }
        if (out_step[0] == 0 || out_step[1] == 0) continue;
        const double extent = (out_step[0] + out_step[1] - 1) * hm.resolution;
        if (extent > kMaxOpeningM) continue;
        const double width_m = std::min(extent + 2 * hm.resolution, kMaxOpeningM);
        // Cells between the target boundary and the outer pad edge must sit
        // at least a finger drop below the grasped surface on both sides.
        const int reach =
            static_cast<int>(std::ceil((width_m / 2 + 0.020) / hm.resolution));
        bool clear = true;
        for (int side = 0; side < 2 && clear; ++side) {
          const double sign = side == 0 ? 1.0 : -1.0;
          const int last = std::max(out_step[side], reach);
          for (int t = out_step[side]; t <= last && clear; ++t) {
            const int su = u + static_cast<int>(std::lround(sign * t * dx));
            const int sv = v + static_cast<int>(std::lround(sign * t * dy));
            if (member(su, sv)) continue;
            if (height_at(su, sv) > cell_h - kFingerDropM) clear = false;
          }
        }
        if (!clear) continue;
        if (extent < best_extent) {
          best_extent = extent;
          best_width = width_m;
          best_yaw_index = i;
        }
      }
      if (best_yaw_index < 0) continue;
      maps.quality.at(u, v) = dist.at(u, v) / max_dist;
      maps.angle.at(u, v) =
          static_cast<float>(normalize_yaw(best_yaw_index * M_PI / 8 - M_PI_2));
      maps.width.at(u, v) = static_cast<float>(best_width / hm.resolution);
    }
  return maps;
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n)
      raise(Err::DimensionMismatch, "assignment cost matrix must be square");
  if (n == 0) return {};

  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

AssignmentResult match_regions(const std::vector<SegmentStats>& regions,
                               const std::vector<Vec3>& group_centers) {
  const int n = static_cast<int>(regions.size());
  const int m = static_cast<int>(group_centers.size());
  for (const SegmentStats& r : regions)
    if (!r.world_centroid)
      raise(Err::MissingWorldCentroid,
            "segment " + std::to_string(r.id) + " has no world centroid");

  AssignmentResult out;
  const int s = std::max(n, m);
  if (s == 0) return out;

  std::vector<std::vector<double>> cost(s, std::vector<double>(s, kSentinelCost));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) cost[i][j] = distance(*regions[i].world_centroid, group_centers[j]);

  const std::vector<int> row_to_col = solve_assignment(cost);
  std::vector<char> group_taken(m, 0);
  for (int i = 0; i < n; ++i) {
    const int j = row_to_col[i];
    if (j < m) {
      out.pairs[i] = j;
      out.total_cost += cost[i][j];
      group_taken[j] = 1;
    } else {
      out.unmatched_regions.insert(i);
    }
  }
  for (int j = 0; j < m; ++j)
    if (!group_taken[j]) out.unmatched_groups.insert(j);
  return out;
}

std::vector<Vec3> grasp_group_centers(const GraspMaps& maps, double threshold,
                                      const Heightmap& hm) {
  maps.validate();
  require_same_size(maps.quality.width(), maps.quality.height(), hm.cells.width(),
                    hm.cells.height(), "maps/heightmap size mismatch");
  const int w = maps.quality.width(), h = maps.quality.height();
  GrayU8 visited(w, h, 0);
  std::vector<Vec3> centers;
  for (int v0 = 0; v0 < h; ++v0)
    for (int u0 = 0; u0 < w; ++u0) {
      if (visited.at(u0, v0) || maps.quality.at(u0, v0) < threshold) continue;
      Vec3 sum{};
      long count = 0;
      std::deque<std::pair<int, int>> queue{{u0, v0}};
      visited.at(u0, v0) = 1;
      while (!queue.empty()) {
        const auto [u, v] = queue.front();
        queue.pop_front();
        sum = sum + Vec3{hm.cell_center_x(u), hm.cell_center_y(v),
                         hm.table_z - hm.cells.at(u, v)};
        ++count;
        const int du[] = {1, -1, 0, 0}, dv[] = {0, 0, 1, -1};
        for (int i = 0; i < 4; ++i) {
          const int nu = u + du[i], nv = v + dv[i];
          if (!visited.in_bounds(nu, nv) || visited.at(nu, nv) ||
              maps.quality.at(nu, nv) < threshold)
            continue;
          visited.at(nu, nv) = 1;
          queue.push_back({nu, nv});
        }
      }
      centers.push_back(sum * (1.0 / static_cast<double>(count)));
    }
  return centers;
}

Grasp4Dof grasp_to_world(const Grasp4Dof& g, const SceneObservation& obs) {
  const int u = static_cast<int>(std::lround(g.u));
  const int v = static_cast<int>(std::lround(g.v));
  if (!obs.depth_m.in_bounds(u, v))
    raise(Err::InvalidDepthAtGrasp, "grasp center outside the observation");
  const double d = obs.depth_m.at(u, v);
  if (!(d > 0)) raise(Err::InvalidDepthAtGrasp, "no valid depth under the grasp center");

  const Vec3 p = obs.camera.world_from_camera.transform_point(deproject(g.u, g.v, d, obs.camera));
  const Vec3 axis = obs.camera.world_from_camera.rotate_vector(
      {std::cos(g.yaw), std::sin(g.yaw), 0});

  Grasp4Dof out = g;
  out.world = WorldGrasp{p.x, p.y, p.z, normalize_yaw(std::atan2(axis.y, axis.x)),
                         g.width_px * d / obs.camera.fx};
  return out;
}

Grasp4Dof grasp_to_world(const Grasp4Dof& g, const Heightmap& hm) {
  const int u = static_cast<int>(std::lround(g.u));
  const int v = static_cast<int>(std::lround(g.v));
  if (!hm.cells.in_bounds(u, v))
    raise(Err::InvalidDepthAtGrasp, "grasp cell outside the heightmap");
  Grasp4Dof out = g;
  out.world = WorldGrasp{hm.origin_x + (g.u + 0.5) * hm.resolution,
                         hm.origin_y + (g.v + 0.5) * hm.resolution,
                         hm.table_z - hm.cells.at(u, v), normalize_yaw(g.yaw),
                         g.width_px * hm.resolution};
  return out;
}

GraspMaps load_grasp_maps(const std::string& path) {
  const std::vector<uint8_t> bytes = read_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), uint8_t('\n'));
  if (nl == bytes.end()) raise(Err::FormatError, path + ": missing header line");
  json header;
  try {
    header = json::parse(std::string(bytes.begin(), nl));
  } catch (const json::exception& e) {
    raise(Err::FormatError, path + ": " + e.what());
  }
  const int h = header.at("h").get<int>();
  const int w = header.at("w").get<int>();
  const auto planes = header.at("planes").get<std::vector<std::string>>();
  if (planes != std::vector<std::string>{"quality", "angle", "width"})
    raise(Err::FormatError, path + ": unexpected plane list");
  const size_t plane_bytes = static_cast<size_t>(w) * h * 4;
  const size_t offset = static_cast<size_t>(nl - bytes.begin()) + 1;
  if (bytes.size() != offset + 3 * plane_bytes)
    raise(Err::FormatError, path + ": truncated plane data");

  const auto read_plane = [&](size_t index) {
    GrayF32 plane(w, h);
    const uint8_t* src = bytes.data() + offset + index * plane_bytes;
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
      uint32_t bits = static_cast<uint32_t>(src[i * 4]) |
                      (static_cast<uint32_t>(src[i * 4 + 1]) << 8) |
                      (static_cast<uint32_t>(src[i * 4 + 2]) << 16) |
                      (static_cast<uint32_t>(src[i * 4 + 3]) << 24);
      plane.data()[i] = std::bit_cast<float>(bits);
    }
    return plane;
  };
  GraspMaps maps{read_plane(0), read_plane(1), read_plane(2)};
  maps.validate();
  return maps;
}

void save_grasp_maps(const std::string& path, const GraspMaps& maps) {
  maps.validate();
  const json header = {{"h", maps.quality.height()},
                       {"w", maps.quality.width()},
                       {"planes", {"quality", "angle", "width"}}};
  std::vector<uint8_t> bytes;
  const std::string head = header.dump() + "\n";
  bytes.insert(bytes.end(), head.begin(), head.end());
  for (const GrayF32* plane : {&maps.quality, &maps.angle, &maps.width})
    for (float f : plane->data()) {
      const uint32_t bits = std::bit_cast<uint32_t>(f);
      bytes.push_back(static_cast<uint8_t>(bits & 0xff));
      bytes.push_back(static_cast<uint8_t>((bits >> 8) & 0xff));
      bytes.push_back(static_cast<uint8_t>((bits >> 16) & 0xff));
      bytes.push_back(static_cast<uint8_t>((bits >> 24) & 0xff));
    }
  write_bytes(path, bytes);
}

}  // namespace owg::grasping
