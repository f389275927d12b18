#include "owg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

#include "owg/errors.hpp"
#include "json.hpp"

namespace owg::sim {
namespace {

constexpr double kEps = 1e-12;

struct Edge {
  double px, py;  // point on edge
  double nx, ny;  // outward normal
};

std::vector<Edge> outward_edges(const Polygon& poly) {
  double cx = 0, cy = 0;
  for (auto& [x, y] : poly) {
    cx += x;
    cy += y;
  }
  cx /= double(poly.size());
  cy /= double(poly.size());
  std::vector<Edge> edges;
  edges.reserve(poly.size());
  for (size_t i = 0; i < poly.size(); ++i) {
    auto [x0, y0] = poly[i];
    auto [x1, y1] = poly[(i + 1) % poly.size()];
    double nx = y1 - y0, ny = -(x1 - x0);
    if (nx * (cx - x0) + ny * (cy - y0) > 0) {
      nx = -nx;
      ny = -ny;
    }
    double len = std::hypot(nx, ny);
    if (len < kEps) continue;
    edges.push_back({x0, y0, nx / len, ny / len});
  }
  return edges;
}

double point_segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
  double dx = x1 - x0, dy = y1 - y0;
  double len2 = dx * dx + dy * dy;
  double t = len2 < kEps ? 0.0 : ((px - x0) * dx + (py - y0) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
}

std::pair<double, double> project_onto(const Polygon& poly, double ax, double ay) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto& [x, y] : poly) {
    double s = x * ax + y * ay;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {lo, hi};
}

Polygon make_box(double w, double d) {
  double hw = w / 2, hd = d / 2;
  return {{-hw, -hd}, {hw, -hd}, {hw, hd}, {-hw, hd}};
}

Polygon make_ngon(double radius, int sides) {
  Polygon poly;
  for (int i = 0; i < sides; ++i) {
    double a = 2.0 * M_PI * i / sides;
    poly.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return poly;
}

Polygon make_oval(double rx, double ry, int sides = 12) {
  Polygon poly;
  for (int i = 0; i < sides; ++i) {
    double a = 2.0 * M_PI * i / sides;
    poly.push_back({rx * std::cos(a), ry * std::sin(a)});
  }
  return poly;
}

SimObject proto(std::string name, std::string category, Polygon fp, double height, Rgb color,
                std::vector<std::string> attributes) {
  SimObject o;
  o.name = std::move(name);
  o.category = std::move(category);
  o.footprint = std::move(fp);
  o.height = height;
  o.color = color;
  o.attributes = std::move(attributes);
  return o;
}

bool inside_rect(const Polygon& poly, const WorldRect& r) {
  for (auto& [x, y] : poly)
    if (x < r.x_min || x > r.x_max || y < r.y_min || y > r.y_max) return false;
  return true;
}

double distance_to_all(const Polygon& poly, const SimScene& scene) {
  double best = std::numeric_limits<double>::infinity();
  for (auto& o : scene.objects) best = std::min(best, polygon_distance(poly, o.world_polygon()));
  return best;
}

}  // namespace

Polygon SimObject::world_polygon() const {
  Polygon out;
  out.reserve(footprint.size());
  double c = std::cos(yaw), s = std::sin(yaw);
  for (auto& [fx, fy] : footprint) out.push_back({x + c * fx - s * fy, y + s * fx + c * fy});
  return out;
}

double SimObject::bounding_radius() const {
  double r = 0;
  for (auto& [fx, fy] : footprint) r = std::max(r, std::hypot(fx, fy));
  return r;
}

const SimObject* SimScene::find(int uid) const {
  for (auto& o : objects)
    if (o.uid == uid) return &o;
  return nullptr;
}

SimObject* SimScene::find(int uid) {
  for (auto& o : objects)
    if (o.uid == uid) return &o;
  return nullptr;
}

bool point_in_convex(const Polygon& poly, double x, double y) {
  if (poly.size() < 3) return false;
  for (auto& e : outward_edges(poly))
    if (e.nx * (x - e.px) + e.ny * (y - e.py) > kEps) return false;
  return true;
}

bool convex_overlap(const Polygon& a, const Polygon& b) {
  for (auto* poly : {&a, &b}) {
    for (auto& e : outward_edges(*poly)) {
      auto [alo, ahi] = project_onto(a, e.nx, e.ny);
      auto [blo, bhi] = project_onto(b, e.nx, e.ny);
      if (ahi < blo || bhi < alo) return false;
    }
  }
  return true;
}

double polygon_distance(const Polygon& a, const Polygon& b) {
  if (convex_overlap(a, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (auto pr : {std::make_pair(&a, &b), std::make_pair(&b, &a)}) {
    const Polygon& pts = *pr.first;
    const Polygon& seg = *pr.second;
    for (auto& [px, py] : pts) {
      for (size_t i = 0; i < seg.size(); ++i) {
        auto [x0, y0] = seg[i];
        auto [x1, y1] = seg[(i + 1) % seg.size()];
        best = std::min(best, point_segment_distance(px, py, x0, y0, x1, y1));
      }
    }
  }
  return best;
}

double polygon_extent_along(const Polygon& poly, double x, double y, double dx, double dy) {
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  for (auto& e : outward_edges(poly)) {
    double a = e.nx * dx + e.ny * dy;
    double b = e.nx * (x - e.px) + e.ny * (y - e.py);  // b + a*t <= 0 inside
    if (std::abs(a) < kEps) {
      if (b > kEps) return 0.0;
      continue;
    }
    double t = -b / a;
    if (a > 0)
      t_hi = std::min(t_hi, t);
    else
      t_lo = std::max(t_lo, t);
  }
  if (t_hi <= t_lo) return 0.0;
  return (t_hi - t_lo) * std::hypot(dx, dy);
}

std::vector<SimObject> catalog() {
  std::vector<SimObject> out;
  out.push_back(proto("mug", "kitchenware", make_ngon(0.040, 12), 0.095, {210, 210, 215},
                      {"white", "round"}));
  out.push_back(
      proto("bowl", "kitchenware", make_ngon(0.060, 12), 0.055, {70, 110, 200}, {"blue", "round"}));
  out.push_back(proto("plate", "kitchenware", make_ngon(0.080, 12), 0.040, {235, 235, 230},
                      {"white", "flat"}));
  out.push_back(
      proto("banana", "fruit", make_oval(0.070, 0.020), 0.040, {240, 220, 60}, {"yellow", "long"}));
  out.push_back(
      proto("apple", "fruit", make_ngon(0.035, 12), 0.070, {200, 40, 40}, {"red", "round"}));
  out.push_back(
      proto("lemon", "fruit", make_oval(0.032, 0.024), 0.050, {250, 230, 70}, {"yellow", "small"}));
  out.push_back(
      proto("soda_can", "drink", make_ngon(0.033, 12), 0.115, {220, 50, 60}, {"red", "tall"}));
  out.push_back(
      proto("juice_box", "drink", make_box(0.050, 0.040), 0.105, {90, 180, 80}, {"green", "tall"}));
  out.push_back(proto("cereal_box", "food", make_box(0.060, 0.045), 0.200, {230, 150, 50},
                      {"orange", "tall"}));
  out.push_back(proto("cracker_box", "food", make_box(0.095, 0.038), 0.140, {180, 60, 40},
                      {"red", "boxy"}));
  out.push_back(proto("sponge", "cleaning", make_box(0.075, 0.050), 0.040, {250, 210, 60},
                      {"yellow", "soft"}));
  out.push_back(proto("soap_bar", "cleaning", make_box(0.065, 0.042), 0.045, {120, 220, 190},
                      {"teal", "smooth"}));
  out.push_back(proto("spray_bottle", "cleaning", make_ngon(0.036, 12), 0.180, {110, 110, 230},
                      {"blue", "tall"}));
  out.push_back(
      proto("screwdriver", "tool", make_oval(0.085, 0.014), 0.042, {250, 140, 40},
            {"orange", "long"}));
  out.push_back(
      proto("hammer", "tool", make_box(0.180, 0.032), 0.060, {90, 90, 95}, {"gray", "long"}));
  out.push_back(
      proto("wrench", "tool", make_oval(0.080, 0.017), 0.040, {150, 150, 160}, {"gray", "long"}));
  out.push_back(proto("tape_roll", "stationery", make_ngon(0.045, 12), 0.050, {120, 120, 125},
                      {"gray", "round"}));
  out.push_back(proto("marker_pen", "stationery", make_oval(0.060, 0.011), 0.035, {40, 40, 45},
                      {"black", "thin"}));
  out.push_back(proto("notebook", "stationery", make_box(0.130, 0.095), 0.040, {60, 120, 70},
                      {"green", "flat"}));
  out.push_back(
      proto("battery", "power", make_ngon(0.016, 12), 0.055, {40, 160, 90}, {"green", "small"}));
  return out;
}

CameraModel overhead_camera(int img_w, int img_h) {
  CameraModel cam;
  cam.fx = 300.0;
  cam.fy = 300.0;
  cam.cx = img_w / 2.0;
  cam.cy = img_h / 2.0;
  cam.world_from_camera = Mat4::identity();
  return cam;
}

RenderResult render_observation(const SimScene& scene, const CameraModel& cam, int img_w,
                                int img_h) {
  struct Prism {
    std::vector<Edge> edges;
    double z_top;
    size_t index;
  };
  std::vector<Prism> prisms;
  prisms.reserve(scene.objects.size());
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    prisms.push_back(
        {outward_edges(scene.objects[i].world_polygon()), scene.table_z - scene.objects[i].height,
         i});
  }

  RenderResult res;
  res.obs.rgb = RgbImage(img_w, img_h, {120, 124, 130});
  res.obs.depth_m = GrayF32(img_w, img_h, float(scene.table_z));
  res.obs.camera = cam;
  res.mask.labels = GrayU8(img_w, img_h, 0);

  Image<int> raw(img_w, img_h, 0);
  for (int v = 0; v < img_h; ++v) {
    for (int u = 0; u < img_w; ++u) {
      double dx = (u - cam.cx) / cam.fx;
      double dy = (v - cam.cy) / cam.fy;
      double best_t = scene.table_z;
      int best_obj = -1;
      for (auto& pr : prisms) {
        double lo = pr.z_top, hi = scene.table_z;
        bool miss = false;
        for (auto& e : pr.edges) {
          double a = e.nx * dx + e.ny * dy;
          double c = e.nx * e.px + e.ny * e.py;  // need a*t <= c
          if (std::abs(a) < kEps) {
            if (c < 0) {
              miss = true;
              break;
            }
            continue;
          }
          double t = c / a;
          if (a > 0)
            hi = std::min(hi, t);
          else
            lo = std::max(lo, t);
          if (lo > hi) {
            miss = true;
            break;
          }
        }
        if (miss || lo > hi) continue;
        if (lo < best_t) {
          best_t = lo;
          best_obj = int(pr.index);
        }
      }
      res.obs.depth_m.at(u, v) = float(best_t);
      if (best_obj >= 0) {
        res.obs.rgb.at(u, v) = scene.objects[best_obj].color;
        raw.at(u, v) = best_obj + 1;
      }
    }
  }

  std::vector<int> relabel(scene.objects.size() + 1, 0);
  int next_id = 0;
  for (int v = 0; v < img_h; ++v) {
    for (int u = 0; u < img_w; ++u) {
      int r = raw.at(u, v);
      if (r == 0) continue;
      if (relabel[r] == 0) {
        relabel[r] = ++next_id;
        res.label_to_uid.push_back(scene.objects[r - 1].uid);
      }
      res.mask.labels.at(u, v) = uint8_t(relabel[r]);
    }
  }
  return res;
}

GeneratedScene generate_scene(const SceneGenConfig& cfg) {
  if (cfg.scenario != "isolated" && cfg.scenario != "cluttered")
    raise(Err::FormatError, "unknown scenario: " + cfg.scenario);
  auto protos = catalog();
  if (cfg.n_objects < 2 || cfg.n_objects > int(protos.size()))
    raise(Err::FormatError, "n_objects out of range");

  Rng rng(cfg.seed);
  for (size_t i = protos.size(); i > 1; --i) std::swap(protos[i - 1], protos[rng.below(i)]);
  protos.resize(cfg.n_objects);

  GeneratedScene gen;
  gen.scene.rng_seed = cfg.seed;
  WorldRect area{-0.30, -0.30, 0.20, 0.30};

  auto sample_pose = [&](SimObject& o, const WorldRect& box) {
    double r = o.bounding_radius();
    o.x = rng.uniform(box.x_min + r, box.x_max - r);
    o.y = rng.uniform(box.y_min + r, box.y_max - r);
    o.yaw = rng.uniform(-M_PI, M_PI);
  };

  int next_uid = 1;
  if (cfg.scenario == "isolated") {
    for (auto& p : protos) {
      SimObject o = p;
      o.uid = next_uid++;
      bool placed = false;
      for (int attempt = 0; attempt < 10000; ++attempt) {
        sample_pose(o, area);
        if (distance_to_all(o.world_polygon(), gen.scene) >= cfg.min_clearance) {
          placed = true;
          break;
        }
      }
      if (!placed) raise(Err::PlacementExhausted, "isolated placement failed for " + o.name);
      gen.scene.objects.push_back(o);
    }
    gen.target_uid = gen.scene.objects[rng.below(size_t(cfg.n_objects))].uid;
    return gen;
  }

  // cluttered: target near the middle, one neighbor in contact, rest clear
  SimObject target = protos[0];
  target.uid = next_uid++;
  sample_pose(target, {-0.16, -0.14, 0.04, 0.14});
  gen.scene.objects.push_back(target);
  gen.target_uid = target.uid;
  Polygon target_poly = target.world_polygon();

  SimObject neighbor = protos[1];
  neighbor.uid = next_uid++;
  bool contact = false;
  for (int attempt = 0; attempt < 10000 && !contact; ++attempt) {
    double phi = rng.uniform(0, 2.0 * M_PI);
    neighbor.yaw = rng.uniform(-M_PI, M_PI);
    double dist = target.bounding_radius() + neighbor.bounding_radius() + 0.05;
    neighbor.x = target.x + dist * std::cos(phi);
    neighbor.y = target.y + dist * std::sin(phi);
    for (int step = 0; step < 60; ++step) {
      Polygon np = neighbor.world_polygon();
      if (!inside_rect(np, gen.scene.workspace)) break;
      if (convex_overlap(np, target_poly)) {
        neighbor.x += 0.004 * std::cos(phi);
        neighbor.y += 0.004 * std::sin(phi);
        continue;
      }
      double d = polygon_distance(np, target_poly);
      if (d <= cfg.contact_eps) {
        contact = true;
        break;
      }
      double pull = std::max(d - 0.002, 0.001);
      neighbor.x -= pull * std::cos(phi);
      neighbor.y -= pull * std::sin(phi);
    }
  }
  if (!contact) raise(Err::PlacementExhausted, "contact placement failed for " + neighbor.name);
  gen.scene.objects.push_back(neighbor);

  for (size_t i = 2; i < protos.size(); ++i) {
    SimObject o = protos[i];
    o.uid = next_uid++;
    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      sample_pose(o, area);
      Polygon op = o.world_polygon();
      if (polygon_distance(op, target_poly) < 0.012) continue;
      bool clear = true;
      for (auto& other : gen.scene.objects) {
        if (other.uid == target.uid) continue;
        if (polygon_distance(op, other.world_polygon()) < 0.002) {
          clear = false;
          break;
        }
      }
      if (clear) {
        placed = true;
        break;
      }
    }
    if (!placed) raise(Err::PlacementExhausted, "cluttered placement failed for " + o.name);
    gen.scene.objects.push_back(o);
  }
  return gen;
}

GeneratedScene make_blocker_scene(uint64_t seed) {
  Rng rng(seed);
  bool direct = seed % 3 == 0;
  double cx = rng.uniform(-0.03, 0.03);
  double cy = rng.uniform(-0.05, 0.05);

  GeneratedScene gen;
  gen.scene.rng_seed = seed;
  int next_uid = 1;

  SimObject target = proto("steel_bar", "tool", make_box(direct ? 0.10 : 0.16, 0.03), 0.12,
                           {70, 120, 210}, {"blue", "long"});
  target.uid = next_uid++;
  target.x = cx;
  target.y = cy;
  target.yaw = 0;
  gen.scene.objects.push_back(target);
  gen.target_uid = target.uid;

  auto add_wall = [&](const char* name, double side, Rgb color) {
    SimObject wall = proto(name, "block", make_box(0.18, 0.07), 0.15, color, {"red", "boxy"});
    wall.uid = next_uid++;
    wall.x = cx;
    wall.y = cy + side * (0.015 + 0.035 + 0.002);
    wall.yaw = 0;
    gen.scene.objects.push_back(wall);
  };
  add_wall("brick_a", 1.0, {190, 70, 60});
  if (!direct) add_wall("brick_b", -1.0, {170, 60, 80});

  auto protos = catalog();
  WorldRect area{-0.30, -0.30, 0.20, 0.30};
  size_t n_fill = direct ? 3 : 2;
  size_t pick = rng.below(protos.size());
  for (size_t i = 0; i < n_fill; ++i) {
    SimObject o = protos[(pick + 3 * i) % protos.size()];
    o.uid = next_uid++;
    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      double r = o.bounding_radius();
      o.x = rng.uniform(area.x_min + r, area.x_max - r);
      o.y = rng.uniform(area.y_min + r, area.y_max - r);
      o.yaw = rng.uniform(-M_PI, M_PI);
      if (distance_to_all(o.world_polygon(), gen.scene) >= 0.06) {
        placed = true;
        break;
      }
    }
    if (!placed) raise(Err::PlacementExhausted, "filler placement failed for " + o.name);
    gen.scene.objects.push_back(o);
  }
  return gen;
}

GraspOutcome execute_grasp(SimScene& scene, int uid, const WorldGrasp& grasp) {
  SimObject* target = scene.find(uid);
  if (!target) raise(Err::UnknownObject, "no object with uid " + std::to_string(uid));
  Polygon poly = target->world_polygon();
  if (!point_in_convex(poly, grasp.x, grasp.y)) return {false, "miss"};

  double c = std::cos(grasp.yaw), s = std::sin(grasp.yaw);
  double extent = polygon_extent_along(poly, grasp.x, grasp.y, c, s);
  if (grasp.width_m > grasping::kMaxOpeningM || extent > grasp.width_m)
    return {false, "width_exceeded"};

  auto finger_pad = [&](double side) {
    double fx = grasp.x + side * c * (grasp.width_m / 2 + 0.01);
    double fy = grasp.y + side * s * (grasp.width_m / 2 + 0.01);
    Polygon pad;
    for (auto [da, dl] : {std::pair{-0.01, -0.01}, std::pair{0.01, -0.01}, std::pair{0.01, 0.01},
                          std::pair{-0.01, 0.01}}) {
      pad.push_back({fx + da * c - dl * s, fy + da * s + dl * c});
    }
    return pad;
  };
  for (double side : {-1.0, 1.0}) {
    Polygon pad = finger_pad(side);
    for (auto& other : scene.objects) {
      if (other.uid == uid) continue;
      if (other.height <= target->height - 0.01) continue;
      if (convex_overlap(pad, other.world_polygon())) return {false, "collision"};
    }
  }

  scene.objects.erase(std::remove_if(scene.objects.begin(), scene.objects.end(),
                                     [&](const SimObject& o) { return o.uid == uid; }),
                      scene.objects.end());
  return {true, "ok"};
}

PlaceOutcome place_object(SimScene& scene, SimObject obj, const WorldRect& region) {
  int rows = int(std::floor((region.y_max - region.y_min) / kPlaceGridStep)) + 1;
  int cols = int(std::floor((region.x_max - region.x_min) / kPlaceGridStep)) + 1;
  for (int gy = 0; gy < rows; ++gy) {
    for (int gx = 0; gx < cols; ++gx) {
      obj.x = region.x_min + gx * kPlaceGridStep;
      obj.y = region.y_min + gy * kPlaceGridStep;
      Polygon poly = obj.world_polygon();
      if (!inside_rect(poly, scene.workspace)) continue;
      bool clear = true;
      for (auto& other : scene.objects) {
        if (convex_overlap(poly, other.world_polygon())) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      PlaceOutcome out{true, obj.x, obj.y};
      scene.objects.push_back(obj);
      return out;
    }
  }
  raise(Err::NoFreeSpace, "no free pose in place region");
}

std::string scene_to_json(const SimScene& scene) {
  nlohmann::json j;
  j["table_z"] = scene.table_z;
  j["workspace"] = {scene.workspace.x_min, scene.workspace.y_min, scene.workspace.x_max,
                    scene.workspace.y_max};
  j["rng_seed"] = scene.rng_seed;
  j["objects"] = nlohmann::json::array();
  for (auto& o : scene.objects) {
    nlohmann::json jo;
    jo["uid"] = o.uid;
    jo["name"] = o.name;
    jo["category"] = o.category;
    jo["height"] = o.height;
    jo["x"] = o.x;
    jo["y"] = o.y;
    jo["yaw"] = o.yaw;
    jo["color"] = {o.color.r, o.color.g, o.color.b};
    jo["attributes"] = o.attributes;
    jo["footprint"] = nlohmann::json::array();
    for (auto& [fx, fy] : o.footprint) jo["footprint"].push_back({fx, fy});
    j["objects"].push_back(jo);
  }
  return j.dump(2);
}

SimScene scene_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("bad scene json: ") + e.what());
  }
  SimScene scene;
  try {
    scene.table_z = j.at("table_z").get<double>();
    auto ws = j.at("workspace");
    scene.workspace = {ws.at(0).get<double>(), ws.at(1).get<double>(), ws.at(2).get<double>(),
                       ws.at(3).get<double>()};
    scene.rng_seed = j.at("rng_seed").get<uint64_t>();
    for (auto& jo : j.at("objects")) {
      SimObject o;
      o.uid = jo.at("uid").get<int>();
      o.name = jo.at("name").get<std::string>();
      o.category = jo.at("category").get<std::string>();
      o.height = jo.at("height").get<double>();
      o.x = jo.at("x").get<double>();
      o.y = jo.at("y").get<double>();
      o.yaw = jo.at("yaw").get<double>();
      o.color = {jo.at("color").at(0).get<uint8_t>(), jo.at("color").at(1).get<uint8_t>(),
                 jo.at("color").at(2).get<uint8_t>()};
      for (auto& a : jo.at("attributes")) o.attributes.push_back(a.get<std::string>());
      for (auto& f : jo.at("footprint"))
        o.footprint.push_back({f.at(0).get<double>(), f.at(1).get<double>()});
      scene.objects.push_back(o);
    }
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("bad scene json: ") + e.what());
  }
  return scene;
}

void save_scene_json(const std::string& path, const SimScene& scene) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot write " + path);
  f << scene_to_json(scene) << "\n";
}

SimScene load_scene_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return scene_from_json(ss.str());
}

}  // namespace owg::sim
