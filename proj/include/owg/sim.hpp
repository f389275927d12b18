#pragma once
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "owg/grasping.hpp"
#include "owg/imaging.hpp"
#include "owg/rng.hpp"

namespace owg::sim {

using grasping::WorldGrasp;
using imaging::LabelMask;
using imaging::SceneObservation;
using imaging::WorldRect;

using Polygon = std::vector<std::pair<double, double>>;

struct SimObject {
  int uid = 0;
  std::string name;
  std::string category;
  Polygon footprint;  // object frame, convex, counter-clockwise
  double height = 0;
  double x = 0, y = 0, yaw = 0;
  Rgb color;
  std::vector<std::string> attributes;

  Polygon world_polygon() const;
  double bounding_radius() const;
};

struct SimScene {
  std::vector<SimObject> objects;
  double table_z = 1.0;
  WorldRect workspace{-0.40, -0.40, 0.40, 0.40};
  uint64_t rng_seed = 0;

  const SimObject* find(int uid) const;
  SimObject* find(int uid);
};

struct GraspOutcome {
  bool success = false;
  std::string reason;  // ok | miss | collision | width_exceeded
};

struct PlaceOutcome {
  bool success = false;
  double x = 0, y = 0;
};

// Pose-free prototypes the generator samples from.
std::vector<SimObject> catalog();

struct SceneGenConfig {
  std::string scenario = "isolated";  // isolated | cluttered
  int n_objects = 6;
  uint64_t seed = 0;
  double min_clearance = 0.05;   // isolated pairwise clearance
  double contact_eps = 0.005;    // cluttered target contact
};

struct GeneratedScene {
  SimScene scene;
  int target_uid = 0;
};

GeneratedScene generate_scene(const SceneGenConfig& cfg);

// Walled scenes that require removing blockers before the target is
// graspable; every third seed is graspable directly.
GeneratedScene make_blocker_scene(uint64_t seed);

CameraModel overhead_camera(int img_w = 320, int img_h = 240);

struct RenderResult {
  SceneObservation obs;
  LabelMask mask;
  std::vector<int> label_to_uid;  // label_to_uid[id-1] = object uid
};

RenderResult render_observation(const SimScene& scene, const CameraModel& cam, int img_w = 320,
                                int img_h = 240);

GraspOutcome execute_grasp(SimScene& scene, int uid, const WorldGrasp& grasp);

PlaceOutcome place_object(SimScene& scene, SimObject obj, const WorldRect& region);

std::string scene_to_json(const SimScene& scene);
SimScene scene_from_json(const std::string& text);
void save_scene_json(const std::string& path, const SimScene& scene);
SimScene load_scene_json(const std::string& path);

// Convex geometry helpers, exposed for tests.
bool point_in_convex(const Polygon& poly, double x, double y);
bool convex_overlap(const Polygon& a, const Polygon& b);
double polygon_distance(const Polygon& a, const Polygon& b);
// Chord length of the polygon along the line through (x, y) with direction
// (dx, dy); 0 when the line misses the polygon.
double polygon_extent_along(const Polygon& poly, double x, double y, double dx, double dy);

constexpr double kPlaceGridStep = 0.02;
inline WorldRect default_place_region() { return {0.24, -0.36, 0.38, 0.36}; }

}  // namespace owg::sim
