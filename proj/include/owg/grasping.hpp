#pragma once
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "owg/imaging.hpp"

namespace owg::grasping {

using imaging::Heightmap;
using imaging::SceneObservation;
using imaging::SegmentStats;

struct GraspMaps {
  GrayF32 quality;
  GrayF32 angle;
  GrayF32 width;

  void validate() const;
};

struct WorldGrasp {
  double x = 0, y = 0, z = 0;
  double yaw = 0;
  double width_m = 0;
};

struct Grasp4Dof {
  double u = 0, v = 0;
  double yaw = 0;
  double width_px = 0;
  double quality = 0;
  std::optional<WorldGrasp> world;
};

// Maps g and g+pi to the same half-open range [-pi/2, pi/2).
double normalize_yaw(double yaw);

std::vector<Grasp4Dof> decode_grasps(const GraspMaps& maps, int k, double nms_radius,
                                     double min_quality);

// Geometric antipodal synthesis over a heightmap. Fingers need cells at least
// 20 mm below the grasped surface just outside the object, and the extent
// along the axis must fit the 0.140 m opening. Quality scales with distance
// to the target boundary.
GraspMaps synthesize_antipodal(const Heightmap& hm, const GrayU8& mask_cells);

struct AssignmentResult {
  std::map<int, int> pairs;  // region index -> grasp-group index
  double total_cost = 0;
  std::set<int> unmatched_regions;
  std::set<int> unmatched_groups;
};

// Minimum-cost injective assignment (Hungarian, O(n^3)); square inputs only.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

AssignmentResult match_regions(const std::vector<SegmentStats>& regions,
                               const std::vector<Vec3>& group_centers);

// Connected components of quality >= threshold; one 3D center per component,
// in row-major discovery order.
std::vector<Vec3> grasp_group_centers(const GraspMaps& maps, double threshold,
                                      const Heightmap& hm);

Grasp4Dof grasp_to_world(const Grasp4Dof& g, const SceneObservation& obs);
Grasp4Dof grasp_to_world(const Grasp4Dof& g, const Heightmap& hm);

GraspMaps load_grasp_maps(const std::string& path);
void save_grasp_maps(const std::string& path, const GraspMaps& maps);

constexpr double kMaxOpeningM = 0.140;
constexpr double kFingerDropM = 0.020;

}  // namespace owg::grasping
