#include "owg/sim_env.hpp"

#include <algorithm>

#include "owg/errors.hpp"

namespace owg::sim {

exec::Observation SimEnv::observe() {
  RenderResult r = render_observation(scene_, cam_);
  label_to_uid_ = r.label_to_uid;
  return {std::move(r.obs), std::move(r.mask)};
}

int SimEnv::uid_for_segment(int segment_id) const {
  if (segment_id < 1 || segment_id > int(label_to_uid_.size()))
    raise(Err::UnknownSegment, "segment " + std::to_string(segment_id) +
                                   " is not in the latest observation");
  return label_to_uid_[size_t(segment_id - 1)];
}

int SimEnv::target_segment() const {
  for (size_t i = 0; i < label_to_uid_.size(); ++i)
    if (label_to_uid_[i] == target_uid_) return int(i) + 1;
  return 0;
}

std::vector<int> SimEnv::blocker_segments(double contact_eps) const {
  const SimObject* target = scene_.find(target_uid_);
  std::vector<int> out;
  if (!target) return out;
  Polygon tp = target->world_polygon();
  for (size_t i = 0; i < label_to_uid_.size(); ++i) {
    if (label_to_uid_[i] == target_uid_) continue;
    const SimObject* o = scene_.find(label_to_uid_[i]);
    if (!o) continue;
    if (polygon_distance(tp, o->world_polygon()) <= contact_eps) out.push_back(int(i) + 1);
  }
  return out;
}

exec::ExecOutcome SimEnv::execute(int segment_id, const WorldGrasp& grasp, bool remove) {
  ++execute_calls_;
  int uid = uid_for_segment(segment_id);
  const SimObject* obj = scene_.find(uid);
  if (!obj) raise(Err::UnknownObject, "object for segment already gone");
  SimObject copy = *obj;
  GraspOutcome out = execute_grasp(scene_, uid, grasp);
  if (out.success && remove) place_object(scene_, copy, place_region_);
  return {out.success, out.reason};
}

}  // namespace owg::sim
