#pragma once
#include <vector>

#include "owg/executor.hpp"
#include "owg/sim.hpp"

namespace owg::sim {

class SimEnv : public exec::Env {
 public:
  explicit SimEnv(GeneratedScene gen, CameraModel cam = overhead_camera(),
                  WorldRect place_region = default_place_region())
      : scene_(std::move(gen.scene)), target_uid_(gen.target_uid), cam_(cam),
        place_region_(place_region) {}

  exec::Observation observe() override;
  double table_z() const override { return scene_.table_z; }
  exec::ExecOutcome execute(int segment_id, const WorldGrasp& grasp, bool remove) override;

  // Ground truth against the most recent observe(), for oracle backends and
  // benchmark scoring.
  int target_segment() const;
  std::vector<int> blocker_segments(double contact_eps = 0.005) const;
  int uid_for_segment(int segment_id) const;

  bool target_present() const { return scene_.find(target_uid_) != nullptr; }
  const SimScene& scene() const { return scene_; }
  int target_uid() const { return target_uid_; }
  int execute_calls() const { return execute_calls_; }

 private:
  SimScene scene_;
  int target_uid_ = 0;
  CameraModel cam_;
  WorldRect place_region_;
  std::vector<int> label_to_uid_;
  int execute_calls_ = 0;
};

}  // namespace owg::sim
