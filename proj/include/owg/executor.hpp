#pragma once
#include <string>
#include <vector>

#include "owg/grasping.hpp"
#include "owg/imaging.hpp"
#include "owg/prompts.hpp"
#include "owg/vlm.hpp"
#include "json.hpp"

namespace owg::exec {

struct Observation {
  imaging::SceneObservation obs;
  imaging::LabelMask mask;
};

struct ExecOutcome {
  bool success = false;
  std::string reason;  // ok | miss | collision | width_exceeded
};

class Env {
 public:
  virtual ~Env() = default;
  virtual Observation observe() = 0;
  virtual double table_z() const = 0;
  // segment_id indexes the most recent observe(); remove=true sets the object
  // aside in the scene instead of lifting it out.
  virtual ExecOutcome execute(int segment_id, const grasping::WorldGrasp& grasp, bool remove) = 0;
};

struct ExecutorConfig {
  int attempt_budget = 3;
  int max_steps = 12;
  int self_consistency_k = 5;
  double ground_temperature = 0.7;
  std::string model_name = "gpt-4-vision-preview";
  prompts::TemplateSet templates = prompts::TemplateSet::builtin();
  int marker_long_side = 1024;
  bool no_reference = false;
  bool no_ids = false;
  bool no_fill = false;
  bool boxes = false;
  bool no_highres = false;
  bool no_planning = false;
  bool no_ranking = false;
  int decode_k = 5;
  double nms_radius = 10.0;
  double min_quality = 0.2;
  imaging::WorldRect world_bounds{-0.40, -0.40, 0.40, 0.40};
  double heightmap_res = 0.005;
  double roi_margin = 0.25;
  int roi_min_side = 160;
};

markers::MarkerStyle make_style(const ExecutorConfig& cfg, int w, int h);

struct StepRecord {
  int step = 0;
  int segments = 0;
  int ground_target = 0;
  std::vector<int> plan_sequence;
  std::vector<int> blockers;
  std::string action;  // pick | remove
  int action_segment = 0;
  grasping::Grasp4Dof grasp;
  std::vector<int> rank_order;
  bool exec_success = false;
  std::string exec_reason;
};

struct TrialResult {
  bool success = false;
  std::string failure;        // attempts_exhausted | step_limit | <error name>
  std::string failure_stage;  // grounding | planning | grasping | execution
  int attempts_used = 0;
  int steps = 0;
  std::vector<StepRecord> trace;
  nlohmann::json log;
};

TrialResult run_trial(Env& env, vlm::Backend& backend, const std::string& query,
                      const ExecutorConfig& cfg);

}  // namespace owg::exec
