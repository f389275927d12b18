#include "owg/executor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "owg/digest.hpp"
#include "owg/errors.hpp"
#include "owg/markers.hpp"
#include "owg/parsing.hpp"
#include "owg/png_io.hpp"

namespace owg::exec {
namespace {

bool is_parse_error(Err c) {
  return c == Err::AllSamplesUnparsable || c == Err::MissingAnswerBlock ||
         c == Err::ArityViolation || c == Err::OutOfRangeId;
}

bool ground_failure(Err c) { return is_parse_error(c) || c == Err::GroundingFailed; }

bool plan_failure(Err c) {
  return is_parse_error(c) || c == Err::UnknownTarget || c == Err::PlanningFailed;
}

bool grasp_failure(Err c) {
  return c == Err::NoViableGrasp || c == Err::EmptyTarget || c == Err::UnknownSegment ||
         c == Err::EmptyProjection || c == Err::InvalidDepthAtGrasp || c == Err::NoGrasps ||
         c == Err::GraspOutsideCrop || c == Err::DegenerateRectangle;
}

nlohmann::json grasp_json(const grasping::Grasp4Dof& g) {
  nlohmann::json j;
  j["cell_u"] = g.u;
  j["cell_v"] = g.v;
  j["yaw"] = g.yaw;
  j["width_px"] = g.width_px;
  j["quality"] = g.quality;
  if (g.world) {
    j["world"] = {{"x", g.world->x},
                  {"y", g.world->y},
                  {"z", g.world->z},
                  {"yaw", g.world->yaw},
                  {"width_m", g.world->width_m}};
  }
  return j;
}

struct StageFail {
  std::string stage;
  std::string error;
};

}  // namespace

markers::MarkerStyle make_style(const ExecutorConfig& cfg, int w, int h) {
  auto style = markers::default_style(w, h, cfg.no_highres ? 1 : cfg.marker_long_side);
  if (cfg.no_ids) style.overlay_ids = false;
  if (cfg.no_fill) style.fill_alpha = 0.0;
  if (cfg.boxes) style.draw_boxes = true;
  return style;
}

TrialResult run_trial(Env& env, vlm::Backend& backend, const std::string& query,
                      const ExecutorConfig& cfg) {
  TrialResult result;
  nlohmann::json jsteps = nlohmann::json::array();
  int failed_executions = 0;

  auto finish = [&](bool success, const std::string& stage, const std::string& error) {
    result.success = success;
    result.failure_stage = success ? "" : stage;
    result.failure = success ? "" : error;
    result.attempts_used = failed_executions + (success ? 1 : 0);
    result.log["schema_version"] = 1;
    result.log["query"] = query;
    result.log["backend"] = backend.id();
    result.log["config"] = {{"attempt_budget", cfg.attempt_budget},
                            {"self_consistency_k", cfg.self_consistency_k},
                            {"no_reference", cfg.no_reference},
                            {"no_ids", cfg.no_ids},
                            {"no_fill", cfg.no_fill},
                            {"boxes", cfg.boxes},
                            {"no_highres", cfg.no_highres},
                            {"no_planning", cfg.no_planning},
                            {"no_ranking", cfg.no_ranking}};
    result.log["steps"] = jsteps;
    result.log["result"] = {{"success", result.success},
                            {"failure", result.failure},
                            {"failure_stage", result.failure_stage},
                            {"attempts_used", result.attempts_used},
                            {"steps", result.steps}};
    return result;
  };

  for (int step = 1; step <= cfg.max_steps; ++step) {
    result.steps = step;
    Observation view = env.observe();
    StepRecord rec;
    rec.step = step;

    nlohmann::json jstep;
    jstep["step"] = step;

    auto style = make_style(cfg, view.obs.width(), view.obs.height());
    markers::MarkedImage marked;
    std::vector<uint8_t> marked_png;
    int target = 0;
    try {
      marked = markers::overlay_som(view.obs, view.mask, style);
      rec.segments = int(marked.placements.size());
      marked_png = encode_png(marked.raster);
      std::vector<uint8_t> reference_png =
          cfg.no_reference ? std::vector<uint8_t>{} : encode_png(view.obs.rgb);
      auto bundle = prompts::build_ground_prompt(reference_png, marked, query, cfg.templates,
                                                 cfg.no_reference);
      vlm::ChatRequest req{bundle, cfg.self_consistency_k > 1 ? cfg.ground_temperature : 0.0,
                           cfg.self_consistency_k, cfg.model_name, cfg.templates.hash};
      auto voted = vlm::self_consistent(
          backend, req, [](const std::string& text) { return parsing::parse_ground(text).target_id; });
      target = voted.value;
      nlohmann::json votes = nlohmann::json::array();
      for (auto& p : voted.parses)
        votes.push_back(p ? nlohmann::json(*p) : nlohmann::json(nullptr));
      jstep["ground"] = {{"target", target}, {"votes", votes}};
      if (!marked.placements.count(target))
        raise(Err::GroundingFailed,
              "voted target " + std::to_string(target) + " is not a marked segment");
    } catch (const Error& e) {
      if (!ground_failure(e.code())) throw;
      jstep["ground_error"] = err_name(e.code());
      jsteps.push_back(jstep);
      result.trace.push_back(rec);
      return finish(false, "grounding", err_name(e.code()));
    }
    rec.ground_target = target;

    int next = target;
    if (!cfg.no_planning) {
      try {
        auto bundle = prompts::build_plan_prompt(marked, target, {}, cfg.templates);
        vlm::ChatRequest req{bundle, 0.0, 1, cfg.model_name, cfg.templates.hash};
        auto resp = backend.complete(req);
        if (resp.texts.empty()) raise(Err::PlanningFailed, "backend returned no text");
        auto plan = parsing::parse_plan(resp.texts[0], target);
        rec.plan_sequence = plan.sequence;
        rec.blockers.assign(plan.blockers.begin(), plan.blockers.end());
        for (int id : plan.sequence) {
          if (!marked.placements.count(id))
            raise(Err::PlanningFailed, "planned segment " + std::to_string(id) + " is not marked");
        }
        next = plan.sequence.front();
        jstep["plan"] = {{"sequence", plan.sequence}, {"blockers", rec.blockers}};
      } catch (const Error& e) {
        if (!plan_failure(e.code())) throw;
        jstep["plan_error"] = err_name(e.code());
        jsteps.push_back(jstep);
        result.trace.push_back(rec);
        return finish(false, "planning", err_name(e.code()));
      }
    }
    rec.action = next == target ? "pick" : "remove";
    rec.action_segment = next;

    std::vector<grasping::Grasp4Dof> grasps;
    imaging::Heightmap hm_full;
    try {
      hm_full = imaging::orthographic_heightmap(view.obs, cfg.world_bounds, cfg.heightmap_res,
                                                env.table_z());
      auto masked = imaging::mask_rgbd(view.obs, view.mask, next);
      auto hm_target = imaging::orthographic_heightmap(masked, cfg.world_bounds,
                                                       cfg.heightmap_res, env.table_z());
      GrayU8 mask_cells(hm_full.grid_w(), hm_full.grid_h(), 0);
      for (int cy = 0; cy < hm_full.grid_h(); ++cy)
        for (int cx = 0; cx < hm_full.grid_w(); ++cx)
          mask_cells.at(cx, cy) = hm_target.cells.at(cx, cy) > 1e-4f ? 1 : 0;
      auto maps = grasping::synthesize_antipodal(hm_full, mask_cells);
      grasps = grasping::decode_grasps(maps, cfg.decode_k, cfg.nms_radius, cfg.min_quality);
      for (auto& g : grasps) g = grasping::grasp_to_world(g, hm_full);
    } catch (const Error& e) {
      if (!grasp_failure(e.code())) throw;
      jstep["grasp_error"] = err_name(e.code());
      jsteps.push_back(jstep);
      result.trace.push_back(rec);
      return finish(false, "grasping", err_name(e.code()));
    }

    size_t chosen = 0;
    if (!cfg.no_ranking && grasps.size() > 1) {
      try {
        auto camera_from_world = view.obs.camera.world_from_camera.inverse_rigid();
        std::vector<markers::PixelGrasp> pixel_grasps;
        for (auto& g : grasps) {
          Vec3 p_cam = camera_from_world.transform_point({g.world->x, g.world->y, g.world->z});
          auto [pu, pv] = project(p_cam, view.obs.camera);
          Vec3 axis = camera_from_world.rotate_vector(
              {std::cos(g.world->yaw), std::sin(g.world->yaw), 0.0});
          double yaw_px = std::atan2(axis.y, axis.x);
          double width_px = g.world->width_m * view.obs.camera.fx / p_cam.z;
          pixel_grasps.push_back({pu, pv, yaw_px, width_px});
        }
        auto crop = markers::crop_roi(view.obs, view.mask, next, cfg.roi_margin, cfg.roi_min_side);
        auto crop_style =
            make_style(cfg, crop.raster.width(), crop.raster.height());
        auto marked_crop = markers::draw_grasp_markers(crop, pixel_grasps, crop_style);
        auto bundle = prompts::build_rank_prompt(marked_crop, std::nullopt, cfg.templates);
        vlm::ChatRequest req{bundle, 0.0, 1, cfg.model_name, cfg.templates.hash};
        auto resp = backend.complete(req);
        if (resp.texts.empty()) raise(Err::MissingAnswerBlock, "backend returned no text");
        auto rank = parsing::parse_rank(resp.texts[0], int(grasps.size()));
        rec.rank_order = rank.order;
        int pick_id = rank.order.front();
        for (int id : rank.order) {
          if (!rank.contact_flagged.count(id)) {
            pick_id = id;
            break;
          }
        }
        chosen = size_t(pick_id - 1);
        jstep["rank"] = {{"order", rank.order},
                         {"contact_flagged",
                          std::vector<int>(rank.contact_flagged.begin(), rank.contact_flagged.end())},
                         {"crop_sha256", sha256_hex(encode_png(marked_crop.raster))}};
      } catch (const Error& e) {
        if (is_parse_error(e.code())) {
          jstep["rank_error"] = err_name(Err::PlanningFailed);
          jsteps.push_back(jstep);
          result.trace.push_back(rec);
          return finish(false, "rank", err_name(Err::PlanningFailed));
        }
        if (!grasp_failure(e.code())) throw;
        jstep["rank_error"] = err_name(e.code());
        jsteps.push_back(jstep);
        result.trace.push_back(rec);
        return finish(false, "grasping", err_name(e.code()));
      }
    }

    rec.grasp = grasps[chosen];
    jstep["images"] = {{"rgb_sha256", sha256_hex(encode_png(view.obs.rgb))},
                       {"marked_sha256", sha256_hex(marked_png)}};
    jstep["action"] = {{"type", rec.action}, {"segment", next}};
    jstep["grasp"] = grasp_json(rec.grasp);

    ExecOutcome out = env.execute(next, *rec.grasp.world, next != target);
    rec.exec_success = out.success;
    rec.exec_reason = out.reason;
    jstep["outcome"] = {{"success", out.success}, {"reason", out.reason}};
    jsteps.push_back(jstep);
    result.trace.push_back(rec);

    if (out.success) {
      if (next == target) return finish(true, "", "");
    } else {
      if (++failed_executions >= cfg.attempt_budget)
        return finish(false, "execution", "attempts_exhausted");
    }
  }
  return finish(false, "execution", "step_limit");
}

}  // namespace owg::exec
