#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <memory>

#include "doctest.h"
#include "owg/executor.hpp"
#include "owg/harness.hpp"
#include "owg/sim_env.hpp"

using namespace owg;
using exec::ExecutorConfig;
using exec::run_trial;
using sim::SimEnv;
using vlm::ScriptedBackend;
using Stage = prompts::Stage;

namespace {

sim::SimObject test_box(int uid, double w, double d, double h, double x, double y) {
  sim::SimObject o;
  o.uid = uid;
  o.name = "box" + std::to_string(uid);
  o.category = "block";
  o.footprint = {{-w / 2, -d / 2}, {w / 2, -d / 2}, {w / 2, d / 2}, {-w / 2, d / 2}};
  o.height = h;
  o.x = x;
  o.y = y;
  o.color = {150, 90, 40};
  return o;
}

sim::GeneratedScene two_box_scene() {
  sim::GeneratedScene gen;
  // uid 1 appears first in the image (smaller y projects to smaller v).
  gen.scene.objects.push_back(test_box(1, 0.06, 0.04, 0.08, 0.0, -0.12));
  gen.scene.objects.push_back(test_box(2, 0.06, 0.04, 0.08, 0.0, 0.12));
  gen.target_uid = 2;
  return gen;
}

// Forwards observations to a SimEnv but overrides execution outcomes for the
// first `n_failures` calls.
class FlakyEnv : public exec::Env {
 public:
  FlakyEnv(SimEnv& inner, int n_failures) : inner_(inner), n_failures_(n_failures) {}

  exec::Observation observe() override { return inner_.observe(); }
  double table_z() const override { return inner_.table_z(); }
  exec::ExecOutcome execute(int segment_id, const grasping::WorldGrasp& g,
                            bool remove) override {
    ++calls;
    if (calls <= n_failures_) return {false, "collision"};
    return inner_.execute(segment_id, g, remove);
  }

  int calls = 0;

 private:
  SimEnv& inner_;
  int n_failures_;
};

}  // namespace

TEST_CASE("a scripted single-step trial picks the grounded segment") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  backend.push(Stage::ground, "the box at the bottom is it\nANSWER: [2]");
  backend.push(Stage::plan, "nothing blocks it\nANSWER: [2]");
  backend.push(Stage::rank, "ANSWER: [1, 2]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(r.success);
  CHECK(r.attempts_used == 1);
  CHECK(r.steps == 1);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].action == "pick");
  CHECK(r.trace[0].action_segment == 2);
  CHECK(r.trace[0].ground_target == 2);
  CHECK(r.trace[0].segments == 2);
  CHECK(r.trace[0].exec_success);
  CHECK(r.failure.empty());
  CHECK(r.log["result"]["success"].get<bool>());
  CHECK(r.log["steps"].size() == 1);
}

TEST_CASE("the executor works through the plan blockers-first") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  int ground_calls = 0;
  backend.set_handler(Stage::ground, [&](const vlm::ChatRequest&, int sample) {
    if (sample == 0) ++ground_calls;
    return ground_calls == 1 ? "ANSWER: [2]" : "ANSWER: [1]";
  });
  backend.set_handler(Stage::plan, [&](const vlm::ChatRequest&, int) {
    return ground_calls == 1 ? "move the top box away first\nANSWER: [1, 2]"
                             : "ANSWER: [1]";
  });
  backend.push(Stage::rank, "ANSWER: [1]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(r.success);
  REQUIRE(r.trace.size() == 2);
  CHECK(r.trace[0].action == "remove");
  CHECK(r.trace[0].action_segment == 1);
  CHECK(r.trace[0].plan_sequence == std::vector<int>{1, 2});
  CHECK(r.trace[0].blockers == std::vector<int>{1});
  CHECK(r.trace[1].action == "pick");
  // Closed loop: the second step re-observes the changed scene.
  CHECK(r.trace[1].segments == 2);
  CHECK(r.attempts_used == 1);
}

TEST_CASE("unparsable grounding ends the trial in the grounding stage") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  backend.push(Stage::ground, "I cannot tell the boxes apart.");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure_stage == "grounding");
  CHECK(r.failure == "AllSamplesUnparsable");
  CHECK(r.attempts_used == 0);
}

TEST_CASE("a grounded id that is not marked fails as GroundingFailed") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [9]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure_stage == "grounding");
  CHECK(r.attempts_used == 0);
}

TEST_CASE("an unparsable plan ends the trial in the planning stage") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [2]");
  backend.push(Stage::plan, "shrug");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure_stage == "planning");
  CHECK(r.failure == "MissingAnswerBlock");
}

TEST_CASE("an unparsable ranking fails the trial as PlanningFailed") {
  sim::GeneratedScene gen;
  // A long bar decodes several grasp candidates, so the ranker must run.
  gen.scene.objects.push_back(test_box(1, 0.18, 0.03, 0.06, 0.0, 0.0));
  gen.target_uid = 1;
  SimEnv env(std::move(gen));
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [1]");
  backend.push(Stage::plan, "ANSWER: [1]");
  backend.push(Stage::rank, "all of them look wrong to me");

  auto r = run_trial(env, backend, "the bar", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure_stage == "rank");
  CHECK(r.failure == "PlanningFailed");
}

TEST_CASE("oracle backend clears the walls then picks the bar") {
  SimEnv env(sim::make_blocker_scene(1));
  auto backend = harness::make_oracle_backend(env);

  auto r = run_trial(env, *backend, harness::authored_query(env), ExecutorConfig{});
  CHECK(r.success);
  CHECK(r.attempts_used == 1);
  REQUIRE(r.trace.size() == 3);
  CHECK(r.trace[0].action == "remove");
  CHECK(r.trace[1].action == "remove");
  CHECK(r.trace[2].action == "pick");
  for (const auto& step : r.trace) CHECK(step.exec_success);
}

TEST_CASE("three failed executions exhaust the attempt budget") {
  SimEnv inner(two_box_scene());
  FlakyEnv env(inner, 1000);
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [2]");
  backend.push(Stage::plan, "ANSWER: [2]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure == "attempts_exhausted");
  CHECK(r.failure_stage == "execution");
  CHECK(r.attempts_used == 3);
  CHECK(env.calls == 3);
  REQUIRE(r.trace.size() == 3);
  for (const auto& step : r.trace) {
    CHECK(!step.exec_success);
    CHECK(step.exec_reason == "collision");
  }
}

TEST_CASE("two failures then a success stays inside the budget") {
  SimEnv inner(two_box_scene());
  FlakyEnv env(inner, 2);
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [2]");
  backend.push(Stage::plan, "ANSWER: [2]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(r.success);
  CHECK(r.attempts_used == 3);
  CHECK(env.calls == 3);
  CHECK(r.steps == 3);
}

TEST_CASE("successful removals count steps, not attempts, until the cap") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  // Always ground the true target but plan an endless blocker shuffle.
  backend.set_handler(Stage::ground, [&](const vlm::ChatRequest&, int) {
    return "ANSWER: [" + std::to_string(env.target_segment()) + "]";
  });
  backend.set_handler(Stage::plan, [&](const vlm::ChatRequest&, int) {
    const int target = env.target_segment();
    const int other = target == 1 ? 2 : 1;
    return "ANSWER: [" + std::to_string(other) + ", " + std::to_string(target) + "]";
  });
  backend.push(Stage::rank, "ANSWER: [1]");

  auto r = run_trial(env, backend, "the lower box", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure == "step_limit");
  CHECK(r.failure_stage == "execution");
  CHECK(r.steps == 12);
  CHECK(r.attempts_used == 0);
  for (const auto& step : r.trace) {
    CHECK(step.action == "remove");
    CHECK(step.exec_success);
  }
}

TEST_CASE("no_planning skips straight to picking the grounded target") {
  SimEnv env(two_box_scene());
  ScriptedBackend backend;
  backend.push(Stage::ground, "ANSWER: [2]");

  ExecutorConfig cfg;
  cfg.no_planning = true;
  auto r = run_trial(env, backend, "the lower box", cfg);
  CHECK(r.success);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].action == "pick");
  CHECK(r.trace[0].plan_sequence.empty());
}

TEST_CASE("grasp synthesis failure is reported in the grasping stage") {
  sim::GeneratedScene gen;
  // Taller walls flush on all four sides leave no finger room anywhere.
  gen.scene.objects.push_back(test_box(1, 0.06, 0.06, 0.05, 0.0, 0.0));
  gen.scene.objects.push_back(test_box(2, 0.20, 0.06, 0.15, 0.0, -0.061));
  gen.scene.objects.push_back(test_box(3, 0.20, 0.06, 0.15, 0.0, 0.061));
  gen.scene.objects.push_back(test_box(4, 0.06, 0.06, 0.15, -0.061, 0.0));
  gen.scene.objects.push_back(test_box(5, 0.06, 0.06, 0.15, 0.061, 0.0));
  gen.target_uid = 1;
  SimEnv env(std::move(gen));
  ScriptedBackend backend;
  backend.set_handler(Stage::ground, [&](const vlm::ChatRequest&, int) {
    return "ANSWER: [" + std::to_string(env.target_segment()) + "]";
  });
  backend.set_handler(Stage::plan, [&](const vlm::ChatRequest&, int) {
    return "ANSWER: [" + std::to_string(env.target_segment()) + "]";
  });

  auto r = run_trial(env, backend, "the boxed-in block", ExecutorConfig{});
  CHECK(!r.success);
  CHECK(r.failure_stage == "grasping");
  CHECK(r.failure == "NoViableGrasp");
}
