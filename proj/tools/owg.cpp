#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "owg/errors.hpp"
#include "owg/executor.hpp"
#include "owg/harness.hpp"
#include "owg/imaging.hpp"
#include "owg/markers.hpp"
#include "owg/parsing.hpp"
#include "owg/prompts.hpp"
#include "owg/png_io.hpp"
#include "owg/sim_env.hpp"
#include "owg/vlm.hpp"

namespace {

constexpr const char* kDefaultEndpoint = "https://api.openai.com/v1/chat/completions";

struct CommonFlags {
  std::string backend = "oracle";
  std::string endpoint;
  std::string templates_dir;
  int k = 5;
  bool no_reference = false;
  bool no_ids = false;
  bool no_fill = false;
  bool boxes = false;
  bool no_highres = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& cf, bool with_marker_flags = true) {
  cmd->add_option("--backend", cf.backend,
                  "oracle | remote | replay:FILE | scripted:FILE");
  cmd->add_option("--endpoint", cf.endpoint,
                  "Chat completions URL for the remote backend (key via OWG_API_KEY)");
  cmd->add_option("--templates", cf.templates_dir, "Directory with prompt template files");
  cmd->add_option("--k", cf.k, "Self-consistency sample count for grounding");
  cmd->add_option("--out", cf.out, "Also write the JSON result to this file");
  if (with_marker_flags) {
    cmd->add_flag("--no-reference", cf.no_reference, "Drop the unmarked reference image");
    cmd->add_flag("--no-ids", cf.no_ids, "Skip numeric ID overlays");
    cmd->add_flag("--no-fill", cf.no_fill, "Skip translucent mask fills");
    cmd->add_flag("--boxes", cf.boxes, "Stroke segment bounding boxes");
    cmd->add_flag("--no-highres", cf.no_highres, "Skip upscaling marked images");
  }
}

owg::exec::ExecutorConfig make_exec_cfg(const CommonFlags& cf) {
  owg::exec::ExecutorConfig cfg;
  cfg.self_consistency_k = cf.k;
  if (!cf.templates_dir.empty()) cfg.templates = owg::prompts::TemplateSet::load(cf.templates_dir);
  cfg.no_reference = cf.no_reference;
  cfg.no_ids = cf.no_ids;
  cfg.no_fill = cf.no_fill;
  cfg.boxes = cf.boxes;
  cfg.no_highres = cf.no_highres;
  return cfg;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

std::shared_ptr<owg::vlm::Backend> make_backend_from_spec(const std::string& spec,
                                                          owg::sim::SimEnv* env,
                                                          const std::string& record_path,
                                                          const std::string& endpoint_flag = "") {
  std::shared_ptr<owg::vlm::Backend> inner;
  if (spec == "oracle") {
    if (!env)
      throw CLI::ValidationError("--backend", "oracle needs a simulated scene (trial/bench)");
    inner = owg::harness::make_oracle_backend(*env);
  } else if (spec.rfind("replay:", 0) == 0) {
    inner = std::make_shared<owg::vlm::ReplayBackend>(
        owg::vlm::TranscriptStore::load(spec.substr(7)));
  } else if (spec.rfind("scripted:", 0) == 0) {
    inner = owg::vlm::ScriptedBackend::from_file(spec.substr(9));
  } else if (spec == "remote") {
    const std::string endpoint = endpoint_flag.empty() ? kDefaultEndpoint : endpoint_flag;
    inner = std::make_shared<owg::vlm::RemoteBackend>(
        owg::vlm::RemoteBackend::config_from_env(endpoint));
  } else {
    throw CLI::ValidationError("--backend", "unknown backend: " + spec);
  }
  if (!record_path.empty()) {
    auto store = std::make_shared<owg::vlm::TranscriptStore>();
    if (file_exists(record_path)) *store = owg::vlm::TranscriptStore::load(record_path);
    store->set_sink(record_path);
    inner = std::make_shared<owg::vlm::RecordingBackend>(inner, store);
  }
  return inner;
}

void emit(const nlohmann::json& j, const std::string& out) {
  std::string text = j.dump(2) + "\n";
  std::fwrite(text.data(), 1, text.size(), stdout);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) owg::raise(owg::Err::MissingFile, "cannot write " + out);
    f << text;
  }
}

int exit_code_for(owg::Err c) {
  switch (c) {
    case owg::Err::AuthError:
    case owg::Err::RateLimited:
    case owg::Err::MalformedRemoteResponse:
    case owg::Err::ProviderError:
    case owg::Err::ReplayMiss:
    case owg::Err::AllSamplesUnparsable:
      return 3;
    case owg::Err::EmptyQuery:
      return 2;
    default:
      return 4;
  }
}

owg::sim::GeneratedScene make_scene(const std::string& scenario, uint64_t seed, int n_objects) {
  if (scenario == "blocker") return owg::sim::make_blocker_scene(seed);
  return owg::sim::generate_scene({scenario, n_objects, seed});
}

int run_cli(std::vector<std::string> args, const std::string& record_path);

int cmd_ground(const std::string& scene_path, const std::string& query, const CommonFlags& cf,
               const std::string& record_path) {
  auto scene = owg::imaging::load_scene(scene_path);
  auto cfg = make_exec_cfg(cf);
  auto style = owg::exec::make_style(cfg, scene.obs.width(), scene.obs.height());
  auto marked = owg::markers::overlay_som(scene.obs, scene.mask, style);
  std::vector<uint8_t> reference_png =
      cfg.no_reference ? std::vector<uint8_t>{} : owg::encode_png(scene.obs.rgb);
  auto bundle = owg::prompts::build_ground_prompt(reference_png, marked, query, cfg.templates,
                                                  cfg.no_reference);
  auto backend = make_backend_from_spec(cf.backend, nullptr, record_path, cf.endpoint);
  owg::vlm::ChatRequest req{bundle, cfg.self_consistency_k > 1 ? cfg.ground_temperature : 0.0,
                            cfg.self_consistency_k, cfg.model_name, cfg.templates.hash};
  auto voted = owg::vlm::self_consistent(*backend, req, [](const std::string& text) {
    return owg::parsing::parse_ground(text).target_id;
  });
  nlohmann::json j;
  j["target"] = voted.value;
  nlohmann::json votes = nlohmann::json::array();
  for (auto& p : voted.parses) votes.push_back(p ? nlohmann::json(*p) : nlohmann::json(nullptr));
  j["votes"] = votes;
  j["segments"] = int(marked.placements.size());
  emit(j, cf.out);
  return 0;
}

int cmd_trial(const std::string& scenario, uint64_t seed, int n_objects, std::string query,
              bool no_planning, bool no_ranking, const CommonFlags& cf,
              const std::string& record_path) {
  owg::sim::SimEnv env(make_scene(scenario, seed, n_objects));
  if (query.empty()) query = owg::harness::authored_query(env);
  auto backend = make_backend_from_spec(cf.backend, &env, record_path, cf.endpoint);
  auto cfg = make_exec_cfg(cf);
  cfg.no_planning = no_planning;
  cfg.no_ranking = no_ranking;
  auto result = owg::exec::run_trial(env, *backend, query, cfg);
  nlohmann::json j = result.log;
  j["scenario"] = scenario;
  j["seed"] = seed;
  emit(j, cf.out);
  return 0;
}

int cmd_bench(const std::string& scenario, int trials, const std::string& seeds_file,
              int n_objects, bool no_planning, bool no_ranking, const CommonFlags& cf,
              const std::string& record_path) {
  owg::harness::BenchConfig bc;
  bc.scenario = scenario;
  bc.n_trials = trials;
  bc.n_objects = n_objects;
  if (!seeds_file.empty()) {
    std::ifstream f(seeds_file);
    if (!f) owg::raise(owg::Err::MissingFile, "cannot read " + seeds_file);
    uint64_t s;
    while (f >> s) bc.seeds.push_back(s);
  }
  bc.exec_cfg = make_exec_cfg(cf);
  bc.exec_cfg.no_planning = no_planning;
  bc.exec_cfg.no_ranking = no_ranking;

  std::shared_ptr<owg::vlm::Backend> shared;
  if (cf.backend != "oracle") shared = make_backend_from_spec(cf.backend, nullptr, record_path, cf.endpoint);
  auto report = owg::harness::run_benchmark(bc, [&](owg::sim::SimEnv& env) {
    return shared ? shared : make_backend_from_spec("oracle", &env, record_path);
  });
  emit(report.to_json(), cf.out);
  return 0;
}

int cmd_eval_ground(const std::string& dataset, int workers, const CommonFlags& cf,
                    const std::string& record_path) {
  auto backend = make_backend_from_spec(cf.backend, nullptr, record_path, cf.endpoint);
  auto cfg = make_exec_cfg(cf);
  auto report = owg::harness::eval_grounding(dataset, *backend, cfg, workers);
  emit(report.to_json(), cf.out);
  return 0;
}

int run_cli(std::vector<std::string> args, const std::string& record_path) {
  CLI::App app{"Open-world grasping pipeline"};
  app.require_subcommand(1);

  auto* ground = app.add_subcommand("ground", "Ground a referring query against a scene");
  std::string scene_path, query;
  CommonFlags gf;
  ground->add_option("--scene", scene_path, "Scene descriptor JSON")->required();
  ground->add_option("--query", query, "Referring expression")->required();
  add_common(ground, gf);

  auto* trial = app.add_subcommand("trial", "Run one closed-loop grasping trial");
  std::string scenario = "isolated";
  uint64_t seed = 1;
  int n_objects = 6;
  std::string trial_query;
  bool no_planning = false, no_ranking = false;
  CommonFlags tf;
  trial->add_option("--scenario", scenario, "isolated | cluttered | blocker");
  trial->add_option("--seed", seed, "Scene generation seed");
  trial->add_option("--n-objects", n_objects, "Objects per generated scene");
  trial->add_option("--query", trial_query, "Override the authored target query");
  trial->add_flag("--no-planning", no_planning, "Grasp the grounded target directly");
  trial->add_flag("--no-ranking", no_ranking, "Take the top decoded grasp unranked");
  add_common(trial, tf);

  auto* bench = app.add_subcommand("bench", "Run a batch of trials and report rates");
  std::string bench_scenario = "isolated";
  int trials = 10;
  std::string seeds_file;
  int bench_objects = 6;
  bool bench_no_planning = false, bench_no_ranking = false;
  CommonFlags bf;
  bench->add_option("--scenario", bench_scenario, "isolated | cluttered | blocker");
  bench->add_option("--trials", trials, "Trial count");
  bench->add_option("--seeds", seeds_file, "File with one seed per line");
  bench->add_option("--n-objects", bench_objects, "Objects per generated scene");
  bench->add_flag("--no-planning", bench_no_planning, "Grasp the grounded target directly");
  bench->add_flag("--no-ranking", bench_no_ranking, "Take the top decoded grasp unranked");
  add_common(bench, bf);

  auto* evalg = app.add_subcommand("eval-ground", "Score grounding accuracy over a dataset");
  std::string dataset;
  int workers = 4;
  CommonFlags ef;
  evalg->add_option("--dataset", dataset, "Dataset directory with annotations.json")->required();
  evalg->add_option("--workers", workers, "Concurrent samples");
  add_common(evalg, ef);

  auto* record = app.add_subcommand("record", "Record transcripts while running a command");
  std::string transcript;
  record->add_option("transcript", transcript, "Transcript JSONL to append")->required();
  record->allow_extras();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (record->parsed()) {
      auto rest = record->remaining();
      if (rest.empty())
        throw CLI::ValidationError("record", "needs a command to wrap");
      return run_cli(rest, transcript);
    }
    if (ground->parsed()) return cmd_ground(scene_path, query, gf, record_path);
    if (trial->parsed())
      return cmd_trial(scenario, seed, n_objects, trial_query, no_planning, no_ranking, tf,
                       record_path);
    if (bench->parsed())
      return cmd_bench(bench_scenario, trials, seeds_file, bench_objects, bench_no_planning,
                       bench_no_ranking, bf, record_path);
    if (evalg->parsed()) return cmd_eval_ground(dataset, workers, ef, record_path);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const owg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args), "");
}
