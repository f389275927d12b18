#include "owg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "owg/digest.hpp"
#include "owg/errors.hpp"
#include "owg/parsing.hpp"
#include "owg/png_io.hpp"
#include "owg/prompts.hpp"

namespace owg::harness {

double iou(const GrayU8& pred, const GrayU8& gt) {
  require_same_size(pred.width(), pred.height(), gt.width(), gt.height(), "iou masks");
  long long inter = 0, uni = 0;
  for (int v = 0; v < pred.height(); ++v) {
    for (int u = 0; u < pred.width(); ++u) {
      bool p = pred.at(u, v) != 0;
      bool g = gt.at(u, v) != 0;
      inter += p && g;
      uni += p || g;
    }
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

const std::vector<std::string>& query_types() {
  static const std::vector<std::string> kTypes = {
      "name",          "attribute", "spatial_relation", "visual_relation",
      "semantic_relation", "multi_hop", "affordance"};
  return kTypes;
}

std::vector<EvalSample> load_dataset(const std::string& dir) {
  std::string path = dir + "/annotations.json";
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Err::DatasetFormatError, std::string("bad annotations.json: ") + e.what());
  }
  if (!j.is_array()) raise(Err::DatasetFormatError, "annotations.json must be an array");
  std::vector<EvalSample> out;
  auto& types = query_types();
  for (auto& entry : j) {
    EvalSample s;
    try {
      s.scene = entry.at("scene").get<std::string>();
      s.query = entry.at("query").get<std::string>();
      s.query_type = entry.at("type").get<std::string>();
      s.target_id = entry.at("target_id").get<int>();
    } catch (const nlohmann::json::exception& e) {
      raise(Err::DatasetFormatError, std::string("bad annotation entry: ") + e.what());
    }
    if (s.scene.empty() || s.query.empty())
      raise(Err::DatasetFormatError, "annotation entry with empty scene or query");
    if (std::find(types.begin(), types.end(), s.query_type) == types.end())
      raise(Err::DatasetFormatError, "unknown query type: " + s.query_type);
    if (s.target_id < 1 || s.target_id > 255)
      raise(Err::DatasetFormatError, "target_id out of range: " + std::to_string(s.target_id));
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json MiouReport::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["overall"] = overall;
  j["macro"] = macro;
  j["per_type"] = per_type;
  j["per_type_count"] = per_type_count;
  j["per_type_sum"] = per_type_sum;
  j["per_sample"] = per_sample;
  return j;
}

MiouReport eval_grounding(const std::string& dataset_dir, vlm::Backend& backend,
                          const exec::ExecutorConfig& cfg, int workers) {
  auto samples = load_dataset(dataset_dir);
  MiouReport report;
  report.n = int(samples.size());
  report.per_sample.assign(samples.size(), 0.0);
  if (samples.empty()) return report;

  auto score_sample = [&](const EvalSample& s) {
    auto scene = imaging::load_scene(dataset_dir + "/" + s.scene);
    GrayU8 gt_mask(scene.mask.labels.width(), scene.mask.labels.height(), 0);
    long long gt_px = 0;
    for (int v = 0; v < gt_mask.height(); ++v) {
      for (int u = 0; u < gt_mask.width(); ++u) {
        if (scene.mask.labels.at(u, v) == s.target_id) {
          gt_mask.at(u, v) = 1;
          ++gt_px;
        }
      }
    }
    if (gt_px == 0)
      raise(Err::DatasetFormatError,
            "target_id " + std::to_string(s.target_id) + " not present in " + s.scene);

    auto style = exec::make_style(cfg, scene.obs.width(), scene.obs.height());
    auto marked = markers::overlay_som(scene.obs, scene.mask, style);
    std::vector<uint8_t> reference_png =
        cfg.no_reference ? std::vector<uint8_t>{} : encode_png(scene.obs.rgb);
    auto bundle = prompts::build_ground_prompt(reference_png, marked, s.query, cfg.templates,
                                               cfg.no_reference);
    vlm::ChatRequest req{bundle, cfg.self_consistency_k > 1 ? cfg.ground_temperature : 0.0,
                         cfg.self_consistency_k, cfg.model_name, cfg.templates.hash};
    int voted = 0;
    try {
      voted = vlm::self_consistent(backend, req, [](const std::string& text) {
                return parsing::parse_ground(text).target_id;
              }).value;
    } catch (const Error& e) {
      if (e.code() == Err::AllSamplesUnparsable) return 0.0;
      throw;
    }
    if (!marked.placements.count(voted)) return 0.0;
    GrayU8 pred_mask(gt_mask.width(), gt_mask.height(), 0);
    for (int v = 0; v < pred_mask.height(); ++v)
      for (int u = 0; u < pred_mask.width(); ++u)
        pred_mask.at(u, v) = scene.mask.labels.at(u, v) == voted ? 1 : 0;
    return iou(pred_mask, gt_mask);
  };

  std::atomic<size_t> cursor{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= samples.size()) return;
      try {
        report.per_sample[i] = score_sample(samples[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  int n_threads = std::max(1, std::min(workers, int(samples.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  for (size_t i = 0; i < samples.size(); ++i) {
    report.per_type_sum[samples[i].query_type] += report.per_sample[i];
    report.per_type_count[samples[i].query_type] += 1;
  }
  double total = 0;
  for (auto& [type, sum] : report.per_type_sum) {
    report.per_type[type] = sum / report.per_type_count[type];
    total += sum;
  }
  report.overall = total / report.n;
  double macro = 0;
  for (auto& [type, mean] : report.per_type) macro += mean;
  report.macro = macro / double(report.per_type.size());
  return report;
}

namespace {

class GtTrackingEnv : public exec::Env {
 public:
  explicit GtTrackingEnv(sim::SimEnv& inner) : inner_(inner) {}
  exec::Observation observe() override {
    auto o = inner_.observe();
    gt_targets_.push_back(inner_.target_segment());
    return o;
  }
  double table_z() const override { return inner_.table_z(); }
  exec::ExecOutcome execute(int segment_id, const grasping::WorldGrasp& grasp,
                            bool remove) override {
    return inner_.execute(segment_id, grasp, remove);
  }
  const std::vector<int>& gt_targets() const { return gt_targets_; }

 private:
  sim::SimEnv& inner_;
  std::vector<int> gt_targets_;
};

}  // namespace

nlohmann::json BenchReport::to_json() const {
  nlohmann::json j;
  j["success_rate"] = success_rate;
  j["successes"] = breakdown.successes;
  j["grounding_failures"] = breakdown.grounding_failures;
  j["grasping_failures"] = breakdown.grasping_failures;
  j["trials"] = logs;
  return j;
}

BenchReport run_benchmark(const BenchConfig& cfg, const BackendFactory& make_backend) {
  if (cfg.n_trials < 1) raise(Err::FormatError, "n_trials must be at least 1");
  BenchReport report;
  for (int i = 0; i < cfg.n_trials; ++i) {
    uint64_t seed = i < int(cfg.seeds.size()) ? cfg.seeds[i] : uint64_t(i + 1);
    sim::GeneratedScene gen;
    if (cfg.scenario == "blocker")
      gen = sim::make_blocker_scene(seed);
    else
      gen = sim::generate_scene({cfg.scenario, cfg.n_objects, seed});
    sim::SimEnv env(std::move(gen));
    GtTrackingEnv tracked(env);
    auto backend = make_backend(env);
    auto result = exec::run_trial(tracked, *backend, authored_query(env), cfg.exec_cfg);
    if (result.success) {
      report.breakdown.successes += 1;
    } else {
      bool grounding = result.failure_stage == "grounding";
      auto& gt = tracked.gt_targets();
      for (size_t s = 0; s < result.trace.size() && !grounding; ++s) {
        if (result.trace[s].ground_target != 0 && s < gt.size() &&
            result.trace[s].ground_target != gt[s])
          grounding = true;
      }
      if (grounding)
        report.breakdown.grounding_failures += 1;
      else
        report.breakdown.grasping_failures += 1;
    }
    report.logs.push_back(result.log);
  }
  report.success_rate = double(report.breakdown.successes) / double(cfg.n_trials);
  return report;
}

std::string authored_query(const sim::SimEnv& env) {
  const sim::SimObject* target = env.scene().find(env.target_uid());
  std::string name = target ? target->name : "object";
  std::replace(name.begin(), name.end(), '_', ' ');
  return "the " + name;
}

std::shared_ptr<vlm::Backend> make_oracle_backend(sim::SimEnv& env) {
  auto backend = std::make_shared<vlm::ScriptedBackend>();
  auto* envp = &env;

  backend->set_handler(parsing::Stage::ground, [envp](const vlm::ChatRequest&, int) {
    int t = envp->target_segment();
    if (t == 0) return std::string("I cannot find the requested object.");
    std::string id = std::to_string(t);
    return "The requested object is marker [" + id + "].\nANSWER: [" + id + "]";
  });

  backend->set_handler(parsing::Stage::plan, [envp](const vlm::ChatRequest&, int) {
    int t = envp->target_segment();
    if (t == 0) return std::string("I cannot find the requested object.");
    auto blockers = envp->blocker_segments();
    std::string id = std::to_string(t);
    if (blockers.empty())
      return "Nothing is in contact with [" + id + "], so grasp it directly.\nANSWER: [" + id +
             "]";
    std::string listed, seq;
    for (int b : blockers) {
      listed += (listed.empty() ? "[" : ", [") + std::to_string(b) + "]";
      seq += std::to_string(b) + ", ";
    }
    return "These neighbors press against [" + id + "]: " + listed +
           ". Remove them first.\nANSWER: [" + seq + id + "]";
  });

  backend->set_handler(parsing::Stage::rank, [](const vlm::ChatRequest& req, int) {
    const std::string& fmt = req.bundle.expected_format;
    int k = std::atoi(fmt.substr(fmt.rfind('-') + 1).c_str());
    std::string seq;
    for (int i = 1; i <= k; ++i) seq += (i > 1 ? ", " : "") + std::to_string(i);
    return "The candidates already start with the best one.\nANSWER: [" + seq + "]";
  });

  return backend;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty())
    raise(Err::ProviderError, "embedding dimensions disagree");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na <= 0 || nb <= 0) raise(Err::ProviderError, "zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

int rank_by_embedding(const imaging::SceneObservation& obs, const imaging::LabelMask& mask,
                      const std::string& query,
                      const std::vector<markers::VisualTransformKind>& stack,
                      EmbeddingProvider& provider, bool multi_template,
                      const markers::TransformParams& params) {
  int n = mask.num_segments();
  if (n == 0) raise(Err::FormatError, "no segments to rank");
  auto templates = prompts::text_templates(query);
  if (!multi_template) templates.resize(1);
  std::vector<std::vector<float>> text_vecs;
  for (auto& t : templates) text_vecs.push_back(provider.embed_text(t));

  int best_id = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int id = 1; id <= n; ++id) {
    std::vector<RgbImage> images;
    if (stack.empty()) {
      images.push_back(obs.rgb);
    } else {
      for (auto kind : stack) images.push_back(markers::apply_transform(obs, mask, id, kind, params));
    }
    double total = 0;
    int terms = 0;
    for (auto& img : images) {
      auto vec = provider.embed_image(img);
      for (auto& tv : text_vecs) {
        total += cosine(vec, tv);
        ++terms;
      }
    }
    double score = total / terms;
    if (score > best_score) {
      best_score = score;
      best_id = id;
    }
  }
  return best_id;
}

FileEmbeddingProvider FileEmbeddingProvider::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot read " + path);
  std::string header;
  if (!std::getline(f, header)) raise(Err::FormatError, "missing embedding header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("bad embedding header: ") + e.what());
  }
  FileEmbeddingProvider prov;
  std::map<std::string, int> image_rows, text_rows;
  int rows = 0;
  try {
    prov.dim_ = j.at("dim").get<int>();
    rows = j.at("rows").get<int>();
    for (auto& [k, v] : j.at("images").items()) image_rows[k] = v.get<int>();
    for (auto& [k, v] : j.at("texts").items()) text_rows[k] = v.get<int>();
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("bad embedding header: ") + e.what());
  }
  if (prov.dim_ < 1 || rows != int(image_rows.size() + text_rows.size()))
    raise(Err::FormatError, "embedding header row accounting is wrong");
  std::vector<char> blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (blob.size() != size_t(rows) * prov.dim_ * 4)
    raise(Err::FormatError, "embedding matrix size mismatch");
  auto row_at = [&](int row) {
    std::vector<float> out(size_t(prov.dim_));
    std::memcpy(out.data(), blob.data() + size_t(row) * prov.dim_ * 4, size_t(prov.dim_) * 4);
    return out;
  };
  for (auto& [k, row] : image_rows) {
    if (row < 0 || row >= rows) raise(Err::FormatError, "embedding row out of range");
    prov.images_[k] = row_at(row);
  }
  for (auto& [k, row] : text_rows) {
    if (row < 0 || row >= rows) raise(Err::FormatError, "embedding row out of range");
    prov.texts_[k] = row_at(row);
  }
  return prov;
}

void FileEmbeddingProvider::save(const std::string& path, int dim,
                                 const std::map<std::string, std::vector<float>>& images,
                                 const std::map<std::string, std::vector<float>>& texts) {
  nlohmann::json j;
  j["dim"] = dim;
  j["rows"] = int(images.size() + texts.size());
  j["images"] = nlohmann::json::object();
  j["texts"] = nlohmann::json::object();
  std::vector<const std::vector<float>*> rows;
  for (auto& [k, v] : images) {
    j["images"][k] = int(rows.size());
    rows.push_back(&v);
  }
  for (auto& [k, v] : texts) {
    j["texts"][k] = int(rows.size());
    rows.push_back(&v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot write " + path);
  f << j.dump() << "\n";
  for (auto* row : rows) {
    if (int(row->size()) != dim) raise(Err::FormatError, "embedding row dimension mismatch");
    f.write(reinterpret_cast<const char*>(row->data()), std::streamsize(row->size() * 4));
  }
}

std::vector<float> FileEmbeddingProvider::embed_image(const RgbImage& img) {
  auto key = sha256_hex(encode_png(img));
  auto it = images_.find(key);
  if (it == images_.end()) raise(Err::ProviderError, "no embedding for image " + key);
  return it->second;
}

std::vector<float> FileEmbeddingProvider::embed_text(const std::string& text) {
  auto it = texts_.find(text);
  if (it == texts_.end()) raise(Err::ProviderError, "no embedding for text \"" + text + "\"");
  return it->second;
}

}  // namespace owg::harness
