#pragma once
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "owg/executor.hpp"
#include "owg/markers.hpp"
#include "owg/sim_env.hpp"
#include "owg/vlm.hpp"
#include "json.hpp"

namespace owg::harness {

// Binary-mask intersection over union; any nonzero pixel is a member.
double iou(const GrayU8& pred, const GrayU8& gt);

struct EvalSample {
  std::string scene;  // path relative to the dataset directory
  std::string query;
  std::string query_type;  // one of the 7 closed query types
  int target_id = 0;
};

const std::vector<std::string>& query_types();

std::vector<EvalSample> load_dataset(const std::string& dir);

struct MiouReport {
  int n = 0;
  double overall = 0;  // micro: mean over samples
  double macro = 0;    // mean of per-type means
  std::map<std::string, double> per_type;
  std::map<std::string, int> per_type_count;
  std::map<std::string, double> per_type_sum;
  std::vector<double> per_sample;

  nlohmann::json to_json() const;
};

MiouReport eval_grounding(const std::string& dataset_dir, vlm::Backend& backend,
                          const exec::ExecutorConfig& cfg, int workers = 4);

struct FailureBreakdown {
  int successes = 0;
  int grounding_failures = 0;
  int grasping_failures = 0;
};

struct BenchConfig {
  std::string scenario = "isolated";  // isolated | cluttered | blocker
  int n_trials = 10;
  std::vector<uint64_t> seeds;  // padded with 1..n when shorter than n_trials
  int n_objects = 6;
  exec::ExecutorConfig exec_cfg;
};

using BackendFactory = std::function<std::shared_ptr<vlm::Backend>(sim::SimEnv&)>;

struct BenchReport {
  double success_rate = 0;
  FailureBreakdown breakdown;
  std::vector<nlohmann::json> logs;

  nlohmann::json to_json() const;
};

BenchReport run_benchmark(const BenchConfig& cfg, const BackendFactory& make_backend);

// Scripted backend that answers every stage from the simulator's ground
// truth: the target segment, its contact blockers, then an identity ranking.
std::shared_ptr<vlm::Backend> make_oracle_backend(sim::SimEnv& env);

// Human-readable query for a generated scene's target.
std::string authored_query(const sim::SimEnv& env);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<float> embed_image(const RgbImage& img) = 0;
  virtual std::vector<float> embed_text(const std::string& text) = 0;
};

double cosine(const std::vector<float>& a, const std::vector<float>& b);

// Averages cosine similarity between every transform image of a segment and
// every query template, then returns the best-scoring segment (ties take the
// smallest ID). An empty stack scores the raw image.
int rank_by_embedding(const imaging::SceneObservation& obs, const imaging::LabelMask& mask,
                      const std::string& query,
                      const std::vector<markers::VisualTransformKind>& stack,
                      EmbeddingProvider& provider, bool multi_template = true,
                      const markers::TransformParams& params = {});

// Precomputed vectors: one JSON header line, then a float32 little-endian
// row-major matrix. Images are keyed by the SHA-256 of their PNG bytes.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  static FileEmbeddingProvider load(const std::string& path);
  static void save(const std::string& path, int dim,
                   const std::map<std::string, std::vector<float>>& images,
                   const std::map<std::string, std::vector<float>>& texts);

  std::vector<float> embed_image(const RgbImage& img) override;
  std::vector<float> embed_text(const std::string& text) override;

 private:
  int dim_ = 0;
  std::map<std::string, std::vector<float>> images_;
  std::map<std::string, std::vector<float>> texts_;
};

}  // namespace owg::harness
