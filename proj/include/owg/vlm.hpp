#pragma once
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "owg/prompts.hpp"

namespace owg::vlm {

using prompts::PromptBundle;
using prompts::Stage;

struct ChatRequest {
  PromptBundle bundle;
  double temperature = 0.0;
  int n_samples = 1;
  std::string model_name = "gpt-4-vision-preview";
  std::string template_hash;
};

struct ChatResponse {
  std::vector<std::string> texts;
  std::string backend_id;
  long latency_ms = 0;
};

// Digest of the canonical request serialization; image parts enter as the
// SHA-256 of their PNG bytes so transcripts never store pixels.
std::string canonical_key(const ChatRequest& req);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  virtual std::string id() const = 0;
};

class ScriptedBackend : public Backend {
 public:
  using Handler = std::function<std::string(const ChatRequest&, int sample_index)>;

  void set_handler(Stage stage, Handler h);
  // Queued texts are consumed one per sample; the last entry repeats forever.
  void push(Stage stage, std::string text);

  static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

  ChatResponse complete(const ChatRequest& req) override;
  std::string id() const override { return "scripted"; }

 private:
  std::mutex mu_;
  std::map<int, Handler> handlers_;
  std::map<int, std::vector<std::string>> queues_;
  std::map<int, size_t> cursors_;
};

class TranscriptStore {
 public:
  TranscriptStore() = default;
  TranscriptStore(TranscriptStore&& other) noexcept
      : entries_(std::move(other.entries_)), sink_path_(std::move(other.sink_path_)) {}
  TranscriptStore& operator=(TranscriptStore&& other) noexcept {
    entries_ = std::move(other.entries_);
    sink_path_ = std::move(other.sink_path_);
    return *this;
  }
  static TranscriptStore load(const std::string& path);

  std::optional<std::vector<std::string>> lookup(const std::string& key) const;
  // Appends to memory and, when a sink path is set, to the JSONL file.
  void append(const std::string& key, const std::vector<std::string>& responses);
  void set_sink(const std::string& path) { sink_path_ = path; }
  size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::string sink_path_;
  mutable std::mutex mu_;
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(TranscriptStore store) : store_(std::move(store)) {}
  ChatResponse complete(const ChatRequest& req) override;
  std::string id() const override { return "replay"; }

 private:
  TranscriptStore store_;
};

class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<TranscriptStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}
  ChatResponse complete(const ChatRequest& req) override;
  std::string id() const override { return "recording(" + inner_->id() + ")"; }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<TranscriptStore> store_;
};

struct RemoteConfig {
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string api_key;   // from OWG_API_KEY
  int max_retries = 3;
  int backoff_base_ms = 1000;
  int timeout_s = 60;
};

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {}
  static RemoteConfig config_from_env(const std::string& endpoint);

  ChatResponse complete(const ChatRequest& req) override;
  std::string id() const override { return "remote"; }

  // Wire-format body, exposed for tests.
  static std::string request_body(const ChatRequest& req);

 private:
  RemoteConfig cfg_;
};

template <typename T>
struct Voted {
  T value{};
  std::vector<std::optional<T>> parses;
  std::vector<std::string> texts;
};

// Fans one request out to k samples, parses each, discards unparsable ones
// and majority-votes the rest.
Voted<int> self_consistent(Backend& backend, ChatRequest req,
                           const std::function<int(const std::string&)>& parser);

}  // namespace owg::vlm
