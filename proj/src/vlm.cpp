#include "owg/vlm.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "owg/digest.hpp"
#include "owg/parsing.hpp"

namespace owg::vlm {

using nlohmann::json;
using prompts::ChatMessage;
using prompts::MessagePart;
using prompts::Role;

namespace {

json canonical_json(const ChatRequest& req) {
  json messages = json::array();
  for (const ChatMessage& m : req.bundle.messages) {
    json parts = json::array();
    for (const MessagePart& p : m.parts) {
      if (p.kind == MessagePart::Kind::text)
        parts.push_back({{"type", "text"}, {"text", p.text}});
      else
        parts.push_back({{"type", "image"}, {"sha256", sha256_hex(p.png)}});
    }
    messages.push_back({{"role", prompts::role_name(m.role)}, {"parts", parts}});
  }
  return json{{"messages", messages},
              {"model", req.model_name},
              {"n_samples", req.n_samples},
              {"stage", parsing::stage_name(req.bundle.stage)},
              {"temperature", req.temperature},
              {"template_hash", req.template_hash}};
}

int stage_index(Stage s) { return static_cast<int>(s); }

}  // namespace

std::string canonical_key(const ChatRequest& req) {
  // nlohmann::json keeps object keys sorted, so the dump is canonical.
  return sha256_hex(canonical_json(req).dump());
}

void ScriptedBackend::set_handler(Stage stage, Handler h) {
  std::lock_guard<std::mutex> lock(mu_);
  handlers_[stage_index(stage)] = std::move(h);
}

void ScriptedBackend::push(Stage stage, std::string text) {
  std::lock_guard<std::mutex> lock(mu_);
  queues_[stage_index(stage)].push_back(std::move(text));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(Err::MissingFile, path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    raise(Err::FormatError, path + ": " + e.what());
  }
  auto backend = std::make_shared<ScriptedBackend>();
  const std::pair<const char*, Stage> stages[] = {
      {"ground", Stage::ground}, {"plan", Stage::plan}, {"rank", Stage::rank}};
  for (const auto& [name, stage] : stages) {
    if (!doc.contains(name)) continue;
    const json& entry = doc.at(name);
    if (entry.is_string())
      backend->push(stage, entry.get<std::string>());
    else if (entry.is_array())
      for (const json& t : entry) backend->push(stage, t.get<std::string>());
    else
      raise(Err::FormatError, path + ": stage entries must be string or array");
  }
  return backend;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& req) {
  std::lock_guard<std::mutex> lock(mu_);
  const int idx = stage_index(req.bundle.stage);
  ChatResponse resp;
  resp.backend_id = id();
  for (int i = 0; i < req.n_samples; ++i) {
    if (auto it = handlers_.find(idx); it != handlers_.end()) {
      resp.texts.push_back(it->second(req, i));
      continue;
    }
    auto qit = queues_.find(idx);
    if (qit == queues_.end() || qit->second.empty())
      raise(Err::ProviderError, std::string("no scripted response for stage ") +
                                    parsing::stage_name(req.bundle.stage));
    size_t& cursor = cursors_[idx];
    resp.texts.push_back(qit->second[std::min(cursor, qit->second.size() - 1)]);
    ++cursor;
  }
  return resp;
}

TranscriptStore TranscriptStore::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(Err::MissingFile, path);
  TranscriptStore store;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json doc = json::parse(line);
      store.entries_[doc.at("key").get<std::string>()] =
          doc.at("responses").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      raise(Err::FormatError, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

std::optional<std::vector<std::string>> TranscriptStore::lookup(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranscriptStore::append(const std::string& key, const std::vector<std::string>& responses) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_[key] = responses;
  if (sink_path_.empty()) return;
  std::ofstream f(sink_path_, std::ios::app);
  if (!f) raise(Err::MissingFile, "cannot append to transcript: " + sink_path_);
  f << json{{"key", key}, {"responses", responses}}.dump() << "\n";
}

ChatResponse ReplayBackend::complete(const ChatRequest& req) {
  const std::string key = canonical_key(req);
  const auto stored = store_.lookup(key);
  if (!stored)
    raise(Err::ReplayMiss, "transcript has no entry for key " + key +
                               " (stage " + parsing::stage_name(req.bundle.stage) + ")");
  ChatResponse resp;
  resp.backend_id = id();
  resp.texts = *stored;
  if (static_cast<int>(resp.texts.size()) > req.n_samples) resp.texts.resize(req.n_samples);
  return resp;
}

ChatResponse RecordingBackend::complete(const ChatRequest& req) {
  ChatResponse resp = inner_->complete(req);
  store_->append(canonical_key(req), resp.texts);
  return resp;
}

RemoteConfig RemoteBackend::config_from_env(const std::string& endpoint) {
  RemoteConfig cfg;
  cfg.endpoint = endpoint;
  if (const char* key = std::getenv("OWG_API_KEY")) cfg.api_key = key;
  return cfg;
}

std::string RemoteBackend::request_body(const ChatRequest& req) {
  json messages = json::array();
  for (const ChatMessage& m : req.bundle.messages) {
    json content = json::array();
    for (const MessagePart& p : m.parts) {
      if (p.kind == MessagePart::Kind::text)
        content.push_back({{"type", "text"}, {"text", p.text}});
      else
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:image/png;base64," + base64_encode(p.png)}}}});
    }
    messages.push_back({{"role", prompts::role_name(m.role)}, {"content", content}});
  }
  return json{{"model", req.model_name},
              {"temperature", req.temperature},
              {"n", req.n_samples},
              {"messages", messages}}
      .dump();
}

ChatResponse RemoteBackend::complete(const ChatRequest& req) {
  std::string host, path = "/v1/chat/completions";
  const size_t scheme = cfg_.endpoint.find("://");
  if (scheme == std::string::npos)
    raise(Err::FormatError, "endpoint must be an http(s) URL: " + cfg_.endpoint);
  const size_t slash = cfg_.endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) {
    host = cfg_.endpoint;
  } else {
    host = cfg_.endpoint.substr(0, slash);
    path = cfg_.endpoint.substr(slash);
  }

  const std::string body = request_body(req);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const auto start = std::chrono::steady_clock::now();
  int last_status = 0;
  std::string last_error = "connection failed";
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg_.backoff_base_ms * (1 << (attempt - 1))));

    httplib::Client client(host);
    client.set_read_timeout(cfg_.timeout_s, 0);
    client.set_connection_timeout(cfg_.timeout_s, 0);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      continue;
    }
    last_status = res->status;
    if (res->status == 401 || res->status == 403)
      raise(Err::AuthError, "endpoint rejected the credential (HTTP " +
                                std::to_string(res->status) + ")");
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      raise(Err::MalformedRemoteResponse, "HTTP " + std::to_string(res->status));

    try {
      const json doc = json::parse(res->body);
      ChatResponse out;
      out.backend_id = id();
      for (const json& choice : doc.at("choices"))
        out.texts.push_back(choice.at("message").at("content").get<std::string>());
      if (out.texts.empty()) raise(Err::MalformedRemoteResponse, "response carries no choices");
      out.latency_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                             std::chrono::steady_clock::now() - start)
                                             .count());
      return out;
    } catch (const json::exception& e) {
      raise(Err::MalformedRemoteResponse, e.what());
    }
  }
  if (last_status == 429) raise(Err::RateLimited, "still rate limited after retries");
  raise(Err::MalformedRemoteResponse, "no usable response after retries: " + last_error);
}

Voted<int> self_consistent(Backend& backend, ChatRequest req,
                           const std::function<int(const std::string&)>& parser) {
  if (req.n_samples < 1) raise(Err::FormatError, "n_samples must be >= 1");
  const ChatResponse resp = backend.complete(req);

  Voted<int> out;
  out.texts = resp.texts;
  std::vector<int> parsed;
  for (const std::string& text : resp.texts) {
    try {
      const int value = parser(text);
      out.parses.push_back(value);
      parsed.push_back(value);
    } catch (const Error&) {
      out.parses.push_back(std::nullopt);
    }
  }
  if (parsed.empty())
    raise(Err::AllSamplesUnparsable, "none of the " + std::to_string(resp.texts.size()) +
                                         " samples parsed");
  out.value = parsing::majority_vote(parsed);
  return out;
}

}  // namespace owg::vlm
