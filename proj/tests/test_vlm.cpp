#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <atomic>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "owg/digest.hpp"
#include "owg/markers.hpp"
#include "owg/png_io.hpp"
#include "owg/vlm.hpp"

using namespace owg;
using namespace owg::vlm;
using nlohmann::json;

namespace {

markers::MarkedImage make_marked(uint8_t tint = 90) {
  imaging::SceneObservation obs;
  obs.camera.fx = obs.camera.fy = 300.0;
  obs.camera.cx = 32;
  obs.camera.cy = 24;
  obs.rgb = RgbImage(64, 48, Rgb{tint, tint, tint});
  obs.depth_m = GrayF32(64, 48, 1.0f);
  imaging::LabelMask mask;
  mask.labels = GrayU8(64, 48, 0);
  for (int v = 10; v < 20; ++v)
    for (int u = 10; u < 20; ++u) mask.labels.at(u, v) = 1;
  for (int v = 28; v < 40; ++v)
    for (int u = 40; u < 56; ++u) mask.labels.at(u, v) = 2;
  markers::MarkerStyle style;
  style.palette = markers::default_palette();
  style.upscale = 1;
  return markers::overlay_som(obs, mask, style);
}

ChatRequest make_request(uint8_t tint = 90) {
  auto marked = make_marked(tint);
  auto ts = prompts::TemplateSet::builtin();
  auto bundle =
      build_ground_prompt(encode_png(RgbImage(64, 48, Rgb{tint, tint, tint})), marked,
                          "the left block", ts);
  return ChatRequest{bundle, 0.7, 5, "gpt-4-vision-preview", ts.hash};
}

std::string chat_body(const std::vector<std::string>& texts) {
  json choices = json::array();
  for (const auto& t : texts) choices.push_back({{"message", {{"content", t}}}});
  return json{{"choices", choices}}.dump();
}

std::string temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "owg_vlm_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::filesystem::remove(path);
  return path.string();
}

}  // namespace

TEST_CASE("canonical_key is content-addressed") {
  auto req = make_request();
  CHECK(canonical_key(req) == canonical_key(req));

  SUBCASE("one pixel flips the key") {
    auto other = make_request(91);
    CHECK(canonical_key(req) != canonical_key(other));
  }

  SUBCASE("sampling parameters are part of the key") {
    auto t = req;
    t.temperature = 0.0;
    CHECK(canonical_key(t) != canonical_key(req));
    auto n = req;
    n.n_samples = 1;
    CHECK(canonical_key(n) != canonical_key(req));
    auto h = req;
    h.template_hash = "deadbeef";
    CHECK(canonical_key(h) != canonical_key(req));
    auto m = req;
    m.model_name = "other-model";
    CHECK(canonical_key(m) != canonical_key(req));
  }

  SUBCASE("key equals the digest of a field-order-independent serialization") {
    // Re-derive the canonical form with fields assembled in a different
    // order; nlohmann sorts object keys, so the dumps must agree.
    json messages = json::array();
    for (const auto& msg : req.bundle.messages) {
      json parts = json::array();
      for (const auto& p : msg.parts) {
        if (p.kind == prompts::MessagePart::Kind::text)
          parts.push_back({{"text", p.text}, {"type", "text"}});
        else
          parts.push_back({{"sha256", sha256_hex(p.png)}, {"type", "image"}});
      }
      messages.push_back({{"parts", parts}, {"role", prompts::role_name(msg.role)}});
    }
    json doc;
    doc["template_hash"] = req.template_hash;
    doc["temperature"] = req.temperature;
    doc["stage"] = "ground";
    doc["n_samples"] = req.n_samples;
    doc["model"] = req.model_name;
    doc["messages"] = messages;
    CHECK(canonical_key(req) == sha256_hex(doc.dump()));
  }
}

TEST_CASE("scripted backend plays handlers and queues") {
  ScriptedBackend backend;
  backend.set_handler(Stage::ground,
                      [](const ChatRequest&, int i) { return "ANSWER: [" + std::to_string(i) + "]"; });
  auto req = make_request();
  req.n_samples = 3;
  auto resp = backend.complete(req);
  CHECK(resp.texts == std::vector<std::string>{"ANSWER: [0]", "ANSWER: [1]", "ANSWER: [2]"});
  CHECK(resp.backend_id == "scripted");

  SUBCASE("queued texts consume one per sample and repeat the last") {
    ScriptedBackend q;
    q.push(Stage::ground, "first");
    q.push(Stage::ground, "second");
    auto r1 = q.complete(req);  // 3 samples
    CHECK(r1.texts == std::vector<std::string>{"first", "second", "second"});
  }

  SUBCASE("unconfigured stage raises") {
    ScriptedBackend empty;
    CHECK_THROWS_AS(empty.complete(req), Error);
  }
}

TEST_CASE("transcripts record and replay") {
  auto req = make_request();
  const std::string key = canonical_key(req);
  const std::string path = temp_file("t_roundtrip.jsonl");

  auto inner = std::make_shared<ScriptedBackend>();
  inner->set_handler(Stage::ground, [](const ChatRequest&, int) { return "ANSWER: [2]"; });
  auto store = std::make_shared<TranscriptStore>();
  store->set_sink(path);
  RecordingBackend recorder(inner, store);
  auto live = recorder.complete(req);
  CHECK(live.texts.size() == 5);

  ReplayBackend replay(TranscriptStore::load(path));
  auto replayed = replay.complete(req);
  CHECK(replayed.texts == live.texts);
  CHECK(replayed.backend_id == "replay");

  SUBCASE("a replay miss names the missing key") {
    auto other = make_request(77);
    try {
      replay.complete(other);
      FAIL("expected ReplayMiss");
    } catch (const Error& e) {
      CHECK(e.code() == Err::ReplayMiss);
      CHECK(std::string(e.what()).find(canonical_key(other)) != std::string::npos);
    }
  }

  SUBCASE("template edits change the key and therefore miss") {
    auto edited = req;
    edited.template_hash = "0000";
    CHECK_THROWS_AS(replay.complete(edited), Error);
  }
}

TEST_CASE("self_consistent votes over parsed samples") {
  auto req = make_request();
  const auto parse = [](const std::string& text) {
    return parsing::parse_ground(text).target_id;
  };

  SUBCASE("strict majority") {
    ScriptedBackend b;
    for (const char* t : {"ANSWER: [3]", "ANSWER: [3]", "ANSWER: [3]", "ANSWER: [5]",
                          "ANSWER: [5]"})
      b.push(Stage::ground, t);
    auto voted = self_consistent(b, req, parse);
    CHECK(voted.value == 3);
    CHECK(voted.parses.size() == 5);
  }

  SUBCASE("unparsable samples are discarded") {
    ScriptedBackend b;
    b.push(Stage::ground, "ANSWER: [7]");
    b.push(Stage::ground, "no answer at all");
    b.push(Stage::ground, "ANSWER: [7]");
    auto r = req;
    r.n_samples = 3;
    auto voted = self_consistent(b, r, parse);
    CHECK(voted.value == 7);
    CHECK_FALSE(voted.parses[1].has_value());
  }

  SUBCASE("all unparsable raises AllSamplesUnparsable") {
    ScriptedBackend b;
    b.push(Stage::ground, "nothing");
    auto r = req;
    r.n_samples = 3;
    try {
      self_consistent(b, r, parse);
      FAIL("expected AllSamplesUnparsable");
    } catch (const Error& e) {
      CHECK(e.code() == Err::AllSamplesUnparsable);
    }
  }
}

TEST_CASE("remote backend speaks the chat-completions protocol") {
  httplib::Server server;
  std::atomic<int> flaky_hits{0};
  std::string seen_auth, seen_body;

  server.Post("/v1/chat/completions", [&](const httplib::Request& r, httplib::Response& res) {
    seen_auth = r.get_header_value("Authorization");
    seen_body = r.body;
    res.set_content(chat_body({"ANSWER: [1]", "ANSWER: [2]"}), "application/json");
  });
  server.Post("/auth", [](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
  });
  server.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (++flaky_hits <= 2) {
      res.status = 429;
    } else {
      res.set_content(chat_body({"recovered"}), "application/json");
    }
  });
  server.Post("/limit", [](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
  });
  server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  auto req = make_request();
  req.n_samples = 2;

  SUBCASE("success path carries auth header and wire fields") {
    RemoteBackend backend({base + "/v1/chat/completions", "sk-test", 0, 1, 5});
    auto resp = backend.complete(req);
    CHECK(resp.texts == std::vector<std::string>{"ANSWER: [1]", "ANSWER: [2]"});
    CHECK(seen_auth == "Bearer sk-test");
    const json body = json::parse(seen_body);
    CHECK(body.at("model") == "gpt-4-vision-preview");
    CHECK(body.at("n") == 2);
    CHECK(body.at("temperature") == doctest::Approx(0.7));
    const auto& first_part = body.at("messages").at(0).at("content").at(0);
    CHECK(first_part.at("type") == "text");
    bool has_image = false;
    for (const auto& msg : body.at("messages"))
      for (const auto& part : msg.at("content"))
        if (part.at("type") == "image_url") {
          has_image = true;
          const std::string url = part.at("image_url").at("url");
          CHECK(url.rfind("data:image/png;base64,", 0) == 0);
        }
    CHECK(has_image);
  }

  SUBCASE("401 raises AuthError without retry") {
    RemoteBackend backend({base + "/auth", "bad", 3, 1, 5});
    try {
      backend.complete(req);
      FAIL("expected AuthError");
    } catch (const Error& e) {
      CHECK(e.code() == Err::AuthError);
    }
  }

  SUBCASE("429 retries with backoff until the server recovers") {
    RemoteBackend backend({base + "/flaky", "k", 3, 1, 5});
    auto resp = backend.complete(req);
    CHECK(resp.texts == std::vector<std::string>{"recovered"});
    CHECK(flaky_hits == 3);
  }

  SUBCASE("persistent 429 raises RateLimited after retries") {
    RemoteBackend backend({base + "/limit", "k", 2, 1, 5});
    try {
      backend.complete(req);
      FAIL("expected RateLimited");
    } catch (const Error& e) {
      CHECK(e.code() == Err::RateLimited);
    }
  }

  SUBCASE("non-JSON body raises MalformedRemoteResponse") {
    RemoteBackend backend({base + "/garbage", "k", 0, 1, 5});
    try {
      backend.complete(req);
      FAIL("expected MalformedRemoteResponse");
    } catch (const Error& e) {
      CHECK(e.code() == Err::MalformedRemoteResponse);
    }
  }

  server.stop();
  runner.join();
}

TEST_CASE("config_from_env reads the credential variable") {
  setenv("OWG_API_KEY", "sk-env-credential", 1);
  auto cfg = RemoteBackend::config_from_env("http://example/v1");
  CHECK(cfg.api_key == "sk-env-credential");
  CHECK(cfg.endpoint == "http://example/v1");
  unsetenv("OWG_API_KEY");
  auto bare = RemoteBackend::config_from_env("http://example/v1");
  CHECK(bare.api_key.empty());
}
