#include <gtest/gtest.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "coc/backend.hpp"

using namespace coc;
using nlohmann::json;

namespace {

LMRequest sample_request() {
  LMRequest r;
  r.model_id = "test-model";
  r.sampling.temperature = 0.0;
  r.sampling.max_tokens = 256;
  r.messages.push_back({"user", "What is 2 + 2?"});
  r.alias_hint = "sample";
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(RequestRendering, DeterministicAndKeyed) {
  LMRequest a = sample_request();
  LMRequest b = sample_request();
  EXPECT_EQ(render_request_text(a), render_request_text(b));
  EXPECT_EQ(request_fixture_key(a), request_fixture_key(b));
  EXPECT_EQ(request_fixture_key(a).size(), 64u);

  b.messages[0].text += "!";
  EXPECT_NE(request_fixture_key(a), request_fixture_key(b));
}

TEST(RequestRendering, KnownSha256) {
  EXPECT_EQ(sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ScriptedBackend, KeyAndAliasLookup) {
  LMRequest request = sample_request();
  std::vector<FixtureRecord> records = {
      {request_fixture_key(request), "", "four"},
      {"", "other-alias", "by alias"},
  };
  ScriptedBackend backend(records);
  EXPECT_EQ(backend.complete(request).text, "four");

  LMRequest aliased = sample_request();
  aliased.messages[0].text = "different text so the key misses";
  aliased.alias_hint = "other-alias";
  EXPECT_EQ(backend.complete(aliased).text, "by alias");

  LMRequest missing = sample_request();
  missing.messages[0].text = "nothing matches this";
  missing.alias_hint = "nope";
  EXPECT_THROW(backend.complete(missing), FixtureError);
}

TEST(ScriptedBackend, DeterministicReplay) {
  LMRequest request = sample_request();
  ScriptedBackend backend({{request_fixture_key(request), "", "four"}});
  EXPECT_EQ(backend.complete(request).text, backend.complete(request).text);
}

TEST(FixtureFile, RoundTrip) {
  std::string path = temp_path("coc_fixture_roundtrip.jsonl");
  std::remove(path.c_str());
  append_fixture_record(path, {"k1", "alias one", "resp\none"});
  append_fixture_record(path, {"k2", "", "resp two"});
  auto records = read_fixture_file(path);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].key, "k1");
  EXPECT_EQ(records[0].alias, "alias one");
  EXPECT_EQ(records[0].response, "resp\none");
  EXPECT_EQ(records[1].alias, "");
  std::remove(path.c_str());
}

TEST(RecordingBackend, RecordsForReplay) {
  struct StubBackend : LMBackend {
    LMResponse complete(const LMRequest& request) override {
      return {"echo: " + request.messages.back().text, {}};
    }
  };
  std::string path = temp_path("coc_fixture_record.jsonl");
  std::remove(path.c_str());
  {
    RecordingBackend recorder(std::make_shared<StubBackend>(), path);
    LMRequest request = sample_request();
    EXPECT_EQ(recorder.complete(request).text, "echo: What is 2 + 2?");
  }
  ScriptedBackend replay(path);
  EXPECT_EQ(replay.complete(sample_request()).text, "echo: What is 2 + 2?");
  std::remove(path.c_str());
}

namespace {

// Minimal OpenAI-style completions stub.
class StubServer {
public:
  explicit StubServer(std::function<json(const json&, int)> responder)
      : responder_(std::move(responder)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   int n = ++calls_;
                   last_auth_ = req.get_header_value("Authorization");
                   json body = json::parse(req.body);
                   json out = responder_(body, n);
                   if (out.contains("__status")) {
                     res.status = out["__status"].get<int>();
                     res.set_content("error", "text/plain");
                     return;
                   }
                   res.set_content(out.dump(), "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  int calls() const { return calls_; }
  std::string last_auth() const { return last_auth_; }

private:
  httplib::Server server_;
  std::thread thread_;
  std::function<json(const json&, int)> responder_;
  std::atomic<int> calls_{0};
  int port_ = 0;
  std::string last_auth_;
};

json ok_completion(const std::string& content) {
  return json{{"choices", json::array({json{{"message", json{{"role", "assistant"},
                                                             {"content", content}}}}})},
              {"usage", json{{"prompt_tokens", 10}, {"completion_tokens", 3}}}};
}

}  // namespace

TEST(HttpBackend, CompletesAgainstStub) {
  StubServer server([](const json& body, int) {
    EXPECT_EQ(body.at("model"), "test-model");
    EXPECT_EQ(body.at("messages").at(0).at("content"), "What is 2 + 2?");
    return ok_completion("A: 4");
  });
  HttpBackend::Options options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(server.port()) +
                     "/v1/chat/completions";
  options.model_id = "test-model";
  options.api_key = "sk-test-secret";
  HttpBackend backend(options);
  LMResponse response = backend.complete(sample_request());
  EXPECT_EQ(response.text, "A: 4");
  EXPECT_EQ(response.usage.prompt_tokens, 10);
  EXPECT_EQ(server.last_auth(), "Bearer sk-test-secret");
}

TEST(HttpBackend, RetriesOn5xxThenSucceeds) {
  StubServer server([](const json&, int n) {
    if (n < 3) return json{{"__status", 503}};
    return ok_completion("recovered");
  });
  HttpBackend::Options options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(server.port());
  options.model_id = "test-model";
  options.backoff_initial_ms = 1;
  HttpBackend backend(options);
  EXPECT_EQ(backend.complete(sample_request()).text, "recovered");
  EXPECT_EQ(server.calls(), 3);
}

TEST(HttpBackend, GivesUpAfterMaxAttempts) {
  StubServer server([](const json&, int) { return json{{"__status", 429}}; });
  HttpBackend::Options options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(server.port());
  options.model_id = "test-model";
  options.max_attempts = 3;
  options.backoff_initial_ms = 1;
  HttpBackend backend(options);
  EXPECT_THROW(backend.complete(sample_request()), BackendError);
  EXPECT_EQ(server.calls(), 3);
}

TEST(HttpBackend, NonRetryableClientError) {
  StubServer server([](const json&, int) { return json{{"__status", 404}}; });
  HttpBackend::Options options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(server.port());
  options.model_id = "test-model";
  HttpBackend backend(options);
  EXPECT_THROW(backend.complete(sample_request()), BackendError);
  EXPECT_EQ(server.calls(), 1);
}
