#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "coc/errors.hpp"

namespace coc {

struct LMMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
};

struct Sampling {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::vector<std::string> stop;
};

struct LMRequest {
  std::vector<LMMessage> messages;
  Sampling sampling;
  std::string model_id;
  // Human-readable fixture lookup hint (statement text plus the relevant
  // state slice); not sent over the wire.
  std::string alias_hint;
};

struct LMUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct LMResponse {
  std::string text;
  LMUsage usage;
};

class LMBackend {
public:
  virtual ~LMBackend() = default;
  virtual LMResponse complete(const LMRequest& request) = 0;
};

// Canonical rendering of a request; its SHA-256 is the exact fixture key.
std::string render_request_text(const LMRequest& request);
std::string request_fixture_key(const LMRequest& request);
std::string sha256_hex(const std::string& data);

struct FixtureRecord {
  std::string key;    // sha256 of the rendered request (may be empty for
                      // hand-written fixtures that rely on the alias)
  std::string alias;  // optional human-readable key
  std::string response;
};

std::vector<FixtureRecord> read_fixture_file(const std::string& path);
void append_fixture_record(const std::string& path, const FixtureRecord& record);

// Deterministic stand-in answering from fixtures: exact key first, then
// alias. Read-only after construction; safe to share across threads.
class ScriptedBackend : public LMBackend {
public:
  explicit ScriptedBackend(const std::string& fixtures_path);
  explicit ScriptedBackend(const std::vector<FixtureRecord>& records);

  LMResponse complete(const LMRequest& request) override;

private:
  void index(const std::vector<FixtureRecord>& records);

  std::map<std::string, std::string> by_key_;
  std::map<std::string, std::string> by_alias_;
};

// OpenAI-style chat-completions client. A fresh connection per call keeps
// concurrent complete() invocations independent.
class HttpBackend : public LMBackend {
public:
  struct Options {
    std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
    std::string model_id;
    std::string api_key;
    int timeout_seconds = 120;
    int max_attempts = 3;          // on 429/5xx
    int backoff_initial_ms = 500;  // doubled per retry
  };

  explicit HttpBackend(Options options);

  LMResponse complete(const LMRequest& request) override;

private:
  Options options_;
  std::string base_url_;
  std::string path_;
};

// Wraps another backend and appends a {key, alias, response} record to a
// fixture file per call, so a live run can be replayed through
// ScriptedBackend.
class RecordingBackend : public LMBackend {
public:
  RecordingBackend(std::shared_ptr<LMBackend> inner, std::string sink_path);

  LMResponse complete(const LMRequest& request) override;

private:
  std::shared_ptr<LMBackend> inner_;
  std::string sink_path_;
  std::mutex write_mutex_;
};

}  // namespace coc
