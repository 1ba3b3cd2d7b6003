#include "coc/backend.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "coc/value.hpp"

namespace coc {

using nlohmann::json;

std::string render_request_text(const LMRequest& request) {
  std::string out;
  out += "model: " + request.model_id + "\n";
  out += "temperature: " + render_float(request.sampling.temperature) + "\n";
  out += "max_tokens: " + std::to_string(request.sampling.max_tokens) + "\n";
  out += "stop: " + json(request.sampling.stop).dump() + "\n";
  for (const LMMessage& m : request.messages) {
    out += "--- " + m.role + " ---\n";
    out += m.text;
    out += '\n';
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string request_fixture_key(const LMRequest& request) {
  return sha256_hex(render_request_text(request));
}

std::vector<FixtureRecord> read_fixture_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FixtureError("cannot open fixture file: " + path);
  std::vector<FixtureRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FixtureError("fixture file " + path + " line " +
                         std::to_string(line_no) + ": " + e.what());
    }
    FixtureRecord r;
    r.key = j.value("key", "");
    r.alias = j.value("alias", "");
    if (!j.contains("response"))
      throw FixtureError("fixture file " + path + " line " +
                         std::to_string(line_no) + ": missing 'response'");
    r.response = j.at("response").get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

void append_fixture_record(const std::string& path, const FixtureRecord& record) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw FixtureError("cannot open fixture sink: " + path);
  json j{{"key", record.key}, {"response", record.response}};
  if (!record.alias.empty()) j["alias"] = record.alias;
  out << j.dump() << '\n';
}

ScriptedBackend::ScriptedBackend(const std::string& fixtures_path) {
  index(read_fixture_file(fixtures_path));
}

ScriptedBackend::ScriptedBackend(const std::vector<FixtureRecord>& records) {
  index(records);
}

void ScriptedBackend::index(const std::vector<FixtureRecord>& records) {
  for (const FixtureRecord& r : records) {
    if (!r.key.empty()) by_key_[r.key] = r.response;
    if (!r.alias.empty()) by_alias_[r.alias] = r.response;
  }
}

LMResponse ScriptedBackend::complete(const LMRequest& request) {
  auto key_hit = by_key_.find(request_fixture_key(request));
  if (key_hit != by_key_.end()) return LMResponse{key_hit->second, {}};
  if (!request.alias_hint.empty()) {
    auto alias_hit = by_alias_.find(request.alias_hint);
    if (alias_hit != by_alias_.end()) return LMResponse{alias_hit->second, {}};
  }
  throw FixtureError("no fixture for request (alias hint: '" +
                     request.alias_hint + "')");
}

HttpBackend::HttpBackend(Options options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("endpoint must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base_url_ = url;
    path_ = "/v1/chat/completions";
  } else {
    base_url_ = url.substr(0, path_start);
    path_ = url.substr(path_start);
    if (path_ == "/") path_ = "/v1/chat/completions";
  }
}

LMResponse HttpBackend::complete(const LMRequest& request) {
  json body{{"model", request.model_id.empty() ? options_.model_id : request.model_id},
            {"temperature", request.sampling.temperature},
            {"max_tokens", request.sampling.max_tokens}};
  json messages = json::array();
  for (const LMMessage& m : request.messages)
    messages.push_back(json{{"role", m.role}, {"content", m.text}});
  body["messages"] = std::move(messages);
  if (!request.sampling.stop.empty()) body["stop"] = request.sampling.stop;

  httplib::Headers headers;
  if (!options_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + options_.api_key);

  int backoff_ms = options_.backoff_initial_ms;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_write_timeout(options_.timeout_seconds, 0);
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body);
    } else {
      json j;
      try {
        j = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw BackendError(std::string("bad completion JSON: ") + e.what());
      }
      try {
        LMResponse out;
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
          out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
          out.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
        }
        return out;
      } catch (const json::exception& e) {
        throw BackendError(std::string("unexpected completion shape: ") + e.what());
      }
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  throw BackendError("request failed after " +
                     std::to_string(options_.max_attempts) +
                     " attempts: " + last_error);
}

RecordingBackend::RecordingBackend(std::shared_ptr<LMBackend> inner,
                                   std::string sink_path)
    : inner_(std::move(inner)), sink_path_(std::move(sink_path)) {}

LMResponse RecordingBackend::complete(const LMRequest& request) {
  LMResponse response = inner_->complete(request);
  FixtureRecord record{request_fixture_key(request), request.alias_hint,
                       response.text};
  std::lock_guard<std::mutex> lock(write_mutex_);
  append_fixture_record(sink_path_, record);
  return response;
}

}  // namespace coc
