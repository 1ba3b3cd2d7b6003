#include "coc/config.hpp"

#include <cstdlib>
#include <fstream>

namespace coc {

namespace {

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + value + "'");
  }
}

}  // namespace

void set_config_value(CliConfig& config, const std::string& dotted_key,
                      const std::string& value) {
  const std::string& k = dotted_key;
  if (k == "backend.kind") {
    if (value != "scripted" && value != "http" && value != "recording")
      throw ConfigError("backend.kind must be scripted, http or recording");
    config.backend.kind = value;
  } else if (k == "backend.endpoint") {
    config.backend.endpoint = value;
  } else if (k == "backend.model_id") {
    config.backend.model_id = value;
  } else if (k == "backend.credential_env") {
    config.backend.credential_env = value;
  } else if (k == "backend.temperature") {
    config.backend.temperature = parse_double(k, value);
    if (config.backend.temperature < 0)
      throw ConfigError("backend.temperature must be >= 0");
  } else if (k == "backend.max_tokens") {
    config.backend.max_tokens = static_cast<int>(parse_long(k, value));
  } else if (k == "backend.timeout_seconds") {
    config.backend.timeout_seconds = static_cast<int>(parse_long(k, value));
  } else if (k == "backend.fixtures") {
    config.backend.fixtures = value;
  } else if (k == "backend.record_sink") {
    config.backend.record_sink = value;
  } else if (k == "limits.step_cap") {
    config.limits.step_cap = static_cast<int>(parse_long(k, value));
    if (config.limits.step_cap <= 0) throw ConfigError("limits.step_cap must be > 0");
  } else if (k == "limits.lm_call_cap") {
    config.limits.lm_call_cap = static_cast<int>(parse_long(k, value));
    if (config.limits.lm_call_cap <= 0)
      throw ConfigError("limits.lm_call_cap must be > 0");
  } else if (k == "limits.task_timeout_seconds") {
    config.limits.task_timeout_seconds = static_cast<int>(parse_long(k, value));
  } else if (k == "paths.tasks") {
    config.paths.tasks = value;
  } else if (k == "paths.prompts") {
    config.paths.prompts = value;
  } else if (k == "paths.output") {
    config.paths.output = value;
  } else if (k == "eval.mode" || k == "eval.strategy") {
    config.eval.mode = value;
  } else if (k == "eval.prompting") {
    if (value != "single_task" && value != "cross_task")
      throw ConfigError("eval.prompting must be single_task or cross_task");
    config.eval.prompting = value;
  } else if (k == "eval.shots") {
    config.eval.shots = static_cast<int>(parse_long(k, value));
    if (config.eval.shots < 0) throw ConfigError("eval.shots must be >= 0");
  } else if (k == "eval.seed") {
    config.eval.seed = static_cast<std::uint64_t>(parse_long(k, value));
  } else if (k == "eval.jobs") {
    config.eval.jobs = static_cast<int>(parse_long(k, value));
    if (config.eval.jobs < 1) throw ConfigError("eval.jobs must be >= 1");
  } else {
    throw ConfigError("unknown configuration key: " + dotted_key);
  }
}

CliConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  CliConfig config;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "backend" && section != "limits" && section != "paths" &&
          section != "eval")
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside a [section]");
    try {
      set_config_value(config, section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

void validate_config(const CliConfig& config) {
  const auto& b = config.backend;
  if (b.kind == "scripted") {
    if (b.fixtures.empty())
      throw ConfigError("scripted backend requires backend.fixtures");
  } else if (b.kind == "http" || b.kind == "recording") {
    if (b.endpoint.empty())
      throw ConfigError(b.kind + " backend requires backend.endpoint");
    if (b.model_id.empty())
      throw ConfigError(b.kind + " backend requires backend.model_id");
    if (b.kind == "recording" && b.record_sink.empty())
      throw ConfigError("recording backend requires backend.record_sink");
  }
}

std::unique_ptr<LMBackend> make_backend(const CliConfig::Backend& config,
                                        std::string* secret_out) {
  if (config.kind == "scripted") {
    if (config.fixtures.empty())
      throw ConfigError("scripted backend requires backend.fixtures");
    return std::make_unique<ScriptedBackend>(config.fixtures);
  }
  if (config.kind == "http" || config.kind == "recording") {
    const char* secret = std::getenv(config.credential_env.c_str());
    if (!secret || !*secret)
      throw ConfigError("credential environment variable " +
                        config.credential_env + " is not set");
    if (secret_out) *secret_out = secret;
    HttpBackend::Options options;
    options.endpoint = config.endpoint;
    options.model_id = config.model_id;
    options.api_key = secret;
    options.timeout_seconds = config.timeout_seconds;
    auto http = std::make_shared<HttpBackend>(options);
    if (config.kind == "http") {
      struct Owner : LMBackend {
        std::shared_ptr<LMBackend> inner;
        explicit Owner(std::shared_ptr<LMBackend> b) : inner(std::move(b)) {}
        LMResponse complete(const LMRequest& request) override {
          return inner->complete(request);
        }
      };
      return std::make_unique<Owner>(http);
    }
    if (config.record_sink.empty())
      throw ConfigError("recording backend requires backend.record_sink");
    return std::make_unique<RecordingBackend>(http, config.record_sink);
  }
  throw ConfigError("unknown backend kind: " + config.kind);
}

}  // namespace coc
