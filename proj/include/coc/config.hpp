#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "coc/backend.hpp"

namespace coc {

// Flat sectioned key-value configuration. Flags override file values; only
// the API credential comes from the environment.
struct CliConfig {
  struct Backend {
    std::string kind = "scripted";  // scripted | http | recording
    std::string endpoint;
    std::string model_id;
    std::string credential_env = "COC_API_KEY";
    double temperature = 0.0;
    int max_tokens = 1024;
    int timeout_seconds = 120;
    std::string fixtures;     // scripted: source file
    std::string record_sink;  // recording: output fixture file
  } backend;

  struct Limits {
    int step_cap = 10000;
    int lm_call_cap = 64;
    int task_timeout_seconds = 300;
  } limits;

  struct Paths {
    std::string tasks;
    std::string prompts;
    std::string output;
  } paths;

  struct Eval {
    std::string mode = "interweave";  // strategy name, or direct / cot
    std::string prompting = "single_task";
    int shots = 3;
    std::uint64_t seed = 0;
    int jobs = 4;
  } eval;
};

// Parse an INI-style file: [section] headers, key = value lines, # and ;
// comments. Unknown sections or keys are errors. Throws ConfigError.
CliConfig load_config_file(const std::string& path);

// Apply one key=value into the config; section.key addressing ("backend.kind").
void set_config_value(CliConfig& config, const std::string& dotted_key,
                      const std::string& value);

// Kind-specific completeness checks (scripted needs fixtures; http needs
// endpoint and model_id). Throws ConfigError.
void validate_config(const CliConfig& config);

// Build the configured backend. For http/recording the credential is read
// from the configured environment variable; if `secret_out` is non-null the
// resolved secret is copied there so callers can scrub it from any output.
std::unique_ptr<LMBackend> make_backend(const CliConfig::Backend& config,
                                        std::string* secret_out = nullptr);

}  // namespace coc
