#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "json.hpp"

#include "coc/backend.hpp"
#include "coc/interpreter.hpp"
#include "coc/lmulator.hpp"
#include "coc/state.hpp"

namespace coc {

enum class Strategy {
  Interweave,
  TryPythonExceptLMState,
  TryPythonExceptLM,
  PythonOnly,
  LMState,
  LMOnly,
  ToolUseLoop,
};

const char* strategy_name(Strategy strategy);
std::optional<Strategy> strategy_from_name(const std::string& name);

struct RunLimits {
  int step_cap = 10000;
  int lm_call_cap = 64;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct RunStats {
  int stmts_interpreted = 0;
  int stmts_simulated = 0;
  int lm_calls = 0;
  int retries = 0;
};

struct RunFailure {
  std::string category;
  std::string detail;
};

struct RunResult {
  std::optional<std::string> answer;  // present XOR failure present
  ExecutionTrace trace;
  RunStats stats;
  std::optional<RunFailure> failure;

  bool ok() const { return answer.has_value(); }
};

nlohmann::json run_result_to_json(const RunResult& result);

// Execute a parsed program under one strategy. The backend is only touched
// where the strategy calls for it; lm_call_cap and the deadline apply to
// every backend call made on behalf of this run.
RunResult run(Strategy strategy, const std::string& question,
              const SourceProgram& program, LMBackend& backend,
              const NativeRegistry& registry, const RunLimits& limits,
              const SimulationSettings& settings = {});

// Answer of a finished execution: the value of `answer` if bound, otherwise
// one answer-only simulation. Throws SimulationFailed if that also fails.
std::string extract_answer(const ProgramState& state, const SimulationContext& ctx,
                           LMBackend& backend,
                           const SimulationSettings& settings = {},
                           SimulationStats* stats = nullptr);

}  // namespace coc
