#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coc/ast.hpp"
#include "coc/backend.hpp"
#include "coc/state.hpp"

namespace coc {

// Everything the simulator sees about a failing statement: the question, the
// prior lines, the rendered state history, and the statement itself.
struct SimulationContext {
  std::string question;
  std::string program_text;
  std::string history;
  std::string failing_stmt;
  // Reserved-key protocol for simulated loop headers / branch conditions.
  enum class Protocol { None, LoopHeader, Condition };
  Protocol protocol = Protocol::None;
  // Bound variables the failing statement references, rendered "name = value";
  // becomes part of the fixture alias so per-iteration fixtures stay distinct.
  std::string state_slice;
};

struct SimulationSettings {
  std::string model_id = "offline";
  Sampling sampling;          // temperature 0 by default
  std::size_t history_limit = 50;
};

struct SimulationStats {
  int lm_calls = 0;
  int retries = 0;
};

// Deterministic prompt assembly; identical contexts produce identical
// requests.
LMRequest build_simulation_request(const SimulationContext& ctx,
                                   const SimulationSettings& settings);

// One statement: prompt, parse the tagged delta, retry once with a
// corrective instruction, then give up with SimulationFailed.
StateDelta simulate_stmt(const SimulationContext& ctx, LMBackend& backend,
                         const SimulationSettings& settings = {},
                         SimulationStats* stats = nullptr);

enum class SimulationMode { StateTrace, AnswerOnly };

struct ProgramSimulation {
  ExecutionTrace trace;                   // empty in AnswerOnly mode
  std::optional<std::string> answer_line; // text after the final "A:"
};

// Whole-program simulation. StateTrace parses every tagged delta line into
// LMulator-tagged events; AnswerOnly extracts the final "A:" line.
ProgramSimulation simulate_program(const SimulationContext& ctx,
                                   SimulationMode mode, LMBackend& backend,
                                   const SimulationSettings& settings = {},
                                   SimulationStats* stats = nullptr);

struct WorkedExample {
  std::string question;
  std::string program;
};

LMRequest build_generation_request(const std::string& question,
                                   const std::vector<WorkedExample>& exemplars,
                                   const SimulationSettings& settings);

// Few-shot code generation: prompt with worked examples, strip an optional
// code fence, parse with opaque recovery.
SourceProgram generate_code(const std::string& question,
                            const std::vector<WorkedExample>& exemplars,
                            LMBackend& backend,
                            const SimulationSettings& settings = {},
                            SimulationStats* stats = nullptr);

// Final-answer extraction helper: text after the last "A:" marker.
std::optional<std::string> extract_answer_line(const std::string& text);

}  // namespace coc
