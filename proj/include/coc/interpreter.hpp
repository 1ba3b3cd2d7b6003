#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "coc/ast.hpp"
#include "coc/state.hpp"

namespace coc {

// Why a statement could not be executed deterministically. Never thrown;
// every interpreter failure flows through this as a value.
struct HandoffReason {
  enum class Kind { UndefinedCall, OpaqueModuleUse, RuntimeError, OpaqueStatement };

  Kind kind = Kind::RuntimeError;
  std::string error_kind;  // RuntimeError subtype ("NameError", "TypeError", ...)
  std::string message;

  static HandoffReason undefined_call(const std::string& name) {
    return {Kind::UndefinedCall, "", "undefined function '" + name + "'"};
  }
  static HandoffReason opaque_module(const std::string& detail) {
    return {Kind::OpaqueModuleUse, "", detail};
  }
  static HandoffReason runtime_error(const std::string& kind,
                                     const std::string& message) {
    return {Kind::RuntimeError, kind, message};
  }
  static HandoffReason opaque_statement() {
    return {Kind::OpaqueStatement, "", "statement is not in the grammar"};
  }

  std::string describe() const;
  const char* kind_name() const;
};

// Host functions and modules the embedder exposes to evaluated code.
// Functions must be pure or confine effects to injected handles; they are
// invoked with evaluated argument values.
class NativeRegistry {
public:
  using HostFunction = std::function<Value(const std::vector<Value>&)>;

  struct Module {
    bool opaque = true;
    std::map<std::string, HostFunction> functions;
  };

  // Throws std::invalid_argument if the name collides with a builtin.
  void register_function(const std::string& name, HostFunction fn);
  void register_module(const std::string& name,
                       std::map<std::string, HostFunction> functions);

  const HostFunction* find_function(const std::string& name) const;
  const Module* find_module(const std::string& name) const;

private:
  std::map<std::string, HostFunction> functions_;
  std::map<std::string, Module> modules_;
};

// Builtin surface, exposed so tests can assert the sandbox holds (no I/O,
// no filesystem, no clock, no interpreter escape).
const std::vector<std::string>& builtin_function_names();
const std::vector<std::string>& builtin_method_names();

using EvalResult = std::variant<Value, HandoffReason>;

EvalResult eval_expr(const Expr& expr, const ProgramState& state,
                     const NativeRegistry& registry);

// exec_stmt outcomes. Compound statements only evaluate their header here;
// the stepper drives bodies.
struct Done {
  StateDelta delta;
};
struct NeedsLM {
  const Stmt* stmt = nullptr;
  HandoffReason reason;
};
struct Control {
  enum class Signal { Break, Continue };
  Signal signal;
};
using ExecOutcome = std::variant<Done, NeedsLM, Control>;

ExecOutcome exec_stmt(const Stmt& stmt, const ProgramState& state,
                      const NativeRegistry& registry);

// ---------------------------------------------------------------------------
// Statement stepper
// ---------------------------------------------------------------------------

// Where a handoff arose. Loop headers and branch conditions follow the
// reserved-key simulation protocol (__loop_continue__ / __cond__).
enum class HandoffSite { Statement, ForHeader, Condition };

// Decides what happens when a statement cannot be executed: return a delta
// to apply (recorded as an LMulator event) or nullopt to abort the run.
using HandoffHandler = std::function<std::optional<StateDelta>(
    const Stmt& stmt, HandoffSite site, const HandoffReason& reason,
    const ProgramState& state, const ExecutionTrace& trace_so_far)>;

struct StepLimits {
  int step_cap = 10000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct StepAbort {
  enum class Kind {
    Handoff,    // handler declined; reason + stmt identify the first failure
    StepLimit,
    Deadline,
    Protocol,   // handler delta broke the reserved-key protocol
  };
  Kind kind = Kind::Handoff;
  HandoffReason reason;
  Span stmt_span;
  std::string stmt_text;
};

struct StepperResult {
  ProgramState final_state;  // state reached so far, even on abort
  ExecutionTrace trace;
  std::optional<StepAbort> abort;

  bool ok() const { return !abort.has_value(); }
};

// Walks the program at statement granularity: simple statements execute and
// apply their delta; loop headers re-evaluate against the current state each
// iteration; handoffs route through the handler so interpreter and simulator
// share one program state.
StepperResult run_stepper(const SourceProgram& program,
                          const ProgramState& initial,
                          const NativeRegistry& registry,
                          const StepLimits& limits,
                          const HandoffHandler& handler);

// Reserved names for simulated loop headers and branch conditions.
inline constexpr const char* kLoopContinueVar = "__loop_continue__";
inline constexpr const char* kCondVar = "__cond__";

// Whole-program deterministic execution: no LM involvement, stops at the
// first handoff anywhere.
StepperResult run_deterministic(const SourceProgram& program,
                                const ProgramState& initial,
                                const NativeRegistry& registry,
                                int step_cap = 10000);

}  // namespace coc
