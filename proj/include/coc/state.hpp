#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coc/ast.hpp"
#include "coc/value.hpp"

namespace coc {

// Flat, insertion-ordered variable namespace. Loop variables live here too;
// there are no nested scopes.
class ProgramState {
public:
  using Binding = std::pair<std::string, Value>;

  const Value* find(const std::string& name) const;
  // Insert-or-update; new names append, existing names keep their slot.
  void set(const std::string& name, Value value);

  bool empty() const { return bindings_.empty(); }
  std::size_t size() const { return bindings_.size(); }
  const std::vector<Binding>& bindings() const { return bindings_; }

  bool operator==(const ProgramState& other) const;

private:
  std::vector<Binding> bindings_;
};

// The set of bindings changed by one statement. Empty means "executed,
// nothing changed". Deletions are not representable.
class StateDelta {
public:
  using Update = std::pair<std::string, Value>;

  StateDelta() = default;
  StateDelta(std::initializer_list<Update> updates);

  // Insert-or-replace; replacing keeps the original position.
  void set(const std::string& name, Value value);
  const Value* find(const std::string& name) const;

  bool empty() const { return updates_.empty(); }
  std::size_t size() const { return updates_.size(); }
  const std::vector<Update>& updates() const { return updates_; }

  bool operator==(const StateDelta& other) const;

private:
  std::vector<Update> updates_;
};

// Rebinds every key in the delta; all other bindings are untouched.
ProgramState apply_delta(const ProgramState& state, const StateDelta& delta);

// Canonical single-line form: delta state: {k1 = v1, k2 = v2}
std::string render_delta_text(const StateDelta& delta);

// Inverse of render_delta_text on its image. Accepts chain-of-thought prose
// before the tagged line (only the last tagged line is parsed), trailing
// prose after the closing brace, and a bare {...} with no tag. Throws
// DeltaParseError when no delta is found or a literal is malformed.
StateDelta parse_delta_text(const std::string& text);

enum class ExecutorKind { Interpreter, LMulator };

struct TraceEvent {
  Span stmt_span;
  ExecutorKind executor = ExecutorKind::Interpreter;
  StateDelta delta;
  // 1-based innermost loop counter; present iff the statement is lexically
  // inside a loop.
  std::optional<int> iteration;
};

struct ExecutionTrace {
  std::string program_text;
  ProgramState initial_state;
  std::vector<TraceEvent> events;
  ProgramState final_state;
};

// Fold the event deltas over the initial state. The replay invariant says
// this equals trace.final_state for every trace the system produces.
ProgramState replay_trace(const ExecutionTrace& trace);

// One line per event: the first physical line of the statement followed by
// its rendered delta, most recent `max_events` only.
std::string render_state_history(const ExecutionTrace& trace,
                                 std::size_t max_events = 50);

}  // namespace coc
