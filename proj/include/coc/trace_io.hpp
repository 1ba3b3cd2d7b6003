#pragma once

#include <string>

#include "json.hpp"

#include "coc/state.hpp"

namespace coc {

// Typed JSON mirror of the value domain, so tooling never has to re-parse
// rendered literals. Ints are decimal strings (arbitrary precision), dicts
// are entry arrays (insertion order), non-finite floats are tagged strings.
nlohmann::json encode_value(const Value& v);
Value decode_value(const nlohmann::json& j);

nlohmann::json encode_delta(const StateDelta& delta);
StateDelta decode_delta(const nlohmann::json& j);

nlohmann::json encode_state(const ProgramState& state);
ProgramState decode_state(const nlohmann::json& j);

nlohmann::json encode_event(const TraceEvent& event);
TraceEvent decode_event(const nlohmann::json& j);

// Newline-delimited JSON: a header record carrying the program text and the
// initial state, then one event per line. The final state is reconstructed
// by replay on read. This is the .coctrace file format.
std::string trace_to_ndjson(const ExecutionTrace& trace);
ExecutionTrace trace_from_ndjson(const std::string& ndjson);

void write_trace_file(const std::string& path, const ExecutionTrace& trace);
ExecutionTrace read_trace_file(const std::string& path);

}  // namespace coc
