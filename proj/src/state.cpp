#include "coc/state.hpp"

#include <algorithm>

#include "coc/errors.hpp"
#include "coc/parser.hpp"

namespace coc {

const Value* ProgramState::find(const std::string& name) const {
  for (const auto& [key, value] : bindings_)
    if (key == name) return &value;
  return nullptr;
}

void ProgramState::set(const std::string& name, Value value) {
  for (auto& [key, existing] : bindings_) {
    if (key == name) {
      existing = std::move(value);
      return;
    }
  }
  bindings_.emplace_back(name, std::move(value));
}

bool ProgramState::operator==(const ProgramState& other) const {
  if (bindings_.size() != other.bindings_.size()) return false;
  for (std::size_t i = 0; i < bindings_.size(); ++i) {
    if (bindings_[i].first != other.bindings_[i].first) return false;
    if (!bindings_[i].second.structural_eq(other.bindings_[i].second)) return false;
  }
  return true;
}

StateDelta::StateDelta(std::initializer_list<Update> updates) {
  for (const auto& [name, value] : updates) set(name, value);
}

void StateDelta::set(const std::string& name, Value value) {
  for (auto& [key, existing] : updates_) {
    if (key == name) {
      existing = std::move(value);
      return;
    }
  }
  updates_.emplace_back(name, std::move(value));
}

const Value* StateDelta::find(const std::string& name) const {
  for (const auto& [key, value] : updates_)
    if (key == name) return &value;
  return nullptr;
}

bool StateDelta::operator==(const StateDelta& other) const {
  if (updates_.size() != other.updates_.size()) return false;
  for (std::size_t i = 0; i < updates_.size(); ++i) {
    if (updates_[i].first != other.updates_[i].first) return false;
    if (!updates_[i].second.structural_eq(other.updates_[i].second)) return false;
  }
  return true;
}

ProgramState apply_delta(const ProgramState& state, const StateDelta& delta) {
  ProgramState out = state;
  for (const auto& [name, value] : delta.updates()) out.set(name, value);
  return out;
}

std::string render_delta_text(const StateDelta& delta) {
  std::string out = "delta state: {";
  bool first = true;
  for (const auto& [name, value] : delta.updates()) {
    if (!first) out += ", ";
    first = false;
    out += name;
    out += " = ";
    out += render_value(value);
  }
  out += '}';
  return out;
}

namespace {

constexpr const char* kDeltaTag = "delta state:";

// Span of the balanced {...} starting at `open`, skipping string contents.
std::optional<std::size_t> find_matching_brace(const std::string& text,
                                               std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      if (c == '\\')
        ++i;
      else if (c == quote)
        quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

}  // namespace

StateDelta parse_delta_text(const std::string& text) {
  // Last tagged occurrence wins; reasoning prose before it is permitted.
  std::size_t tag = std::string::npos;
  for (std::size_t from = 0;;) {
    std::size_t hit = text.find(kDeltaTag, from);
    if (hit == std::string::npos) break;
    tag = hit;
    from = hit + 1;
  }

  std::size_t open;
  if (tag != std::string::npos) {
    open = text.find('{', tag);
    if (open == std::string::npos)
      throw DeltaParseError("no '{' after delta tag", text.substr(tag));
  } else {
    // Tag is optional when the reply is just the braced delta.
    open = text.find('{');
    if (open == std::string::npos ||
        text.find_first_not_of(" \t\r\n") != open)
      throw DeltaParseError("no tagged delta line found");
  }

  auto close = find_matching_brace(text, open);
  if (!close) throw DeltaParseError("unbalanced braces", text.substr(open));

  std::string braced = text.substr(open, *close - open + 1);
  StateDelta delta;
  for (auto& [name, value] : parse_delta_entries(braced))
    delta.set(name, std::move(value));
  return delta;
}

ProgramState replay_trace(const ExecutionTrace& trace) {
  ProgramState state = trace.initial_state;
  for (const TraceEvent& event : trace.events)
    state = apply_delta(state, event.delta);
  return state;
}

std::string render_state_history(const ExecutionTrace& trace,
                                 std::size_t max_events) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < trace.program_text.size();) {
    std::size_t nl = trace.program_text.find('\n', i);
    if (nl == std::string::npos) {
      lines.push_back(trace.program_text.substr(i));
      break;
    }
    lines.push_back(trace.program_text.substr(i, nl - i));
    i = nl + 1;
  }

  std::size_t start =
      trace.events.size() > max_events ? trace.events.size() - max_events : 0;
  std::string out;
  for (std::size_t i = start; i < trace.events.size(); ++i) {
    const TraceEvent& event = trace.events[i];
    std::string stmt_text;
    int line = event.stmt_span.line_start;
    if (line >= 1 && line <= static_cast<int>(lines.size()))
      stmt_text = lines[line - 1];
    if (!out.empty()) out += '\n';
    out += stmt_text;
    if (!stmt_text.empty()) out += "  ";
    out += render_delta_text(event.delta);
  }
  return out;
}

}  // namespace coc
