#include "coc/trace_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace coc {

using nlohmann::json;

json encode_value(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::None:
      return json{{"t", "none"}};
    case Value::Kind::Bool:
      return json{{"t", "bool"}, {"v", v.as_bool()}};
    case Value::Kind::Int:
      return json{{"t", "int"}, {"v", v.as_int().get_str()}};
    case Value::Kind::Float: {
      double f = v.as_float();
      if (std::isnan(f)) return json{{"t", "float"}, {"v", "nan"}};
      if (std::isinf(f))
        return json{{"t", "float"}, {"v", f > 0 ? "inf" : "-inf"}};
      return json{{"t", "float"}, {"v", f}};
    }
    case Value::Kind::Str:
      return json{{"t", "str"}, {"v", v.as_str()}};
    case Value::Kind::List:
    case Value::Kind::Tuple: {
      json items = json::array();
      for (const Value& item : v.as_list()) items.push_back(encode_value(item));
      return json{{"t", v.is(Value::Kind::List) ? "list" : "tuple"},
                  {"v", std::move(items)}};
    }
    case Value::Kind::Dict: {
      json entries = json::array();
      for (const auto& [key, value] : v.as_dict())
        entries.push_back(json::array({encode_value(key), encode_value(value)}));
      return json{{"t", "dict"}, {"v", std::move(entries)}};
    }
    case Value::Kind::Module:
      return json{{"t", "module"}, {"v", v.module_name()}};
  }
  return json{{"t", "none"}};
}

Value decode_value(const json& j) {
  const std::string t = j.at("t").get<std::string>();
  if (t == "none") return Value::none();
  if (t == "bool") return Value::boolean(j.at("v").get<bool>());
  if (t == "int") return Value::integer(mpz_class(j.at("v").get<std::string>(), 10));
  if (t == "float") {
    const json& v = j.at("v");
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "nan") return Value::floating(std::numeric_limits<double>::quiet_NaN());
      if (s == "inf") return Value::floating(std::numeric_limits<double>::infinity());
      if (s == "-inf") return Value::floating(-std::numeric_limits<double>::infinity());
      throw std::runtime_error("bad float encoding: " + s);
    }
    return Value::floating(v.get<double>());
  }
  if (t == "str") return Value::str(j.at("v").get<std::string>());
  if (t == "list" || t == "tuple") {
    Value::List items;
    for (const json& item : j.at("v")) items.push_back(decode_value(item));
    return t == "list" ? Value::list(std::move(items))
                       : Value::tuple(std::move(items));
  }
  if (t == "dict") {
    Value::Dict entries;
    for (const json& entry : j.at("v"))
      entries.emplace_back(decode_value(entry.at(0)), decode_value(entry.at(1)));
    return Value::dict(std::move(entries));
  }
  if (t == "module") return Value::module(j.at("v").get<std::string>());
  throw std::runtime_error("unknown value tag: " + t);
}

json encode_delta(const StateDelta& delta) {
  json updates = json::array();
  for (const auto& [name, value] : delta.updates())
    updates.push_back(json::array({name, encode_value(value)}));
  return json{{"updates", std::move(updates)}};
}

StateDelta decode_delta(const json& j) {
  StateDelta delta;
  for (const json& entry : j.at("updates"))
    delta.set(entry.at(0).get<std::string>(), decode_value(entry.at(1)));
  return delta;
}

json encode_state(const ProgramState& state) {
  json bindings = json::array();
  for (const auto& [name, value] : state.bindings())
    bindings.push_back(json::array({name, encode_value(value)}));
  return json{{"bindings", std::move(bindings)}};
}

ProgramState decode_state(const json& j) {
  ProgramState state;
  for (const json& entry : j.at("bindings"))
    state.set(entry.at(0).get<std::string>(), decode_value(entry.at(1)));
  return state;
}

json encode_event(const TraceEvent& event) {
  json j{{"span", json::array({event.stmt_span.line_start, event.stmt_span.line_end})},
         {"executor",
          event.executor == ExecutorKind::Interpreter ? "interpreter" : "lmulator"},
         {"delta", encode_delta(event.delta)}};
  if (event.iteration) j["iteration"] = *event.iteration;
  return j;
}

TraceEvent decode_event(const json& j) {
  TraceEvent event;
  event.stmt_span = Span{j.at("span").at(0).get<int>(), j.at("span").at(1).get<int>()};
  event.executor = j.at("executor").get<std::string>() == "interpreter"
                       ? ExecutorKind::Interpreter
                       : ExecutorKind::LMulator;
  event.delta = decode_delta(j.at("delta"));
  if (j.contains("iteration")) event.iteration = j.at("iteration").get<int>();
  return event;
}

std::string trace_to_ndjson(const ExecutionTrace& trace) {
  std::string out;
  json header{{"coctrace", 1},
              {"program", trace.program_text},
              {"initial_state", encode_state(trace.initial_state)}};
  out += header.dump();
  out += '\n';
  for (const TraceEvent& event : trace.events) {
    out += encode_event(event).dump();
    out += '\n';
  }
  return out;
}

ExecutionTrace trace_from_ndjson(const std::string& ndjson) {
  ExecutionTrace trace;
  std::istringstream in(ndjson);
  std::string line;
  bool has_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!has_header) {
      if (!j.contains("coctrace"))
        throw std::runtime_error("missing coctrace header record");
      trace.program_text = j.at("program").get<std::string>();
      trace.initial_state = decode_state(j.at("initial_state"));
      has_header = true;
      continue;
    }
    trace.events.push_back(decode_event(j));
  }
  if (!has_header) throw std::runtime_error("empty trace file");
  trace.final_state = replay_trace(trace);
  return trace;
}

void write_trace_file(const std::string& path, const ExecutionTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace file for write: " + path);
  out << trace_to_ndjson(trace);
}

ExecutionTrace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return trace_from_ndjson(buf.str());
}

}  // namespace coc
