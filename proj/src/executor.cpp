#include "coc/executor.hpp"

#include <functional>

#include "coc/parser.hpp"
#include "coc/prompt_data.hpp"
#include "coc/trace_io.hpp"

namespace coc {

using nlohmann::json;

const char* strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Interweave:
      return "interweave";
    case Strategy::TryPythonExceptLMState:
      return "try-python-except-lm-state";
    case Strategy::TryPythonExceptLM:
      return "try-python-except-lm";
    case Strategy::PythonOnly:
      return "python";
    case Strategy::LMState:
      return "lm-state";
    case Strategy::LMOnly:
      return "lm";
    case Strategy::ToolUseLoop:
      return "tool-use";
  }
  return "?";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
  static const std::pair<const char*, Strategy> table[] = {
      {"interweave", Strategy::Interweave},
      {"try-python-except-lm-state", Strategy::TryPythonExceptLMState},
      {"try-python-except-lm", Strategy::TryPythonExceptLM},
      {"python", Strategy::PythonOnly},
      {"lm-state", Strategy::LMState},
      {"lm", Strategy::LMOnly},
      {"tool-use", Strategy::ToolUseLoop},
  };
  for (const auto& [n, s] : table)
    if (name == n) return s;
  return std::nullopt;
}

namespace {

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& replacement) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
  return text;
}

struct LmCallCapExceeded : std::runtime_error {
  LmCallCapExceeded() : std::runtime_error("LM call cap exceeded") {}
};
struct DeadlineExceeded : std::runtime_error {
  DeadlineExceeded() : std::runtime_error("deadline exceeded") {}
};

// Enforces the run's lm_call_cap and deadline around every backend call.
class GuardedBackend : public LMBackend {
public:
  GuardedBackend(LMBackend& inner, const RunLimits& limits, RunStats& stats)
      : inner_(inner), limits_(limits), stats_(stats) {}

  LMResponse complete(const LMRequest& request) override {
    if (stats_.lm_calls >= limits_.lm_call_cap) throw LmCallCapExceeded{};
    if (limits_.deadline && std::chrono::steady_clock::now() > *limits_.deadline)
      throw DeadlineExceeded{};
    LMResponse response = inner_.complete(request);
    ++stats_.lm_calls;
    return response;
  }

private:
  LMBackend& inner_;
  const RunLimits& limits_;
  RunStats& stats_;
};

void collect_names(const Expr& expr, std::vector<std::string>& out);

void collect_from_list(const std::vector<ExprPtr>& items,
                       std::vector<std::string>& out) {
  for (const auto& item : items)
    if (item) collect_names(*item, out);
}

void collect_names(const Expr& expr, std::vector<std::string>& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, NameExpr>) {
          if (std::find(out.begin(), out.end(), node.id) == out.end())
            out.push_back(node.id);
        } else if constexpr (std::is_same_v<T, UnaryExpr>) {
          collect_names(*node.operand, out);
        } else if constexpr (std::is_same_v<T, BinaryExpr>) {
          collect_names(*node.lhs, out);
          collect_names(*node.rhs, out);
        } else if constexpr (std::is_same_v<T, BoolOpExpr>) {
          collect_from_list(node.values, out);
        } else if constexpr (std::is_same_v<T, CompareExpr>) {
          collect_names(*node.first, out);
          collect_from_list(node.rest, out);
        } else if constexpr (std::is_same_v<T, CallExpr>) {
          collect_from_list(node.args, out);
          for (const auto& [_, v] : node.kwargs) collect_names(*v, out);
        } else if constexpr (std::is_same_v<T, MethodCallExpr>) {
          collect_names(*node.receiver, out);
          collect_from_list(node.args, out);
          for (const auto& [_, v] : node.kwargs) collect_names(*v, out);
        } else if constexpr (std::is_same_v<T, IndexExpr>) {
          collect_names(*node.object, out);
          collect_names(*node.index, out);
        } else if constexpr (std::is_same_v<T, SliceExpr>) {
          collect_names(*node.object, out);
          if (node.lower) collect_names(*node.lower, out);
          if (node.upper) collect_names(*node.upper, out);
          if (node.step) collect_names(*node.step, out);
        } else if constexpr (std::is_same_v<T, AttributeExpr>) {
          collect_names(*node.object, out);
        } else if constexpr (std::is_same_v<T, ListExpr> ||
                             std::is_same_v<T, TupleExpr>) {
          collect_from_list(node.items, out);
        } else if constexpr (std::is_same_v<T, DictExpr>) {
          for (const auto& [k, v] : node.items) {
            collect_names(*k, out);
            collect_names(*v, out);
          }
        } else if constexpr (std::is_same_v<T, ListCompExpr>) {
          collect_names(*node.iterable, out);
          collect_names(*node.element, out);
          if (node.condition) collect_names(*node.condition, out);
        } else if constexpr (std::is_same_v<T, IfExpExpr>) {
          collect_names(*node.body, out);
          collect_names(*node.condition, out);
          collect_names(*node.orelse, out);
        }
      },
      expr.node);
}

// Names a statement reads, in first-appearance order.
std::vector<std::string> stmt_referenced_names(const Stmt& stmt) {
  std::vector<std::string> names;
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, AssignStmt> ||
                      std::is_same_v<T, AugAssignStmt>) {
          if constexpr (std::is_same_v<T, AugAssignStmt>) {
            if (const auto* n = std::get_if<NameTarget>(&node.target))
              names.push_back(n->name);
          }
          if (const auto* ix = std::get_if<IndexTarget>(&node.target)) {
            collect_names(*ix->object, names);
            collect_names(*ix->index, names);
          }
          collect_names(*node.value, names);
        } else if constexpr (std::is_same_v<T, ExprStmt>) {
          collect_names(*node.expr, names);
        } else if constexpr (std::is_same_v<T, ForStmt>) {
          collect_names(*node.iterable, names);
          // Loop targets too: their current value distinguishes one
          // iteration's fixture alias from the next.
          if (const auto* n = std::get_if<NameTarget>(&node.target))
            names.push_back(n->name);
          if (const auto* t = std::get_if<TupleTarget>(&node.target))
            for (const std::string& name : t->names) names.push_back(name);
        } else if constexpr (std::is_same_v<T, WhileStmt> ||
                             std::is_same_v<T, IfStmt>) {
          collect_names(*node.condition, names);
        } else if constexpr (std::is_same_v<T, OpaqueStmt>) {
          // No AST to walk; identifier-looking tokens in the raw text keep
          // per-iteration fixture aliases distinct.
          const std::string& text = node.text;
          std::size_t i = 0;
          while (i < text.size()) {
            unsigned char c = text[i];
            if (std::isalpha(c) || c == '_') {
              std::size_t j = i;
              while (j < text.size() &&
                     (std::isalnum(static_cast<unsigned char>(text[j])) ||
                      text[j] == '_'))
                ++j;
              std::string word = text.substr(i, j - i);
              if (std::find(names.begin(), names.end(), word) == names.end())
                names.push_back(word);
              i = j;
            } else {
              ++i;
            }
          }
        }
      },
      stmt.node);
  return names;
}

std::string state_slice_for(const Stmt& stmt, const ProgramState& state) {
  std::string out;
  for (const std::string& name : stmt_referenced_names(stmt)) {
    const Value* v = state.find(name);
    if (!v) continue;
    if (!out.empty()) out += ", ";
    out += name + " = " + render_value(*v);
  }
  return out;
}

std::string render_state_literal(const ProgramState& state) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, value] : state.bindings()) {
    if (!first) out += ", ";
    first = false;
    out += name + " = " + render_value(value);
  }
  out += '}';
  return out;
}

std::string failure_category_for(const StepAbort& abort) {
  switch (abort.kind) {
    case StepAbort::Kind::StepLimit:
      return "step_limit";
    case StepAbort::Kind::Deadline:
      return "timeout";
    case StepAbort::Kind::Protocol:
      return "simulation_protocol";
    case StepAbort::Kind::Handoff:
      switch (abort.reason.kind) {
        case HandoffReason::Kind::UndefinedCall:
          return "undefined_call";
        case HandoffReason::Kind::OpaqueModuleUse:
          return "opaque_module";
        case HandoffReason::Kind::OpaqueStatement:
          return "opaque_statement";
        case HandoffReason::Kind::RuntimeError:
          return "runtime_error";
      }
  }
  return "failure";
}

void fill_stats_from_trace(RunResult& result) {
  result.stats.stmts_interpreted = 0;
  result.stats.stmts_simulated = 0;
  for (const TraceEvent& event : result.trace.events) {
    if (event.executor == ExecutorKind::Interpreter)
      ++result.stats.stmts_interpreted;
    else
      ++result.stats.stmts_simulated;
  }
}

SimulationContext whole_program_context(const std::string& question,
                                        const SourceProgram& program) {
  SimulationContext ctx;
  ctx.question = question;
  ctx.program_text = program.source_text;
  return ctx;
}

// Shared tail for strategies that end with a deterministic state.
void finish_with_state(RunResult& result, const ProgramState& state,
                       const std::string& question, const SourceProgram& program,
                       LMBackend& backend, const SimulationSettings& settings,
                       SimulationStats* sim_stats, bool allow_lm_fallback) {
  if (const Value* v = state.find("answer")) {
    result.answer = display_value(*v);
    return;
  }
  if (!allow_lm_fallback) {
    result.failure = RunFailure{"no_answer", "no variable named 'answer' was bound"};
    return;
  }
  SimulationContext ctx = whole_program_context(question, program);
  ctx.history = render_state_history(result.trace, settings.history_limit);
  result.answer = extract_answer(state, ctx, backend, settings, sim_stats);
}

RunResult run_interweave(const std::string& question, const SourceProgram& program,
                         LMBackend& raw_backend, const NativeRegistry& registry,
                         const RunLimits& limits, const SimulationSettings& settings) {
  RunResult result;
  GuardedBackend backend(raw_backend, limits, result.stats);
  std::optional<RunFailure> pending_failure;
  SimulationStats sim_stats;

  HandoffHandler handler =
      [&](const Stmt& stmt, HandoffSite site, const HandoffReason& reason,
          const ProgramState& state,
          const ExecutionTrace& trace_so_far) -> std::optional<StateDelta> {
    SimulationContext ctx;
    ctx.question = question;
    ctx.program_text = program.source_text;
    ctx.history = render_state_history(trace_so_far, settings.history_limit);
    ctx.failing_stmt = render_stmt(stmt, program);
    ctx.state_slice = state_slice_for(stmt, state);
    if (site == HandoffSite::ForHeader)
      ctx.protocol = SimulationContext::Protocol::LoopHeader;
    else if (site == HandoffSite::Condition)
      ctx.protocol = SimulationContext::Protocol::Condition;
    try {
      return simulate_stmt(ctx, backend, settings, &sim_stats);
    } catch (const SimulationFailed& e) {
      pending_failure = RunFailure{"simulation_failed", e.what()};
    } catch (const LmCallCapExceeded& e) {
      pending_failure = RunFailure{"lm_call_cap", e.what()};
    } catch (const DeadlineExceeded& e) {
      pending_failure = RunFailure{"timeout", e.what()};
    } catch (const FixtureError& e) {
      pending_failure = RunFailure{"backend_error", e.what()};
    } catch (const BackendError& e) {
      pending_failure = RunFailure{"backend_error", e.what()};
    }
    return std::nullopt;
  };

  StepLimits step_limits;
  step_limits.step_cap = limits.step_cap;
  step_limits.deadline = limits.deadline;
  StepperResult sr = run_stepper(program, ProgramState{}, registry, step_limits, handler);
  result.trace = std::move(sr.trace);
  fill_stats_from_trace(result);
  result.stats.retries = sim_stats.retries;

  if (sr.abort) {
    result.failure = pending_failure
                         ? *pending_failure
                         : RunFailure{failure_category_for(*sr.abort),
                                      sr.abort->reason.describe() + " at: " +
                                          sr.abort->stmt_text};
    return result;
  }
  try {
    finish_with_state(result, sr.final_state, question, program, backend,
                      settings, &sim_stats, /*allow_lm_fallback=*/true);
  } catch (const SimulationFailed& e) {
    result.failure = RunFailure{"simulation_failed", e.what()};
  } catch (const LmCallCapExceeded& e) {
    result.failure = RunFailure{"lm_call_cap", e.what()};
  } catch (const DeadlineExceeded& e) {
    result.failure = RunFailure{"timeout", e.what()};
  } catch (const FixtureError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  } catch (const BackendError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  }
  result.stats.retries = sim_stats.retries;
  return result;
}

RunResult run_python_only(const std::string& question, const SourceProgram& program,
                          const NativeRegistry& registry, const RunLimits& limits) {
  (void)question;
  RunResult result;
  StepperResult sr = run_deterministic(program, ProgramState{}, registry, limits.step_cap);
  result.trace = std::move(sr.trace);
  fill_stats_from_trace(result);
  if (sr.abort) {
    result.failure = RunFailure{failure_category_for(*sr.abort),
                                sr.abort->reason.describe() + " at: " +
                                    sr.abort->stmt_text};
    return result;
  }
  if (const Value* v = sr.final_state.find("answer")) {
    result.answer = display_value(*v);
  } else {
    result.failure = RunFailure{"no_answer", "no variable named 'answer' was bound"};
  }
  return result;
}

RunResult run_try_python(const std::string& question, const SourceProgram& program,
                         LMBackend& raw_backend, const NativeRegistry& registry,
                         const RunLimits& limits, const SimulationSettings& settings,
                         SimulationMode fallback_mode) {
  RunResult result;
  GuardedBackend backend(raw_backend, limits, result.stats);
  SimulationStats sim_stats;
  StepperResult sr = run_deterministic(program, ProgramState{}, registry, limits.step_cap);
  try {
    if (!sr.abort) {
      result.trace = std::move(sr.trace);
      fill_stats_from_trace(result);
      finish_with_state(result, sr.final_state, question, program, backend,
                        settings, &sim_stats, /*allow_lm_fallback=*/true);
      result.stats.retries = sim_stats.retries;
      return result;
    }
    // Deterministic execution failed: discard the partial state and simulate
    // the entire program instead.
    SimulationContext ctx = whole_program_context(question, program);
    ProgramSimulation sim = simulate_program(ctx, fallback_mode, backend,
                                             settings, &sim_stats);
    if (fallback_mode == SimulationMode::StateTrace) {
      result.trace = std::move(sim.trace);
      fill_stats_from_trace(result);
      if (const Value* v = result.trace.final_state.find("answer"))
        result.answer = display_value(*v);
      else if (sim.answer_line)
        result.answer = *sim.answer_line;
      else
        result.answer = extract_answer(result.trace.final_state, ctx, backend,
                                       settings, &sim_stats);
    } else {
      result.trace.program_text = program.source_text;
      result.answer = *sim.answer_line;
    }
  } catch (const SimulationFailed& e) {
    result.failure = RunFailure{"simulation_failed", e.what()};
  } catch (const LmCallCapExceeded& e) {
    result.failure = RunFailure{"lm_call_cap", e.what()};
  } catch (const DeadlineExceeded& e) {
    result.failure = RunFailure{"timeout", e.what()};
  } catch (const FixtureError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  } catch (const BackendError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  }
  result.stats.retries = sim_stats.retries;
  return result;
}

RunResult run_lm_simulation(const std::string& question, const SourceProgram& program,
                            LMBackend& raw_backend, const RunLimits& limits,
                            const SimulationSettings& settings, SimulationMode mode) {
  RunResult result;
  GuardedBackend backend(raw_backend, limits, result.stats);
  SimulationStats sim_stats;
  try {
    SimulationContext ctx = whole_program_context(question, program);
    ProgramSimulation sim = simulate_program(ctx, mode, backend, settings, &sim_stats);
    if (mode == SimulationMode::StateTrace) {
      result.trace = std::move(sim.trace);
      fill_stats_from_trace(result);
      if (const Value* v = result.trace.final_state.find("answer"))
        result.answer = display_value(*v);
      else if (sim.answer_line)
        result.answer = *sim.answer_line;
      else
        result.answer = extract_answer(result.trace.final_state, ctx, backend,
                                       settings, &sim_stats);
    } else {
      result.trace.program_text = program.source_text;
      result.answer = *sim.answer_line;
    }
  } catch (const SimulationFailed& e) {
    result.failure = RunFailure{"simulation_failed", e.what()};
  } catch (const LmCallCapExceeded& e) {
    result.failure = RunFailure{"lm_call_cap", e.what()};
  } catch (const DeadlineExceeded& e) {
    result.failure = RunFailure{"timeout", e.what()};
  } catch (const FixtureError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  } catch (const BackendError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  }
  result.stats.retries = sim_stats.retries;
  return result;
}

RunResult run_tool_use(const std::string& question, const SourceProgram& program,
                       LMBackend& raw_backend, const NativeRegistry& registry,
                       const RunLimits& limits, const SimulationSettings& settings) {
  RunResult result;
  GuardedBackend backend(raw_backend, limits, result.stats);
  StepperResult sr = run_deterministic(program, ProgramState{}, registry, limits.step_cap);
  result.trace = std::move(sr.trace);
  fill_stats_from_trace(result);

  std::string outcome_text;
  if (sr.abort) {
    outcome_text = "The execution failed with error:\n" + sr.abort->reason.describe() +
                   "\nat statement:\n" + sr.abort->stmt_text;
  } else {
    outcome_text =
        "The execution finished with program state:\n" + render_state_literal(sr.final_state);
  }

  std::string prompt = prompts::kToolUse;
  prompt = replace_all(prompt, "{{question}}", question);
  prompt = replace_all(prompt, "{{program}}", program.source_text);
  prompt = replace_all(prompt, "{{result}}", outcome_text);
  LMRequest request;
  request.model_id = settings.model_id;
  request.sampling = settings.sampling;
  request.messages.push_back({"user", std::move(prompt)});
  request.alias_hint = "final answer | " + question.substr(0, question.find('\n'));

  try {
    LMResponse response = backend.complete(request);
    auto answer = extract_answer_line(response.text);
    if (!answer) {
      ++result.stats.retries;
      LMRequest second = request;
      second.messages.push_back({"assistant", response.text});
      second.messages.push_back({"user", prompts::kCorrectiveAnswer});
      second.alias_hint = "retry | " + request.alias_hint;
      LMResponse retry = backend.complete(second);
      answer = extract_answer_line(retry.text);
      if (!answer)
        throw SimulationFailed("no answer line after retry", response.text, retry.text);
    }
    result.answer = *answer;
  } catch (const SimulationFailed& e) {
    result.failure = RunFailure{"simulation_failed", e.what()};
  } catch (const LmCallCapExceeded& e) {
    result.failure = RunFailure{"lm_call_cap", e.what()};
  } catch (const DeadlineExceeded& e) {
    result.failure = RunFailure{"timeout", e.what()};
  } catch (const FixtureError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  } catch (const BackendError& e) {
    result.failure = RunFailure{"backend_error", e.what()};
  }
  return result;
}

}  // namespace

std::string extract_answer(const ProgramState& state, const SimulationContext& ctx,
                           LMBackend& backend, const SimulationSettings& settings,
                           SimulationStats* stats) {
  if (const Value* v = state.find("answer")) return display_value(*v);
  ProgramSimulation sim =
      simulate_program(ctx, SimulationMode::AnswerOnly, backend, settings, stats);
  return *sim.answer_line;
}

RunResult run(Strategy strategy, const std::string& question,
              const SourceProgram& program, LMBackend& backend,
              const NativeRegistry& registry, const RunLimits& limits,
              const SimulationSettings& settings) {
  RunResult result;
  switch (strategy) {
    case Strategy::Interweave:
      result = run_interweave(question, program, backend, registry, limits, settings);
      break;
    case Strategy::TryPythonExceptLMState:
      result = run_try_python(question, program, backend, registry, limits, settings,
                              SimulationMode::StateTrace);
      break;
    case Strategy::TryPythonExceptLM:
      result = run_try_python(question, program, backend, registry, limits, settings,
                              SimulationMode::AnswerOnly);
      break;
    case Strategy::PythonOnly:
      result = run_python_only(question, program, registry, limits);
      break;
    case Strategy::LMState:
      result = run_lm_simulation(question, program, backend, limits, settings,
                                 SimulationMode::StateTrace);
      break;
    case Strategy::LMOnly:
      result = run_lm_simulation(question, program, backend, limits, settings,
                                 SimulationMode::AnswerOnly);
      break;
    case Strategy::ToolUseLoop:
      result = run_tool_use(question, program, backend, registry, limits, settings);
      break;
  }
  return result;
}

nlohmann::json run_result_to_json(const RunResult& result) {
  json j;
  j["answer"] = result.answer ? json(*result.answer) : json(nullptr);
  j["stats"] = json{{"stmts_interpreted", result.stats.stmts_interpreted},
                    {"stmts_simulated", result.stats.stmts_simulated},
                    {"lm_calls", result.stats.lm_calls},
                    {"retries", result.stats.retries}};
  if (result.failure) {
    j["failure"] = json{{"category", result.failure->category},
                        {"detail", result.failure->detail}};
  } else {
    j["failure"] = nullptr;
  }
  return j;
}

}  // namespace coc
