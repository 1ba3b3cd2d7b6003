#include "coc/lmulator.hpp"

#include "coc/parser.hpp"
#include "coc/prompt_data.hpp"

namespace coc {

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

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string first_line(const std::string& s) {
  auto nl = s.find('\n');
  return nl == std::string::npos ? s : s.substr(0, nl);
}

std::string make_alias(const SimulationContext& ctx) {
  std::string alias = trim(first_line(ctx.failing_stmt));
  if (!ctx.state_slice.empty()) alias += " | " + ctx.state_slice;
  return alias;
}

LMRequest retry_request(const LMRequest& original, const std::string& reply,
                        const char* corrective) {
  LMRequest retry = original;
  retry.messages.push_back({"assistant", reply});
  retry.messages.push_back({"user", corrective});
  retry.alias_hint = original.alias_hint.empty() ? "retry" : "retry | " + original.alias_hint;
  return retry;
}

}  // namespace

std::optional<std::string> extract_answer_line(const std::string& text) {
  // Last "A:" at the start of a line (or of the whole reply).
  std::size_t best = std::string::npos;
  for (std::size_t pos = 0; (pos = text.find("A:", pos)) != std::string::npos;
       pos += 2) {
    if (pos == 0 || text[pos - 1] == '\n') best = pos;
  }
  if (best == std::string::npos) return std::nullopt;
  std::size_t end = text.find('\n', best);
  std::string line = text.substr(best + 2, end == std::string::npos
                                               ? std::string::npos
                                               : end - best - 2);
  return trim(line);
}

LMRequest build_simulation_request(const SimulationContext& ctx,
                                   const SimulationSettings& settings) {
  std::string prompt = prompts::kSimulateStmt;
  prompt = replace_all(prompt, "{{question}}", ctx.question);
  prompt = replace_all(prompt, "{{program}}", ctx.program_text);
  prompt = replace_all(prompt, "{{history}}",
                       ctx.history.empty() ? "(none yet)" : ctx.history);
  prompt = replace_all(prompt, "{{statement}}", ctx.failing_stmt);
  std::string protocol;
  if (ctx.protocol == SimulationContext::Protocol::LoopHeader)
    protocol = prompts::kLoopProtocol;
  else if (ctx.protocol == SimulationContext::Protocol::Condition)
    protocol = prompts::kCondProtocol;
  prompt = replace_all(prompt, "{{protocol}}", protocol);

  LMRequest request;
  request.model_id = settings.model_id;
  request.sampling = settings.sampling;
  request.messages.push_back({"user", std::move(prompt)});
  request.alias_hint = make_alias(ctx);
  return request;
}

StateDelta simulate_stmt(const SimulationContext& ctx, LMBackend& backend,
                         const SimulationSettings& settings,
                         SimulationStats* stats) {
  LMRequest request = build_simulation_request(ctx, settings);
  LMResponse response = backend.complete(request);
  if (stats) ++stats->lm_calls;
  try {
    return parse_delta_text(response.text);
  } catch (const DeltaParseError&) {
  }
  if (stats) ++stats->retries;
  LMRequest second = retry_request(request, response.text, prompts::kCorrectiveDelta);
  LMResponse retry = backend.complete(second);
  if (stats) ++stats->lm_calls;
  try {
    return parse_delta_text(retry.text);
  } catch (const DeltaParseError& e) {
    throw SimulationFailed(std::string("no parseable delta after retry: ") +
                               e.what(),
                           response.text, retry.text);
  }
}

ProgramSimulation simulate_program(const SimulationContext& ctx,
                                   SimulationMode mode, LMBackend& backend,
                                   const SimulationSettings& settings,
                                   SimulationStats* stats) {
  std::string prompt = mode == SimulationMode::StateTrace
                           ? prompts::kSimulateTrace
                           : prompts::kSimulateAnswer;
  prompt = replace_all(prompt, "{{question}}", ctx.question);
  prompt = replace_all(prompt, "{{program}}", ctx.program_text);

  LMRequest request;
  request.model_id = settings.model_id;
  request.sampling = settings.sampling;
  request.messages.push_back({"user", std::move(prompt)});
  request.alias_hint =
      (mode == SimulationMode::StateTrace ? "simulate trace | " : "simulate answer | ") +
      first_line(ctx.question);

  auto attempt = [&](const std::string& reply) -> std::optional<ProgramSimulation> {
    ProgramSimulation sim;
    sim.answer_line = extract_answer_line(reply);
    if (mode == SimulationMode::AnswerOnly) {
      if (!sim.answer_line) return std::nullopt;
      return sim;
    }
    // StateTrace: every tagged line becomes an LMulator event.
    sim.trace.program_text = ctx.program_text;
    std::size_t start = 0;
    while (start <= reply.size()) {
      std::size_t nl = reply.find('\n', start);
      std::string line = reply.substr(
          start, nl == std::string::npos ? std::string::npos : nl - start);
      if (line.find("delta state:") != std::string::npos) {
        try {
          TraceEvent event;
          event.stmt_span = Span{0, 0};
          event.executor = ExecutorKind::LMulator;
          event.delta = parse_delta_text(line);
          sim.trace.events.push_back(std::move(event));
        } catch (const DeltaParseError&) {
          // skip unparseable lines; the trace needs at least one good one
        }
      }
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    if (sim.trace.events.empty()) return std::nullopt;
    sim.trace.final_state = replay_trace(sim.trace);
    return sim;
  };

  LMResponse response = backend.complete(request);
  if (stats) ++stats->lm_calls;
  if (auto sim = attempt(response.text)) return *sim;

  if (stats) ++stats->retries;
  const char* corrective = mode == SimulationMode::StateTrace
                               ? prompts::kCorrectiveDelta
                               : prompts::kCorrectiveAnswer;
  LMRequest second = retry_request(request, response.text, corrective);
  LMResponse retry = backend.complete(second);
  if (stats) ++stats->lm_calls;
  if (auto sim = attempt(retry.text)) return *sim;
  throw SimulationFailed(mode == SimulationMode::StateTrace
                             ? "no parseable state trace after retry"
                             : "no answer line after retry",
                         response.text, retry.text);
}

LMRequest build_generation_request(const std::string& question,
                                   const std::vector<WorkedExample>& exemplars,
                                   const SimulationSettings& settings) {
  std::string prompt = prompts::kGeneratePreamble;
  prompt += "\n";
  for (const WorkedExample& ex : exemplars) {
    prompt += "\nQ: " + ex.question + "\n\n";
    prompt += trim(ex.program);
    prompt += "\n";
  }
  prompt += "\nQ: " + question + "\n";

  LMRequest request;
  request.model_id = settings.model_id;
  request.sampling = settings.sampling;
  request.sampling.stop.push_back("\nQ:");
  request.messages.push_back({"user", std::move(prompt)});
  request.alias_hint = "generate | " + first_line(question);
  return request;
}

SourceProgram generate_code(const std::string& question,
                            const std::vector<WorkedExample>& exemplars,
                            LMBackend& backend, const SimulationSettings& settings,
                            SimulationStats* stats) {
  LMRequest request = build_generation_request(question, exemplars, settings);
  LMResponse response = backend.complete(request);
  if (stats) ++stats->lm_calls;
  std::string text = strip_code_fence(response.text);
  // Drop a trailing answer line if the model ran ahead of execution.
  if (auto pos = text.rfind("\nA:"); pos != std::string::npos)
    text = text.substr(0, pos + 1);
  if (text.rfind("A:", 0) == 0) text.clear();
  if (trim(text).empty())
    throw GenerationFailed("model returned no code for: " + first_line(question));
  try {
    return parse_program(text);
  } catch (const ParseError& e) {
    throw GenerationFailed(std::string("generated code has unbracketable "
                                       "indentation: ") +
                           e.what());
  }
}

}  // namespace coc
