#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "coc/config.hpp"
#include "coc/executor.hpp"
#include "coc/harness.hpp"
#include "coc/parser.hpp"
#include "coc/trace_io.hpp"

namespace {

using namespace coc;

constexpr int kExitOk = 0;
constexpr int kExitTaskFailure = 1;
constexpr int kExitConfigError = 2;

// The resolved API credential, if any; every byte written out is scrubbed
// so the secret cannot leak into logs, traces, or reports.
std::string g_secret;

std::string scrub(std::string text) {
  if (g_secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(g_secret, pos)) != std::string::npos) {
    text.replace(pos, g_secret.size(), "***");
    pos += 3;
  }
  return text;
}

void print_out(const std::string& text) { std::cout << scrub(text); }
void print_err(const std::string& text) { std::cerr << scrub(text); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << scrub(content);
}

std::string render_state_line(const ProgramState& state) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, value] : state.bindings()) {
    if (!first) out += ", ";
    first = false;
    out += name + " = " + render_value(value);
  }
  out += "}";
  return out;
}

// Pretty-printed trace with interpreter/LMulator markers.
std::string format_trace(const ExecutionTrace& trace) {
  std::string out;
  out += "program:\n";
  std::size_t start = 0;
  const std::string& text = trace.program_text;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string line =
        text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    out += "  " + line + "\n";
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  out += "initial state: " + render_state_line(trace.initial_state) + "\n";
  out += "events:\n";

  std::vector<std::string> lines;
  start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    lines.push_back(text.substr(start, nl == std::string::npos ? std::string::npos
                                                               : nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  for (const TraceEvent& event : trace.events) {
    const char* marker = event.executor == ExecutorKind::Interpreter ? "[py]" : "[lm]";
    std::string stmt_text;
    int line_no = event.stmt_span.line_start;
    if (line_no >= 1 && line_no <= static_cast<int>(lines.size())) {
      stmt_text = lines[line_no - 1];
      auto indent = stmt_text.find_first_not_of(' ');
      if (indent != std::string::npos && indent > 0) stmt_text = stmt_text.substr(indent);
    }
    char head[32];
    std::snprintf(head, sizeof(head), "%4d %s ", line_no, marker);
    out += head;
    out += stmt_text;
    if (event.iteration) out += "  (iteration " + std::to_string(*event.iteration) + ")";
    out += "\n          ";
    out += render_delta_text(event.delta);
    out += "\n";
  }
  out += "final state: " + render_state_line(replay_trace(trace)) + "\n";
  return out;
}

struct CommonFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

CliConfig resolve_config(const CommonFlags& flags) {
  CliConfig config;
  if (!flags.config_path.empty()) config = load_config_file(flags.config_path);
  for (const auto& [key, value] : flags.overrides)
    if (!value.empty()) set_config_value(config, key, value);
  return config;
}

// Backend for commands where the model is optional (exec of deterministic
// programs): an empty scripted backend fails cleanly only when called.
std::unique_ptr<LMBackend> make_optional_backend(const CliConfig& config) {
  if (config.backend.kind == "scripted" && config.backend.fixtures.empty())
    return std::make_unique<ScriptedBackend>(std::vector<FixtureRecord>{});
  return make_backend(config.backend, &g_secret);
}

SimulationSettings settings_from(const CliConfig& config) {
  SimulationSettings settings;
  settings.model_id =
      config.backend.model_id.empty() ? "offline" : config.backend.model_id;
  settings.sampling.temperature = config.backend.temperature;
  settings.sampling.max_tokens = config.backend.max_tokens;
  return settings;
}

RunLimits limits_from(const CliConfig& config) {
  RunLimits limits;
  limits.step_cap = config.limits.step_cap;
  limits.lm_call_cap = config.limits.lm_call_cap;
  return limits;
}

int finish_run(const RunResult& result, const std::string& trace_out, bool as_json) {
  if (!trace_out.empty()) write_file(trace_out, trace_to_ndjson(result.trace));
  if (as_json) {
    print_out(run_result_to_json(result).dump(2) + "\n");
    return result.ok() ? kExitOk : kExitTaskFailure;
  }
  print_out(format_trace(result.trace));
  if (result.ok()) {
    print_out("A: " + *result.answer + "\n");
    return kExitOk;
  }
  print_err("failure (" + result.failure->category + "): " +
            result.failure->detail + "\n");
  return kExitTaskFailure;
}

int cmd_exec(const CliConfig& config, const std::string& program_path,
             const std::string& question, const std::string& strategy_name_arg,
             const std::string& trace_out, bool as_json) {
  auto strategy = strategy_from_name(strategy_name_arg);
  if (!strategy) throw ConfigError("unknown strategy: " + strategy_name_arg);
  SourceProgram program = parse_program(read_file(program_path));
  auto backend = make_optional_backend(config);
  NativeRegistry registry;
  RunResult result = run(*strategy, question, program, *backend, registry,
                         limits_from(config), settings_from(config));
  return finish_run(result, trace_out, as_json);
}

int cmd_run(const CliConfig& config, const std::string& question,
            const std::string& strategy_name_arg, const std::string& prompts_dir,
            const std::string& family, int shots, const std::string& trace_out,
            bool as_json) {
  auto strategy = strategy_from_name(strategy_name_arg);
  if (!strategy) throw ConfigError("unknown strategy: " + strategy_name_arg);
  validate_config(config);
  auto backend = make_backend(config.backend, &g_secret);

  std::vector<WorkedExample> exemplars;
  if (!prompts_dir.empty()) {
    if (family.empty())
      throw ConfigError("--family is required when --prompts is given");
    PromptSet prompts = PromptSet::load_directory(prompts_dir);
    const auto* own = prompts.family(family);
    if (!own || static_cast<int>(own->size()) < shots)
      throw ConfigError("family '" + family + "' does not have " +
                        std::to_string(shots) + " exemplars");
    for (int i = 0; i < shots; ++i)
      exemplars.push_back(WorkedExample{(*own)[i].question, (*own)[i].body});
  }

  SimulationSettings settings = settings_from(config);
  SourceProgram program = generate_code(question, exemplars, *backend, settings);
  print_out("generated program:\n" + program.source_text + "\n");
  NativeRegistry registry;
  RunResult result = run(*strategy, question, program, *backend, registry,
                         limits_from(config), settings);
  return finish_run(result, trace_out, as_json);
}

int cmd_eval(const CliConfig& config, const std::string& format_name) {
  validate_config(config);
  if (config.paths.tasks.empty()) throw ConfigError("eval requires --tasks");
  if (config.paths.prompts.empty()) throw ConfigError("eval requires --prompts");
  auto mode = eval_mode_from_name(config.eval.mode);
  if (!mode) throw ConfigError("unknown mode: " + config.eval.mode);

  EvalConfig eval_config;
  eval_config.mode = *mode;
  eval_config.prompting = config.eval.prompting == "cross_task"
                              ? PromptingMode::CrossTask
                              : PromptingMode::SingleTask;
  eval_config.shots = config.eval.shots;
  eval_config.seed = config.eval.seed;
  eval_config.jobs = config.eval.jobs;
  eval_config.limits = limits_from(config);
  eval_config.settings = settings_from(config);
  eval_config.task_timeout_seconds = config.limits.task_timeout_seconds;

  std::vector<TaskRecord> tasks = load_tasks(config.paths.tasks);
  PromptSet prompts = PromptSet::load_directory(config.paths.prompts);
  auto backend = make_backend(config.backend, &g_secret);
  NativeRegistry registry;
  EvalReport report = evaluate(eval_config, tasks, prompts, *backend, registry);

  ReportFormat format = ReportFormat::TextTable;
  if (format_name == "csv")
    format = ReportFormat::Csv;
  else if (format_name == "json")
    format = ReportFormat::Json;
  else if (!format_name.empty() && format_name != "text")
    throw ConfigError("unknown report format: " + format_name);

  std::string rendered = render_report(report, format);
  if (!config.paths.output.empty()) {
    write_file(config.paths.output, rendered);
    print_out(render_report(report, ReportFormat::TextTable));
  } else {
    print_out(rendered);
  }
  return kExitOk;
}

int cmd_trace_show(const std::string& path) {
  ExecutionTrace trace = read_trace_file(path);
  print_out(format_trace(trace));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain-of-code execution engine: run reasoning programs with an "
               "interpreter that hands non-executable statements to a language "
               "model"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string backend_kind, fixtures, endpoint, model, credential_env, record_sink;
  std::string step_cap, lm_cap, timeout, shots, seed, jobs, prompting, mode;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "configuration file");
    cmd->add_option("--backend", backend_kind, "backend kind: scripted|http|recording");
    cmd->add_option("--fixtures", fixtures, "fixture file for the scripted backend");
    cmd->add_option("--endpoint", endpoint, "chat-completions endpoint URL");
    cmd->add_option("--model", model, "model id");
    cmd->add_option("--credential-env", credential_env,
                    "environment variable holding the API key");
    cmd->add_option("--record-out", record_sink, "fixture sink for recording");
    cmd->add_option("--step-cap", step_cap, "statement execution budget");
    cmd->add_option("--lm-cap", lm_cap, "LM call budget per run");
    cmd->add_option("--timeout", timeout, "per-task timeout seconds");
  };

  auto overrides = [&]() {
    common.overrides = {
        {"backend.kind", backend_kind},
        {"backend.fixtures", fixtures},
        {"backend.endpoint", endpoint},
        {"backend.model_id", model},
        {"backend.credential_env", credential_env},
        {"backend.record_sink", record_sink},
        {"limits.step_cap", step_cap},
        {"limits.lm_call_cap", lm_cap},
        {"limits.task_timeout_seconds", timeout},
        {"eval.shots", shots},
        {"eval.seed", seed},
        {"eval.jobs", jobs},
        {"eval.prompting", prompting},
        {"eval.mode", mode},
    };
  };

  // run: generate a program for one question, execute it, print the trace.
  auto* run_cmd = app.add_subcommand("run", "generate and execute one question");
  std::string question, strategy = "interweave", prompts_dir, family, trace_out;
  bool as_json = false;
  add_common(run_cmd);
  run_cmd->add_option("--question", question, "the question to solve")->required();
  run_cmd->add_option("--strategy", strategy, "execution strategy");
  run_cmd->add_option("--prompts", prompts_dir, "prompt set directory");
  run_cmd->add_option("--family", family, "exemplar family for few-shot prompting");
  run_cmd->add_option("--shots", shots, "number of exemplars");
  run_cmd->add_option("--trace-out", trace_out, "write the .coctrace file here");
  run_cmd->add_flag("--json", as_json, "print the run result as JSON");

  // exec: execute an existing program file.
  auto* exec_cmd = app.add_subcommand("exec", "execute a program file");
  std::string program_path;
  add_common(exec_cmd);
  exec_cmd->add_option("program", program_path, "program file to execute")->required();
  exec_cmd->add_option("--question", question, "question context for the LMulator");
  exec_cmd->add_option("--strategy", strategy, "execution strategy");
  exec_cmd->add_option("--trace-out", trace_out, "write the .coctrace file here");
  exec_cmd->add_flag("--json", as_json, "print the run result as JSON");

  // eval: dataset evaluation.
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a task file");
  std::string tasks_path, out_path, format_name = "text";
  add_common(eval_cmd);
  eval_cmd->add_option("--tasks", tasks_path, "newline-delimited JSON task file");
  eval_cmd->add_option("--prompts", prompts_dir, "prompt set directory");
  eval_cmd->add_option("--mode", mode, "strategy, or direct / cot");
  eval_cmd->add_option("--strategy", mode, "alias of --mode");
  eval_cmd->add_option("--prompting", prompting, "single_task or cross_task");
  eval_cmd->add_option("--shots", shots, "exemplars per prompt");
  eval_cmd->add_option("--seed", seed, "sampling seed for cross-task prompting");
  eval_cmd->add_option("--jobs", jobs, "worker pool size");
  eval_cmd->add_option("--out,-o", out_path, "report output path");
  eval_cmd->add_option("--format", format_name, "text | csv | json");

  // trace show: pretty-print a .coctrace file.
  auto* trace_cmd = app.add_subcommand("trace", "trace file utilities");
  trace_cmd->require_subcommand(1);
  auto* trace_show = trace_cmd->add_subcommand("show", "pretty-print a trace");
  std::string trace_path;
  trace_show->add_option("file", trace_path, ".coctrace file")->required();

  // fixtures record: run against the live backend, recording fixtures.
  auto* fixtures_cmd = app.add_subcommand("fixtures", "fixture utilities");
  fixtures_cmd->require_subcommand(1);
  auto* record_cmd = fixtures_cmd->add_subcommand(
      "record", "execute while recording fixtures for offline replay");
  add_common(record_cmd);
  record_cmd->add_option("program", program_path, "program file (omit to generate)");
  record_cmd->add_option("--question", question, "question to solve")->required();
  record_cmd->add_option("--strategy", strategy, "execution strategy");
  record_cmd->add_option("--prompts", prompts_dir, "prompt set directory");
  record_cmd->add_option("--family", family, "exemplar family");
  record_cmd->add_option("--shots", shots, "number of exemplars");
  record_cmd->add_option("--trace-out", trace_out, "write the .coctrace file here");
  record_cmd->add_flag("--json", as_json, "print the run result as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    overrides();
    CliConfig config = resolve_config(common);
    if (record_cmd->parsed()) {
      config.backend.kind = "recording";
      if (config.backend.record_sink.empty())
        throw ConfigError("fixtures record requires --record-out");
    }
    if (run_cmd->parsed()) {
      int n = shots.empty() ? 3 : std::stoi(shots);
      return cmd_run(config, question, strategy, prompts_dir, family, n,
                     trace_out, as_json);
    }
    if (exec_cmd->parsed()) {
      return cmd_exec(config, program_path, question, strategy, trace_out, as_json);
    }
    if (eval_cmd->parsed()) {
      if (!tasks_path.empty()) config.paths.tasks = tasks_path;
      if (!prompts_dir.empty()) config.paths.prompts = prompts_dir;
      if (!out_path.empty()) config.paths.output = out_path;
      return cmd_eval(config, format_name);
    }
    if (trace_show->parsed()) {
      return cmd_trace_show(trace_path);
    }
    if (record_cmd->parsed()) {
      validate_config(config);
      if (!program_path.empty())
        return cmd_exec(config, program_path, question, strategy, trace_out, as_json);
      int n = shots.empty() ? 3 : std::stoi(shots);
      return cmd_run(config, question, strategy, prompts_dir, family, n,
                     trace_out, as_json);
    }
  } catch (const ConfigError& e) {
    print_err(std::string("configuration error: ") + e.what() + "\n");
    return kExitConfigError;
  } catch (const SchemaError& e) {
    print_err(std::string("task file error: ") + e.what() + "\n");
    return kExitConfigError;
  } catch (const std::exception& e) {
    print_err(std::string("error: ") + e.what() + "\n");
    return kExitTaskFailure;
  }
  return kExitConfigError;
}
