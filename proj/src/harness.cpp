#include "coc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "coc/parser.hpp"
#include "coc/rng.hpp"

namespace coc {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

std::string TaskRecord::prompt_text() const {
  if (options.empty()) return question;
  std::string out = question;
  out += "\nOptions:";
  for (const std::string& opt : options) out += "\n" + opt;
  return out;
}

std::vector<TaskRecord> load_tasks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(0, "file", "cannot open task file: " + path);
  std::vector<TaskRecord> tasks;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(line_no, "json", e.what());
    }
    if (!j.is_object()) throw SchemaError(line_no, "json", "record is not an object");
    TaskRecord task;
    if (!j.contains("question") || !j.at("question").is_string() ||
        j.at("question").get<std::string>().empty())
      throw SchemaError(line_no, "question", "missing or empty");
    task.question = j.at("question").get<std::string>();

    if (j.contains("target") || j.contains("family") || j.contains("id") ||
        !j.contains("answer")) {
      // full schema
      if (!j.contains("target") || !j.at("target").is_string() ||
          j.at("target").get<std::string>().empty())
        throw SchemaError(line_no, "target", "missing or empty");
      task.target = j.at("target").get<std::string>();
      task.family = j.value("family", std::string("default"));
      task.id = j.value("id", task.family + "-" + std::to_string(line_no));
      if (j.contains("options")) {
        if (!j.at("options").is_array())
          throw SchemaError(line_no, "options", "must be an array of strings");
        for (const json& opt : j.at("options")) {
          if (!opt.is_string())
            throw SchemaError(line_no, "options", "must be an array of strings");
          task.options.push_back(opt.get<std::string>());
        }
      }
      if (j.contains("kind")) {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "algorithmic")
          task.tags.kind = TaskTags::Kind::Algorithmic;
        else if (kind == "nlp")
          task.tags.kind = TaskTags::Kind::Nlp;
        else
          throw SchemaError(line_no, "kind", "must be 'algorithmic' or 'nlp'");
      }
      if (j.contains("category")) {
        std::string cat = j.at("category").get<std::string>();
        if (cat != "+" && cat != "-" && cat != "/" && cat != "*")
          throw SchemaError(line_no, "category", "must be one of + - / *");
        task.tags.category = cat;
      }
    } else {
      // grade-school-math schema: {question, answer}
      if (!j.at("answer").is_string() && !j.at("answer").is_number())
        throw SchemaError(line_no, "answer", "must be a string or number");
      std::string answer = j.at("answer").is_string()
                               ? j.at("answer").get<std::string>()
                               : j.at("answer").dump();
      auto marker = answer.rfind("####");
      if (marker != std::string::npos) answer = answer.substr(marker + 4);
      task.target = trim(answer);
      if (task.target.empty()) throw SchemaError(line_no, "answer", "empty answer");
      task.family = "gsm";
      task.id = "gsm-" + std::to_string(line_no);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Prompt sets
// ---------------------------------------------------------------------------

void PromptSet::add(const std::string& family, Exemplar exemplar) {
  SourceProgram parsed = parse_program(exemplar.body);  // may throw ParseError
  (void)parsed;
  families_[family].push_back(std::move(exemplar));
}

const std::vector<Exemplar>* PromptSet::family(const std::string& name) const {
  auto it = families_.find(name);
  return it == families_.end() ? nullptr : &it->second;
}

std::vector<std::string> PromptSet::family_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : families_) names.push_back(name);
  return names;
}

PromptSet PromptSet::load_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw ConfigError("prompt set directory not found: " + dir);
  PromptSet set;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& file : files) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string family = file.stem().string();

    enum class Section { None, Question, Program, Answer };
    Section section = Section::None;
    Exemplar current;
    int exemplar_no = 0;
    auto flush = [&]() {
      if (section == Section::None) return;
      ++exemplar_no;
      if (trim(current.question).empty() || trim(current.answer).empty())
        throw ConfigError("prompt set " + file.string() + ", exemplar " +
                          std::to_string(exemplar_no) +
                          ": needs a Q: line and an A: line");
      current.question = trim(current.question);
      current.answer = trim(current.answer);
      try {
        set.add(family, current);
      } catch (const ParseError& e) {
        throw ConfigError("prompt set " + file.string() + ", exemplar " +
                          std::to_string(exemplar_no) +
                          ": program does not parse: " + e.what());
      }
      current = Exemplar{};
      section = Section::None;
    };

    for (const std::string& raw : split_lines(buf.str())) {
      std::string line = raw;
      if (trim(line) == "===") {
        flush();
        continue;
      }
      if (line.rfind("Q:", 0) == 0 && section == Section::None) {
        section = Section::Question;
        current.question = trim(line.substr(2));
        continue;
      }
      if (trim(line) == "P:" && section == Section::Question) {
        section = Section::Program;
        continue;
      }
      if (line.rfind("A:", 0) == 0 &&
          (section == Section::Program || section == Section::Question)) {
        section = Section::Answer;
        current.answer = trim(line.substr(2));
        continue;
      }
      switch (section) {
        case Section::Question:
          current.question += "\n" + line;
          break;
        case Section::Program:
          current.body += current.body.empty() ? line : "\n" + line;
          break;
        case Section::Answer:
          if (!trim(line).empty()) current.answer += "\n" + trim(line);
          break;
        case Section::None:
          if (!trim(line).empty())
            throw ConfigError("prompt set " + file.string() +
                              ": text outside an exemplar block: " + line);
      }
    }
    flush();
  }
  return set;
}

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

std::vector<Exemplar> assemble_prompt(const TaskRecord& task, const PromptSet& prompts,
                                      const EvalConfig& config) {
  std::vector<Exemplar> out;
  if (config.shots <= 0) return out;
  if (config.prompting == PromptingMode::SingleTask) {
    const std::vector<Exemplar>* own = prompts.family(task.family);
    if (!own || static_cast<int>(own->size()) < config.shots)
      throw InsufficientExemplars(task.family);
    out.assign(own->begin(), own->begin() + config.shots);
    return out;
  }
  // Cross-task: uniform over foreign families, then uniform over their
  // unused exemplars; deterministic in (seed, task id).
  struct Pool {
    std::string family;
    std::vector<std::size_t> remaining;
  };
  std::vector<Pool> pools;
  for (const std::string& name : prompts.family_names()) {
    if (name == task.family) continue;
    const auto* exemplars = prompts.family(name);
    if (!exemplars || exemplars->empty()) continue;
    Pool pool{name, {}};
    for (std::size_t i = 0; i < exemplars->size(); ++i) pool.remaining.push_back(i);
    pools.push_back(std::move(pool));
  }
  std::size_t available = 0;
  for (const Pool& p : pools) available += p.remaining.size();
  if (available < static_cast<std::size_t>(config.shots))
    throw InsufficientExemplars(task.family);

  SplitMix64 rng(config.seed ^ (fnv1a64(task.id) * 0x9e3779b97f4a7c15ULL + 1));
  for (int shot = 0; shot < config.shots; ++shot) {
    std::vector<std::size_t> nonempty;
    for (std::size_t i = 0; i < pools.size(); ++i)
      if (!pools[i].remaining.empty()) nonempty.push_back(i);
    Pool& pool = pools[nonempty[rng.below(nonempty.size())]];
    std::size_t pick = rng.below(pool.remaining.size());
    std::size_t index = pool.remaining[pick];
    pool.remaining.erase(pool.remaining.begin() + pick);
    out.push_back((*prompts.family(pool.family))[index]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

namespace {

std::string normalize_answer(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (unsigned char c : trim(s)) {
    if (std::isspace(c)) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += static_cast<char>(std::tolower(c));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::optional<char> extract_option_letter(const std::string& s) {
  std::optional<char> letter;  // last parenthesized letter wins
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if (s[i] == '(' && s[i + 2] == ')' &&
        std::isalnum(static_cast<unsigned char>(s[i + 1])))
      letter = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i + 1])));
  }
  if (!letter) {
    std::string n = normalize_answer(s);
    if (n.size() == 1 && std::isalnum(static_cast<unsigned char>(n[0])))
      letter = n[0];
  }
  return letter;
}

// "(A) Some text" -> {a, "some text"}
std::optional<std::pair<char, std::string>> parse_option(const std::string& option) {
  std::string t = trim(option);
  if (t.size() >= 3 && t[0] == '(' && t[2] == ')' &&
      std::isalnum(static_cast<unsigned char>(t[1])))
    return std::make_pair(
        static_cast<char>(std::tolower(static_cast<unsigned char>(t[1]))),
        normalize_answer(t.substr(3)));
  return std::nullopt;
}

struct ParsedNumber {
  bool is_int = false;
  mpz_class int_value;
  double float_value = 0.0;
};

std::optional<ParsedNumber> parse_number(const std::string& s) {
  std::string t = trim(s);
  // strip currency signs, thousands separators, a trailing period / percent
  std::string cleaned;
  for (char c : t) {
    if (c == ',' || c == '$') continue;
    cleaned += c;
  }
  while (!cleaned.empty() && (cleaned.back() == '.' || cleaned.back() == '%'))
    cleaned.pop_back();
  if (cleaned.empty()) return std::nullopt;
  bool integral = cleaned.find_first_not_of("+-0123456789") == std::string::npos &&
                  cleaned.find_first_of("0123456789") != std::string::npos &&
                  cleaned.find_first_of("+-", 1) == std::string::npos;
  ParsedNumber out;
  if (integral) {
    std::string digits = cleaned[0] == '+' ? cleaned.substr(1) : cleaned;
    try {
      out.is_int = true;
      out.int_value = mpz_class(digits, 10);
      out.float_value = out.int_value.get_d();
      return out;
    } catch (...) {
      return std::nullopt;
    }
  }
  char* end = nullptr;
  double d = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size()) return std::nullopt;
  out.float_value = d;
  return out;
}

}  // namespace

bool score_answer(const std::string& predicted, const TaskRecord& task) {
  std::string pred_norm = normalize_answer(predicted);
  std::string target_norm = normalize_answer(task.target);
  if (pred_norm == target_norm) return true;

  if (!task.options.empty()) {
    auto target_letter = extract_option_letter(task.target);
    auto pred_letter = extract_option_letter(predicted);
    if (!pred_letter) {
      // Maybe the model answered with the option text.
      for (const std::string& option : task.options) {
        auto parsed = parse_option(option);
        if (parsed && parsed->second == pred_norm) {
          pred_letter = parsed->first;
          break;
        }
      }
    }
    return target_letter && pred_letter && *target_letter == *pred_letter;
  }

  auto target_num = parse_number(task.target);
  if (target_num) {
    auto pred_num = parse_number(predicted);
    if (!pred_num) return false;
    if (target_num->is_int && pred_num->is_int)
      return target_num->int_value == pred_num->int_value;
    if (target_num->is_int && !pred_num->is_int) {
      // "7.0" matches an integer target exactly
      return pred_num->float_value == target_num->int_value.get_d() &&
             pred_num->float_value == std::floor(pred_num->float_value);
    }
    double a = pred_num->float_value, b = target_num->float_value;
    double tol = 1e-6 * std::max(1.0, std::fabs(b));
    return std::fabs(a - b) <= tol;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::optional<EvalMode> eval_mode_from_name(const std::string& name) {
  if (name == "direct") return EvalMode{EvalMode::Kind::Direct, Strategy::Interweave};
  if (name == "cot") return EvalMode{EvalMode::Kind::CoT, Strategy::Interweave};
  if (auto strategy = strategy_from_name(name))
    return EvalMode{EvalMode::Kind::Execute, *strategy};
  return std::nullopt;
}

std::string eval_mode_name(const EvalMode& mode) {
  switch (mode.kind) {
    case EvalMode::Kind::Direct:
      return "direct";
    case EvalMode::Kind::CoT:
      return "cot";
    case EvalMode::Kind::Execute:
      return strategy_name(mode.strategy);
  }
  return "?";
}

namespace {

std::string baseline_answer(const EvalConfig& config, const TaskRecord& task,
                            const std::vector<Exemplar>& exemplars,
                            LMBackend& backend) {
  std::string prompt;
  bool with_reasoning = config.mode.kind == EvalMode::Kind::CoT;
  for (const Exemplar& ex : exemplars) {
    prompt += "Q: " + ex.question + "\n";
    if (with_reasoning && !trim(ex.body).empty()) prompt += trim(ex.body) + "\n";
    prompt += "A: " + ex.answer + "\n\n";
  }
  prompt += "Q: " + task.prompt_text() + "\n";
  if (!with_reasoning) prompt += "A:";

  LMRequest request;
  request.model_id = config.settings.model_id;
  request.sampling = config.settings.sampling;
  request.sampling.stop.push_back("\nQ:");
  request.messages.push_back({"user", std::move(prompt)});
  request.alias_hint = (with_reasoning ? "cot | " : "direct | ") +
                       task.question.substr(0, task.question.find('\n'));
  LMResponse response = backend.complete(request);
  if (auto answer = extract_answer_line(response.text)) return *answer;
  return trim(response.text);
}

TaskRow evaluate_one(const EvalConfig& config, const TaskRecord& task,
                     const PromptSet& prompts, LMBackend& backend,
                     const NativeRegistry& registry) {
  TaskRow row;
  row.id = task.id;
  row.family = task.family;
  row.target = task.target;
  try {
    std::vector<Exemplar> exemplars = assemble_prompt(task, prompts, config);
    RunLimits limits = config.limits;
    if (config.task_timeout_seconds > 0) {
      limits.deadline = std::chrono::steady_clock::now() +
                        std::chrono::seconds(config.task_timeout_seconds);
    }
    if (config.mode.kind != EvalMode::Kind::Execute) {
      row.predicted = baseline_answer(config, task, exemplars, backend);
      row.stats.lm_calls = 1;
      row.correct = score_answer(row.predicted, task);
      return row;
    }
    std::vector<WorkedExample> worked;
    for (const Exemplar& ex : exemplars)
      worked.push_back(WorkedExample{ex.question, ex.body});
    SimulationStats gen_stats;
    SourceProgram program = generate_code(task.prompt_text(), worked, backend,
                                          config.settings, &gen_stats);
    RunResult result = run(config.mode.strategy, task.prompt_text(), program,
                           backend, registry, limits, config.settings);
    row.stats = result.stats;
    row.stats.lm_calls += gen_stats.lm_calls;
    row.stats.retries += gen_stats.retries;
    if (result.answer) {
      row.predicted = *result.answer;
      row.correct = score_answer(row.predicted, task);
    } else {
      row.failure_category = result.failure->category;
    }
  } catch (const InsufficientExemplars&) {
    row.failure_category = "insufficient_exemplars";
  } catch (const GenerationFailed&) {
    row.failure_category = "generation_failed";
  } catch (const SimulationFailed&) {
    row.failure_category = "simulation_failed";
  } catch (const FixtureError&) {
    row.failure_category = "backend_error";
  } catch (const BackendError&) {
    row.failure_category = "backend_error";
  } catch (const std::exception&) {
    row.failure_category = "exception";
  }
  return row;
}

}  // namespace

EvalReport build_report(std::vector<TaskRow> rows,
                        const std::map<std::string, TaskTags>& family_tags) {
  EvalReport report;
  report.rows = std::move(rows);

  std::map<std::string, FamilySummary> families;
  for (const TaskRow& row : report.rows) {
    FamilySummary& fam = families[row.family];
    fam.family = row.family;
    ++fam.tasks;
    if (row.correct) ++fam.correct;
    auto tags = family_tags.find(row.family);
    if (tags != family_tags.end()) fam.tags = tags->second;
  }
  for (auto& [_, fam] : families) {
    fam.accuracy_pct = fam.tasks == 0 ? 0.0 : 100.0 * fam.correct / fam.tasks;
    report.families.push_back(fam);
  }

  auto group_mean = [&](auto&& member) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const FamilySummary& fam : report.families) {
      if (!member(fam)) continue;
      sum += fam.accuracy_pct;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };

  struct GroupSpec {
    const char* label;
    std::function<bool(const FamilySummary&)> member;
  };
  const GroupSpec specs[] = {
      {"NLP Task (avg)",
       [](const FamilySummary& f) { return f.tags.kind == TaskTags::Kind::Nlp; }},
      {"Algorithmic Task (avg)",
       [](const FamilySummary& f) {
         return f.tags.kind == TaskTags::Kind::Algorithmic;
       }},
      {"All Tasks (avg)", [](const FamilySummary&) { return true; }},
      {"Python exec (same program) (avg)",
       [](const FamilySummary& f) { return f.tags.category == "+"; }},
      {"Python exec (different program) (avg)",
       [](const FamilySummary& f) { return f.tags.category == "-"; }},
      {"LM exec (same program) (avg)",
       [](const FamilySummary& f) { return f.tags.category == "/"; }},
      {"LM exec (different program) (avg)",
       [](const FamilySummary& f) { return f.tags.category == "*"; }},
  };
  for (const GroupSpec& spec : specs) {
    if (auto mean = group_mean(spec.member))
      report.groups.emplace_back(spec.label, *mean);
  }
  return report;
}

EvalReport evaluate(const EvalConfig& config, const std::vector<TaskRecord>& tasks,
                    const PromptSet& prompts, LMBackend& backend,
                    const NativeRegistry& registry) {
  if (config.shots < 0) throw ConfigError("shots must be >= 0");
  if (config.jobs < 1) throw ConfigError("jobs must be >= 1");

  std::vector<TaskRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  int workers = std::min<int>(config.jobs, static_cast<int>(tasks.size()));
  workers = std::max(workers, 1);

  auto work = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      rows[i] = evaluate_one(config, tasks[i], prompts, backend, registry);
    }
  };
  if (workers == 1 || tasks.size() <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < workers; ++i) threads.emplace_back(work);
    for (std::thread& t : threads) t.join();
  }

  std::map<std::string, TaskTags> family_tags;
  for (const TaskRecord& task : tasks)
    family_tags.emplace(task.family, task.tags);  // first record wins
  return build_report(std::move(rows), family_tags);
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace {

std::string format_pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::TextTable: {
      std::string out;
      out += "family                                  tasks  accuracy\n";
      for (const FamilySummary& fam : report.families) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-38s %6d %9s\n", fam.family.c_str(),
                      fam.tasks, format_pct(fam.accuracy_pct).c_str());
        out += line;
      }
      if (!report.groups.empty()) out += "\n";
      for (const auto& [label, value] : report.groups) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-38s %6s %9s\n", label.c_str(), "",
                      format_pct(value).c_str());
        out += line;
      }
      return out;
    }
    case ReportFormat::Csv: {
      std::string out = "row_type,name,tasks,accuracy\n";
      for (const FamilySummary& fam : report.families)
        out += "family," + fam.family + "," + std::to_string(fam.tasks) + "," +
               format_pct(fam.accuracy_pct) + "\n";
      for (const auto& [label, value] : report.groups)
        out += "group,\"" + label + "\",," + format_pct(value) + "\n";
      return out;
    }
    case ReportFormat::Json: {
      json j;
      j["families"] = json::array();
      for (const FamilySummary& fam : report.families) {
        j["families"].push_back(json{{"family", fam.family},
                                     {"tasks", fam.tasks},
                                     {"correct", fam.correct},
                                     {"accuracy", fam.accuracy_pct}});
      }
      j["groups"] = json::array();
      for (const auto& [label, value] : report.groups)
        j["groups"].push_back(json{{"label", label}, {"accuracy", value}});
      j["tasks"] = json::array();
      for (const TaskRow& row : report.rows) {
        j["tasks"].push_back(json{{"id", row.id},
                                  {"family", row.family},
                                  {"predicted", row.predicted},
                                  {"target", row.target},
                                  {"correct", row.correct},
                                  {"failure", row.failure_category},
                                  {"stats",
                                   json{{"stmts_interpreted", row.stats.stmts_interpreted},
                                        {"stmts_simulated", row.stats.stmts_simulated},
                                        {"lm_calls", row.stats.lm_calls},
                                        {"retries", row.stats.retries}}}});
      }
      return j.dump(2) + "\n";
    }
  }
  return "";
}

}  // namespace coc
