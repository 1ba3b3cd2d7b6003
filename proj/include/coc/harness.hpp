#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coc/executor.hpp"

namespace coc {

struct TaskTags {
  enum class Kind { Unspecified, Algorithmic, Nlp };
  Kind kind = Kind::Unspecified;
  std::string category;  // "+", "-", "/", "*" or empty
};

struct TaskRecord {
  std::string id;
  std::string family;
  std::string question;
  std::string target;
  std::vector<std::string> options;
  TaskTags tags;

  // Question as shown to the model, options appended when present.
  std::string prompt_text() const;
};

// Newline-delimited JSON. Accepts the full schema (id/family/question/
// target/options/kind/category) and the grade-school-math schema
// (question/answer, where the answer may carry a trailing "#### <value>"
// marker). Throws SchemaError with the line and field.
std::vector<TaskRecord> load_tasks(const std::string& path);

struct Exemplar {
  std::string question;
  std::string body;  // worked program, or chain-of-thought text
  std::string answer;
};

class PromptSet {
public:
  // Directory of per-family files; the family is the file stem. Each file
  // holds blocks "Q: ..." / "P:" / "A: ..." separated by a line of "===".
  static PromptSet load_directory(const std::string& dir);

  void add(const std::string& family, Exemplar exemplar);
  const std::vector<Exemplar>* family(const std::string& name) const;
  std::vector<std::string> family_names() const;  // sorted

private:
  std::map<std::string, std::vector<Exemplar>> families_;
};

enum class PromptingMode { SingleTask, CrossTask };

// A run is either an execution strategy or one of the two prompt-only
// baselines.
struct EvalMode {
  enum class Kind { Execute, Direct, CoT };
  Kind kind = Kind::Execute;
  Strategy strategy = Strategy::Interweave;
};

std::optional<EvalMode> eval_mode_from_name(const std::string& name);
std::string eval_mode_name(const EvalMode& mode);

struct EvalConfig {
  EvalMode mode;
  PromptingMode prompting = PromptingMode::SingleTask;
  int shots = 3;
  std::uint64_t seed = 0;
  RunLimits limits;
  SimulationSettings settings;
  int jobs = 4;
  int task_timeout_seconds = 300;
};

// Single-task: the first `shots` exemplars of the task's family.
// Cross-task: `shots` exemplars sampled without replacement from other
// families, deterministic given (seed, task id).
std::vector<Exemplar> assemble_prompt(const TaskRecord& task,
                                      const PromptSet& prompts,
                                      const EvalConfig& config);

bool score_answer(const std::string& predicted, const TaskRecord& task);

struct TaskRow {
  std::string id;
  std::string family;
  std::string predicted;
  std::string target;
  bool correct = false;
  RunStats stats;
  std::string failure_category;  // empty on success
};

struct FamilySummary {
  std::string family;
  int tasks = 0;
  int correct = 0;
  double accuracy_pct = 0.0;
  TaskTags tags;
};

struct EvalReport {
  std::vector<TaskRow> rows;                          // task order
  std::vector<FamilySummary> families;                // sorted by name
  std::vector<std::pair<std::string, double>> groups; // label -> percent
};

// Aggregation only; exposed so tests can recompute report arithmetic.
EvalReport build_report(std::vector<TaskRow> rows,
                        const std::map<std::string, TaskTags>& family_tags);

EvalReport evaluate(const EvalConfig& config, const std::vector<TaskRecord>& tasks,
                    const PromptSet& prompts, LMBackend& backend,
                    const NativeRegistry& registry);

enum class ReportFormat { TextTable, Csv, Json };

std::string render_report(const EvalReport& report, ReportFormat format);

}  // namespace coc
