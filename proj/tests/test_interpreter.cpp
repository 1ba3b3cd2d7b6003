#include <gtest/gtest.h>

#include <string>

#include "coc/interpreter.hpp"
#include "coc/parser.hpp"
#include "support/program_gen.hpp"
#include "support/reference_eval.hpp"

using namespace coc;

namespace {

// Expression helper: parse "x = <expr>" and pull out the right-hand side.
SourceProgram parse_rhs_program(const std::string& expr_text) {
  SourceProgram p = parse_program("x = " + expr_text);
  EXPECT_TRUE(p.statements[0]->is<AssignStmt>()) << expr_text;
  return p;
}

EvalResult eval_text(const std::string& expr_text, const ProgramState& state,
                     const NativeRegistry& registry) {
  static std::vector<std::unique_ptr<SourceProgram>> keep_alive;
  keep_alive.push_back(std::make_unique<SourceProgram>(parse_rhs_program(expr_text)));
  const auto* assign = keep_alive.back()->statements[0]->as<AssignStmt>();
  return eval_expr(*assign->value, state, registry);
}

Value expect_value(const std::string& expr_text, const ProgramState& state = {},
                   const NativeRegistry& registry = {}) {
  EvalResult r = eval_text(expr_text, state, registry);
  EXPECT_TRUE(std::holds_alternative<Value>(r))
      << expr_text << " -> " << std::get<HandoffReason>(r).describe();
  return std::get<Value>(r);
}

HandoffReason expect_handoff(const std::string& expr_text,
                             const ProgramState& state = {},
                             const NativeRegistry& registry = {}) {
  EvalResult r = eval_text(expr_text, state, registry);
  EXPECT_TRUE(std::holds_alternative<HandoffReason>(r))
      << expr_text << " -> " << render_value(std::get<Value>(r));
  return std::get<HandoffReason>(r);
}

}  // namespace

TEST(EvalExpr, MultiStepArithmetic) {
  Value v = expect_value("((-3 + 5*8*-4) - (9 - 8*-7))");
  EXPECT_EQ(v.as_int(), -228);
}

TEST(EvalExpr, UndefinedCallClassification) {
  ProgramState state;
  state.set("object", Value::str("orange"));
  HandoffReason r = expect_handoff("is_fruit(object)", state);
  EXPECT_EQ(r.kind, HandoffReason::Kind::UndefinedCall);
}

TEST(EvalExpr, Builtins) {
  EXPECT_EQ(expect_value("len([])").as_int(), 0);
  EXPECT_EQ(expect_value("len('héllo')").as_int(), 5);
  EXPECT_EQ(expect_value("sum([1, 2, 3])").as_int(), 6);
  EXPECT_EQ(expect_value("sum([1, 2], 10)").as_int(), 13);
  EXPECT_EQ(expect_value("max(3, 1, 2)").as_int(), 3);
  EXPECT_EQ(expect_value("min([4, 2, 9])").as_int(), 2);
  EXPECT_EQ(render_value(expect_value("sorted([3, 1, 2])")), "[1, 2, 3]");
  EXPECT_EQ(render_value(expect_value("range(3)")), "[0, 1, 2]");
  EXPECT_EQ(render_value(expect_value("range(5, 0, -2)")), "[5, 3, 1]");
  EXPECT_EQ(render_value(expect_value("list('ab')")), "['a', 'b']");
  EXPECT_EQ(render_value(expect_value("enumerate(['a', 'b'])")),
            "[(0, 'a'), (1, 'b')]");
  EXPECT_EQ(render_value(expect_value("zip([1, 2], ['a', 'b', 'c'])")),
            "[(1, 'a'), (2, 'b')]");
  EXPECT_EQ(expect_value("int('  42 ')").as_int(), 42);
  EXPECT_EQ(expect_value("int(-2.9)").as_int(), -2);
  EXPECT_EQ(expect_value("str(7)").as_str(), "7");
  EXPECT_EQ(expect_value("str([1, 'a'])").as_str(), "[1, 'a']");
  EXPECT_DOUBLE_EQ(expect_value("float('2.5')").as_float(), 2.5);
  EXPECT_EQ(expect_value("abs(-7)").as_int(), 7);
}

TEST(EvalExpr, DivisionSemantics) {
  EXPECT_EQ(render_value(expect_value("7 / 2")), "3.5");
  EXPECT_EQ(expect_value("7 // 2").as_int(), 3);
  EXPECT_EQ(expect_value("-7 // 2").as_int(), -4);
  EXPECT_EQ(expect_value("7 % -3").as_int(), -2);
  EXPECT_EQ(expect_value("-7 % 3").as_int(), 2);
  EXPECT_EQ(expect_value("2 ** 10").as_int(), 1024);
  EXPECT_EQ(render_value(expect_value("2 ** -1")), "0.5");
  EXPECT_EQ(render_value(expect_value("-2 ** 2")), "-4");
  HandoffReason r = expect_handoff("1 // 0");
  EXPECT_EQ(r.kind, HandoffReason::Kind::RuntimeError);
  EXPECT_EQ(r.error_kind, "ZeroDivisionError");
}

TEST(EvalExpr, BigIntegers) {
  Value v = expect_value("10 ** 40 + 1");
  EXPECT_EQ(v.as_int().get_str(), "10000000000000000000000000000000000000001");
  EXPECT_EQ(expect_value("2 ** 100 // 2 ** 90").as_int(), 1024);
}

TEST(EvalExpr, MethodsAndContainers) {
  ProgramState state;
  state.set("s", Value::str("small grey square cloth shoe"));
  EXPECT_EQ(render_value(expect_value("s.split(' ')[:-1]", state)),
            "['small', 'grey', 'square', 'cloth']");
  EXPECT_EQ(expect_value("'a,b,,c'.split(',')", state).as_list().size(), 4u);
  EXPECT_EQ(expect_value("' x '.strip()").as_str(), "x");
  EXPECT_EQ(expect_value("'Ab'.lower()").as_str(), "ab");
  EXPECT_EQ(expect_value("'Ab'.upper()").as_str(), "AB");
  EXPECT_TRUE(expect_value("'hello'.startswith('he')").as_bool());
  EXPECT_EQ(expect_value("'banana'.count('an')").as_int(), 2);
  EXPECT_EQ(expect_value("', '.join(['a', 'b'])").as_str(), "a, b");
  EXPECT_EQ(expect_value("[True, False, True].count(True)").as_int(), 2);
  EXPECT_EQ(expect_value("[5, 6].index(6)").as_int(), 1);
  EXPECT_EQ(render_value(expect_value("{'a': 1, 'b': 2}.keys()")), "['a', 'b']");
  EXPECT_EQ(render_value(expect_value("{'a': 1}.items()")), "[('a', 1)]");
  EXPECT_EQ(expect_value("{'a': 1}.get('missing', 9)").as_int(), 9);
  EXPECT_TRUE(expect_value("{'a': 1}.get('missing')").is(Value::Kind::None));
  EXPECT_EQ(render_value(expect_value("[1, 2] + [3]")), "[1, 2, 3]");
  EXPECT_EQ(expect_value("'ab' * 3").as_str(), "ababab");
  EXPECT_EQ(render_value(expect_value("[0] * 3")), "[0, 0, 0]");
  EXPECT_EQ(expect_value("(1, 2)[1]").as_int(), 2);
  EXPECT_EQ(expect_value("'hello'[-1]").as_str(), "o");
  EXPECT_EQ(expect_value("[10, 20, 30][1:]").as_list().size(), 2u);
  EXPECT_EQ(render_value(expect_value("[1, 2, 3, 4][::2]")), "[1, 3]");
  EXPECT_EQ(render_value(expect_value("[1, 2, 3][::-1]")), "[3, 2, 1]");
}

TEST(EvalExpr, ComparisonsAndLogic) {
  EXPECT_TRUE(expect_value("1 < 2 < 3").as_bool());
  EXPECT_FALSE(expect_value("1 < 2 < 2").as_bool());
  EXPECT_TRUE(expect_value("1 == 1.0").as_bool());
  EXPECT_TRUE(expect_value("True == 1").as_bool());
  EXPECT_FALSE(expect_value("1 == '1'").as_bool());
  EXPECT_TRUE(expect_value("'a' in 'cat'").as_bool());
  EXPECT_TRUE(expect_value("2 in [1, 2]").as_bool());
  EXPECT_TRUE(expect_value("'k' in {'k': 1}").as_bool());
  EXPECT_TRUE(expect_value("3 not in [1, 2]").as_bool());
  EXPECT_TRUE(expect_value("None is None").as_bool());
  EXPECT_TRUE(expect_value("1 is not None").as_bool());
  EXPECT_EQ(expect_value("0 or 'fallback'").as_str(), "fallback");
  EXPECT_EQ(expect_value("'first' and 'second'").as_str(), "second");
  EXPECT_TRUE(expect_value("not []").as_bool());
  EXPECT_EQ(expect_value("1 if [] else 2").as_int(), 2);
  HandoffReason r = expect_handoff("1 < 'a'");
  EXPECT_EQ(r.error_kind, "TypeError");
}

TEST(EvalExpr, ListComprehension) {
  ProgramState state;
  state.set("adjs", Value::list({Value::str("small"), Value::str("grey")}));
  EXPECT_EQ(render_value(expect_value("[len(a) for a in adjs]", state)),
            "[5, 4]");
  EXPECT_EQ(render_value(expect_value("[x * x for x in range(5) if x % 2 == 1]")),
            "[1, 9]");
  // The comprehension variable stays local.
  EvalResult r = eval_text("[x for x in range(3)]", state, NativeRegistry{});
  ASSERT_TRUE(std::holds_alternative<Value>(r));
  EXPECT_EQ(state.find("x"), nullptr);
}

TEST(EvalExpr, RuntimeFaultsBecomeHandoffs) {
  EXPECT_EQ(expect_handoff("unknown_name").error_kind, "NameError");
  EXPECT_EQ(expect_handoff("[1][5]").error_kind, "IndexError");
  EXPECT_EQ(expect_handoff("{'a': 1}['b']").error_kind, "KeyError");
  EXPECT_EQ(expect_handoff("1 + 'a'").error_kind, "TypeError");
  EXPECT_EQ(expect_handoff("int('four')").error_kind, "ValueError");
  EXPECT_EQ(expect_handoff("'s'.replace('a', 'b')").error_kind, "AttributeError");
  EXPECT_EQ(expect_handoff("10 ** 10 ** 10").error_kind, "OverflowError");
  EXPECT_EQ(expect_handoff("range(10 ** 9)").error_kind, "OverflowError");
  EXPECT_EQ(expect_handoff("sorted(5)").error_kind, "TypeError");
}

TEST(EvalExpr, OpaqueModules) {
  ProgramState state;
  state.set("np", Value::module("numpy"));
  HandoffReason r = expect_handoff("np.argmax([1, 5, 2])", state);
  EXPECT_EQ(r.kind, HandoffReason::Kind::OpaqueModuleUse);
  HandoffReason attr = expect_handoff("np.pi", state);
  EXPECT_EQ(attr.kind, HandoffReason::Kind::OpaqueModuleUse);
}

TEST(EvalExpr, NativeRegistry) {
  NativeRegistry registry;
  registry.register_function("is_fruit", [](const std::vector<Value>& args) {
    return Value::boolean(args.at(0).as_str() != "violin");
  });
  ProgramState state;
  EXPECT_TRUE(expect_value("is_fruit('orange')", state, registry).as_bool());
  EXPECT_FALSE(expect_value("is_fruit('violin')", state, registry).as_bool());

  registry.register_module("robot", {{"pick_place", [](const std::vector<Value>&) {
                                        return Value::none();
                                      }}});
  ProgramState with_robot;
  with_robot.set("robot", Value::module("robot"));
  EXPECT_TRUE(expect_value("robot.pick_place('a', 'b')", with_robot, registry)
                  .is(Value::Kind::None));
  HandoffReason missing =
      expect_handoff("robot.fly()", with_robot, registry);
  EXPECT_EQ(missing.kind, HandoffReason::Kind::OpaqueModuleUse);

  registry.register_function("explodes", [](const std::vector<Value>&) -> Value {
    throw std::runtime_error("boom");
  });
  HandoffReason host = expect_handoff("explodes()", state, registry);
  EXPECT_EQ(host.error_kind, "HostError");

  EXPECT_THROW(registry.register_function("len", [](const std::vector<Value>&) {
                 return Value::none();
               }),
               std::invalid_argument);
}

TEST(ExecStmt, AssignProducesExactDelta) {
  SourceProgram p = parse_program("answer = 0");
  ProgramState state;
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* done = std::get_if<Done>(&out);
  ASSERT_NE(done, nullptr);
  ASSERT_EQ(done->delta.size(), 1u);
  EXPECT_EQ(done->delta.find("answer")->as_int(), 0);
  EXPECT_TRUE(state.empty()) << "input state must not be mutated";
}

TEST(ExecStmt, AugAssignOnFigState) {
  SourceProgram p = parse_program("num_fruits += objects[object]");
  ProgramState state;
  Value::Dict objects;
  objects.emplace_back(Value::str("orange"), Value::integer(1L));
  objects.emplace_back(Value::str("plum"), Value::integer(3L));
  state.set("objects", Value::dict(std::move(objects)));
  state.set("num_fruits", Value::integer(0L));
  state.set("object", Value::str("orange"));
  state.set("object_is_fruit", Value::boolean(true));
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* done = std::get_if<Done>(&out);
  ASSERT_NE(done, nullptr);
  ASSERT_EQ(done->delta.size(), 1u);
  EXPECT_EQ(done->delta.find("num_fruits")->as_int(), 1);
}

TEST(ExecStmt, OpaqueNeedsLM) {
  SourceProgram p = parse_program("sort them sensibly");
  ProgramState state;
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* needs = std::get_if<NeedsLM>(&out);
  ASSERT_NE(needs, nullptr);
  EXPECT_EQ(needs->reason.kind, HandoffReason::Kind::OpaqueStatement);
}

TEST(ExecStmt, AppendMutationFlowsIntoDelta) {
  SourceProgram p = parse_program("scores.append(2)");
  ProgramState state;
  state.set("scores", Value::list({}));
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* done = std::get_if<Done>(&out);
  ASSERT_NE(done, nullptr);
  ASSERT_EQ(done->delta.size(), 1u);
  EXPECT_EQ(render_value(*done->delta.find("scores")), "[2]");
  EXPECT_EQ(render_value(*state.find("scores")), "[]");
}

TEST(ExecStmt, SubscriptAssignmentRebuildsRoot) {
  SourceProgram p = parse_program("full_order[-1] = \"red\"");
  ProgramState state;
  state.set("full_order",
            Value::list({Value::none(), Value::none(), Value::none()}));
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* done = std::get_if<Done>(&out);
  ASSERT_NE(done, nullptr);
  EXPECT_EQ(render_value(*done->delta.find("full_order")),
            "[None, None, 'red']");
}

TEST(ExecStmt, ImportBindsModule) {
  SourceProgram p = parse_program("import numpy as np");
  ProgramState state;
  NativeRegistry registry;
  ExecOutcome out = exec_stmt(*p.statements[0], state, registry);
  auto* done = std::get_if<Done>(&out);
  ASSERT_NE(done, nullptr);
  const Value* np = done->delta.find("np");
  ASSERT_NE(np, nullptr);
  EXPECT_EQ(np->module_name(), "numpy");
}

TEST(RunDeterministic, ArithmeticProgram) {
  SourceProgram p = parse_program("answer = ((-3 + 5*8*-4) - (9 - 8*-7))");
  NativeRegistry registry;
  StepperResult r = run_deterministic(p, ProgramState{}, registry);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.final_state.find("answer")->as_int(), -228);
  EXPECT_TRUE(replay_trace(r.trace) == r.final_state);
}

TEST(RunDeterministic, FirstFailureOnSemanticCall) {
  SourceProgram p = parse_program(
      "objects = {\"orange\": 1, \"violin\": 1}\n"
      "num_fruits = 0\n"
      "for object in objects:\n"
      "    object_is_fruit = is_fruit(object)\n"
      "    if object_is_fruit:\n"
      "        num_fruits += objects[object]\n"
      "answer = num_fruits\n");
  NativeRegistry registry;
  StepperResult r = run_deterministic(p, ProgramState{}, registry);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.abort->kind, StepAbort::Kind::Handoff);
  EXPECT_EQ(r.abort->reason.kind, HandoffReason::Kind::UndefinedCall);
  EXPECT_EQ(r.abort->stmt_span.line_start, 4);
  EXPECT_FALSE(r.trace.events.empty()) << "partial trace retained";
}

TEST(RunDeterministic, EmptyProgram) {
  SourceProgram p = parse_program("");
  NativeRegistry registry;
  ProgramState initial;
  initial.set("kept", Value::integer(5L));
  StepperResult r = run_deterministic(p, initial, registry);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.final_state == initial);
  EXPECT_TRUE(r.trace.events.empty());
}

TEST(RunDeterministic, StepCapBoundsRunawayLoops) {
  SourceProgram p = parse_program("x = 0\nwhile x < 10:\n    pass\n");
  NativeRegistry registry;
  StepperResult r = run_deterministic(p, ProgramState{}, registry, 500);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.abort->kind, StepAbort::Kind::StepLimit);
}

TEST(RunDeterministic, ControlFlowAndLoops) {
  SourceProgram p = parse_program(
      "total = 0\n"
      "for i in range(10):\n"
      "    if i == 3:\n"
      "        continue\n"
      "    if i == 6:\n"
      "        break\n"
      "    total += i\n"
      "answer = total\n");
  NativeRegistry registry;
  StepperResult r = run_deterministic(p, ProgramState{}, registry);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.final_state.find("answer")->as_int(), 0 + 1 + 2 + 4 + 5);
}

TEST(RunDeterministic, IterationTagsFollowLexicalNesting) {
  SourceProgram p = parse_program(
      "total = 0\n"
      "for i in range(2):\n"
      "    total += i\n");
  NativeRegistry registry;
  StepperResult r = run_deterministic(p, ProgramState{}, registry);
  ASSERT_TRUE(r.ok());
  // total=0 (no tag), header iter1 (no tag), body (tag 1), header iter2,
  // body (tag 2)
  ASSERT_EQ(r.trace.events.size(), 5u);
  EXPECT_FALSE(r.trace.events[0].iteration.has_value());
  EXPECT_FALSE(r.trace.events[1].iteration.has_value());
  EXPECT_EQ(r.trace.events[2].iteration, std::optional<int>(1));
  EXPECT_FALSE(r.trace.events[3].iteration.has_value());
  EXPECT_EQ(r.trace.events[4].iteration, std::optional<int>(2));
}

TEST(Sandbox, BuiltinTablesAreClosed) {
  const std::vector<std::string> expected_functions = {
      "len", "range", "list", "dict", "tuple", "str", "int", "float",
      "abs", "max", "min", "sum", "sorted", "enumerate", "zip"};
  EXPECT_EQ(builtin_function_names(), expected_functions);
  const std::vector<std::string> expected_methods = {
      "append", "count", "index", "keys", "values", "items", "get",
      "split", "join", "lower", "upper", "strip", "startswith"};
  EXPECT_EQ(builtin_method_names(), expected_methods);
  static const char* kForbidden[] = {"open",  "input", "eval",  "exec",
                                     "print", "write", "read",  "compile",
                                     "getattr", "setattr", "import", "time"};
  for (const char* name : kForbidden) {
    for (const auto& b : builtin_function_names()) EXPECT_NE(b, name);
    for (const auto& m : builtin_method_names()) EXPECT_NE(m, name);
  }
}

TEST(Differential, ArithmeticExpressionsAgainstOracle) {
  NativeRegistry registry;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cocgen::GeneratedExpr gen = cocgen::generate_arith_expression(seed);
    SourceProgram p = parse_program("answer = " + gen.text);
    StepperResult r = run_deterministic(p, ProgramState{}, registry);
    ASSERT_TRUE(r.ok()) << gen.text;
    EXPECT_EQ(r.final_state.find("answer")->as_int(), gen.expected) << gen.text;
  }
}

TEST(Differential, RandomProgramsMatchReferenceEvaluator) {
  NativeRegistry registry;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 220; ++seed) {
    std::string text = cocgen::generate_program(seed);
    SourceProgram p = parse_program(text);
    StepperResult r = run_deterministic(p, ProgramState{}, registry, 100000);
    ASSERT_TRUE(r.ok()) << "seed " << seed << ":\n"
                        << text << "\nabort: " << r.abort->reason.describe();
    ProgramState expected = cocref::reference_run(p, ProgramState{});
    ASSERT_TRUE(r.final_state == expected)
        << "seed " << seed << ":\n"
        << text;
    EXPECT_TRUE(replay_trace(r.trace) == r.final_state) << "seed " << seed;
    ++checked;
  }
  EXPECT_GE(checked, 200);
}
