#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "coc/parser.hpp"
#include "coc/rng.hpp"

using namespace coc;

namespace {

const char* kObjectCountingProgram =
    "objects = {\"orange\": 1, \"violin\": 1, \"peaches\": 2, \"apple\": 1, "
    "\"pepper\": 1, \"plum\": 3}\n"
    "num_fruits = 0\n"
    "for object in objects:\n"
    "    object_is_fruit = is_fruit(object)\n"
    "    if object_is_fruit:\n"
    "        num_fruits += objects[object]\n"
    "answer = num_fruits\n";

int count_statements(const StmtList& stmts) {
  int n = 0;
  for (const auto& s : stmts) {
    ++n;
    if (const auto* f = s->as<ForStmt>()) n += count_statements(f->body);
    if (const auto* w = s->as<WhileStmt>()) n += count_statements(w->body);
    if (const auto* i = s->as<IfStmt>())
      n += count_statements(i->body) + count_statements(i->orelse);
  }
  return n;
}

}  // namespace

TEST(Parser, MinimalAssign) {
  SourceProgram p = parse_program("answer = 0");
  ASSERT_EQ(p.statements.size(), 1u);
  const auto* assign = p.statements[0]->as<AssignStmt>();
  ASSERT_NE(assign, nullptr);
  const auto* name = std::get_if<NameTarget>(&assign->target);
  ASSERT_NE(name, nullptr);
  EXPECT_EQ(name->name, "answer");
  const auto* lit = assign->value->as<LiteralExpr>();
  ASSERT_NE(lit, nullptr);
  EXPECT_EQ(lit->value.as_int(), 0);
}

TEST(Parser, ObjectCountingProgramShape) {
  SourceProgram p = parse_program(kObjectCountingProgram);
  ASSERT_EQ(p.statements.size(), 4u);
  EXPECT_EQ(count_statements(p.statements), 7);

  EXPECT_TRUE(p.statements[0]->is<AssignStmt>());
  EXPECT_TRUE(p.statements[1]->is<AssignStmt>());
  const auto* loop = p.statements[2]->as<ForStmt>();
  ASSERT_NE(loop, nullptr);
  ASSERT_EQ(loop->body.size(), 2u);
  EXPECT_TRUE(loop->body[0]->is<AssignStmt>());
  const auto* branch = loop->body[1]->as<IfStmt>();
  ASSERT_NE(branch, nullptr);
  ASSERT_EQ(branch->body.size(), 1u);
  EXPECT_TRUE(branch->body[0]->is<AugAssignStmt>());
  EXPECT_TRUE(p.statements[3]->is<AssignStmt>());

  EXPECT_EQ(p.statements[2]->span, (Span{3, 6}));
}

TEST(Parser, PseudocodeLineBecomesOpaque) {
  SourceProgram p = parse_program("sort the fruits somehow");
  ASSERT_EQ(p.statements.size(), 1u);
  const auto* op = p.statements[0]->as<OpaqueStmt>();
  ASSERT_NE(op, nullptr);
  EXPECT_EQ(op->text, "sort the fruits somehow");
}

TEST(Parser, RenderStmtSlices) {
  SourceProgram p = parse_program("answer = 0");
  EXPECT_EQ(render_stmt(*p.statements[0], p), "answer = 0");

  SourceProgram fig = parse_program(kObjectCountingProgram);
  EXPECT_EQ(render_stmt(*fig.statements[2], fig),
            "for object in objects:\n"
            "    object_is_fruit = is_fruit(object)\n"
            "    if object_is_fruit:\n"
            "        num_fruits += objects[object]");

  SourceProgram opaque = parse_program("hello world");
  EXPECT_EQ(render_stmt(*opaque.statements[0], opaque), "hello world");
}

TEST(Parser, CoverageReconstructsSource) {
  std::vector<std::string> inputs = {
      kObjectCountingProgram,
      "a = 1\n\nb = 2\n\n\nc = a + b\n",
      "x = 1",
      "\n\nx = 1\n\n",
      "if a:\n    b = 1\nelse:\n    b = 2\n# done\n",
      "weird ^^ line\nfor x in:\n    huh\n",
  };
  for (const std::string& input : inputs) {
    SourceProgram p = parse_program(input);
    EXPECT_EQ(render_program(p), p.source_text) << input;
    EXPECT_EQ(p.source_text, input) << "no normalization expected";
  }
}

TEST(Parser, StatementRoundTrip) {
  std::vector<std::string> inputs = {
      kObjectCountingProgram,
      "x = [1,\n     2]\ny = x\n",
      "if a:\n    b = 1\nelif c:\n    b = 2\nelse:\n    b = 3\n",
      "import numpy as np\nfrom math import sqrt\n",
  };
  for (const std::string& input : inputs) {
    SourceProgram p = parse_program(input);
    SourceProgram again = parse_program(render_program(p));
    EXPECT_TRUE(program_equal(p, again)) << input;
  }
}

TEST(Parser, OpaqueTotalityFuzz) {
  SplitMix64 rng(2024);
  // Random text with well-formed (flat) indentation; interior spaces are fair
  // game, structural leading whitespace is exercised by the indent tests.
  const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
      " +-*/%=<>()[]{}:,.;'\"#!@$&?^~|\\";
  const std::string first_chars =
      "abcdefghijklmnopqrstuvwxyz0123456789+-*/%=<>()[]{}:,.;'\"#!@$&?^~|\\";
  for (int iter = 0; iter < 300; ++iter) {
    std::string text;
    int lines = rng.range(1, 8);
    for (int l = 0; l < lines; ++l) {
      int len = rng.range(0, 40);
      for (int i = 0; i < len; ++i) {
        const std::string& pool = i == 0 ? first_chars : alphabet;
        text += pool[rng.below(pool.size())];
      }
      text += '\n';
    }
    SourceProgram p;
    ASSERT_NO_THROW(p = parse_program(text));
    EXPECT_EQ(render_program(p), p.source_text);
    SourceProgram again = parse_program(p.source_text);
    EXPECT_TRUE(program_equal(p, again));
  }
}

TEST(Parser, IndentErrorCarriesLineNumber) {
  try {
    parse_program("for x in y:\n    a = 1\n  b = 2\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Parser, FenceStripping) {
  SourceProgram p = parse_program("```python\nanswer = 0\n```");
  ASSERT_EQ(p.statements.size(), 1u);
  EXPECT_TRUE(p.statements[0]->is<AssignStmt>());

  SourceProgram q =
      parse_program("Here is the code:\n```\nanswer = 1\n```\nHope that helps!");
  ASSERT_EQ(q.statements.size(), 1u);
  EXPECT_TRUE(q.statements[0]->is<AssignStmt>());
  EXPECT_EQ(q.source_text, "answer = 1\n");
}

TEST(Parser, TabsNormalize) {
  SourceProgram p = parse_program("if a:\n\tb = 1\n");
  ASSERT_EQ(p.statements.size(), 1u);
  const auto* branch = p.statements[0]->as<IfStmt>();
  ASSERT_NE(branch, nullptr);
  EXPECT_EQ(branch->body.size(), 1u);
}

TEST(Parser, DefLineIsOpaque) {
  SourceProgram p = parse_program("def is_fruit(x):\n    return True\n");
  ASSERT_GE(p.statements.size(), 1u);
  EXPECT_TRUE(p.statements[0]->is<OpaqueStmt>());
}

TEST(Parser, ElifChainNests) {
  SourceProgram p = parse_program(
      "if valid_a and not valid_b:\n"
      "    answer = \"(A)\"\n"
      "elif valid_b and not valid_a:\n"
      "    answer = \"(B)\"\n"
      "else:\n"
      "    answer = \"(C)\"\n");
  ASSERT_EQ(p.statements.size(), 1u);
  const auto* top = p.statements[0]->as<IfStmt>();
  ASSERT_NE(top, nullptr);
  ASSERT_EQ(top->orelse.size(), 1u);
  const auto* nested = top->orelse[0]->as<IfStmt>();
  ASSERT_NE(nested, nullptr);
  EXPECT_EQ(nested->orelse.size(), 1u);
  EXPECT_EQ(p.statements[0]->span, (Span{1, 6}));
}

TEST(Parser, BracketContinuationJoinsLines) {
  SourceProgram p = parse_program("x = [1,\n     2,\n     3]\ny = 4\n");
  ASSERT_EQ(p.statements.size(), 2u);
  EXPECT_EQ(p.statements[0]->span, (Span{1, 3}));
  EXPECT_EQ(render_stmt(*p.statements[0], p), "x = [1,\n     2,\n     3]");
}

TEST(Parser, TrailingSemicolonTolerated) {
  SourceProgram p = parse_program("answer = 0;");
  ASSERT_EQ(p.statements.size(), 1u);
  EXPECT_TRUE(p.statements[0]->is<AssignStmt>());

  SourceProgram multi = parse_program("a = 0; b = 1");
  ASSERT_EQ(multi.statements.size(), 1u);
  EXPECT_TRUE(multi.statements[0]->is<OpaqueStmt>());
}

TEST(Parser, CommentOnlyLineIsPass) {
  SourceProgram p = parse_program("# setup\nx = 1\n");
  ASSERT_EQ(p.statements.size(), 2u);
  EXPECT_TRUE(p.statements[0]->is<PassStmt>());
  EXPECT_TRUE(p.statements[1]->is<AssignStmt>());
}

TEST(Parser, PaperTraceConstructs) {
  // keyword arguments
  SourceProgram kw = parse_program(
      "is_match = match_description(obj, \"food container\", ret_type=\"bool\")");
  const auto* assign = kw.statements[0]->as<AssignStmt>();
  ASSERT_NE(assign, nullptr);
  const auto* call = assign->value->as<CallExpr>();
  ASSERT_NE(call, nullptr);
  EXPECT_EQ(call->args.size(), 2u);
  ASSERT_EQ(call->kwargs.size(), 1u);
  EXPECT_EQ(call->kwargs[0].first, "ret_type");

  // ternary with membership test
  SourceProgram tern = parse_program(
      "answer = options[result] if result in options else None");
  const auto* ta = tern.statements[0]->as<AssignStmt>();
  ASSERT_NE(ta, nullptr);
  EXPECT_TRUE(ta->value->is<IfExpExpr>());

  // list comprehension over a helper call
  SourceProgram comp = parse_program(
      "order = [priority[get_adjective_type(adj, valid_types)] for adj in adjs]");
  const auto* ca = comp.statements[0]->as<AssignStmt>();
  ASSERT_NE(ca, nullptr);
  EXPECT_TRUE(ca->value->is<ListCompExpr>());

  // slicing a split
  SourceProgram slice = parse_program("adjs = sentence.split(\" \")[:-1]");
  const auto* sa = slice.statements[0]->as<AssignStmt>();
  ASSERT_NE(sa, nullptr);
  EXPECT_TRUE(sa->value->is<SliceExpr>());

  // identity comparison
  SourceProgram isnone = parse_program("if pot_obj is None:\n    x = 1\n");
  const auto* branch = isnone.statements[0]->as<IfStmt>();
  ASSERT_NE(branch, nullptr);
  const auto* cmp = branch->condition->as<CompareExpr>();
  ASSERT_NE(cmp, nullptr);
  EXPECT_EQ(cmp->ops, std::vector<std::string>{"is"});

  // tuple-unpacking loop target
  SourceProgram unpack =
      parse_program("for option, sentence in options.items():\n    x = 1\n");
  const auto* loop = unpack.statements[0]->as<ForStmt>();
  ASSERT_NE(loop, nullptr);
  const auto* tt = std::get_if<TupleTarget>(&loop->target);
  ASSERT_NE(tt, nullptr);
  EXPECT_EQ(tt->names, (std::vector<std::string>{"option", "sentence"}));

  // subscript assignment
  SourceProgram sub = parse_program("full_order[-1] = \"red\"");
  const auto* sassign = sub.statements[0]->as<AssignStmt>();
  ASSERT_NE(sassign, nullptr);
  EXPECT_TRUE(std::holds_alternative<IndexTarget>(sassign->target));

  // tuple unpacking from a call
  SourceProgram multi = parse_program("_, _, objs, _ = robot.detect_objects()");
  const auto* massign = multi.statements[0]->as<AssignStmt>();
  ASSERT_NE(massign, nullptr);
  EXPECT_TRUE(std::holds_alternative<TupleTarget>(massign->target));
}

TEST(Parser, UnterminatedStringMakesLineOpaque) {
  SourceProgram p = parse_program("answer += is_sarcastic('you don't say')");
  ASSERT_EQ(p.statements.size(), 1u);
  EXPECT_TRUE(p.statements[0]->is<OpaqueStmt>());
}

TEST(Parser, HeaderWithoutBodyIsOpaque) {
  SourceProgram p = parse_program("if x:\ny = 1\n");
  ASSERT_EQ(p.statements.size(), 2u);
  EXPECT_TRUE(p.statements[0]->is<OpaqueStmt>());
  EXPECT_TRUE(p.statements[1]->is<AssignStmt>());
}

TEST(Parser, Determinism) {
  SourceProgram a = parse_program(kObjectCountingProgram);
  SourceProgram b = parse_program(kObjectCountingProgram);
  EXPECT_TRUE(program_equal(a, b));
}

TEST(Literals, ParseValueLiteral) {
  EXPECT_EQ(parse_value_literal("42").as_int(), 42);
  EXPECT_EQ(parse_value_literal("-3").as_int(), -3);
  EXPECT_DOUBLE_EQ(parse_value_literal("2.5").as_float(), 2.5);
  EXPECT_EQ(parse_value_literal("'hi'").as_str(), "hi");
  EXPECT_TRUE(parse_value_literal("True").as_bool());
  EXPECT_TRUE(parse_value_literal("None").is(Value::Kind::None));
  Value v = parse_value_literal("[1, 'a', (2, 3)]");
  ASSERT_TRUE(v.is(Value::Kind::List));
  ASSERT_EQ(v.as_list().size(), 3u);
  EXPECT_TRUE(v.as_list()[2].is(Value::Kind::Tuple));
  Value d = parse_value_literal("{'x': 1, (1, 'a'): None}");
  ASSERT_TRUE(d.is(Value::Kind::Dict));
  EXPECT_EQ(d.as_dict().size(), 2u);
  Value m = parse_value_literal("<module 'numpy'>");
  ASSERT_TRUE(m.is(Value::Kind::Module));
  EXPECT_EQ(m.module_name(), "numpy");
  EXPECT_TRUE(parse_value_literal("('a',)").is(Value::Kind::Tuple));
  EXPECT_TRUE(parse_value_literal("(1)").is(Value::Kind::Int));
  EXPECT_THROW(parse_value_literal("@"), DeltaParseError);
  EXPECT_THROW(parse_value_literal("[1,, 2]"), DeltaParseError);
}
