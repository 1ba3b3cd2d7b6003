#include "support/program_gen.hpp"

#include <map>
#include <set>
#include <vector>

#include "coc/rng.hpp"

namespace cocgen {

using coc::SplitMix64;

namespace {

// ---------------------------------------------------------------------------
// Arithmetic expressions with an inline oracle
// ---------------------------------------------------------------------------

GeneratedExpr gen_arith(SplitMix64& rng, int depth) {
  if (depth <= 0 || rng.chance(0.3)) {
    long v = rng.range(-9, 9);
    if (v < 0) return {"(" + std::to_string(v) + ")", mpz_class(v)};
    return {std::to_string(v), mpz_class(v)};
  }
  int op = rng.range(0, 5);
  if (op == 5) {
    GeneratedExpr base = gen_arith(rng, 0);
    int exp = rng.range(0, 3);
    mpz_class r;
    mpz_pow_ui(r.get_mpz_t(), base.expected.get_mpz_t(), exp);
    return {"(" + base.text + " ** " + std::to_string(exp) + ")", r};
  }
  GeneratedExpr lhs = gen_arith(rng, depth - 1);
  if (op == 3 || op == 4) {
    long d = rng.range(1, 9);
    mpz_class div(d), r;
    if (op == 3) {
      mpz_fdiv_q(r.get_mpz_t(), lhs.expected.get_mpz_t(), div.get_mpz_t());
      return {"(" + lhs.text + " // " + std::to_string(d) + ")", r};
    }
    mpz_fdiv_r(r.get_mpz_t(), lhs.expected.get_mpz_t(), div.get_mpz_t());
    return {"(" + lhs.text + " % " + std::to_string(d) + ")", r};
  }
  GeneratedExpr rhs = gen_arith(rng, depth - 1);
  switch (op) {
    case 0:
      return {"(" + lhs.text + " + " + rhs.text + ")", lhs.expected + rhs.expected};
    case 1:
      return {"(" + lhs.text + " - " + rhs.text + ")", lhs.expected - rhs.expected};
    default:
      return {"(" + lhs.text + " * " + rhs.text + ")", lhs.expected * rhs.expected};
  }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------
//
// Scope discipline: a binding introduced inside a conditionally executed
// block is forgotten once the block closes, so no statement can read a name
// that might be unbound at runtime. Loop counters and iterated containers
// are hidden from their own bodies, which keeps every loop terminating and
// iteration snapshots equivalent to per-iteration re-evaluation.

enum class VarType { Int, Str, ListInt, DictStrInt };

struct Scope {
  std::map<std::string, VarType> vars;
  std::map<std::string, std::set<std::string>> dict_keys;
};

struct GenState {
  SplitMix64 rng;
  Scope scope;
  int counters = 0;

  explicit GenState(std::uint64_t seed) : rng(seed) {}

  std::vector<std::string> of_type(VarType t) const {
    std::vector<std::string> out;
    for (const auto& [name, type] : scope.vars)
      if (type == t) out.push_back(name);
    return out;
  }

  std::string fresh(const char* prefix) {
    return std::string(prefix) + std::to_string(counters++);
  }
};

const std::vector<std::string>& str_pool() {
  static const std::vector<std::string> pool = {
      "'apple'", "'pear'", "'kiwi fruit'", "'melon'", "'  padded  '", "'x,y,z'"};
  return pool;
}

const std::vector<std::string>& key_pool() {
  static const std::vector<std::string> pool = {"'a'", "'b'", "'c'", "'d'", "'e'"};
  return pool;
}

std::string gen_int_expr(GenState& g, int depth);

std::string gen_int_atom(GenState& g) {
  auto ints = g.of_type(VarType::Int);
  int choice = g.rng.range(0, 5);
  if (choice <= 1 && !ints.empty()) return g.rng.pick(ints);
  if (choice == 2) {
    auto lists = g.of_type(VarType::ListInt);
    if (!lists.empty()) {
      const std::string& l = g.rng.pick(lists);
      switch (g.rng.range(0, 3)) {
        case 0:
          return "len(" + l + ")";
        case 1:
          return "sum(" + l + ")";
        case 2:
          return "max(" + l + ")";
        default:
          return "min(" + l + ")";
      }
    }
  }
  if (choice == 3) {
    auto strs = g.of_type(VarType::Str);
    if (!strs.empty()) return "len(" + g.rng.pick(strs) + ")";
  }
  if (choice == 4) {
    auto dicts = g.of_type(VarType::DictStrInt);
    if (!dicts.empty()) {
      const std::string& d = g.rng.pick(dicts);
      const auto& keys = g.scope.dict_keys[d];
      if (!keys.empty()) {
        auto it = keys.begin();
        std::advance(it, g.rng.below(keys.size()));
        return d + "[" + *it + "]";
      }
      return "len(" + d + ")";
    }
  }
  long v = g.rng.range(-9, 9);
  return v < 0 ? "(" + std::to_string(v) + ")" : std::to_string(v);
}

std::string gen_int_expr(GenState& g, int depth) {
  if (depth <= 0 || g.rng.chance(0.35)) return gen_int_atom(g);
  switch (g.rng.range(0, 6)) {
    case 0:
      return "(" + gen_int_expr(g, depth - 1) + " + " + gen_int_expr(g, depth - 1) + ")";
    case 1:
      return "(" + gen_int_expr(g, depth - 1) + " - " + gen_int_expr(g, depth - 1) + ")";
    case 2:
      return "(" + gen_int_expr(g, depth - 1) + " * " + std::to_string(g.rng.range(-3, 3)) + ")";
    case 3:
      return "(" + gen_int_expr(g, depth - 1) + " // " + std::to_string(g.rng.range(1, 9)) + ")";
    case 4:
      return "(" + gen_int_expr(g, depth - 1) + " % " + std::to_string(g.rng.range(1, 9)) + ")";
    case 5:
      return "abs(" + gen_int_expr(g, depth - 1) + ")";
    default: {
      auto lists = g.of_type(VarType::ListInt);
      if (!lists.empty()) {
        const std::string& l = g.rng.pick(lists);
        return l + "[" + gen_int_expr(g, 0) + " % len(" + l + ")]";
      }
      return gen_int_atom(g);
    }
  }
}

std::string gen_bool_expr(GenState& g, int depth) {
  if (depth <= 0 || g.rng.chance(0.4)) {
    static const std::vector<std::string> cmps = {"<", "<=", ">", ">=", "==", "!="};
    return gen_int_expr(g, 1) + " " + g.rng.pick(cmps) + " " + gen_int_expr(g, 1);
  }
  switch (g.rng.range(0, 3)) {
    case 0:
      return "(" + gen_bool_expr(g, depth - 1) + " and " + gen_bool_expr(g, depth - 1) + ")";
    case 1:
      return "(" + gen_bool_expr(g, depth - 1) + " or " + gen_bool_expr(g, depth - 1) + ")";
    case 2:
      return "not " + gen_bool_expr(g, depth - 1);
    default: {
      auto dicts = g.of_type(VarType::DictStrInt);
      if (!dicts.empty())
        return g.rng.pick(key_pool()) + " in " + g.rng.pick(dicts);
      return gen_bool_expr(g, 0);
    }
  }
}

std::string gen_str_expr(GenState& g) {
  auto strs = g.of_type(VarType::Str);
  switch (g.rng.range(0, 4)) {
    case 0:
      if (!strs.empty()) return g.rng.pick(strs) + " + " + g.rng.pick(str_pool());
      return g.rng.pick(str_pool());
    case 1:
      if (!strs.empty()) return g.rng.pick(strs) + ".upper()";
      return g.rng.pick(str_pool());
    case 2:
      if (!strs.empty()) return g.rng.pick(strs) + ".strip()";
      return g.rng.pick(str_pool());
    case 3:
      return "str(" + gen_int_expr(g, 1) + ")";
    default:
      return g.rng.pick(str_pool());
  }
}

std::string gen_list_expr(GenState& g) {
  switch (g.rng.range(0, 3)) {
    case 0: {
      int n = g.rng.range(1, 5);
      std::string out = "[";
      for (int i = 0; i < n; ++i) {
        if (i) out += ", ";
        out += std::to_string(g.rng.range(-9, 9));
      }
      return out + "]";
    }
    case 1:
      return "range(1, " + std::to_string(g.rng.range(2, 8)) + ")";
    case 2: {
      auto lists = g.of_type(VarType::ListInt);
      if (!lists.empty()) return "sorted(" + g.rng.pick(lists) + ")";
      return "[" + std::to_string(g.rng.range(0, 9)) + "]";
    }
    default: {
      auto lists = g.of_type(VarType::ListInt);
      if (!lists.empty())
        return "[c0 * 2 for c0 in " + g.rng.pick(lists) + "]";
      return "[" + std::to_string(g.rng.range(0, 9)) + "]";
    }
  }
}

void emit(std::string& out, int indent, const std::string& line) {
  out.append(static_cast<std::size_t>(indent) * 4, ' ');
  out += line;
  out += '\n';
}

// loop_kind: 0 = not in a loop, 1 = for body, 2 = while body (continue would
// skip the counter decrement there, so only break is offered).
void gen_block(GenState& g, std::string& out, int indent, int depth, int loop_kind,
               const GenOptions& options);

void gen_statement(GenState& g, std::string& out, int indent, int depth,
                   int loop_kind, const GenOptions& options) {
  int kind = g.rng.range(0, 9);
  auto ints = g.of_type(VarType::Int);

  if (kind <= 2) {
    std::string name = (ints.empty() || g.rng.chance(0.4)) ? g.fresh("n")
                                                           : g.rng.pick(ints);
    emit(out, indent, name + " = " + gen_int_expr(g, 2));
    g.scope.vars[name] = VarType::Int;
    return;
  }
  if (kind == 3 && !ints.empty()) {
    static const std::vector<std::string> augs = {"+=", "-=", "*="};
    emit(out, indent,
         g.rng.pick(ints) + " " + g.rng.pick(augs) + " " + gen_int_expr(g, 1));
    return;
  }
  if (kind == 4) {
    auto lists = g.of_type(VarType::ListInt);
    if (!lists.empty() && g.rng.chance(0.6)) {
      emit(out, indent, g.rng.pick(lists) + ".append(" + gen_int_expr(g, 1) + ")");
      return;
    }
    std::string name = g.fresh("xs");
    emit(out, indent, name + " = " + gen_list_expr(g));
    g.scope.vars[name] = VarType::ListInt;
    return;
  }
  if (kind == 5) {
    auto dicts = g.of_type(VarType::DictStrInt);
    if (!dicts.empty() && g.rng.chance(0.6)) {
      const std::string& d = g.rng.pick(dicts);
      std::string key = g.rng.pick(key_pool());
      emit(out, indent, d + "[" + key + "] = " + gen_int_expr(g, 1));
      g.scope.dict_keys[d].insert(key);
      return;
    }
    std::string name = g.fresh("m");
    std::string k1 = g.rng.pick(key_pool());
    std::string k2 = g.rng.pick(key_pool());
    std::string lit = "{" + k1 + ": " + gen_int_expr(g, 0);
    if (k2 != k1) lit += ", " + k2 + ": " + gen_int_expr(g, 0);
    lit += "}";
    emit(out, indent, name + " = " + lit);
    g.scope.vars[name] = VarType::DictStrInt;
    g.scope.dict_keys[name].insert(k1);
    if (k2 != k1) g.scope.dict_keys[name].insert(k2);
    return;
  }
  if (kind == 6) {
    std::string name = g.fresh("s");
    emit(out, indent, name + " = " + gen_str_expr(g));
    g.scope.vars[name] = VarType::Str;
    return;
  }
  if (kind == 7 && depth < options.max_block_depth) {
    emit(out, indent, "if " + gen_bool_expr(g, 1) + ":");
    Scope saved = g.scope;
    gen_block(g, out, indent + 1, depth + 1, loop_kind, options);
    g.scope = saved;
    if (g.rng.chance(0.5)) {
      emit(out, indent, "else:");
      gen_block(g, out, indent + 1, depth + 1, loop_kind, options);
      g.scope = saved;
    }
    return;
  }
  if (kind == 8 && options.with_loops && depth < options.max_block_depth) {
    if (g.rng.chance(0.5)) {
      std::string var = g.fresh("i");
      std::string iter;
      auto lists = g.of_type(VarType::ListInt);
      Scope saved = g.scope;
      if (!lists.empty() && g.rng.chance(0.4)) {
        const std::string& l = g.rng.pick(lists);
        iter = l;
        g.scope.vars.erase(l);  // body must not mutate what it iterates
      } else {
        iter = "range(" + std::to_string(g.rng.range(1, 6)) + ")";
      }
      emit(out, indent, "for " + var + " in " + iter + ":");
      g.scope.vars[var] = VarType::Int;
      gen_block(g, out, indent + 1, depth + 1, 1, options);
      g.scope = saved;
      // The loop ran at least once, so the loop variable stays bound.
      g.scope.vars[var] = VarType::Int;
      return;
    }
    std::string var = g.fresh("w");
    emit(out, indent, var + " = " + std::to_string(g.rng.range(1, 6)));
    emit(out, indent, "while " + var + " > 0:");
    Scope saved = g.scope;  // counter is hidden from the body entirely
    gen_block(g, out, indent + 1, depth + 1, 2, options);
    g.scope = saved;
    emit(out, indent + 1, var + " -= 1");
    g.scope.vars[var] = VarType::Int;
    return;
  }
  if (loop_kind != 0 && g.rng.chance(0.2)) {
    bool can_continue = loop_kind == 1;
    emit(out, indent, "if " + gen_bool_expr(g, 0) + ":");
    emit(out, indent + 1,
         (can_continue && g.rng.chance(0.5)) ? "continue" : "break");
    return;
  }
  if (!ints.empty()) {
    emit(out, indent, g.rng.pick(ints) + " += " + gen_int_expr(g, 1));
  } else {
    std::string name = g.fresh("n");
    emit(out, indent, name + " = " + gen_int_expr(g, 1));
    g.scope.vars[name] = VarType::Int;
  }
}

void gen_block(GenState& g, std::string& out, int indent, int depth, int loop_kind,
               const GenOptions& options) {
  int n = g.rng.range(1, 3);
  for (int i = 0; i < n; ++i)
    gen_statement(g, out, indent, depth, loop_kind, options);
}

}  // namespace

GeneratedExpr generate_arith_expression(std::uint64_t seed, int max_depth) {
  SplitMix64 rng(seed);
  GeneratedExpr lhs = gen_arith(rng, max_depth);
  GeneratedExpr rhs = gen_arith(rng, max_depth - 1);
  return {"(" + lhs.text + " - " + rhs.text + ")", lhs.expected - rhs.expected};
}

std::string generate_program(std::uint64_t seed, const GenOptions& options) {
  GenState g(seed);
  std::string out;
  emit(out, 0, "n_base = " + std::to_string(g.rng.range(-5, 9)));
  g.scope.vars["n_base"] = VarType::Int;
  int n = g.rng.range(3, options.max_statements);
  for (int i = 0; i < n; ++i) gen_statement(g, out, 0, 0, 0, options);
  if (options.end_with_answer) {
    auto ints = g.of_type(VarType::Int);
    emit(out, 0,
         "answer = " + (ints.empty() ? std::string("0") : g.rng.pick(ints)));
  }
  return out;
}

}  // namespace cocgen
