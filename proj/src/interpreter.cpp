#include "coc/interpreter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "coc/parser.hpp"

namespace coc {

std::string HandoffReason::describe() const {
  switch (kind) {
    case Kind::UndefinedCall:
      return "undefined call: " + message;
    case Kind::OpaqueModuleUse:
      return "opaque module use: " + message;
    case Kind::RuntimeError:
      return error_kind + ": " + message;
    case Kind::OpaqueStatement:
      return "opaque statement";
  }
  return message;
}

const char* HandoffReason::kind_name() const {
  switch (kind) {
    case Kind::UndefinedCall:
      return "UndefinedCall";
    case Kind::OpaqueModuleUse:
      return "OpaqueModuleUse";
    case Kind::RuntimeError:
      return "RuntimeError";
    case Kind::OpaqueStatement:
      return "OpaqueStatement";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Builtin tables
// ---------------------------------------------------------------------------

const std::vector<std::string>& builtin_function_names() {
  static const std::vector<std::string> names = {
      "len", "range", "list", "dict",  "tuple",  "str",       "int",
      "float", "abs", "max",  "min",   "sum",    "sorted",    "enumerate",
      "zip"};
  return names;
}

const std::vector<std::string>& builtin_method_names() {
  static const std::vector<std::string> names = {
      // list
      "append", "count", "index",
      // dict
      "keys", "values", "items", "get",
      // str (count shared with list)
      "split", "join", "lower", "upper", "strip", "startswith"};
  return names;
}

void NativeRegistry::register_function(const std::string& name, HostFunction fn) {
  const auto& builtins = builtin_function_names();
  if (std::find(builtins.begin(), builtins.end(), name) != builtins.end())
    throw std::invalid_argument("registered name collides with builtin: " + name);
  functions_[name] = std::move(fn);
}

void NativeRegistry::register_module(const std::string& name,
                                     std::map<std::string, HostFunction> functions) {
  Module m;
  m.opaque = false;
  m.functions = std::move(functions);
  modules_[name] = std::move(m);
}

const NativeRegistry::HostFunction* NativeRegistry::find_function(
    const std::string& name) const {
  auto it = functions_.find(name);
  return it == functions_.end() ? nullptr : &it->second;
}

const NativeRegistry::Module* NativeRegistry::find_module(
    const std::string& name) const {
  auto it = modules_.find(name);
  return it == modules_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Expression evaluation
// ---------------------------------------------------------------------------

namespace {

struct EvalFail {
  HandoffReason reason;
};

[[noreturn]] void rt_fail(const std::string& kind, const std::string& message) {
  throw EvalFail{HandoffReason::runtime_error(kind, message)};
}

bool is_intlike(const Value& v) {
  return v.is(Value::Kind::Int) || v.is(Value::Kind::Bool);
}

mpz_class as_integer(const Value& v, const char* what) {
  if (v.is(Value::Kind::Int)) return v.as_int();
  if (v.is(Value::Kind::Bool)) return mpz_class(v.as_bool() ? 1 : 0);
  rt_fail("TypeError", std::string(what) + " requires an integer, got " +
                           v.type_name());
}

double as_double(const Value& v) {
  if (v.is(Value::Kind::Float)) return v.as_float();
  if (v.is(Value::Kind::Int)) return v.as_int().get_d();
  if (v.is(Value::Kind::Bool)) return v.as_bool() ? 1.0 : 0.0;
  rt_fail("TypeError", std::string("expected a number, got ") + v.type_name());
}

// Guards against memory exhaustion from adversarial programs.
constexpr long kMaxRangeElements = 1000000;
constexpr unsigned long kMaxPowExponent = 1000000;
constexpr std::size_t kMaxPowResultBits = 10000000;
constexpr long kMaxReplication = 1000000;

Value int_pow(const mpz_class& base, const mpz_class& exp) {
  if (exp < 0) {
    if (base == 0) rt_fail("ZeroDivisionError", "0 cannot be raised to a negative power");
    return Value::floating(std::pow(base.get_d(), exp.get_d()));
  }
  if (!exp.fits_ulong_p() || exp.get_ui() > kMaxPowExponent)
    rt_fail("OverflowError", "exponent too large");
  unsigned long e = exp.get_ui();
  std::size_t base_bits = mpz_sizeinbase(base.get_mpz_t(), 2);
  if (base_bits * std::max(e, 1ul) > kMaxPowResultBits)
    rt_fail("OverflowError", "power result too large");
  mpz_class r;
  mpz_pow_ui(r.get_mpz_t(), base.get_mpz_t(), e);
  return Value::integer(r);
}

Value numeric_binop(const std::string& op, const Value& a, const Value& b) {
  if (!a.is_numeric() || !b.is_numeric())
    rt_fail("TypeError", "unsupported operand types for " + op + ": " +
                             a.type_name() + " and " + b.type_name());
  if (op == "/") {
    double y = as_double(b);
    if (y == 0.0) rt_fail("ZeroDivisionError", "division by zero");
    return Value::floating(as_double(a) / y);
  }
  if (is_intlike(a) && is_intlike(b)) {
    mpz_class x = as_integer(a, op.c_str()), y = as_integer(b, op.c_str());
    if (op == "+") return Value::integer(x + y);
    if (op == "-") return Value::integer(x - y);
    if (op == "*") return Value::integer(x * y);
    if (op == "//") {
      if (y == 0) rt_fail("ZeroDivisionError", "integer division by zero");
      mpz_class q;
      mpz_fdiv_q(q.get_mpz_t(), x.get_mpz_t(), y.get_mpz_t());
      return Value::integer(q);
    }
    if (op == "%") {
      if (y == 0) rt_fail("ZeroDivisionError", "integer modulo by zero");
      mpz_class r;
      mpz_fdiv_r(r.get_mpz_t(), x.get_mpz_t(), y.get_mpz_t());
      return Value::integer(r);
    }
    if (op == "**") return int_pow(x, y);
  }
  double x = as_double(a), y = as_double(b);
  if (op == "+") return Value::floating(x + y);
  if (op == "-") return Value::floating(x - y);
  if (op == "*") return Value::floating(x * y);
  if (op == "//") {
    if (y == 0.0) rt_fail("ZeroDivisionError", "float floor division by zero");
    return Value::floating(std::floor(x / y));
  }
  if (op == "%") {
    if (y == 0.0) rt_fail("ZeroDivisionError", "float modulo by zero");
    double r = std::fmod(x, y);
    if (r != 0.0 && ((r < 0.0) != (y < 0.0))) r += y;
    return Value::floating(r);
  }
  if (op == "**") {
    if (x < 0.0 && y != std::floor(y))
      rt_fail("ValueError", "negative base with fractional exponent");
    if (x == 0.0 && y < 0.0)
      rt_fail("ZeroDivisionError", "0.0 cannot be raised to a negative power");
    return Value::floating(std::pow(x, y));
  }
  rt_fail("TypeError", "unknown operator " + op);
}

// Three-way ordering; throws for unorderable kinds (as the source language
// does for e.g. int < str).
int order_values(const Value& a, const Value& b) {
  if (a.is_numeric() && b.is_numeric()) {
    if (a.is(Value::Kind::Float) || b.is(Value::Kind::Float)) {
      if (a.is(Value::Kind::Float) && std::isnan(a.as_float()))
        rt_fail("TypeError", "NaN is unordered");
      if (b.is(Value::Kind::Float) && std::isnan(b.as_float()))
        rt_fail("TypeError", "NaN is unordered");
      if (is_intlike(a)) {
        int c = mpz_cmp_d(as_integer(a, "<").get_mpz_t(), b.as_float());
        return c < 0 ? -1 : (c == 0 ? 0 : 1);
      }
      if (is_intlike(b)) {
        int c = mpz_cmp_d(as_integer(b, "<").get_mpz_t(), a.as_float());
        return c < 0 ? 1 : (c == 0 ? 0 : -1);
      }
      double x = a.as_float(), y = b.as_float();
      return x < y ? -1 : (x == y ? 0 : 1);
    }
    mpz_class x = as_integer(a, "<"), y = as_integer(b, "<");
    return x < y ? -1 : (x == y ? 0 : 1);
  }
  if (a.is(Value::Kind::Str) && b.is(Value::Kind::Str)) {
    int c = a.as_str().compare(b.as_str());
    return c < 0 ? -1 : (c == 0 ? 0 : 1);
  }
  if (a.kind() == b.kind() &&
      (a.is(Value::Kind::List) || a.is(Value::Kind::Tuple))) {
    const auto& xs = a.as_list();
    const auto& ys = b.as_list();
    for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
      int c = order_values(xs[i], ys[i]);
      if (c != 0) return c;
    }
    if (xs.size() == ys.size()) return 0;
    return xs.size() < ys.size() ? -1 : 1;
  }
  rt_fail("TypeError", std::string("'<' not supported between ") + a.type_name() +
                           " and " + b.type_name());
}

bool nan_aware_eq(const Value& a, const Value& b) {
  if (a.is(Value::Kind::Float) && std::isnan(a.as_float())) return false;
  if (b.is(Value::Kind::Float) && std::isnan(b.as_float())) return false;
  return language_eq(a, b);
}

bool hashable_key(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::Str:
    case Value::Kind::Int:
    case Value::Kind::Bool:
      return true;
    case Value::Kind::Tuple: {
      for (const Value& item : v.as_list())
        if (!hashable_key(item)) return false;
      return true;
    }
    default:
      return false;
  }
}

std::vector<Value> iterate(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::List:
    case Value::Kind::Tuple:
      return v.as_list();
    case Value::Kind::Dict: {
      std::vector<Value> keys;
      for (const auto& [k, _] : v.as_dict()) keys.push_back(k);
      return keys;
    }
    case Value::Kind::Str: {
      std::vector<Value> chars;
      const std::string& s = v.as_str();
      std::size_t n = utf8_length(s);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t a = utf8_offset(s, i);
        std::size_t b = utf8_offset(s, i + 1);
        chars.push_back(Value::str(s.substr(a, b - a)));
      }
      return chars;
    }
    default:
      rt_fail("TypeError", std::string(v.type_name()) + " is not iterable");
  }
}

long normalized_index(const Value& idx, std::size_t size, const char* what) {
  mpz_class i = as_integer(idx, what);
  long n = static_cast<long>(size);
  if (i < 0) i += n;
  if (i < 0 || i >= n) rt_fail("IndexError", std::string(what) + " index out of range");
  return i.get_si();
}

class Evaluator {
public:
  Evaluator(const ProgramState& state, const NativeRegistry& registry,
            StateDelta* pending)
      : state_(state), registry_(registry), pending_(pending) {}

  Value eval(const Expr& expr) {
    return std::visit([&](const auto& node) { return eval_node(node); }, expr.node);
  }

private:
  // Lookup order: comprehension locals, then this statement's pending
  // updates, then the program state.
  const Value* lookup(const std::string& name) const {
    for (auto it = locals_.rbegin(); it != locals_.rend(); ++it)
      if (it->first == name) return &it->second;
    if (pending_) {
      if (const Value* v = pending_->find(name)) return v;
    }
    return state_.find(name);
  }

  void record_mutation(const std::string& root, Value value) {
    if (pending_) pending_->set(root, std::move(value));
  }

  Value eval_node(const LiteralExpr& e) { return e.value; }

  Value eval_node(const NameExpr& e) {
    if (const Value* v = lookup(e.id)) return *v;
    rt_fail("NameError", "name '" + e.id + "' is not defined");
  }

  Value eval_node(const UnaryExpr& e) {
    Value v = eval(*e.operand);
    if (e.op == "not") return Value::boolean(!truthy(v));
    if (!v.is_numeric())
      rt_fail("TypeError", std::string("bad operand type for unary ") + e.op +
                               ": " + v.type_name());
    if (e.op == "-") {
      if (v.is(Value::Kind::Float)) return Value::floating(-v.as_float());
      return Value::integer(mpz_class(-as_integer(v, "-")));
    }
    if (v.is(Value::Kind::Float)) return v;
    return Value::integer(as_integer(v, "+"));
  }

  Value eval_node(const BinaryExpr& e) {
    return binop(e.op, eval(*e.lhs), eval(*e.rhs));
  }

  Value binop(const std::string& op, const Value& a, const Value& b) {
    if (op == "+") {
      if (a.is(Value::Kind::Str) && b.is(Value::Kind::Str))
        return Value::str(a.as_str() + b.as_str());
      if (a.is(Value::Kind::List) && b.is(Value::Kind::List)) {
        Value::List out = a.as_list();
        for (const Value& v : b.as_list()) out.push_back(v);
        return Value::list(std::move(out));
      }
      if (a.is(Value::Kind::Tuple) && b.is(Value::Kind::Tuple)) {
        Value::List out = a.as_list();
        for (const Value& v : b.as_list()) out.push_back(v);
        return Value::tuple(std::move(out));
      }
    }
    if (op == "*") {
      const Value* seq = nullptr;
      const Value* count = nullptr;
      if (a.is_sequence() && is_intlike(b)) {
        seq = &a;
        count = &b;
      } else if (b.is_sequence() && is_intlike(a)) {
        seq = &b;
        count = &a;
      }
      if (seq) {
        mpz_class n = as_integer(*count, "*");
        if (n < 0) n = 0;
        if (!n.fits_slong_p() || n.get_si() > kMaxReplication)
          rt_fail("OverflowError", "replication too large");
        long reps = n.get_si();
        if (seq->is(Value::Kind::Str)) {
          if (static_cast<long>(seq->as_str().size()) * reps > kMaxReplication)
            rt_fail("OverflowError", "replication too large");
          std::string out;
          for (long i = 0; i < reps; ++i) out += seq->as_str();
          return Value::str(std::move(out));
        }
        if (static_cast<long>(seq->as_list().size()) * reps > kMaxReplication)
          rt_fail("OverflowError", "replication too large");
        Value::List out;
        for (long i = 0; i < reps; ++i)
          for (const Value& v : seq->as_list()) out.push_back(v);
        return seq->is(Value::Kind::List) ? Value::list(std::move(out))
                                          : Value::tuple(std::move(out));
      }
    }
    return numeric_binop(op, a, b);
  }

  Value eval_node(const BoolOpExpr& e) {
    Value v = eval(*e.values[0]);
    for (std::size_t i = 1; i < e.values.size(); ++i) {
      bool t = truthy(v);
      if (e.op == "and" ? !t : t) return v;
      v = eval(*e.values[i]);
    }
    return v;
  }

  Value eval_node(const CompareExpr& e) {
    Value lhs = eval(*e.first);
    for (std::size_t i = 0; i < e.ops.size(); ++i) {
      Value rhs = eval(*e.rest[i]);
      if (!compare_once(e.ops[i], lhs, rhs)) return Value::boolean(false);
      lhs = std::move(rhs);
    }
    return Value::boolean(true);
  }

  bool compare_once(const std::string& op, const Value& a, const Value& b) {
    if (op == "==") return nan_aware_eq(a, b);
    if (op == "!=") return !nan_aware_eq(a, b);
    if (op == "in") return contains(b, a);
    if (op == "not in") return !contains(b, a);
    if (op == "is") return a.structural_eq(b);
    if (op == "is not") return !a.structural_eq(b);
    int c = order_values(a, b);
    if (op == "<") return c < 0;
    if (op == "<=") return c <= 0;
    if (op == ">") return c > 0;
    return c >= 0;
  }

  bool contains(const Value& haystack, const Value& needle) {
    if (haystack.is(Value::Kind::Dict)) {
      for (const auto& [k, _] : haystack.as_dict())
        if (nan_aware_eq(k, needle)) return true;
      return false;
    }
    if (haystack.is(Value::Kind::Str)) {
      if (!needle.is(Value::Kind::Str))
        rt_fail("TypeError", "'in <string>' requires a string operand");
      return haystack.as_str().find(needle.as_str()) != std::string::npos;
    }
    if (haystack.is(Value::Kind::List) || haystack.is(Value::Kind::Tuple)) {
      for (const Value& v : haystack.as_list())
        if (nan_aware_eq(v, needle)) return true;
      return false;
    }
    rt_fail("TypeError",
            std::string("argument of 'in' is not a container: ") +
                haystack.type_name());
  }

  Value eval_node(const CallExpr& e) {
    if (const auto* name = std::get_if<NameExpr>(&e.callee->node)) {
      // Callee resolution comes first so an unbound helper classifies as
      // UndefinedCall even when its arguments would not evaluate.
      if (const Value* bound = lookup(name->id)) {
        if (bound->is(Value::Kind::Module))
          return call_module_value(*bound, e.args, e.kwargs);
        rt_fail("TypeError",
                "'" + name->id + "' (" + bound->type_name() + ") is not callable");
      }
      if (const auto* host = registry_.find_function(name->id))
        return call_host(*host, name->id, e.args, e.kwargs);
      const auto& builtins = builtin_function_names();
      if (std::find(builtins.begin(), builtins.end(), name->id) != builtins.end())
        return call_builtin(name->id, eval_args(e.args, e.kwargs, name->id));
      throw EvalFail{HandoffReason::undefined_call(name->id)};
    }
    Value callee = eval(*e.callee);
    if (callee.is(Value::Kind::Module))
      return call_module_value(callee, e.args, e.kwargs);
    rt_fail("TypeError", std::string(callee.type_name()) + " is not callable");
  }

  // Calling a bare module value: "from m import f" binds f to <module 'm.f'>;
  // if the registry backs m.f with a host function, dispatch to it.
  Value call_module_value(const Value& module, const std::vector<ExprPtr>& args,
                          const std::vector<std::pair<std::string, ExprPtr>>& kwargs) {
    const std::string& full = module.module_name();
    auto dot = full.rfind('.');
    if (dot != std::string::npos) {
      const NativeRegistry::Module* m = registry_.find_module(full.substr(0, dot));
      if (m && !m->opaque) {
        auto it = m->functions.find(full.substr(dot + 1));
        if (it != m->functions.end())
          return call_host(it->second, full, args, kwargs);
      }
    }
    throw EvalFail{HandoffReason::opaque_module("call of '" + full + "'")};
  }

  std::vector<Value> eval_args(
      const std::vector<ExprPtr>& args,
      const std::vector<std::pair<std::string, ExprPtr>>& kwargs,
      const std::string& callee) {
    if (!kwargs.empty())
      rt_fail("TypeError", callee + "() got an unexpected keyword argument '" +
                               kwargs[0].first + "'");
    std::vector<Value> out;
    out.reserve(args.size());
    for (const auto& a : args) out.push_back(eval(*a));
    return out;
  }

  Value call_host(const NativeRegistry::HostFunction& fn, const std::string& name,
                  const std::vector<ExprPtr>& args,
                  const std::vector<std::pair<std::string, ExprPtr>>& kwargs) {
    std::vector<Value> argv = eval_args(args, kwargs, name);
    try {
      return fn(argv);
    } catch (const EvalFail&) {
      throw;
    } catch (const std::exception& e) {
      rt_fail("HostError", name + ": " + e.what());
    }
  }

  Value eval_node(const MethodCallExpr& e) {
    // Receiver resolution first: methods on modules hand off before their
    // arguments are touched.
    Value recv = eval(*e.receiver);
    if (recv.is(Value::Kind::Module)) {
      const NativeRegistry::Module* m = registry_.find_module(recv.module_name());
      if (m && !m->opaque) {
        auto it = m->functions.find(e.method);
        if (it != m->functions.end())
          return call_host(it->second, recv.module_name() + "." + e.method,
                           e.args, e.kwargs);
      }
      throw EvalFail{HandoffReason::opaque_module(
          "call of '" + recv.module_name() + "." + e.method + "'")};
    }
    std::vector<Value> args = eval_args(e.args, e.kwargs, e.method);
    return call_method(recv, e, args);
  }

  Value call_method(const Value& recv, const MethodCallExpr& e,
                    const std::vector<Value>& args) {
    const std::string& m = e.method;
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi)
        rt_fail("TypeError", m + "() takes " + std::to_string(lo) +
                                 (hi != lo ? ".." + std::to_string(hi) : "") +
                                 " arguments");
    };
    if (recv.is(Value::Kind::List)) {
      if (m == "append") {
        arity(1, 1);
        Value::List items = recv.as_list();
        items.push_back(args[0]);
        apply_receiver_mutation(*e.receiver, Value::list(std::move(items)));
        return Value::none();
      }
      if (m == "count") {
        arity(1, 1);
        long n = 0;
        for (const Value& v : recv.as_list())
          if (nan_aware_eq(v, args[0])) ++n;
        return Value::integer(n);
      }
      if (m == "index") {
        arity(1, 1);
        const auto& items = recv.as_list();
        for (std::size_t i = 0; i < items.size(); ++i)
          if (nan_aware_eq(items[i], args[0]))
            return Value::integer(static_cast<long>(i));
        rt_fail("ValueError", render_value(args[0]) + " is not in list");
      }
    }
    if (recv.is(Value::Kind::Dict)) {
      const auto& entries = recv.as_dict();
      if (m == "keys") {
        arity(0, 0);
        Value::List out;
        for (const auto& [k, _] : entries) out.push_back(k);
        return Value::list(std::move(out));
      }
      if (m == "values") {
        arity(0, 0);
        Value::List out;
        for (const auto& [_, v] : entries) out.push_back(v);
        return Value::list(std::move(out));
      }
      if (m == "items") {
        arity(0, 0);
        Value::List out;
        for (const auto& [k, v] : entries) out.push_back(Value::tuple({k, v}));
        return Value::list(std::move(out));
      }
      if (m == "get") {
        arity(1, 2);
        for (const auto& [k, v] : entries)
          if (nan_aware_eq(k, args[0])) return v;
        return args.size() == 2 ? args[1] : Value::none();
      }
    }
    if (recv.is(Value::Kind::Str)) {
      const std::string& s = recv.as_str();
      if (m == "lower" || m == "upper") {
        arity(0, 0);
        std::string out = s;
        for (char& c : out)
          c = m == "lower" ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                           : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return Value::str(std::move(out));
      }
      if (m == "strip") {
        arity(0, 1);
        std::string chars = " \t\r\n";
        if (args.size() == 1) {
          if (!args[0].is(Value::Kind::Str)) rt_fail("TypeError", "strip expects a string");
          chars = args[0].as_str();
        }
        auto a = s.find_first_not_of(chars);
        if (a == std::string::npos) return Value::str("");
        auto b = s.find_last_not_of(chars);
        return Value::str(s.substr(a, b - a + 1));
      }
      if (m == "startswith") {
        arity(1, 1);
        if (!args[0].is(Value::Kind::Str)) rt_fail("TypeError", "startswith expects a string");
        return Value::boolean(s.rfind(args[0].as_str(), 0) == 0);
      }
      if (m == "count") {
        arity(1, 1);
        if (!args[0].is(Value::Kind::Str)) rt_fail("TypeError", "count expects a string");
        const std::string& sub = args[0].as_str();
        if (sub.empty()) return Value::integer(static_cast<long>(utf8_length(s)) + 1);
        long n = 0;
        for (std::size_t pos = 0; (pos = s.find(sub, pos)) != std::string::npos;
             pos += sub.size())
          ++n;
        return Value::integer(n);
      }
      if (m == "split") {
        arity(0, 1);
        Value::List out;
        if (args.empty()) {
          std::size_t i = 0;
          while (i < s.size()) {
            while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
            std::size_t j = i;
            while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j > i) out.push_back(Value::str(s.substr(i, j - i)));
            i = j;
          }
          return Value::list(std::move(out));
        }
        if (!args[0].is(Value::Kind::Str)) rt_fail("TypeError", "split expects a string");
        const std::string& sep = args[0].as_str();
        if (sep.empty()) rt_fail("ValueError", "empty separator");
        std::size_t start = 0;
        while (true) {
          std::size_t hit = s.find(sep, start);
          if (hit == std::string::npos) {
            out.push_back(Value::str(s.substr(start)));
            break;
          }
          out.push_back(Value::str(s.substr(start, hit - start)));
          start = hit + sep.size();
        }
        return Value::list(std::move(out));
      }
      if (m == "join") {
        arity(1, 1);
        std::string out;
        bool first = true;
        for (const Value& v : iterate(args[0])) {
          if (!v.is(Value::Kind::Str))
            rt_fail("TypeError", "join expects an iterable of strings");
          if (!first) out += s;
          first = false;
          out += v.as_str();
        }
        return Value::str(std::move(out));
      }
    }
    rt_fail("AttributeError", std::string(recv.type_name()) +
                                  " has no method '" + m + "'");
  }

  // Rebuild the binding a mutating method touched, when the receiver is an
  // lvalue path rooted at a name. Mutations of temporaries vanish, which is
  // indistinguishable from the source language for this value domain.
  void apply_receiver_mutation(const Expr& receiver, Value rebuilt) {
    std::vector<const IndexExpr*> chain;
    const Expr* cur = &receiver;
    while (const auto* ix = std::get_if<IndexExpr>(&cur->node)) {
      chain.push_back(ix);
      cur = ix->object.get();
    }
    const auto* root = std::get_if<NameExpr>(&cur->node);
    if (!root || !lookup(root->id)) return;
    Value current = *lookup(root->id);
    // Rebuild outside-in.
    std::vector<Value> containers;
    std::vector<Value> keys;
    Value walker = current;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      Value key = eval(*(*it)->index);
      containers.push_back(walker);
      keys.push_back(key);
      walker = get_index(walker, key);
    }
    Value result = std::move(rebuilt);
    for (std::size_t i = containers.size(); i-- > 0;)
      result = set_index(containers[i], keys[i], std::move(result));
    record_mutation(root->id, std::move(result));
  }

  Value get_index(const Value& container, const Value& key) {
    if (container.is(Value::Kind::Dict)) {
      for (const auto& [k, v] : container.as_dict())
        if (nan_aware_eq(k, key)) return v;
      rt_fail("KeyError", render_value(key));
    }
    if (container.is(Value::Kind::List) || container.is(Value::Kind::Tuple)) {
      const auto& items = container.as_list();
      return items[normalized_index(key, items.size(), "list")];
    }
    if (container.is(Value::Kind::Str)) {
      const std::string& s = container.as_str();
      long i = normalized_index(key, utf8_length(s), "string");
      std::size_t a = utf8_offset(s, i);
      std::size_t b = utf8_offset(s, i + 1);
      return Value::str(s.substr(a, b - a));
    }
    rt_fail("TypeError",
            std::string(container.type_name()) + " is not subscriptable");
  }

  Value set_index(const Value& container, const Value& key, Value value) {
    if (container.is(Value::Kind::List)) {
      Value::List items = container.as_list();
      long i = normalized_index(key, items.size(), "list");
      items[i] = std::move(value);
      return Value::list(std::move(items));
    }
    if (container.is(Value::Kind::Dict)) {
      if (!hashable_key(key))
        rt_fail("TypeError", std::string("unhashable type: ") + key.type_name());
      Value::Dict entries = container.as_dict();
      for (auto& [k, v] : entries) {
        if (nan_aware_eq(k, key)) {
          v = std::move(value);
          return Value::dict(std::move(entries));
        }
      }
      entries.emplace_back(key, std::move(value));
      return Value::dict(std::move(entries));
    }
    rt_fail("TypeError", std::string(container.type_name()) +
                             " does not support item assignment");
  }

  Value eval_node(const IndexExpr& e) {
    return get_index(eval(*e.object), eval(*e.index));
  }

  Value eval_node(const SliceExpr& e) {
    Value obj = eval(*e.object);
    long step = 1;
    if (e.step) {
      mpz_class s = as_integer(eval(*e.step), "slice");
      if (s == 0) rt_fail("ValueError", "slice step cannot be zero");
      step = s.fits_slong_p() ? s.get_si() : (s > 0 ? std::numeric_limits<long>::max()
                                                    : std::numeric_limits<long>::min());
    }
    auto clamp_index = [&](const ExprPtr& part, long n, long def_fwd, long def_back,
                           bool is_start) -> long {
      if (!part) return step > 0 ? def_fwd : def_back;
      mpz_class i = as_integer(eval(*part), "slice");
      if (i < 0) i += n;
      long lo = step > 0 ? 0 : -1;
      long hi = step > 0 ? n : n - 1;
      (void)is_start;
      if (i < lo) return lo;
      if (i > hi) return hi;
      return i.get_si();
    };
    auto gather = [&](long n) {
      long start = clamp_index(e.lower, n, 0, n - 1, true);
      long stop = clamp_index(e.upper, n, n, -1, false);
      std::vector<long> idx;
      if (step > 0)
        for (long i = start; i < stop; i += step) idx.push_back(i);
      else
        for (long i = start; i > stop; i += step) idx.push_back(i);
      return idx;
    };
    if (obj.is(Value::Kind::Str)) {
      const std::string& s = obj.as_str();
      long n = static_cast<long>(utf8_length(s));
      std::string out;
      for (long i : gather(n)) {
        std::size_t a = utf8_offset(s, i);
        std::size_t b = utf8_offset(s, i + 1);
        out += s.substr(a, b - a);
      }
      return Value::str(std::move(out));
    }
    if (obj.is(Value::Kind::List) || obj.is(Value::Kind::Tuple)) {
      const auto& items = obj.as_list();
      long n = static_cast<long>(items.size());
      Value::List out;
      for (long i : gather(n)) out.push_back(items[i]);
      return obj.is(Value::Kind::List) ? Value::list(std::move(out))
                                       : Value::tuple(std::move(out));
    }
    rt_fail("TypeError", std::string(obj.type_name()) + " is not sliceable");
  }

  Value eval_node(const AttributeExpr& e) {
    Value obj = eval(*e.object);
    if (obj.is(Value::Kind::Module))
      throw EvalFail{HandoffReason::opaque_module(
          "attribute '" + obj.module_name() + "." + e.attr + "'")};
    rt_fail("AttributeError", std::string(obj.type_name()) +
                                  " has no attribute '" + e.attr + "'");
  }

  Value eval_node(const ListExpr& e) {
    Value::List items;
    items.reserve(e.items.size());
    for (const auto& item : e.items) items.push_back(eval(*item));
    return Value::list(std::move(items));
  }

  Value eval_node(const TupleExpr& e) {
    Value::List items;
    items.reserve(e.items.size());
    for (const auto& item : e.items) items.push_back(eval(*item));
    return Value::tuple(std::move(items));
  }

  Value eval_node(const DictExpr& e) {
    Value::Dict entries;
    for (const auto& [kx, vx] : e.items) {
      Value k = eval(*kx);
      if (!hashable_key(k))
        rt_fail("TypeError", std::string("unhashable type: ") + k.type_name());
      Value v = eval(*vx);
      bool replaced = false;
      for (auto& [ek, ev] : entries) {
        if (nan_aware_eq(ek, k)) {
          ev = v;
          replaced = true;
          break;
        }
      }
      if (!replaced) entries.emplace_back(std::move(k), std::move(v));
    }
    return Value::dict(std::move(entries));
  }

  Value eval_node(const ListCompExpr& e) {
    Value iterable = eval(*e.iterable);
    Value::List out;
    std::size_t overlay_base = locals_.size();
    for (const Value& item : iterate(iterable)) {
      locals_.resize(overlay_base);
      if (e.target.size() == 1) {
        locals_.emplace_back(e.target[0], item);
      } else {
        if (!(item.is(Value::Kind::List) || item.is(Value::Kind::Tuple)))
          rt_fail("TypeError", "cannot unpack non-sequence");
        const auto& parts = item.as_list();
        if (parts.size() != e.target.size())
          rt_fail("ValueError", "unpack length mismatch");
        for (std::size_t i = 0; i < parts.size(); ++i)
          locals_.emplace_back(e.target[i], parts[i]);
      }
      if (e.condition && !truthy(eval(*e.condition))) continue;
      out.push_back(eval(*e.element));
    }
    locals_.resize(overlay_base);
    return Value::list(std::move(out));
  }

  Value eval_node(const IfExpExpr& e) {
    if (truthy(eval(*e.condition))) return eval(*e.body);
    return eval(*e.orelse);
  }

  Value call_builtin(const std::string& name, const std::vector<Value>& args) {
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi)
        rt_fail("TypeError", name + "() takes " + std::to_string(lo) +
                                 (hi != lo ? " to " + std::to_string(hi) : "") +
                                 " arguments, got " + std::to_string(args.size()));
    };
    if (name == "len") {
      arity(1, 1);
      const Value& v = args[0];
      if (v.is(Value::Kind::Str))
        return Value::integer(static_cast<long>(utf8_length(v.as_str())));
      if (v.is(Value::Kind::Dict))
        return Value::integer(static_cast<long>(v.as_dict().size()));
      if (v.is_sequence())
        return Value::integer(static_cast<long>(v.as_list().size()));
      rt_fail("TypeError", std::string(v.type_name()) + " has no len()");
    }
    if (name == "range") {
      arity(1, 3);
      mpz_class start = 0, stop, step = 1;
      if (args.size() == 1) {
        stop = as_integer(args[0], "range");
      } else {
        start = as_integer(args[0], "range");
        stop = as_integer(args[1], "range");
        if (args.size() == 3) step = as_integer(args[2], "range");
      }
      if (step == 0) rt_fail("ValueError", "range() step must not be zero");
      mpz_class span = step > 0 ? stop - start : start - stop;
      if (span > 0) {
        mpz_class count = (span + abs(step) - 1) / abs(step);
        if (count > kMaxRangeElements)
          rt_fail("OverflowError", "range too large to materialize");
      }
      Value::List out;
      if (step > 0)
        for (mpz_class i = start; i < stop; i += step) out.push_back(Value::integer(i));
      else
        for (mpz_class i = start; i > stop; i += step) out.push_back(Value::integer(i));
      return Value::list(std::move(out));
    }
    if (name == "list") {
      arity(0, 1);
      if (args.empty()) return Value::list({});
      return Value::list(iterate(args[0]));
    }
    if (name == "tuple") {
      arity(0, 1);
      if (args.empty()) return Value::tuple({});
      return Value::tuple(iterate(args[0]));
    }
    if (name == "dict") {
      arity(0, 1);
      if (args.empty()) return Value::dict({});
      Value::Dict entries;
      if (args[0].is(Value::Kind::Dict)) return args[0];
      for (const Value& pair : iterate(args[0])) {
        if (!(pair.is(Value::Kind::List) || pair.is(Value::Kind::Tuple)) ||
            pair.as_list().size() != 2)
          rt_fail("TypeError", "dict() expects key/value pairs");
        const Value& k = pair.as_list()[0];
        if (!hashable_key(k))
          rt_fail("TypeError", std::string("unhashable type: ") + k.type_name());
        bool replaced = false;
        for (auto& [ek, ev] : entries)
          if (nan_aware_eq(ek, k)) {
            ev = pair.as_list()[1];
            replaced = true;
            break;
          }
        if (!replaced) entries.emplace_back(k, pair.as_list()[1]);
      }
      return Value::dict(std::move(entries));
    }
    if (name == "str") {
      arity(0, 1);
      if (args.empty()) return Value::str("");
      return Value::str(display_value(args[0]));
    }
    if (name == "int") {
      arity(0, 1);
      if (args.empty()) return Value::integer(0L);
      const Value& v = args[0];
      if (is_intlike(v)) return Value::integer(as_integer(v, "int"));
      if (v.is(Value::Kind::Float)) {
        if (!std::isfinite(v.as_float()))
          rt_fail("OverflowError", "cannot convert float infinity or NaN to int");
        mpz_class r;
        mpz_set_d(r.get_mpz_t(), v.as_float());  // truncates toward zero
        return Value::integer(r);
      }
      if (v.is(Value::Kind::Str)) {
        std::string s = v.as_str();
        auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos)
          rt_fail("ValueError", "invalid literal for int(): " + render_value(v));
        auto b = s.find_last_not_of(" \t\r\n");
        s = s.substr(a, b - a + 1);
        if (!s.empty() && s[0] == '+') s = s.substr(1);
        if (s.empty() || s == "-" ||
            s.find_first_not_of("-0123456789") != std::string::npos ||
            s.find('-', 1) != std::string::npos)
          rt_fail("ValueError", "invalid literal for int(): " + render_value(v));
        try {
          return Value::integer(mpz_class(s, 10));
        } catch (const std::invalid_argument&) {
          rt_fail("ValueError", "invalid literal for int(): " + render_value(v));
        }
      }
      rt_fail("TypeError", std::string("int() argument must be a number or string"));
    }
    if (name == "float") {
      arity(0, 1);
      if (args.empty()) return Value::floating(0.0);
      const Value& v = args[0];
      if (v.is(Value::Kind::Float)) return v;
      if (is_intlike(v)) return Value::floating(as_integer(v, "float").get_d());
      if (v.is(Value::Kind::Str)) {
        const std::string& s = v.as_str();
        char* end = nullptr;
        std::string trimmed = s;
        auto a = trimmed.find_first_not_of(" \t\r\n");
        if (a == std::string::npos)
          rt_fail("ValueError", "could not convert string to float: " + render_value(v));
        auto b = trimmed.find_last_not_of(" \t\r\n");
        trimmed = trimmed.substr(a, b - a + 1);
        double d = std::strtod(trimmed.c_str(), &end);
        if (end != trimmed.c_str() + trimmed.size() || trimmed.empty())
          rt_fail("ValueError", "could not convert string to float: " + render_value(v));
        return Value::floating(d);
      }
      rt_fail("TypeError", "float() argument must be a number or string");
    }
    if (name == "abs") {
      arity(1, 1);
      const Value& v = args[0];
      if (v.is(Value::Kind::Float)) return Value::floating(std::fabs(v.as_float()));
      return Value::integer(mpz_class(abs(as_integer(v, "abs"))));
    }
    if (name == "sum") {
      arity(1, 2);
      Value acc = args.size() == 2 ? args[1] : Value::integer(0L);
      for (const Value& v : iterate(args[0])) acc = binop("+", acc, v);
      return acc;
    }
    if (name == "max" || name == "min") {
      if (args.empty()) rt_fail("TypeError", name + "() needs arguments");
      std::vector<Value> pool = args.size() == 1 ? iterate(args[0]) : args;
      if (pool.empty()) rt_fail("ValueError", name + "() of empty sequence");
      Value best = pool[0];
      for (std::size_t i = 1; i < pool.size(); ++i) {
        int c = order_values(pool[i], best);
        if ((name == "max" && c > 0) || (name == "min" && c < 0)) best = pool[i];
      }
      return best;
    }
    if (name == "sorted") {
      arity(1, 1);
      std::vector<Value> items = iterate(args[0]);
      std::stable_sort(items.begin(), items.end(), [](const Value& a, const Value& b) {
        return order_values(a, b) < 0;
      });
      return Value::list(std::move(items));
    }
    if (name == "enumerate") {
      arity(1, 2);
      mpz_class counter = args.size() == 2 ? as_integer(args[1], "enumerate")
                                           : mpz_class(0);
      Value::List out;
      for (const Value& v : iterate(args[0])) {
        out.push_back(Value::tuple({Value::integer(counter), v}));
        ++counter;
      }
      return Value::list(std::move(out));
    }
    if (name == "zip") {
      std::vector<std::vector<Value>> seqs;
      for (const Value& a : args) seqs.push_back(iterate(a));
      std::size_t n = seqs.empty() ? 0 : seqs[0].size();
      for (const auto& s : seqs) n = std::min(n, s.size());
      Value::List out;
      for (std::size_t i = 0; i < n; ++i) {
        Value::List row;
        for (const auto& s : seqs) row.push_back(s[i]);
        out.push_back(Value::tuple(std::move(row)));
      }
      return Value::list(std::move(out));
    }
    rt_fail("NameError", "unknown builtin " + name);
  }

  const ProgramState& state_;
  const NativeRegistry& registry_;
  StateDelta* pending_;
  std::vector<std::pair<std::string, Value>> locals_;

  friend class StmtExecutor;
};

// ---------------------------------------------------------------------------
// Statement execution (single statement, pure)
// ---------------------------------------------------------------------------

class StmtExecutor {
public:
  StmtExecutor(const ProgramState& state, const NativeRegistry& registry)
      : state_(state), registry_(registry) {}

  // Loop-variable binding for one iteration (used by the stepper).
  StateDelta bind_loop_target(const AssignTarget& target, const Value& item) {
    StateDelta delta;
    if (const auto* n = std::get_if<NameTarget>(&target)) {
      delta.set(n->name, item);
      return delta;
    }
    const auto& tt = std::get<TupleTarget>(target);
    if (!(item.is(Value::Kind::List) || item.is(Value::Kind::Tuple)))
      rt_fail("TypeError", "cannot unpack non-sequence loop item");
    const auto& parts = item.as_list();
    if (parts.size() != tt.names.size())
      rt_fail("ValueError", "not enough values to unpack");
    for (std::size_t i = 0; i < tt.names.size(); ++i)
      delta.set(tt.names[i], parts[i]);
    return delta;
  }

  ExecOutcome exec(const Stmt& stmt) {
    try {
      return exec_inner(stmt);
    } catch (const EvalFail& f) {
      return NeedsLM{&stmt, f.reason};
    }
  }

  // Header-expression evaluation for compound statements, with the value.
  EvalResult eval_header(const Stmt& stmt) {
    try {
      StateDelta pending;
      Evaluator ev(state_, registry_, &pending);
      if (const auto* f = stmt.as<ForStmt>()) return ev.eval(*f->iterable);
      if (const auto* w = stmt.as<WhileStmt>()) return ev.eval(*w->condition);
      if (const auto* i = stmt.as<IfStmt>()) return ev.eval(*i->condition);
      return HandoffReason::runtime_error("TypeError", "not a compound statement");
    } catch (const EvalFail& f) {
      return f.reason;
    }
  }

private:
  ExecOutcome exec_inner(const Stmt& stmt) {
    if (const auto* s = stmt.as<AssignStmt>()) {
      StateDelta pending;
      Evaluator ev(state_, registry_, &pending);
      Value value = ev.eval(*s->value);
      assign_target(ev, pending, s->target, std::move(value));
      return Done{std::move(pending)};
    }
    if (const auto* s = stmt.as<AugAssignStmt>()) {
      StateDelta pending;
      Evaluator ev(state_, registry_, &pending);
      Value current = read_target(ev, s->target);
      Value rhs = ev.eval(*s->value);
      Value combined = ev.binop(s->op, current, rhs);
      assign_target(ev, pending, s->target, std::move(combined));
      return Done{std::move(pending)};
    }
    if (const auto* s = stmt.as<ExprStmt>()) {
      StateDelta pending;
      Evaluator ev(state_, registry_, &pending);
      ev.eval(*s->expr);
      return Done{std::move(pending)};
    }
    if (stmt.is<ForStmt>() || stmt.is<WhileStmt>() || stmt.is<IfStmt>()) {
      // Only the header is this function's business.
      EvalResult header = eval_header(stmt);
      if (auto* reason = std::get_if<HandoffReason>(&header))
        return NeedsLM{&stmt, *reason};
      return Done{StateDelta{}};
    }
    if (const auto* s = stmt.as<ImportStmt>()) {
      StateDelta delta;
      std::string target =
          s->member.empty() ? s->module : s->module + "." + s->member;
      delta.set(s->alias, Value::module(target));
      return Done{std::move(delta)};
    }
    if (stmt.is<PassStmt>()) return Done{StateDelta{}};
    if (stmt.is<BreakStmt>()) return Control{Control::Signal::Break};
    if (stmt.is<ContinueStmt>()) return Control{Control::Signal::Continue};
    return NeedsLM{&stmt, HandoffReason::opaque_statement()};
  }

  void assign_target(Evaluator& ev, StateDelta& pending, const AssignTarget& target,
                     Value value) {
    if (const auto* n = std::get_if<NameTarget>(&target)) {
      pending.set(n->name, std::move(value));
      return;
    }
    if (const auto* t = std::get_if<TupleTarget>(&target)) {
      if (!(value.is(Value::Kind::List) || value.is(Value::Kind::Tuple)))
        rt_fail("TypeError", "cannot unpack non-sequence");
      const auto& parts = value.as_list();
      if (parts.size() != t->names.size())
        rt_fail("ValueError", "not enough values to unpack (expected " +
                                  std::to_string(t->names.size()) + ", got " +
                                  std::to_string(parts.size()) + ")");
      for (std::size_t i = 0; i < t->names.size(); ++i)
        pending.set(t->names[i], parts[i]);
      return;
    }
    const auto& ix = std::get<IndexTarget>(target);
    // Resolve the container path down to a root name and rebuild it.
    std::vector<const IndexExpr*> chain;
    const Expr* cur = ix.object.get();
    while (const auto* nested = std::get_if<IndexExpr>(&cur->node)) {
      chain.push_back(nested);
      cur = nested->object.get();
    }
    const auto* root = std::get_if<NameExpr>(&cur->node);
    if (!root)
      rt_fail("TypeError", "assignment target must be rooted at a variable");
    const Value* base = pending.find(root->id);
    if (!base) base = state_.find(root->id);
    if (!base) rt_fail("NameError", "name '" + root->id + "' is not defined");
    // Outer-to-inner containers along the path.
    std::vector<Value> containers;
    std::vector<Value> keys;
    Value walker = *base;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      Value key = ev.eval(*(*it)->index);
      containers.push_back(walker);
      keys.push_back(key);
      walker = ev.get_index(walker, key);
    }
    Value final_key = ev.eval(*ix.index);
    Value result = ev.set_index(walker, final_key, std::move(value));
    for (std::size_t i = containers.size(); i-- > 0;)
      result = ev.set_index(containers[i], keys[i], std::move(result));
    pending.set(root->id, std::move(result));
  }

  Value read_target(Evaluator& ev, const AssignTarget& target) {
    if (const auto* n = std::get_if<NameTarget>(&target)) {
      Expr name{NameExpr{n->name}};
      return ev.eval(name);
    }
    if (const auto* ix = std::get_if<IndexTarget>(&target))
      return ev.get_index(ev.eval(*ix->object), ev.eval(*ix->index));
    rt_fail("TypeError", "augmented assignment needs a single target");
  }

  const ProgramState& state_;
  const NativeRegistry& registry_;
};

}  // namespace

EvalResult eval_expr(const Expr& expr, const ProgramState& state,
                     const NativeRegistry& registry) {
  try {
    StateDelta scratch;
    Evaluator ev(state, registry, &scratch);
    return ev.eval(expr);
  } catch (const EvalFail& f) {
    return f.reason;
  }
}

ExecOutcome exec_stmt(const Stmt& stmt, const ProgramState& state,
                      const NativeRegistry& registry) {
  StmtExecutor ex(state, registry);
  return ex.exec(stmt);
}

// ---------------------------------------------------------------------------
// Stepper
// ---------------------------------------------------------------------------

namespace {

class Stepper {
public:
  Stepper(const SourceProgram& program, const ProgramState& initial,
          const NativeRegistry& registry, const StepLimits& limits,
          const HandoffHandler& handler)
      : program_(program),
        registry_(registry),
        limits_(limits),
        handler_(handler),
        state_(initial) {
    trace_.program_text = program.source_text;
    trace_.initial_state = initial;
  }

  StepperResult run() {
    exec_block(program_.statements);
    trace_.final_state = state_;
    return StepperResult{state_, std::move(trace_), abort_};
  }

private:
  enum class Flow { Normal, Break, Continue, Abort };

  std::optional<int> current_iteration() const {
    if (loop_iterations_.empty()) return std::nullopt;
    return loop_iterations_.back();
  }

  bool budget_ok(const Stmt& stmt) {
    if (steps_ >= limits_.step_cap) {
      abort_ = StepAbort{StepAbort::Kind::StepLimit,
                         HandoffReason::runtime_error(
                             "StepLimitExceeded",
                             "statement budget of " +
                                 std::to_string(limits_.step_cap) + " exhausted"),
                         stmt.span, render_stmt(stmt, program_)};
      return false;
    }
    if (limits_.deadline &&
        std::chrono::steady_clock::now() > *limits_.deadline) {
      abort_ = StepAbort{StepAbort::Kind::Deadline,
                         HandoffReason::runtime_error("Timeout", "deadline exceeded"),
                         stmt.span, render_stmt(stmt, program_)};
      return false;
    }
    return true;
  }

  void record(const Stmt& stmt, ExecutorKind executor, StateDelta delta,
              std::optional<int> iteration) {
    ++steps_;
    TraceEvent event;
    event.stmt_span = stmt.span;
    event.executor = executor;
    event.delta = std::move(delta);
    event.iteration = iteration;
    state_ = apply_delta(state_, event.delta);
    trace_.events.push_back(std::move(event));
  }

  // Routes a handoff to the handler; applies and records its delta.
  // Returns nullptr on abort, else the recorded event's delta.
  const StateDelta* simulate(const Stmt& stmt, HandoffSite site,
                             const HandoffReason& reason,
                             std::optional<int> iteration) {
    std::optional<StateDelta> delta =
        handler_(stmt, site, reason, state_, trace_);
    if (!delta) {
      abort_ = StepAbort{StepAbort::Kind::Handoff, reason, stmt.span,
                         render_stmt(stmt, program_)};
      return nullptr;
    }
    record(stmt, ExecutorKind::LMulator, std::move(*delta), iteration);
    return &trace_.events.back().delta;
  }

  Flow exec_block(const StmtList& stmts) {
    for (const auto& stmt : stmts) {
      Flow flow = exec_one(*stmt);
      if (flow != Flow::Normal) return flow;
    }
    return Flow::Normal;
  }

  Flow exec_one(const Stmt& stmt) {
    if (abort_) return Flow::Abort;
    if (!budget_ok(stmt)) return Flow::Abort;
    if (const auto* f = stmt.as<ForStmt>()) return exec_for(stmt, *f);
    if (const auto* w = stmt.as<WhileStmt>()) return exec_while(stmt, *w);
    if (const auto* i = stmt.as<IfStmt>()) return exec_if(stmt, *i);

    ExecOutcome outcome = exec_stmt(stmt, state_, registry_);
    if (auto* done = std::get_if<Done>(&outcome)) {
      record(stmt, ExecutorKind::Interpreter, std::move(done->delta),
             current_iteration());
      return Flow::Normal;
    }
    if (auto* control = std::get_if<Control>(&outcome)) {
      record(stmt, ExecutorKind::Interpreter, StateDelta{}, current_iteration());
      return control->signal == Control::Signal::Break ? Flow::Break
                                                       : Flow::Continue;
    }
    auto& needs = std::get<NeedsLM>(outcome);
    if (!simulate(stmt, HandoffSite::Statement, needs.reason, current_iteration()))
      return Flow::Abort;
    return Flow::Normal;
  }

  // Branch decision from a simulated condition delta; aborts on a missing
  // reserved binding.
  std::optional<bool> simulated_condition(const Stmt& stmt,
                                          const HandoffReason& reason) {
    const StateDelta* delta =
        simulate(stmt, HandoffSite::Condition, reason, current_iteration());
    if (!delta) return std::nullopt;
    const Value* cond = delta->find(kCondVar);
    if (!cond) {
      abort_ = StepAbort{StepAbort::Kind::Protocol,
                         HandoffReason::runtime_error(
                             "SimulationProtocol",
                             std::string("simulated condition did not bind ") +
                                 kCondVar),
                         stmt.span, render_stmt(stmt, program_)};
      return std::nullopt;
    }
    return truthy(*cond);
  }

  Flow exec_if(const Stmt& stmt, const IfStmt& node) {
    StmtExecutor ex(state_, registry_);
    EvalResult header = ex.eval_header(stmt);
    bool take;
    if (auto* reason = std::get_if<HandoffReason>(&header)) {
      auto decision = simulated_condition(stmt, *reason);
      if (!decision) return Flow::Abort;
      take = *decision;
    } else {
      record(stmt, ExecutorKind::Interpreter, StateDelta{}, current_iteration());
      take = truthy(std::get<Value>(header));
    }
    return exec_block(take ? node.body : node.orelse);
  }

  Flow exec_while(const Stmt& stmt, const WhileStmt& node) {
    int iteration = 0;
    while (true) {
      if (!budget_ok(stmt)) return Flow::Abort;
      StmtExecutor ex(state_, registry_);
      EvalResult header = ex.eval_header(stmt);
      bool take;
      if (auto* reason = std::get_if<HandoffReason>(&header)) {
        auto decision = simulated_condition(stmt, *reason);
        if (!decision) return Flow::Abort;
        take = *decision;
      } else {
        record(stmt, ExecutorKind::Interpreter, StateDelta{}, current_iteration());
        take = truthy(std::get<Value>(header));
      }
      if (!take) return Flow::Normal;
      ++iteration;
      loop_iterations_.push_back(iteration);
      Flow flow = exec_block(node.body);
      loop_iterations_.pop_back();
      if (flow == Flow::Break) return Flow::Normal;
      if (flow == Flow::Abort) return Flow::Abort;
      // Continue and Normal both re-check the condition.
    }
  }

  Flow exec_for(const Stmt& stmt, const ForStmt& node) {
    StmtExecutor ex(state_, registry_);
    std::size_t next_index = 0;
    int iteration = 0;
    while (true) {
      if (!budget_ok(stmt)) return Flow::Abort;
      // The iterable is re-evaluated against the current state each
      // iteration; the LMulator may have rebound it meanwhile.
      EvalResult header = ex.eval_header(stmt);
      bool simulated = false;
      if (auto* reason = std::get_if<HandoffReason>(&header)) {
        const StateDelta* delta = simulate(stmt, HandoffSite::ForHeader, *reason,
                                           current_iteration());
        if (!delta) return Flow::Abort;
        const Value* flag = delta->find(kLoopContinueVar);
        if (!flag) {
          abort_ = StepAbort{StepAbort::Kind::Protocol,
                             HandoffReason::runtime_error(
                                 "SimulationProtocol",
                                 std::string("simulated loop header did not bind ") +
                                     kLoopContinueVar),
                             stmt.span, render_stmt(stmt, program_)};
          return Flow::Abort;
        }
        if (!truthy(*flag)) return Flow::Normal;
        simulated = true;
      } else {
        std::vector<Value> items;
        try {
          items = iterate(std::get<Value>(header));
        } catch (const EvalFail& f) {
          // Non-iterable loop subject: classified as a header handoff.
          const StateDelta* delta =
              simulate(stmt, HandoffSite::ForHeader, f.reason, current_iteration());
          if (!delta) return Flow::Abort;
          const Value* flag = delta->find(kLoopContinueVar);
          if (!flag) {
            abort_ = StepAbort{StepAbort::Kind::Protocol,
                               HandoffReason::runtime_error(
                                   "SimulationProtocol",
                                   std::string("simulated loop header did not bind ") +
                                       kLoopContinueVar),
                               stmt.span, render_stmt(stmt, program_)};
            return Flow::Abort;
          }
          if (!truthy(*flag)) return Flow::Normal;
          simulated = true;
        }
        if (!simulated) {
          if (next_index >= items.size()) return Flow::Normal;
          StateDelta bind;
          try {
            bind = ex.bind_loop_target(node.target, items[next_index]);
          } catch (const EvalFail& f) {
            const StateDelta* delta = simulate(stmt, HandoffSite::ForHeader,
                                               f.reason, current_iteration());
            if (!delta) return Flow::Abort;
            const Value* flag = delta->find(kLoopContinueVar);
            if (!flag || !truthy(*flag)) return Flow::Normal;
            ++next_index;
            simulated = true;
          }
          if (!simulated) {
            record(stmt, ExecutorKind::Interpreter, std::move(bind),
                   current_iteration());
            ++next_index;
          }
        }
      }
      ++iteration;
      loop_iterations_.push_back(iteration);
      Flow flow = exec_block(node.body);
      loop_iterations_.pop_back();
      if (flow == Flow::Break) return Flow::Normal;
      if (flow == Flow::Abort) return Flow::Abort;
    }
  }

  const SourceProgram& program_;
  const NativeRegistry& registry_;
  StepLimits limits_;
  const HandoffHandler& handler_;
  ProgramState state_;
  ExecutionTrace trace_;
  std::optional<StepAbort> abort_;
  int steps_ = 0;
  std::vector<int> loop_iterations_;
};

}  // namespace

StepperResult run_stepper(const SourceProgram& program, const ProgramState& initial,
                          const NativeRegistry& registry, const StepLimits& limits,
                          const HandoffHandler& handler) {
  Stepper stepper(program, initial, registry, limits, handler);
  return stepper.run();
}

StepperResult run_deterministic(const SourceProgram& program,
                                const ProgramState& initial,
                                const NativeRegistry& registry, int step_cap) {
  StepLimits limits;
  limits.step_cap = step_cap;
  HandoffHandler decline = [](const Stmt&, HandoffSite, const HandoffReason&,
                              const ProgramState&, const ExecutionTrace&)
      -> std::optional<StateDelta> { return std::nullopt; };
  return run_stepper(program, initial, registry, limits, decline);
}

}  // namespace coc
