#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace coc {

// Runtime value domain: the built-in types the interpreter evaluates and the
// LMulator is allowed to write back into the program state. Values are
// immutable; "mutating" operations build new values.
class Value {
public:
  enum class Kind { None, Bool, Int, Float, Str, List, Tuple, Dict, Module };

  using List = std::vector<Value>;
  // Insertion-ordered; key lookup is linear with language equality.
  using Dict = std::vector<std::pair<Value, Value>>;

  Value() : node_(NoneTag{}) {}

  static Value none() { return Value(); }
  static Value boolean(bool v) { return Value(Node(v)); }
  static Value integer(long v) { return Value(Node(mpz_class(v))); }
  static Value integer(mpz_class v) { return Value(Node(std::move(v))); }
  static Value floating(double v) { return Value(Node(v)); }
  static Value str(std::string v) { return Value(Node(StrBox{std::move(v)})); }
  static Value list(List items);
  static Value tuple(List items);
  static Value dict(Dict entries);
  static Value module(std::string name) {
    return Value(Node(ModuleRef{std::move(name)}));
  }

  Kind kind() const;
  bool is(Kind k) const { return kind() == k; }
  bool is_numeric() const {
    Kind k = kind();
    return k == Kind::Int || k == Kind::Float || k == Kind::Bool;
  }
  bool is_sequence() const {
    Kind k = kind();
    return k == Kind::List || k == Kind::Tuple || k == Kind::Str;
  }

  bool as_bool() const { return std::get<bool>(node_); }
  const mpz_class& as_int() const { return std::get<mpz_class>(node_); }
  double as_float() const { return std::get<double>(node_); }
  const std::string& as_str() const { return std::get<StrBox>(node_).text; }
  const List& as_list() const;   // List or Tuple
  const Dict& as_dict() const;
  const std::string& module_name() const {
    return std::get<ModuleRef>(node_).name;
  }

  // Storage equality: structural, kind-sensitive (Int 1 != Float 1.0).
  bool structural_eq(const Value& other) const;

  // Name of the kind as used in diagnostics ("int", "list", ...).
  const char* type_name() const;

private:
  struct NoneTag {};
  struct StrBox {
    std::string text;
  };
  struct ModuleRef {
    std::string name;
  };
  struct ListRef {
    std::shared_ptr<const List> items;
  };
  struct TupleRef {
    std::shared_ptr<const List> items;
  };
  struct DictRef {
    std::shared_ptr<const Dict> entries;
  };

  using Node = std::variant<NoneTag, bool, mpz_class, double, StrBox, ListRef,
                            TupleRef, DictRef, ModuleRef>;

  explicit Value(Node node) : node_(std::move(node)) {}

  Node node_;
};

// Python-style repr: literal syntax, strings single-quoted, floats in
// shortest round-trip form with a decimal marker, modules as <module 'name'>.
std::string render_value(const Value& v);

// Python-style str(): Str values raw, everything else via render_value.
std::string display_value(const Value& v);

// Shortest round-trip decimal rendering with a ".0" / exponent marker so the
// result always re-parses as a float.
std::string render_float(double v);

// Truthiness: empty containers, zero, empty string and None are false.
bool truthy(const Value& v);

// Language equality: numeric kinds compare by value (1 == 1.0 == True);
// containers recurse; distinct non-numeric kinds are unequal.
bool language_eq(const Value& a, const Value& b);

// UTF-8 code point count (Python len semantics for strings).
std::size_t utf8_length(const std::string& s);

// Byte offset of the i-th code point; i may equal the code point count.
std::size_t utf8_offset(const std::string& s, std::size_t index);

}  // namespace coc
