#include "coc/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace coc {

Value Value::list(List items) {
  return Value(Node(ListRef{std::make_shared<const List>(std::move(items))}));
}

Value Value::tuple(List items) {
  return Value(Node(TupleRef{std::make_shared<const List>(std::move(items))}));
}

Value Value::dict(Dict entries) {
  return Value(Node(DictRef{std::make_shared<const Dict>(std::move(entries))}));
}

Value::Kind Value::kind() const {
  struct Visitor {
    Kind operator()(const NoneTag&) const { return Kind::None; }
    Kind operator()(bool) const { return Kind::Bool; }
    Kind operator()(const mpz_class&) const { return Kind::Int; }
    Kind operator()(double) const { return Kind::Float; }
    Kind operator()(const StrBox&) const { return Kind::Str; }
    Kind operator()(const ListRef&) const { return Kind::List; }
    Kind operator()(const TupleRef&) const { return Kind::Tuple; }
    Kind operator()(const DictRef&) const { return Kind::Dict; }
    Kind operator()(const ModuleRef&) const { return Kind::Module; }
  };
  return std::visit(Visitor{}, node_);
}

const Value::List& Value::as_list() const {
  if (const auto* l = std::get_if<ListRef>(&node_)) return *l->items;
  return *std::get<TupleRef>(node_).items;
}

const Value::Dict& Value::as_dict() const {
  return *std::get<DictRef>(node_).entries;
}

bool Value::structural_eq(const Value& other) const {
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case Kind::None:
      return true;
    case Kind::Bool:
      return as_bool() == other.as_bool();
    case Kind::Int:
      return as_int() == other.as_int();
    case Kind::Float: {
      double a = as_float(), b = other.as_float();
      if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
      return a == b;
    }
    case Kind::Str:
      return as_str() == other.as_str();
    case Kind::List:
    case Kind::Tuple: {
      const List& a = as_list();
      const List& b = other.as_list();
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!a[i].structural_eq(b[i])) return false;
      return true;
    }
    case Kind::Dict: {
      const Dict& a = as_dict();
      const Dict& b = other.as_dict();
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!a[i].first.structural_eq(b[i].first) ||
            !a[i].second.structural_eq(b[i].second))
          return false;
      return true;
    }
    case Kind::Module:
      return module_name() == other.module_name();
  }
  return false;
}

const char* Value::type_name() const {
  switch (kind()) {
    case Kind::None:
      return "NoneType";
    case Kind::Bool:
      return "bool";
    case Kind::Int:
      return "int";
    case Kind::Float:
      return "float";
    case Kind::Str:
      return "str";
    case Kind::List:
      return "list";
    case Kind::Tuple:
      return "tuple";
    case Kind::Dict:
      return "dict";
    case Kind::Module:
      return "module";
  }
  return "?";
}

std::string render_float(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
  std::string out(buf, res.ptr);
  // to_chars prints integral doubles without a marker; keep them floats.
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

namespace {

std::string quote_str(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  out += '\'';
  for (unsigned char c : s) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '\'':
        out += "\\'";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        if (c < 0x20 || c == 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\x%02x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += '\'';
  return out;
}

}  // namespace

std::string render_value(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::None:
      return "None";
    case Value::Kind::Bool:
      return v.as_bool() ? "True" : "False";
    case Value::Kind::Int:
      return v.as_int().get_str();
    case Value::Kind::Float:
      return render_float(v.as_float());
    case Value::Kind::Str:
      return quote_str(v.as_str());
    case Value::Kind::List: {
      std::string out = "[";
      const auto& items = v.as_list();
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += render_value(items[i]);
      }
      out += ']';
      return out;
    }
    case Value::Kind::Tuple: {
      const auto& items = v.as_list();
      if (items.empty()) return "()";
      if (items.size() == 1) return "(" + render_value(items[0]) + ",)";
      std::string out = "(";
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += render_value(items[i]);
      }
      out += ')';
      return out;
    }
    case Value::Kind::Dict: {
      std::string out = "{";
      const auto& entries = v.as_dict();
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i) out += ", ";
        out += render_value(entries[i].first);
        out += ": ";
        out += render_value(entries[i].second);
      }
      out += '}';
      return out;
    }
    case Value::Kind::Module:
      return "<module '" + v.module_name() + "'>";
  }
  return "?";
}

std::string display_value(const Value& v) {
  if (v.is(Value::Kind::Str)) return v.as_str();
  return render_value(v);
}

bool truthy(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::None:
      return false;
    case Value::Kind::Bool:
      return v.as_bool();
    case Value::Kind::Int:
      return v.as_int() != 0;
    case Value::Kind::Float:
      return v.as_float() != 0.0;
    case Value::Kind::Str:
      return !v.as_str().empty();
    case Value::Kind::List:
    case Value::Kind::Tuple:
      return !v.as_list().empty();
    case Value::Kind::Dict:
      return !v.as_dict().empty();
    case Value::Kind::Module:
      return true;
  }
  return false;
}

namespace {

// Numeric rank for cross-kind equality: Bool and Int share exact integer
// comparison; Float compares exactly against integers via GMP.
bool numeric_eq(const Value& a, const Value& b) {
  auto as_mpz = [](const Value& v) -> std::optional<mpz_class> {
    if (v.is(Value::Kind::Int)) return v.as_int();
    if (v.is(Value::Kind::Bool)) return mpz_class(v.as_bool() ? 1 : 0);
    return std::nullopt;
  };
  auto ia = as_mpz(a);
  auto ib = as_mpz(b);
  if (ia && ib) return *ia == *ib;
  if (ia && b.is(Value::Kind::Float)) {
    double f = b.as_float();
    if (std::isnan(f) || std::isinf(f)) return false;
    return mpz_cmp_d(ia->get_mpz_t(), f) == 0;
  }
  if (ib && a.is(Value::Kind::Float)) return numeric_eq(b, a);
  double fa = a.as_float(), fb = b.as_float();
  return fa == fb;  // NaN != NaN, as in the source language
}

}  // namespace

bool language_eq(const Value& a, const Value& b) {
  if (a.is_numeric() && b.is_numeric()) return numeric_eq(a, b);
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::None:
      return true;
    case Value::Kind::Str:
      return a.as_str() == b.as_str();
    case Value::Kind::List:
    case Value::Kind::Tuple: {
      const auto& xs = a.as_list();
      const auto& ys = b.as_list();
      if (xs.size() != ys.size()) return false;
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (!language_eq(xs[i], ys[i])) return false;
      return true;
    }
    case Value::Kind::Dict: {
      const auto& xs = a.as_dict();
      const auto& ys = b.as_dict();
      if (xs.size() != ys.size()) return false;
      // Order-insensitive, as in the source language.
      for (const auto& [k, v] : xs) {
        bool found = false;
        for (const auto& [k2, v2] : ys) {
          if (language_eq(k, k2)) {
            if (!language_eq(v, v2)) return false;
            found = true;
            break;
          }
        }
        if (!found) return false;
      }
      return true;
    }
    case Value::Kind::Module:
      return a.module_name() == b.module_name();
    default:
      return false;
  }
}

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::size_t utf8_offset(const std::string& s, std::size_t index) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (n == index) return i;
      ++n;
    }
    ++i;
  }
  // One past the last code point maps to the byte length.
  return s.size();
}

}  // namespace coc
