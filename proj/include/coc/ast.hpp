#pragma once

#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "coc/value.hpp"

namespace coc {

// 1-based, inclusive physical-line span within a program's source text.
struct Span {
  int line_start = 0;
  int line_end = 0;

  bool operator==(const Span&) const = default;
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct LiteralExpr {
  Value value;
};

struct NameExpr {
  std::string id;
};

struct UnaryExpr {
  std::string op;  // "not" | "-" | "+"
  ExprPtr operand;
};

struct BinaryExpr {
  std::string op;  // + - * / // % **
  ExprPtr lhs;
  ExprPtr rhs;
};

struct BoolOpExpr {
  std::string op;  // "and" | "or"
  std::vector<ExprPtr> values;
};

// first op[0] rest[0] op[1] rest[1] ... (chained comparisons).
struct CompareExpr {
  ExprPtr first;
  std::vector<std::string> ops;  // == != < <= > >= in "not in" is "is not"
  std::vector<ExprPtr> rest;
};

struct CallExpr {
  ExprPtr callee;
  std::vector<ExprPtr> args;
  std::vector<std::pair<std::string, ExprPtr>> kwargs;
};

struct MethodCallExpr {
  ExprPtr receiver;
  std::string method;
  std::vector<ExprPtr> args;
  std::vector<std::pair<std::string, ExprPtr>> kwargs;
};

struct IndexExpr {
  ExprPtr object;
  ExprPtr index;
};

// object[lower:upper:step]; any part may be null.
struct SliceExpr {
  ExprPtr object;
  ExprPtr lower;
  ExprPtr upper;
  ExprPtr step;
};

struct AttributeExpr {
  ExprPtr object;
  std::string attr;
};

struct ListExpr {
  std::vector<ExprPtr> items;
};

struct TupleExpr {
  std::vector<ExprPtr> items;
};

struct DictExpr {
  std::vector<std::pair<ExprPtr, ExprPtr>> items;
};

// [element for target in iterable if condition]; condition may be null.
struct ListCompExpr {
  ExprPtr element;
  std::vector<std::string> target;  // one name, or several for tuple targets
  ExprPtr iterable;
  ExprPtr condition;
};

// body if condition else orelse
struct IfExpExpr {
  ExprPtr body;
  ExprPtr condition;
  ExprPtr orelse;
};

struct Expr {
  std::variant<LiteralExpr, NameExpr, UnaryExpr, BinaryExpr, BoolOpExpr,
               CompareExpr, CallExpr, MethodCallExpr, IndexExpr, SliceExpr,
               AttributeExpr, ListExpr, TupleExpr, DictExpr, ListCompExpr,
               IfExpExpr>
      node;

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&node);
  }
  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }
};

template <typename T>
ExprPtr make_expr(T node) {
  return std::make_unique<Expr>(Expr{std::move(node)});
}

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;
using StmtList = std::vector<StmtPtr>;

// Assignment targets: a plain name, a subscript (rebinds the root name), or
// a flat tuple of names.
struct NameTarget {
  std::string name;
};
struct IndexTarget {
  ExprPtr object;
  ExprPtr index;
};
struct TupleTarget {
  std::vector<std::string> names;
};
using AssignTarget = std::variant<NameTarget, IndexTarget, TupleTarget>;

struct AssignStmt {
  AssignTarget target;
  ExprPtr value;
};

struct AugAssignStmt {
  AssignTarget target;  // NameTarget or IndexTarget
  std::string op;       // + - * / // % **
  ExprPtr value;
};

struct ExprStmt {
  ExprPtr expr;
};

struct ForStmt {
  AssignTarget target;  // NameTarget or TupleTarget
  ExprPtr iterable;
  StmtList body;
};

struct WhileStmt {
  ExprPtr condition;
  StmtList body;
};

// elif chains become a nested IfStmt as the sole element of orelse.
struct IfStmt {
  ExprPtr condition;
  StmtList body;
  StmtList orelse;
};

// import module [as alias]  /  from module import member [as alias]
struct ImportStmt {
  std::string module;
  std::string member;  // empty for a plain import
  std::string alias;   // defaults to member or module leaf
};

struct PassStmt {};
struct BreakStmt {};
struct ContinueStmt {};

// A logical line that failed the grammar, preserved byte-exact for the
// LMulator to simulate.
struct OpaqueStmt {
  std::string text;
};

struct Stmt {
  std::variant<AssignStmt, AugAssignStmt, ExprStmt, ForStmt, WhileStmt, IfStmt,
               ImportStmt, PassStmt, BreakStmt, ContinueStmt, OpaqueStmt>
      node;
  Span span;

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&node);
  }
  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }

  // Spec-facing kind name: Assign, AugAssign, ExprStmt, For, While, If,
  // Import, Pass, Break, Continue, Opaque.
  const char* kind_name() const;
};

struct SourceProgram {
  StmtList statements;
  // Canonical text the spans index into (after fence stripping and tab/CRLF
  // normalization); equals the input byte-for-byte when no normalization
  // applied.
  std::string source_text;

  SourceProgram() = default;
  SourceProgram(SourceProgram&&) = default;
  SourceProgram& operator=(SourceProgram&&) = default;
};

// Structural AST equality, ignoring spans (round-trip checks).
bool stmt_equal(const Stmt& a, const Stmt& b);
bool program_equal(const SourceProgram& a, const SourceProgram& b);

}  // namespace coc
