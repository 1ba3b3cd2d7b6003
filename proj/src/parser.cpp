#include "coc/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <optional>
#include <unordered_set>

namespace coc {

namespace {

// ---------------------------------------------------------------------------
// Text canonicalization
// ---------------------------------------------------------------------------

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      out += '\n';
    } else if (c == '\t') {
      out += "    ";
    } else {
      out += c;
    }
  }
  return out;
}

struct LineIndex {
  // Byte offset of each line's first character and one past its last
  // character (excluding the newline).
  std::vector<std::pair<std::size_t, std::size_t>> bounds;
  bool ends_with_newline = false;

  explicit LineIndex(const std::string& text) {
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '\n') {
        bounds.emplace_back(start, i);
        start = i + 1;
      }
    }
    if (start < text.size()) {
      bounds.emplace_back(start, text.size());
    } else if (!text.empty()) {
      ends_with_newline = true;
    }
  }

  std::size_t count() const { return bounds.size(); }

  std::string line(const std::string& text, std::size_t i) const {
    return text.substr(bounds[i].first, bounds[i].second - bounds[i].first);
  }

  // Slice covering physical lines [a, b], 0-based inclusive.
  std::string slice(const std::string& text, std::size_t a, std::size_t b) const {
    return text.substr(bounds[a].first, bounds[b].second - bounds[a].first);
  }
};

int indent_of(const std::string& line) {
  int n = 0;
  while (n < static_cast<int>(line.size()) && line[n] == ' ') ++n;
  return n;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

bool is_comment_only(const std::string& line) {
  auto pos = line.find_first_not_of(' ');
  return pos != std::string::npos && line[pos] == '#';
}

// Bracket depth delta of one physical line, ignoring string contents and
// anything after a comment marker. Used to join logical lines. A line that
// ends inside an unterminated string cannot be bracket-continued; it will be
// opaque no matter what, so joining stops (`ended_in_string`).
int bracket_delta(const std::string& line, int depth, bool* ended_in_string) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '#') {
      break;
    } else if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']' || c == '}') {
      if (depth > 0) --depth;
    }
  }
  if (ended_in_string) *ended_in_string = quote != 0;
  return depth;
}

enum class LineKind { Blank, Comment, Code };

struct LogicalLine {
  std::size_t first = 0;  // 0-based physical line indices
  std::size_t last = 0;
  int indent = 0;
  LineKind kind = LineKind::Code;
  std::string flat;  // physical lines joined with spaces, for the lexer
};

std::vector<LogicalLine> scan_logical_lines(const std::string& text,
                                            const LineIndex& index) {
  std::vector<LogicalLine> out;
  std::size_t i = 0;
  while (i < index.count()) {
    std::string first_line = index.line(text, i);
    LogicalLine ll;
    ll.first = i;
    ll.last = i;
    ll.indent = indent_of(first_line);
    if (is_blank(first_line)) {
      ll.kind = LineKind::Blank;
      out.push_back(std::move(ll));
      ++i;
      continue;
    }
    if (is_comment_only(first_line)) {
      ll.kind = LineKind::Comment;
      ll.flat = first_line;
      out.push_back(std::move(ll));
      ++i;
      continue;
    }
    ll.kind = LineKind::Code;
    ll.flat = first_line;
    bool in_string = false;
    int depth = bracket_delta(first_line, 0, &in_string);
    while (depth > 0 && !in_string && i + 1 < index.count()) {
      ++i;
      std::string next = index.line(text, i);
      ll.flat += ' ';
      ll.flat += next;
      ll.last = i;
      depth = bracket_delta(next, depth, &in_string);
    }
    out.push_back(std::move(ll));
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

struct LexFail {
  std::string what;
};
struct SyntaxFail {
  std::string what;
};

struct Token {
  enum class Kind { Name, Keyword, Int, Float, Str, Op, End };
  Kind kind = Kind::End;
  std::string text;
  mpz_class int_value;
  double float_value = 0.0;
  std::string str_value;
};

const std::unordered_set<std::string>& keywords() {
  static const std::unordered_set<std::string> kw = {
      "and",  "or",   "not",  "in",       "is",   "if",   "elif",
      "else", "for",  "while", "import",  "from", "as",   "pass",
      "break", "continue", "True", "False", "None"};
  return kw;
}

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto push_op = [&](std::string op) {
    Token t;
    t.kind = Token::Kind::Op;
    t.text = std::move(op);
    out.push_back(std::move(t));
  };
  while (i < n) {
    char c = text[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    if (c == '#') break;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
        static_cast<unsigned char>(c) >= 0x80) {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(text[j])) ||
                       text[j] == '_' ||
                       static_cast<unsigned char>(text[j]) >= 0x80))
        ++j;
      Token t;
      t.text = text.substr(i, j - i);
      t.kind = keywords().count(t.text) ? Token::Kind::Keyword : Token::Kind::Name;
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j < n && text[j] == '.') {
        // ".." would be a syntax error anyway; "1.x" lexes as float 1.0 + name
        is_float = true;
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      if (j < n && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < n && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < n && std::isdigit(static_cast<unsigned char>(text[k]))) {
          is_float = true;
          j = k;
          while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
      }
      Token t;
      t.text = text.substr(i, j - i);
      if (is_float) {
        t.kind = Token::Kind::Float;
        t.float_value = std::strtod(t.text.c_str(), nullptr);
      } else {
        t.kind = Token::Kind::Int;
        t.int_value = mpz_class(t.text, 10);
      }
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    if (c == '\'' || c == '"') {
      char quote = c;
      std::string value;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < n) {
        char d = text[j];
        if (d == '\\') {
          if (j + 1 >= n) throw LexFail{"dangling escape"};
          char e = text[j + 1];
          switch (e) {
            case 'n': value += '\n'; break;
            case 't': value += '\t'; break;
            case 'r': value += '\r'; break;
            case '\\': value += '\\'; break;
            case '\'': value += '\''; break;
            case '"': value += '"'; break;
            case '0': value += '\0'; break;
            case 'x': {
              if (j + 3 >= n) throw LexFail{"bad \\x escape"};
              auto hex = [&](char h) -> int {
                if (h >= '0' && h <= '9') return h - '0';
                if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                throw LexFail{"bad \\x escape"};
              };
              value += static_cast<char>(hex(text[j + 2]) * 16 + hex(text[j + 3]));
              j += 2;
              break;
            }
            default:
              value += '\\';
              value += e;
          }
          j += 2;
          continue;
        }
        if (d == quote) {
          closed = true;
          ++j;
          break;
        }
        value += d;
        ++j;
      }
      if (!closed) throw LexFail{"unterminated string"};
      Token t;
      t.kind = Token::Kind::Str;
      t.text = text.substr(i, j - i);
      t.str_value = std::move(value);
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    static const char* three_ops[] = {"**=", "//="};
    static const char* two_ops[] = {"**", "//", "==", "!=", "<=", ">=",
                                    "+=", "-=", "*=", "/=", "%="};
    bool matched = false;
    for (const char* op : three_ops) {
      if (text.compare(i, 3, op) == 0) {
        push_op(op);
        i += 3;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    for (const char* op : two_ops) {
      if (text.compare(i, 2, op) == 0) {
        push_op(op);
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string("+-*/%=<>()[]{},:.;").find(c) != std::string::npos) {
      push_op(std::string(1, c));
      ++i;
      continue;
    }
    throw LexFail{"unexpected character '" + std::string(1, c) + "'"};
  }
  out.push_back(Token{});  // End
  return out;
}

// ---------------------------------------------------------------------------
// Expression parser (recursive descent)
// ---------------------------------------------------------------------------

class TokenStream {
public:
  explicit TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = pos_ + ahead;
    return i < tokens_.size() ? tokens_[i] : tokens_.back();
  }
  Token next() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

  bool at_end() const { return peek().kind == Token::Kind::End; }
  bool is_op(const std::string& op) const {
    return peek().kind == Token::Kind::Op && peek().text == op;
  }
  bool is_kw(const std::string& kw) const {
    return peek().kind == Token::Kind::Keyword && peek().text == kw;
  }
  bool accept_op(const std::string& op) {
    if (!is_op(op)) return false;
    ++pos_;
    return true;
  }
  bool accept_kw(const std::string& kw) {
    if (!is_kw(kw)) return false;
    ++pos_;
    return true;
  }
  void expect_op(const std::string& op) {
    if (!accept_op(op)) throw SyntaxFail{"expected '" + op + "'"};
  }
  std::string expect_name() {
    if (peek().kind != Token::Kind::Name) throw SyntaxFail{"expected a name"};
    return next().text;
  }

private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

class ExprParser {
public:
  explicit ExprParser(TokenStream& ts) : ts_(ts) {}

  // expression with ternary
  ExprPtr parse_expression() {
    ExprPtr body = parse_or();
    if (ts_.is_kw("if")) {
      ts_.next();
      ExprPtr cond = parse_or();
      if (!ts_.accept_kw("else")) throw SyntaxFail{"expected 'else'"};
      ExprPtr orelse = parse_expression();
      return make_expr(IfExpExpr{std::move(body), std::move(cond), std::move(orelse)});
    }
    return body;
  }

  // expression (',' expression)* [','] — bare tuples
  ExprPtr parse_testlist() {
    ExprPtr first = parse_expression();
    if (!ts_.is_op(",")) return first;
    std::vector<ExprPtr> items;
    items.push_back(std::move(first));
    while (ts_.accept_op(",")) {
      if (at_expression_end()) break;  // trailing comma
      items.push_back(parse_expression());
    }
    return make_expr(TupleExpr{std::move(items)});
  }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    if (!ts_.is_kw("or")) return lhs;
    std::vector<ExprPtr> values;
    values.push_back(std::move(lhs));
    while (ts_.accept_kw("or")) values.push_back(parse_and());
    return make_expr(BoolOpExpr{"or", std::move(values)});
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    if (!ts_.is_kw("and")) return lhs;
    std::vector<ExprPtr> values;
    values.push_back(std::move(lhs));
    while (ts_.accept_kw("and")) values.push_back(parse_not());
    return make_expr(BoolOpExpr{"and", std::move(values)});
  }

  ExprPtr parse_not() {
    if (ts_.accept_kw("not"))
      return make_expr(UnaryExpr{"not", parse_not()});
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    ExprPtr first = parse_arith();
    std::vector<std::string> ops;
    std::vector<ExprPtr> rest;
    while (true) {
      std::string op;
      if (ts_.is_op("<") || ts_.is_op(">") || ts_.is_op("<=") || ts_.is_op(">=") ||
          ts_.is_op("==") || ts_.is_op("!=")) {
        op = ts_.next().text;
      } else if (ts_.is_kw("in")) {
        ts_.next();
        op = "in";
      } else if (ts_.is_kw("not") && ts_.peek(1).kind == Token::Kind::Keyword &&
                 ts_.peek(1).text == "in") {
        ts_.next();
        ts_.next();
        op = "not in";
      } else if (ts_.is_kw("is")) {
        ts_.next();
        op = ts_.accept_kw("not") ? "is not" : "is";
      } else {
        break;
      }
      ops.push_back(op);
      rest.push_back(parse_arith());
    }
    if (ops.empty()) return first;
    return make_expr(CompareExpr{std::move(first), std::move(ops), std::move(rest)});
  }

  ExprPtr parse_arith() {
    ExprPtr lhs = parse_term();
    while (ts_.is_op("+") || ts_.is_op("-")) {
      std::string op = ts_.next().text;
      lhs = make_expr(BinaryExpr{op, std::move(lhs), parse_term()});
    }
    return lhs;
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    while (ts_.is_op("*") || ts_.is_op("/") || ts_.is_op("//") || ts_.is_op("%")) {
      std::string op = ts_.next().text;
      lhs = make_expr(BinaryExpr{op, std::move(lhs), parse_unary()});
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (ts_.is_op("+") || ts_.is_op("-")) {
      std::string op = ts_.next().text;
      return make_expr(UnaryExpr{op, parse_unary()});
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_postfix();
    if (ts_.accept_op("**")) {
      // right-associative; exponent may itself be signed
      ExprPtr exp = parse_unary();
      return make_expr(BinaryExpr{"**", std::move(base), std::move(exp)});
    }
    return base;
  }

  ExprPtr parse_postfix() {
    ExprPtr e = parse_atom();
    while (true) {
      if (ts_.is_op("(")) {
        ts_.next();
        auto [args, kwargs] = parse_call_args();
        if (auto* attr = std::get_if<AttributeExpr>(&e->node)) {
          MethodCallExpr mc;
          mc.receiver = std::move(attr->object);
          mc.method = std::move(attr->attr);
          mc.args = std::move(args);
          mc.kwargs = std::move(kwargs);
          e = make_expr(std::move(mc));
        } else {
          e = make_expr(CallExpr{std::move(e), std::move(args), std::move(kwargs)});
        }
      } else if (ts_.is_op("[")) {
        ts_.next();
        e = parse_subscript(std::move(e));
      } else if (ts_.is_op(".")) {
        ts_.next();
        std::string attr = ts_.expect_name();
        e = make_expr(AttributeExpr{std::move(e), std::move(attr)});
      } else {
        break;
      }
    }
    return e;
  }

  ExprPtr parse_atom() {
    const Token& t = ts_.peek();
    switch (t.kind) {
      case Token::Kind::Int: {
        Token tok = ts_.next();
        return make_expr(LiteralExpr{Value::integer(std::move(tok.int_value))});
      }
      case Token::Kind::Float: {
        Token tok = ts_.next();
        return make_expr(LiteralExpr{Value::floating(tok.float_value)});
      }
      case Token::Kind::Str: {
        Token tok = ts_.next();
        if (ts_.peek().kind == Token::Kind::Str)
          throw SyntaxFail{"adjacent string literals"};
        return make_expr(LiteralExpr{Value::str(std::move(tok.str_value))});
      }
      case Token::Kind::Name:
        return make_expr(NameExpr{ts_.next().text});
      case Token::Kind::Keyword: {
        if (t.text == "True") {
          ts_.next();
          return make_expr(LiteralExpr{Value::boolean(true)});
        }
        if (t.text == "False") {
          ts_.next();
          return make_expr(LiteralExpr{Value::boolean(false)});
        }
        if (t.text == "None") {
          ts_.next();
          return make_expr(LiteralExpr{Value::none()});
        }
        throw SyntaxFail{"unexpected keyword '" + t.text + "'"};
      }
      case Token::Kind::Op: {
        if (t.text == "(") return parse_paren();
        if (t.text == "[") return parse_bracket();
        if (t.text == "{") return parse_brace();
        throw SyntaxFail{"unexpected '" + t.text + "'"};
      }
      case Token::Kind::End:
        throw SyntaxFail{"unexpected end of line"};
    }
    throw SyntaxFail{"unexpected token"};
  }

private:
  bool at_expression_end() const {
    const Token& t = ts_.peek();
    if (t.kind == Token::Kind::End) return true;
    if (t.kind == Token::Kind::Op)
      return t.text == ")" || t.text == "]" || t.text == "}" || t.text == "=" ||
             t.text == ";" || t.text == ":";
    return false;
  }

  std::pair<std::vector<ExprPtr>, std::vector<std::pair<std::string, ExprPtr>>>
  parse_call_args() {
    std::vector<ExprPtr> args;
    std::vector<std::pair<std::string, ExprPtr>> kwargs;
    if (ts_.accept_op(")")) return {std::move(args), std::move(kwargs)};
    while (true) {
      if (ts_.peek().kind == Token::Kind::Name && ts_.peek(1).kind == Token::Kind::Op &&
          ts_.peek(1).text == "=") {
        std::string name = ts_.next().text;
        ts_.next();  // '='
        kwargs.emplace_back(std::move(name), parse_expression());
      } else {
        if (!kwargs.empty()) throw SyntaxFail{"positional after keyword argument"};
        args.push_back(parse_expression());
      }
      if (ts_.accept_op(",")) {
        if (ts_.accept_op(")")) return {std::move(args), std::move(kwargs)};
        continue;
      }
      ts_.expect_op(")");
      return {std::move(args), std::move(kwargs)};
    }
  }

  ExprPtr parse_subscript(ExprPtr object) {
    ExprPtr lower, upper, step;
    bool is_slice = false;
    if (!ts_.is_op(":")) lower = parse_expression();
    if (ts_.accept_op(":")) {
      is_slice = true;
      if (!ts_.is_op(":") && !ts_.is_op("]")) upper = parse_expression();
      if (ts_.accept_op(":")) {
        if (!ts_.is_op("]")) step = parse_expression();
      }
    }
    ts_.expect_op("]");
    if (is_slice)
      return make_expr(SliceExpr{std::move(object), std::move(lower),
                                 std::move(upper), std::move(step)});
    return make_expr(IndexExpr{std::move(object), std::move(lower)});
  }

  ExprPtr parse_paren() {
    ts_.expect_op("(");
    if (ts_.accept_op(")")) return make_expr(TupleExpr{});
    ExprPtr first = parse_expression();
    if (ts_.accept_op(")")) return first;  // grouping
    std::vector<ExprPtr> items;
    items.push_back(std::move(first));
    while (ts_.accept_op(",")) {
      if (ts_.is_op(")")) break;
      items.push_back(parse_expression());
    }
    ts_.expect_op(")");
    return make_expr(TupleExpr{std::move(items)});
  }

  ExprPtr parse_bracket() {
    ts_.expect_op("[");
    if (ts_.accept_op("]")) return make_expr(ListExpr{});
    ExprPtr first = parse_expression();
    if (ts_.is_kw("for")) {
      ts_.next();
      std::vector<std::string> target;
      target.push_back(ts_.expect_name());
      while (ts_.accept_op(",")) target.push_back(ts_.expect_name());
      if (!ts_.accept_kw("in")) throw SyntaxFail{"expected 'in'"};
      ExprPtr iterable = parse_or();
      ExprPtr condition;
      if (ts_.accept_kw("if")) condition = parse_or();
      ts_.expect_op("]");
      return make_expr(ListCompExpr{std::move(first), std::move(target),
                                    std::move(iterable), std::move(condition)});
    }
    std::vector<ExprPtr> items;
    items.push_back(std::move(first));
    while (ts_.accept_op(",")) {
      if (ts_.is_op("]")) break;
      items.push_back(parse_expression());
    }
    ts_.expect_op("]");
    return make_expr(ListExpr{std::move(items)});
  }

  ExprPtr parse_brace() {
    ts_.expect_op("{");
    DictExpr dict;
    if (ts_.accept_op("}")) return make_expr(std::move(dict));
    while (true) {
      ExprPtr key = parse_expression();
      ts_.expect_op(":");
      ExprPtr value = parse_expression();
      dict.items.emplace_back(std::move(key), std::move(value));
      if (ts_.accept_op(",")) {
        if (ts_.is_op("}")) break;
        continue;
      }
      break;
    }
    ts_.expect_op("}");
    return make_expr(std::move(dict));
  }

  TokenStream& ts_;
};

// ---------------------------------------------------------------------------
// Statement parser
// ---------------------------------------------------------------------------

AssignTarget classify_target(ExprPtr expr, bool allow_tuple) {
  if (auto* name = std::get_if<NameExpr>(&expr->node))
    return NameTarget{std::move(name->id)};
  if (auto* idx = std::get_if<IndexExpr>(&expr->node))
    return IndexTarget{std::move(idx->object), std::move(idx->index)};
  if (allow_tuple) {
    if (auto* tup = std::get_if<TupleExpr>(&expr->node)) {
      TupleTarget tt;
      for (auto& item : tup->items) {
        auto* name = std::get_if<NameExpr>(&item->node);
        if (!name) throw SyntaxFail{"unsupported assignment target"};
        tt.names.push_back(std::move(name->id));
      }
      if (tt.names.empty()) throw SyntaxFail{"empty target"};
      return tt;
    }
  }
  throw SyntaxFail{"unsupported assignment target"};
}

bool is_augop(const Token& t) {
  if (t.kind != Token::Kind::Op) return false;
  static const std::unordered_set<std::string> ops = {"+=", "-=", "*=", "/=",
                                                      "//=", "%=", "**="};
  return ops.count(t.text) > 0;
}

std::string parse_dotted_name(TokenStream& ts) {
  std::string name = ts.expect_name();
  while (ts.accept_op(".")) {
    name += '.';
    name += ts.expect_name();
  }
  return name;
}

// Loop targets are plain names or (possibly parenthesized) tuples of names;
// parsed directly so the 'in' that follows is not read as a comparison.
AssignTarget parse_for_target(TokenStream& ts) {
  std::vector<std::string> names;
  bool parened = ts.accept_op("(");
  names.push_back(ts.expect_name());
  bool saw_comma = false;
  while (ts.accept_op(",")) {
    saw_comma = true;
    if (parened && ts.is_op(")")) break;
    if (!parened && ts.is_kw("in")) break;
    names.push_back(ts.expect_name());
  }
  if (parened) ts.expect_op(")");
  if (names.size() == 1 && !saw_comma) return NameTarget{std::move(names[0])};
  return TupleTarget{std::move(names)};
}

void expect_statement_end(TokenStream& ts) {
  ts.accept_op(";");  // a single trailing semicolon is tolerated
  if (!ts.at_end()) throw SyntaxFail{"trailing tokens"};
}

// Parses one simple (non-compound) statement; throws SyntaxFail/LexFail to
// request opaque recovery.
Stmt parse_simple_stmt(TokenStream& ts) {
  Stmt stmt;
  if (ts.accept_kw("pass")) {
    expect_statement_end(ts);
    stmt.node = PassStmt{};
    return stmt;
  }
  if (ts.accept_kw("break")) {
    expect_statement_end(ts);
    stmt.node = BreakStmt{};
    return stmt;
  }
  if (ts.accept_kw("continue")) {
    expect_statement_end(ts);
    stmt.node = ContinueStmt{};
    return stmt;
  }
  if (ts.accept_kw("import")) {
    ImportStmt imp;
    imp.module = parse_dotted_name(ts);
    if (ts.accept_kw("as")) imp.alias = ts.expect_name();
    if (imp.alias.empty()) {
      auto dot = imp.module.find('.');
      imp.alias = dot == std::string::npos ? imp.module : imp.module.substr(0, dot);
      // "import a.b" binds the root package name, as in the source language
      if (dot != std::string::npos) imp.module = imp.alias;
    }
    expect_statement_end(ts);
    stmt.node = std::move(imp);
    return stmt;
  }
  if (ts.accept_kw("from")) {
    ImportStmt imp;
    imp.module = parse_dotted_name(ts);
    if (!ts.accept_kw("import")) throw SyntaxFail{"expected 'import'"};
    imp.member = ts.expect_name();
    imp.alias = ts.accept_kw("as") ? ts.expect_name() : imp.member;
    expect_statement_end(ts);
    stmt.node = std::move(imp);
    return stmt;
  }
  ExprParser ep(ts);
  ExprPtr lhs = ep.parse_testlist();
  if (ts.is_op("=")) {
    ts.next();
    AssignTarget target = classify_target(std::move(lhs), /*allow_tuple=*/true);
    ExprPtr value = ep.parse_testlist();
    if (ts.is_op("=")) throw SyntaxFail{"chained assignment"};
    expect_statement_end(ts);
    stmt.node = AssignStmt{std::move(target), std::move(value)};
    return stmt;
  }
  if (is_augop(ts.peek())) {
    std::string op = ts.next().text;
    op.pop_back();  // drop '='
    AssignTarget target = classify_target(std::move(lhs), /*allow_tuple=*/false);
    ExprPtr value = ep.parse_testlist();
    expect_statement_end(ts);
    stmt.node = AugAssignStmt{std::move(target), std::move(op), std::move(value)};
    return stmt;
  }
  expect_statement_end(ts);
  stmt.node = ExprStmt{std::move(lhs)};
  return stmt;
}

class BlockParser {
public:
  BlockParser(const std::string& text, const LineIndex& index,
              std::vector<LogicalLine> lines)
      : text_(text), index_(index), lines_(std::move(lines)) {}

  StmtList parse_top_level() {
    check_indent_units();
    pos_ = 0;
    return parse_block(0);
  }

private:
  void check_indent_units() const {
    for (const auto& ll : lines_) {
      if (ll.kind == LineKind::Code && ll.indent % 4 != 0)
        throw ParseError(static_cast<int>(ll.first) + 1,
                         "indentation is not a multiple of four spaces");
    }
  }

  Span span_of(const LogicalLine& ll) const {
    return Span{static_cast<int>(ll.first) + 1, static_cast<int>(ll.last) + 1};
  }

  Stmt make_opaque(const LogicalLine& ll) const {
    Stmt s;
    s.node = OpaqueStmt{index_.slice(text_, ll.first, ll.last)};
    s.span = span_of(ll);
    return s;
  }

  Stmt make_pass(const LogicalLine& ll) const {
    Stmt s;
    s.node = PassStmt{};
    s.span = span_of(ll);
    return s;
  }

  // Statements whose first physical line sits exactly at `indent`.
  StmtList parse_block(int indent) {
    StmtList out;
    while (pos_ < lines_.size()) {
      const LogicalLine& ll = lines_[pos_];
      if (ll.kind == LineKind::Blank) {
        ++pos_;
        continue;
      }
      if (ll.indent < indent) return out;
      if (ll.kind == LineKind::Comment) {
        out.push_back(std::make_unique<Stmt>(make_pass(ll)));
        ++pos_;
        continue;
      }
      if (ll.indent > indent) {
        // Unexpected deeper indent with no open block: keep the raw line.
        out.push_back(std::make_unique<Stmt>(make_opaque(ll)));
        ++pos_;
        continue;
      }
      out.push_back(std::make_unique<Stmt>(parse_statement(indent)));
    }
    return out;
  }

  Stmt parse_statement(int indent) {
    const LogicalLine& ll = lines_[pos_];
    std::vector<Token> tokens;
    try {
      tokens = tokenize(ll.flat);
    } catch (const LexFail&) {
      ++pos_;
      return make_opaque(ll);
    }
    if (tokens.empty() || tokens.front().kind == Token::Kind::End) {
      ++pos_;
      return make_opaque(ll);
    }
    const Token& head = tokens.front();
    if (head.kind == Token::Kind::Keyword) {
      if (head.text == "for" || head.text == "while" || head.text == "if")
        return parse_compound(indent);
      if (head.text == "elif" || head.text == "else") {
        // Only meaningful when chained onto an if; bare ones degrade.
        ++pos_;
        return make_opaque(ll);
      }
    }
    TokenStream ts(std::move(tokens));
    try {
      Stmt stmt = parse_simple_stmt(ts);
      stmt.span = span_of(ll);
      ++pos_;
      return stmt;
    } catch (const SyntaxFail&) {
      ++pos_;
      return make_opaque(ll);
    }
  }

  // Body of a compound statement: fixed-width blocks, so the body sits at
  // exactly one indent unit deeper. Returns an empty list (consuming
  // nothing) when no such body follows; the caller degrades the header.
  StmtList parse_child_block(int parent_indent) {
    std::size_t probe = pos_;
    while (probe < lines_.size() && lines_[probe].kind == LineKind::Blank) ++probe;
    if (probe >= lines_.size()) return {};
    const LogicalLine& first = lines_[probe];
    if (first.indent != parent_indent + 4) return {};
    return parse_block(first.indent);
  }

  // span end across a statement list, for compound statement spans
  static int span_end(const StmtList& body, int fallback) {
    int end = fallback;
    for (const auto& s : body) end = std::max(end, s->span.line_end);
    return end;
  }

  Stmt parse_compound(int indent) {
    const LogicalLine& header = lines_[pos_];
    std::vector<Token> tokens = tokenize(header.flat);  // already lexed once
    TokenStream ts(std::move(tokens));
    try {
      if (ts.accept_kw("for")) {
        AssignTarget target = parse_for_target(ts);
        if (!ts.accept_kw("in")) throw SyntaxFail{"expected 'in'"};
        ExprParser ep(ts);
        ExprPtr iterable = ep.parse_testlist();
        ts.expect_op(":");
        if (!ts.at_end()) throw SyntaxFail{"tokens after ':'"};
        ++pos_;
        StmtList body = parse_child_block(indent);
        if (body.empty()) return make_opaque(header);
        Stmt stmt;
        stmt.span = Span{static_cast<int>(header.first) + 1,
                         span_end(body, static_cast<int>(header.last) + 1)};
        stmt.node = ForStmt{std::move(target), std::move(iterable), std::move(body)};
        return stmt;
      }
      if (ts.accept_kw("while")) {
        ExprParser ep(ts);
        ExprPtr cond = ep.parse_expression();
        ts.expect_op(":");
        if (!ts.at_end()) throw SyntaxFail{"tokens after ':'"};
        ++pos_;
        StmtList body = parse_child_block(indent);
        if (body.empty()) return make_opaque(header);
        Stmt stmt;
        stmt.span = Span{static_cast<int>(header.first) + 1,
                         span_end(body, static_cast<int>(header.last) + 1)};
        stmt.node = WhileStmt{std::move(cond), std::move(body)};
        return stmt;
      }
      if (ts.accept_kw("if")) {
        return parse_if_chain(indent, header);
      }
    } catch (const SyntaxFail&) {
    } catch (const LexFail&) {
    }
    // Header failed the grammar or had no body.
    if (pos_ < lines_.size() && &lines_[pos_] == &header) ++pos_;
    return make_opaque(header);
  }

  // if / elif* / else? at the same indent, folded into nested IfStmt.
  Stmt parse_if_chain(int indent, const LogicalLine& if_header) {
    std::vector<std::pair<Span, ExprPtr>> conditions;  // header spans + conds
    std::vector<StmtList> bodies;
    StmtList else_body;
    int chain_end = static_cast<int>(if_header.last) + 1;

    bool first = true;
    while (pos_ < lines_.size()) {
      const LogicalLine& header = lines_[pos_];
      std::vector<Token> tokens = tokenize(header.flat);
      TokenStream ts(std::move(tokens));
      bool is_else = false;
      ExprPtr cond;
      try {
        if (first) {
          if (!ts.accept_kw("if")) throw SyntaxFail{"expected 'if'"};
        } else if (ts.accept_kw("elif")) {
        } else if (ts.accept_kw("else")) {
          is_else = true;
        } else {
          break;
        }
        if (!is_else) {
          ExprParser ep(ts);
          cond = ep.parse_expression();
        }
        ts.expect_op(":");
        if (!ts.at_end()) throw SyntaxFail{"tokens after ':'"};
      } catch (const SyntaxFail&) {
        if (first) throw;  // nothing consumed yet; caller degrades the header
        break;  // malformed elif/else: end the chain, leave the line in place
      }
      ++pos_;
      StmtList body = parse_child_block(indent);
      if (body.empty()) {
        if (first) throw SyntaxFail{"empty body"};
        // A dangling elif/else with no body degrades to an opaque sibling;
        // rewind so the caller sees the finished chain first.
        --pos_;
        break;
      }
      chain_end = std::max(chain_end, span_end(body, static_cast<int>(header.last) + 1));
      if (is_else) {
        else_body = std::move(body);
        break;
      }
      conditions.emplace_back(span_of(header), std::move(cond));
      bodies.push_back(std::move(body));
      first = false;
      // Peek: continue only if the next code line at this indent is elif/else.
      std::size_t probe = pos_;
      while (probe < lines_.size() && lines_[probe].kind == LineKind::Blank) ++probe;
      if (probe >= lines_.size()) break;
      const LogicalLine& nxt = lines_[probe];
      if (nxt.kind != LineKind::Code || nxt.indent != indent) break;
      std::vector<Token> peek_tokens;
      try {
        peek_tokens = tokenize(nxt.flat);
      } catch (const LexFail&) {
        break;
      }
      if (peek_tokens.empty() || peek_tokens.front().kind != Token::Kind::Keyword ||
          (peek_tokens.front().text != "elif" && peek_tokens.front().text != "else"))
        break;
      pos_ = probe;
    }

    // Fold right: the last condition pairs with else_body.
    StmtList orelse = std::move(else_body);
    for (std::size_t i = conditions.size(); i-- > 1;) {
      Stmt nested;
      nested.span = Span{conditions[i].first.line_start,
                         span_end(bodies[i],
                                  std::max(conditions[i].first.line_end,
                                           span_end(orelse, 0)))};
      nested.node = IfStmt{std::move(conditions[i].second), std::move(bodies[i]),
                           std::move(orelse)};
      orelse = StmtList{};
      orelse.push_back(std::make_unique<Stmt>(std::move(nested)));
    }
    Stmt stmt;
    stmt.span = Span{conditions[0].first.line_start, chain_end};
    stmt.node = IfStmt{std::move(conditions[0].second), std::move(bodies[0]),
                       std::move(orelse)};
    return stmt;
  }

  const std::string& text_;
  const LineIndex& index_;
  std::vector<LogicalLine> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string strip_code_fence(const std::string& text) {
  LineIndex index(text);
  std::optional<std::size_t> open;
  for (std::size_t i = 0; i < index.count(); ++i) {
    std::string line = index.line(text, i);
    auto pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos || line.compare(pos, 3, "```") != 0) continue;
    if (!open) {
      open = i;
      continue;
    }
    // Lines strictly between the fences.
    if (i == *open + 1) return "";
    std::string body;
    for (std::size_t j = *open + 1; j < i; ++j) {
      body += index.line(text, j);
      body += '\n';
    }
    return body;
  }
  return text;
}

SourceProgram parse_program(const std::string& text) {
  SourceProgram program;
  program.source_text = normalize_text(strip_code_fence(text));
  LineIndex index(program.source_text);
  BlockParser parser(program.source_text, index,
                     scan_logical_lines(program.source_text, index));
  program.statements = parser.parse_top_level();
  return program;
}

std::string render_stmt(const Stmt& stmt, const SourceProgram& program) {
  LineIndex index(program.source_text);
  if (stmt.span.line_start < 1 ||
      stmt.span.line_end > static_cast<int>(index.count()))
    return "";
  return index.slice(program.source_text, stmt.span.line_start - 1,
                     stmt.span.line_end - 1);
}

std::string render_program(const SourceProgram& program) {
  const std::string& text = program.source_text;
  LineIndex index(text);
  std::vector<std::string> lines(index.count());
  for (const auto& stmt : program.statements) {
    std::string slice = render_stmt(*stmt, program);
    // Distribute the slice back over its physical lines.
    std::size_t start = 0;
    for (int l = stmt->span.line_start; l <= stmt->span.line_end; ++l) {
      std::size_t nl = slice.find('\n', start);
      lines[l - 1] = slice.substr(start, nl == std::string::npos ? nl : nl - start);
      start = nl == std::string::npos ? slice.size() : nl + 1;
    }
  }
  // Gap lines (not covered by any top-level span) are blanks; restore them.
  for (std::size_t i = 0; i < index.count(); ++i) {
    bool covered = false;
    for (const auto& stmt : program.statements)
      if (stmt->span.line_start <= static_cast<int>(i) + 1 &&
          static_cast<int>(i) + 1 <= stmt->span.line_end) {
        covered = true;
        break;
      }
    if (!covered) lines[i] = index.line(text, i);
  }
  std::string out;
  for (std::size_t i = 0; i < index.count(); ++i) {
    out += lines[i];
    if (i + 1 < index.count() || index.ends_with_newline) out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Literal parsing (delta codec support)
// ---------------------------------------------------------------------------

namespace {

Value parse_literal_tokens(TokenStream& ts);

Value::List parse_literal_sequence(TokenStream& ts, const std::string& close,
                                   bool* trailing_comma) {
  Value::List items;
  *trailing_comma = false;
  if (ts.accept_op(close)) return items;
  while (true) {
    items.push_back(parse_literal_tokens(ts));
    if (ts.accept_op(",")) {
      if (ts.accept_op(close)) {
        *trailing_comma = true;
        return items;
      }
      continue;
    }
    ts.expect_op(close);
    return items;
  }
}

Value parse_literal_tokens(TokenStream& ts) {
  const Token& t = ts.peek();
  if (t.kind == Token::Kind::Op && (t.text == "-" || t.text == "+")) {
    bool neg = t.text == "-";
    ts.next();
    const Token& num = ts.peek();
    if (num.kind == Token::Kind::Int) {
      mpz_class v = ts.next().int_value;
      return Value::integer(neg ? mpz_class(-v) : v);
    }
    if (num.kind == Token::Kind::Float) {
      double v = ts.next().float_value;
      return Value::floating(neg ? -v : v);
    }
    if (num.kind == Token::Kind::Name &&
        (num.text == "inf" || num.text == "nan")) {
      std::string name = ts.next().text;
      double v = name == "inf" ? std::numeric_limits<double>::infinity()
                               : std::numeric_limits<double>::quiet_NaN();
      return Value::floating(neg ? -v : v);
    }
    throw SyntaxFail{"expected a number after sign"};
  }
  if (t.kind == Token::Kind::Int) return Value::integer(ts.next().int_value);
  if (t.kind == Token::Kind::Float) return Value::floating(ts.next().float_value);
  if (t.kind == Token::Kind::Str) return Value::str(ts.next().str_value);
  if (t.kind == Token::Kind::Keyword) {
    if (t.text == "True") {
      ts.next();
      return Value::boolean(true);
    }
    if (t.text == "False") {
      ts.next();
      return Value::boolean(false);
    }
    if (t.text == "None") {
      ts.next();
      return Value::none();
    }
    throw SyntaxFail{"unexpected keyword"};
  }
  if (t.kind == Token::Kind::Name && (t.text == "inf" || t.text == "nan")) {
    std::string name = ts.next().text;
    return Value::floating(name == "inf"
                               ? std::numeric_limits<double>::infinity()
                               : std::numeric_limits<double>::quiet_NaN());
  }
  if (t.kind == Token::Kind::Op) {
    if (t.text == "[") {
      ts.next();
      bool tc = false;
      return Value::list(parse_literal_sequence(ts, "]", &tc));
    }
    if (t.text == "(") {
      ts.next();
      bool tc = false;
      Value::List items = parse_literal_sequence(ts, ")", &tc);
      if (items.size() == 1 && !tc) return items[0];  // grouping, not a tuple
      return Value::tuple(std::move(items));
    }
    if (t.text == "{") {
      ts.next();
      Value::Dict entries;
      if (ts.accept_op("}")) return Value::dict(std::move(entries));
      while (true) {
        Value key = parse_literal_tokens(ts);
        ts.expect_op(":");
        Value value = parse_literal_tokens(ts);
        entries.emplace_back(std::move(key), std::move(value));
        if (ts.accept_op(",")) {
          if (ts.accept_op("}")) break;
          continue;
        }
        ts.expect_op("}");
        break;
      }
      return Value::dict(std::move(entries));
    }
    if (t.text == "<") {
      ts.next();
      if (ts.peek().kind != Token::Kind::Name || ts.peek().text != "module")
        throw SyntaxFail{"expected module reference"};
      ts.next();
      if (ts.peek().kind != Token::Kind::Str) throw SyntaxFail{"expected module name"};
      std::string name = ts.next().str_value;
      ts.expect_op(">");
      return Value::module(std::move(name));
    }
  }
  throw SyntaxFail{"expected a literal"};
}

}  // namespace

Value parse_value_literal(const std::string& text) {
  try {
    TokenStream ts(tokenize(text));
    Value v = parse_literal_tokens(ts);
    if (!ts.at_end()) throw SyntaxFail{"trailing characters"};
    return v;
  } catch (const LexFail& f) {
    throw DeltaParseError("malformed value literal: " + f.what, text);
  } catch (const SyntaxFail& f) {
    throw DeltaParseError("malformed value literal: " + f.what, text);
  }
}

std::vector<std::pair<std::string, Value>> parse_delta_entries(
    const std::string& braced) {
  std::vector<std::pair<std::string, Value>> out;
  try {
    TokenStream ts(tokenize(braced));
    ts.expect_op("{");
    if (ts.accept_op("}")) return out;
    while (true) {
      std::vector<std::string> names;
      names.push_back(ts.expect_name());
      while (ts.peek().kind == Token::Kind::Op && ts.peek().text == "," &&
             ts.peek(1).kind == Token::Kind::Name) {
        // Lookahead for the multi-name form "a, b = v1, v2": the names run
        // must eventually hit '='; otherwise these commas separate entries.
        std::size_t ahead = 1;
        bool multi = false;
        while (true) {
          if (ts.peek(ahead).kind != Token::Kind::Name) break;
          ++ahead;
          if (ts.peek(ahead).kind == Token::Kind::Op && ts.peek(ahead).text == "=") {
            multi = true;
            break;
          }
          if (!(ts.peek(ahead).kind == Token::Kind::Op && ts.peek(ahead).text == ","))
            break;
          ++ahead;
        }
        if (!multi) break;
        ts.next();  // ','
        names.push_back(ts.expect_name());
      }
      ts.expect_op("=");
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) ts.expect_op(",");
        out.emplace_back(names[i], parse_literal_tokens(ts));
      }
      if (ts.accept_op(",")) {
        if (ts.accept_op("}")) break;
        continue;
      }
      ts.expect_op("}");
      break;
    }
    if (!ts.at_end()) throw SyntaxFail{"trailing characters"};
  } catch (const LexFail& f) {
    throw DeltaParseError("malformed delta: " + f.what, braced);
  } catch (const SyntaxFail& f) {
    throw DeltaParseError("malformed delta: " + f.what, braced);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural equality
// ---------------------------------------------------------------------------

namespace {

bool expr_equal(const Expr& a, const Expr& b);

bool expr_ptr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return expr_equal(*a, *b);
}

bool expr_list_equal(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!expr_ptr_equal(a[i], b[i])) return false;
  return true;
}

bool kwargs_equal(const std::vector<std::pair<std::string, ExprPtr>>& a,
                  const std::vector<std::pair<std::string, ExprPtr>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].first != b[i].first || !expr_ptr_equal(a[i].second, b[i].second))
      return false;
  return true;
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, LiteralExpr>) {
          return x.value.structural_eq(y.value);
        } else if constexpr (std::is_same_v<T, NameExpr>) {
          return x.id == y.id;
        } else if constexpr (std::is_same_v<T, UnaryExpr>) {
          return x.op == y.op && expr_ptr_equal(x.operand, y.operand);
        } else if constexpr (std::is_same_v<T, BinaryExpr>) {
          return x.op == y.op && expr_ptr_equal(x.lhs, y.lhs) &&
                 expr_ptr_equal(x.rhs, y.rhs);
        } else if constexpr (std::is_same_v<T, BoolOpExpr>) {
          return x.op == y.op && expr_list_equal(x.values, y.values);
        } else if constexpr (std::is_same_v<T, CompareExpr>) {
          return x.ops == y.ops && expr_ptr_equal(x.first, y.first) &&
                 expr_list_equal(x.rest, y.rest);
        } else if constexpr (std::is_same_v<T, CallExpr>) {
          return expr_ptr_equal(x.callee, y.callee) &&
                 expr_list_equal(x.args, y.args) && kwargs_equal(x.kwargs, y.kwargs);
        } else if constexpr (std::is_same_v<T, MethodCallExpr>) {
          return x.method == y.method && expr_ptr_equal(x.receiver, y.receiver) &&
                 expr_list_equal(x.args, y.args) && kwargs_equal(x.kwargs, y.kwargs);
        } else if constexpr (std::is_same_v<T, IndexExpr>) {
          return expr_ptr_equal(x.object, y.object) && expr_ptr_equal(x.index, y.index);
        } else if constexpr (std::is_same_v<T, SliceExpr>) {
          return expr_ptr_equal(x.object, y.object) && expr_ptr_equal(x.lower, y.lower) &&
                 expr_ptr_equal(x.upper, y.upper) && expr_ptr_equal(x.step, y.step);
        } else if constexpr (std::is_same_v<T, AttributeExpr>) {
          return x.attr == y.attr && expr_ptr_equal(x.object, y.object);
        } else if constexpr (std::is_same_v<T, ListExpr>) {
          return expr_list_equal(x.items, y.items);
        } else if constexpr (std::is_same_v<T, TupleExpr>) {
          return expr_list_equal(x.items, y.items);
        } else if constexpr (std::is_same_v<T, DictExpr>) {
          if (x.items.size() != y.items.size()) return false;
          for (std::size_t i = 0; i < x.items.size(); ++i)
            if (!expr_ptr_equal(x.items[i].first, y.items[i].first) ||
                !expr_ptr_equal(x.items[i].second, y.items[i].second))
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, ListCompExpr>) {
          return x.target == y.target && expr_ptr_equal(x.element, y.element) &&
                 expr_ptr_equal(x.iterable, y.iterable) &&
                 expr_ptr_equal(x.condition, y.condition);
        } else if constexpr (std::is_same_v<T, IfExpExpr>) {
          return expr_ptr_equal(x.body, y.body) &&
                 expr_ptr_equal(x.condition, y.condition) &&
                 expr_ptr_equal(x.orelse, y.orelse);
        }
      },
      a.node);
}

bool target_equal(const AssignTarget& a, const AssignTarget& b) {
  if (a.index() != b.index()) return false;
  if (const auto* n = std::get_if<NameTarget>(&a))
    return n->name == std::get<NameTarget>(b).name;
  if (const auto* i = std::get_if<IndexTarget>(&a)) {
    const auto& j = std::get<IndexTarget>(b);
    return expr_ptr_equal(i->object, j.object) && expr_ptr_equal(i->index, j.index);
  }
  return std::get<TupleTarget>(a).names == std::get<TupleTarget>(b).names;
}

bool stmt_list_equal(const StmtList& a, const StmtList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!stmt_equal(*a[i], *b[i])) return false;
  return true;
}

}  // namespace

bool stmt_equal(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, AssignStmt>) {
          return target_equal(x.target, y.target) && expr_ptr_equal(x.value, y.value);
        } else if constexpr (std::is_same_v<T, AugAssignStmt>) {
          return x.op == y.op && target_equal(x.target, y.target) &&
                 expr_ptr_equal(x.value, y.value);
        } else if constexpr (std::is_same_v<T, ExprStmt>) {
          return expr_ptr_equal(x.expr, y.expr);
        } else if constexpr (std::is_same_v<T, ForStmt>) {
          return target_equal(x.target, y.target) &&
                 expr_ptr_equal(x.iterable, y.iterable) && stmt_list_equal(x.body, y.body);
        } else if constexpr (std::is_same_v<T, WhileStmt>) {
          return expr_ptr_equal(x.condition, y.condition) &&
                 stmt_list_equal(x.body, y.body);
        } else if constexpr (std::is_same_v<T, IfStmt>) {
          return expr_ptr_equal(x.condition, y.condition) &&
                 stmt_list_equal(x.body, y.body) && stmt_list_equal(x.orelse, y.orelse);
        } else if constexpr (std::is_same_v<T, ImportStmt>) {
          return x.module == y.module && x.member == y.member && x.alias == y.alias;
        } else if constexpr (std::is_same_v<T, OpaqueStmt>) {
          return x.text == y.text;
        } else {
          return true;  // Pass / Break / Continue
        }
      },
      a.node);
}

bool program_equal(const SourceProgram& a, const SourceProgram& b) {
  return stmt_list_equal(a.statements, b.statements);
}

const char* Stmt::kind_name() const {
  struct Visitor {
    const char* operator()(const AssignStmt&) const { return "Assign"; }
    const char* operator()(const AugAssignStmt&) const { return "AugAssign"; }
    const char* operator()(const ExprStmt&) const { return "ExprStmt"; }
    const char* operator()(const ForStmt&) const { return "For"; }
    const char* operator()(const WhileStmt&) const { return "While"; }
    const char* operator()(const IfStmt&) const { return "If"; }
    const char* operator()(const ImportStmt&) const { return "Import"; }
    const char* operator()(const PassStmt&) const { return "Pass"; }
    const char* operator()(const BreakStmt&) const { return "Break"; }
    const char* operator()(const ContinueStmt&) const { return "Continue"; }
    const char* operator()(const OpaqueStmt&) const { return "Opaque"; }
  };
  return std::visit(Visitor{}, node);
}

}  // namespace coc
