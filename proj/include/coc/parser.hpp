#pragma once

#include <string>
#include <utility>
#include <vector>

#include "coc/ast.hpp"
#include "coc/errors.hpp"

namespace coc {

// Parse program text into a statement-level AST.
//
// Input is canonicalized first: an optional markdown code fence is stripped,
// CRLF becomes LF and tabs become four spaces; the result is stored as
// SourceProgram::source_text and all spans index into it. Every non-blank
// line belongs to exactly one top-level statement's span. Lines that fail
// the grammar become Opaque statements instead of aborting; the only hard
// failure is an indent that is not a multiple of four spaces, which throws
// ParseError with the offending line number.
SourceProgram parse_program(const std::string& text);

// Byte-exact source slice covered by the statement's span, including nested
// body lines of compound statements.
std::string render_stmt(const Stmt& stmt, const SourceProgram& program);

// Reassemble the source from top-level statement slices plus the blank lines
// between them. Always equals program.source_text.
std::string render_program(const SourceProgram& program);

// If the text contains a fenced code block (``` ... ```), return its body;
// otherwise return the text unchanged. Surrounding chat prose is dropped.
std::string strip_code_fence(const std::string& text);

// Parse a single value literal (int, float, string, bool, None, list, dict,
// tuple, <module 'name'>). Throws DeltaParseError on malformed input,
// reporting the offending fragment.
Value parse_value_literal(const std::string& text);

// Parse the body of a rendered delta, brace to brace: "{a = 1, b = 'x'}".
// Accepts the multi-name form "{a, b = 1, 2}". Throws DeltaParseError.
std::vector<std::pair<std::string, Value>> parse_delta_entries(
    const std::string& braced);

}  // namespace coc
