#pragma once

#include <stdexcept>
#include <string>

#include "coc/ast.hpp"
#include "coc/state.hpp"

// Independent reference evaluator for the deterministic program subset.
// Written before and apart from the production interpreter: straightforward
// recursion, a directly mutated environment, iterables snapshotted at loop
// entry. Anything outside the subset (opaque lines, unknown names, imports)
// throws RefFailure.
namespace cocref {

struct RefFailure : std::runtime_error {
  explicit RefFailure(const std::string& what) : std::runtime_error(what) {}
};

coc::ProgramState reference_run(const coc::SourceProgram& program,
                                const coc::ProgramState& initial);

coc::Value reference_eval(const coc::Expr& expr, const coc::ProgramState& env);

}  // namespace cocref
