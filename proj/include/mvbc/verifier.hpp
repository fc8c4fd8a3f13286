// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_VERIFIER_HPP
#define MVBC_VERIFIER_HPP

#include "mvbc/absdom.hpp"
#include "mvbc/ir.hpp"

#include <map>
#include <optional>
#include <vector>

namespace mvbc {

/// A maximal basic block: a contiguous instruction range in which only
/// the last instruction may transfer control.
struct BasicBlock {
    uint32_t start = 0;
    uint32_t end = 0; // inclusive
    std::vector<uint32_t> succs; // block ids
    bool reachable = false;

    bool operator==(const BasicBlock&) const = default;
};

/// Per-offset entry states for one procedure. Unreachable offsets carry
/// no annotation.
using ProcAnnotations = std::vector<std::optional<LocalAbstractState>>;

struct VerifyOptions {
    uint32_t widen_k = 8;          // max fixed label length before widening
    uint32_t max_block_visits = 1000;
};

struct VerificationReport {
    bool verified = false;
    std::vector<Diagnostic> diagnostics;
    // Verdict per procedure, keyed by qualified name.
    std::map<QualifiedName, bool> proc_verdicts;
    // Present for every verified procedure.
    std::map<QualifiedName, ProcAnnotations> annotations;
    uint64_t instructions = 0;
    uint32_t max_block_visits = 0;
    bool ceiling_hit = false;

    std::string render_text() const;
    std::string render_json() const;
};

/// Splits a structurally valid procedure into maximal basic blocks and
/// wires successor edges. Every branch target starts a block.
std::vector<BasicBlock> build_cfg(const Procedure& proc);

/// Forward height propagation: entry height 0, equal heights at joins,
/// no underflow inside a block, and height |outs| at each Ret.
std::vector<Diagnostic> check_stack_usage(const Program& p, const Procedure& proc,
                                          const std::vector<BasicBlock>& cfg);

/// Checks the acquires closure: a procedure touching a global of type T
/// directly, or calling a same-module procedure that acquires T, must
/// itself declare `acquires T`. Unused declarations warn.
std::vector<Diagnostic> check_acquires(const Program& p);

/// The borrow fixpoint for one procedure. On success fills `out` with a
/// certified per-offset annotation array and returns true; on failure
/// appends rejection diagnostics.
bool borrow_check(const Program& p, const Procedure& proc, const std::vector<BasicBlock>& cfg,
                  const VerifyOptions& opts, std::vector<Diagnostic>& diags, ProcAnnotations& out,
                  uint32_t* max_visits = nullptr, bool* ceiling_hit = nullptr);

/// The full pipeline: structure, CFG, stack usage, acquires, borrow
/// fixpoint per procedure.
VerificationReport verify_program(const Program& p, const VerifyOptions& opts = {});

} // namespace mvbc

#endif
