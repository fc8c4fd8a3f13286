// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_SOUNDNESS_HPP
#define MVBC_SOUNDNESS_HPP

#include "mvbc/absdom.hpp"
#include "mvbc/interp.hpp"
#include "mvbc/verifier.hpp"

#include <map>
#include <optional>
#include <vector>

namespace mvbc {

/// The abstract image of a concrete state: per-frame local type maps,
/// one global operand-stack type list, and one borrow graph over
/// absolute positions.
struct AbstractState {
    struct Frame {
        QualifiedName proc;
        uint32_t pc = 0;
        std::map<uint32_t, Type> locals;
    };
    std::vector<Frame> frames;
    std::vector<Type> stack;
    BorrowGraph graph;
};

enum class InvariantKind : uint8_t {
    TypeAgreement,       // shape or type mismatch between state and abstraction
    MemoryBijection,     // locations leaked or shared between owners
    DanglingReference,   // acyclicity / in-edge / realization failures
    ReferentialTransparency,
    ImmutableToMutablePath, // derived check on realized paths
    MutableArgAliasing,     // concrete overlap among call arguments
    RuntimeFault,
    LeakAtHalt,
    Internal,
};

const char* invariant_kind_str(InvariantKind k);

struct InvariantViolation {
    InvariantKind kind;
    std::string detail;
    uint64_t step = 0;
    std::string str() const;
};

/// Maps a concrete state of a verified program onto an abstract state by
/// looking up the per-offset annotations: non-top frames have their
/// callee arguments stripped from the stack view and renamed into the
/// next frame's input locals; per-frame graphs shift to absolute frame
/// and stack offsets before the union.
std::variant<AbstractState, std::string>
abstract_state(const Program& p, const std::map<QualifiedName, ProcAnnotations>& ann,
               const ConcreteState& s);

/// Is Borrow(m, label, n) realized in s: does `label` (up to extension,
/// when extensible) lead from the location or reference at m to the
/// reference at n? A global pseudo-location matches any cell of its type.
bool edge_realized(const Program& p, const ConcreteState& s, const Position& m,
                   const Path& label, const Position& n);

/// Checks type agreement, the location bijection, dangling-reference
/// freedom, referential transparency, and the derived no-path-from-
/// immutable-to-mutable property against the abstraction of s.
std::vector<InvariantViolation>
check_invariants(const Program& p, const std::map<QualifiedName, ProcAnnotations>& ann,
                 const ConcreteState& s);

struct DifferentialResult {
    std::optional<InvariantViolation> violation;
    Outcome::Kind outcome = Outcome::Kind::Halted;
    uint64_t steps = 0;
    bool ok() const { return !violation.has_value(); }
};

using DifferentialHook =
    std::function<void(uint64_t step, const ConcreteState& s, size_t violations)>;

/// Runs a verified program, checking every reached state against its
/// abstraction, watching for faults and argument aliasing at calls, and
/// requiring an empty operand stack and leak-free memory at halt. The
/// hook, when set, observes every checked state.
DifferentialResult differential_run(const Program& p,
                                    const std::map<QualifiedName, ProcAnnotations>& ann,
                                    const QualifiedName& entry,
                                    const std::vector<RuntimeValue>& args, uint64_t fuel,
                                    const DifferentialHook& hook = nullptr);

} // namespace mvbc

#endif
