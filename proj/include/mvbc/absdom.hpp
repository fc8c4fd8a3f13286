// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_ABSDOM_HPP
#define MVBC_ABSDOM_HPP

#include "mvbc/bgraph.hpp"
#include "mvbc/ir.hpp"

#include <map>
#include <variant>
#include <vector>

namespace mvbc {

/// The dataflow fact attached to one program point of one procedure:
/// types of bound locals, types of the locally visible operand-stack
/// suffix (bottom-indexed), and the borrow graph over those positions
/// plus the global pseudo-locations of the procedure's acquires set.
struct LocalAbstractState {
    std::map<uint32_t, Type> locals;
    std::vector<Type> stack;
    BorrowGraph graph;

    bool operator==(const LocalAbstractState&) const = default;

    std::optional<Type> type_at(const Position& pos) const;
    std::string str() const;
};

enum class PropErrorKind : uint8_t {
    MovedBorrowedValue,
    StoreBorrowedValue,
    WriteBorrowedRef,
    NotFreezable,
    BorrowedMutArg,
    FactorFieldFailure,
    RetBorrowedLocal,
    RetStackMismatch,
    RetBorrowedMutOutput,
    TypeMismatch,
    InputOverwrite,
    GlobalBorrowed,
    UnboundLocal,
    StackUnderflow,
};

const char* prop_error_kind_str(PropErrorKind k);

struct PropagationError {
    PropErrorKind kind;
    std::optional<Position> position;
    std::string detail;
    std::string str() const;
};

using PropResult = std::variant<LocalAbstractState, PropagationError>;

/// One step of the type-propagation judgment: executes `op` abstractly
/// on a state well-formed for `proc`. On success the output is again
/// well-formed; on failure the error names the violated requirement.
PropResult propagate(const Program& p, const Procedure& proc, const Instr& op,
                     const LocalAbstractState& ls);

/// A reference is freezable when every reference borrowed from it is
/// immutable, transitively.
bool freezable(const LocalAbstractState& ls, const Position& pos);

/// Componentwise order: equal type maps and stack, graphs ordered by
/// subsumption.
bool ls_leq(const LocalAbstractState& a, const LocalAbstractState& b);

/// Entry fact: formals bound to their declared types, empty stack,
/// empty graph.
LocalAbstractState initial_state(const Procedure& proc);

/// Well-formedness for `proc`: inputs all bound, acyclic graph, edge
/// endpoints inside the state (or acquires pseudo-locations), and no
/// edge pointing into an input location.
bool well_formed(const Procedure& proc, const LocalAbstractState& ls);

} // namespace mvbc

#endif
