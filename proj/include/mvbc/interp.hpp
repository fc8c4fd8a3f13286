// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_INTERP_HPP
#define MVBC_INTERP_HPP

#include "mvbc/ir.hpp"

#include <functional>
#include <map>
#include <variant>

namespace mvbc {

/// A fresh memory location. Identifiers come from a monotone counter and
/// are never reused within one execution.
using Location = uint64_t;

struct RuntimeValue;

/// A runtime reference: a root location plus a fixed field path.
struct Reference {
    Location loc = 0;
    Path path;
    auto operator<=>(const Reference&) const = default;
};

struct RecordValue {
    QualifiedName type;
    std::vector<RuntimeValue> fields; // declaration order
    bool operator==(const RecordValue&) const;
};

/// Values are tree-shaped: primitives and records only. References are a
/// separate alternative so they can travel on the operand stack and in
/// locals but never inside a record or in memory.
struct RuntimeValue {
    std::variant<bool, int64_t, Addr, RecordValue, Reference> v;

    static RuntimeValue of_bool(bool b) { return {b}; }
    static RuntimeValue of_int(int64_t i) { return {i}; }
    static RuntimeValue of_addr(Addr a) { return {a}; }
    static RuntimeValue of_const(const ConstVal& c);

    bool is_ref() const { return std::holds_alternative<Reference>(v); }
    bool is_record() const { return std::holds_alternative<RecordValue>(v); }
    const Reference& as_ref() const { return std::get<Reference>(v); }

    bool operator==(const RuntimeValue&) const = default;
    std::string str() const;
};

/// Follows a fixed path down a value tree; null when the path does not
/// exist in the tree.
const RuntimeValue* value_at_path(const Program& p, const RuntimeValue& root, const Path& path);

/// Replaces the subtree at `path`; false when the path does not exist.
bool set_value_at_path(const Program& p, RuntimeValue& root, const Path& path, RuntimeValue v);

/// Shallow type of a runtime value; references type against memory via
/// the state, so this covers values only (no Reference input).
ValType runtime_valtype(const RuntimeValue& v);

bool value_has_valtype(const RuntimeValue& v, const ValType& t);

/// A local binding is either an owned memory location or a reference.
using LocalSlot = std::variant<Location, Reference>;

struct Frame {
    QualifiedName proc;
    uint32_t pc = 0;
    std::map<uint32_t, LocalSlot> locals;
};

/// The machine state: call stack, one shared bottom-indexed operand
/// stack, memory, and the global map keyed by (record type, address).
struct ConcreteState {
    std::vector<Frame> callstack;
    std::vector<RuntimeValue> operands;
    std::map<Location, RuntimeValue> memory;
    std::map<std::pair<QualifiedName, Addr>, Location> globals;
    Location next_loc = 1;

    Location fresh_loc() { return next_loc++; }
};

enum class FaultKind : uint8_t {
    DanglingAccess,
    StackUnderflow,
    TypeMismatch,
    UnboundLocal,
    MissingGlobal,
    GlobalExists,
};

const char* fault_kind_str(FaultKind k);

struct Fault {
    FaultKind kind;
    QualifiedName proc;
    uint32_t pc = 0;
    std::string detail;
    std::string str() const;
};

/// Result of one step: still running, halted (call stack empty), or a
/// fault. Faults are first-class outcomes so harnesses can observe them
/// on unverified programs.
struct StepResult {
    enum class Kind : uint8_t { Running, Halted, Faulted } kind = Kind::Running;
    std::optional<Fault> fault;

    static StepResult running() { return {}; }
    static StepResult halted() { return {Kind::Halted, {}}; }
    static StepResult faulted(Fault f) { return {Kind::Faulted, std::move(f)}; }
};

/// Result of a full run.
struct Outcome {
    enum class Kind : uint8_t { Halted, Faulted, FuelExhausted } kind = Kind::Halted;
    std::optional<Fault> fault;
    std::vector<RuntimeValue> final_operands;
    std::vector<Location> leaked; // memory cells not owned by a global at halt
    uint64_t steps = 0;
};

struct InitError {
    std::string message;
};

/// Builds the initial state for a transaction: one frame at pc 0, each
/// value argument in a fresh memory cell bound to the matching formal,
/// empty operand stack, empty globals. Arguments must be values matching
/// ins(entry); references are rejected.
std::variant<ConcreteState, InitError> init_state(const Program& p, const QualifiedName& entry,
                                                  const std::vector<RuntimeValue>& args);

/// Executes the instruction under the top frame's pc. Deterministic; the
/// state is mutated in place.
StepResult step(const Program& p, ConcreteState& s);

using StepHook = std::function<void(const ConcreteState&, const Instr&)>;

/// Driver loop: steps until halt, fault, or fuel exhaustion. The hook, if
/// any, runs before each step with the instruction about to execute.
Outcome run(const Program& p, const QualifiedName& entry, const std::vector<RuntimeValue>& args,
            uint64_t fuel, const StepHook& hook = nullptr);

/// `pc=<n> proc=<name> instr=<mnemonic> stack=<k>` trace line.
std::string trace_line(const ConcreteState& s, const Instr& in);

} // namespace mvbc

#endif
