// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_IR_HPP
#define MVBC_IR_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mvbc {

/// Primitive types of the bytecode language.
enum class PrimKind : uint8_t { Bool, Int, Addr };

/// A 16-byte account address, written as a hex literal in assembly.
struct Addr {
    std::array<uint8_t, 16> bytes{};

    auto operator<=>(const Addr&) const = default;
    std::string to_hex() const;
    static std::optional<Addr> from_hex(std::string_view text);
};

/// Name of a record or procedure qualified by its declaring module.
struct QualifiedName {
    std::string module;
    std::string name;

    auto operator<=>(const QualifiedName&) const = default;
    std::string str() const { return module + "::" + name; }
};

/// A value type: primitive or nominal record reference.
struct ValType {
    enum class Kind : uint8_t { Prim, Record } kind = Kind::Prim;
    PrimKind prim = PrimKind::Bool;
    QualifiedName record;

    static ValType make_prim(PrimKind p) { return ValType{Kind::Prim, p, {}}; }
    static ValType make_record(QualifiedName r) {
        return ValType{Kind::Record, PrimKind::Bool, std::move(r)};
    }
    bool is_record() const { return kind == Kind::Record; }

    auto operator<=>(const ValType&) const = default;
};

/// A type: value type, immutable reference, or mutable reference.
/// References never nest and records never contain reference fields.
struct Type {
    enum class Kind : uint8_t { Val, ImmRef, MutRef } kind = Kind::Val;
    ValType val;

    static Type make_val(ValType v) { return Type{Kind::Val, std::move(v)}; }
    static Type make_imm_ref(ValType v) { return Type{Kind::ImmRef, std::move(v)}; }
    static Type make_mut_ref(ValType v) { return Type{Kind::MutRef, std::move(v)}; }
    static Type prim(PrimKind p) { return make_val(ValType::make_prim(p)); }

    bool is_ref() const { return kind != Kind::Val; }
    bool is_mut_ref() const { return kind == Kind::MutRef; }
    bool is_imm_ref() const { return kind == Kind::ImmRef; }
    bool is_val() const { return kind == Kind::Val; }

    auto operator<=>(const Type&) const = default;
};

/// A sequence of field selections, optionally ending in `*` (extensible).
/// The empty fixed path is the identity for concatenation on the left.
struct Path {
    std::vector<std::string> segments;
    bool extensible = false;

    static Path eps() { return Path{}; }
    static Path star() { return Path{{}, true}; }
    static Path field(std::string f) { return Path{{std::move(f)}, false}; }

    bool is_eps() const { return segments.empty() && !extensible; }

    auto operator<=>(const Path&) const = default;
    std::string str() const;
};

/// Concatenation: ordinary concatenation when the left operand is fixed;
/// an extensible left operand absorbs the right operand.
Path path_concat(const Path& p, const Path& q);

/// Prefix order on fixed paths. Extensible arguments are a contract
/// violation and are rejected.
bool path_prefix(const Path& p, const Path& q);

/// True when `target`, a fixed concrete path, is covered by `pattern`:
/// a fixed pattern matches only itself, an extensible pattern r* matches
/// every fixed path that extends r.
bool path_matches(const Path& pattern, const Path& target);

/// Primitive opcodes for the generic arithmetic/logic instruction. Each
/// opcode carries a fixed operand/result signature.
enum class OpCode : uint8_t {
    Add, Sub, Mul, Neg,
    Lt, Le, Gt, Ge,
    EqInt, NeInt, EqBool, NeBool, EqAddr, NeAddr,
    And, Or, Not,
};

struct OpSig {
    std::vector<PrimKind> operands;
    PrimKind result;
};

const OpSig& op_signature(OpCode op);
const char* op_name(OpCode op);
std::optional<OpCode> op_from_name_sig(std::string_view name, const OpSig& sig);

/// A primitive constant for LdConst.
struct ConstVal {
    PrimKind kind = PrimKind::Int;
    bool b = false;
    int64_t i = 0;
    Addr a;

    static ConstVal of_bool(bool v) { return ConstVal{PrimKind::Bool, v, 0, {}}; }
    static ConstVal of_int(int64_t v) { return ConstVal{PrimKind::Int, false, v, {}}; }
    static ConstVal of_addr(Addr v) { return ConstVal{PrimKind::Addr, false, 0, v}; }

    auto operator<=>(const ConstVal&) const = default;
    std::string str() const;
};

enum class InstrKind : uint8_t {
    MoveLoc, CopyLoc, StoreLoc, BorrowLoc, BorrowField,
    ReadRef, WriteRef, FreezeRef, Pop,
    Pack, Unpack,
    Op, LdConst,
    Call, Ret, Branch,
    MoveTo, MoveFrom, BorrowGlobal,
};

const char* instr_mnemonic(InstrKind k);

/// One bytecode instruction. Operand fields are meaningful per kind:
/// `local` for the *Loc forms and BorrowField, `field` for BorrowField,
/// `record` for Pack/Unpack and the global forms, `callee` for Call,
/// `t1`/`t2` for Branch, `op` for Op, `cval` for LdConst.
struct Instr {
    InstrKind kind = InstrKind::Ret;
    uint32_t local = 0;
    uint32_t t1 = 0;
    uint32_t t2 = 0;
    std::string field;
    QualifiedName record;
    QualifiedName callee;
    OpCode op = OpCode::Add;
    ConstVal cval;

    auto operator<=>(const Instr&) const = default;

    static Instr move_loc(uint32_t x) { Instr i; i.kind = InstrKind::MoveLoc; i.local = x; return i; }
    static Instr copy_loc(uint32_t x) { Instr i; i.kind = InstrKind::CopyLoc; i.local = x; return i; }
    static Instr store_loc(uint32_t x) { Instr i; i.kind = InstrKind::StoreLoc; i.local = x; return i; }
    static Instr borrow_loc(uint32_t x) { Instr i; i.kind = InstrKind::BorrowLoc; i.local = x; return i; }
    static Instr borrow_field(std::string f, uint32_t x) {
        Instr i; i.kind = InstrKind::BorrowField; i.field = std::move(f); i.local = x; return i;
    }
    static Instr read_ref() { Instr i; i.kind = InstrKind::ReadRef; return i; }
    static Instr write_ref() { Instr i; i.kind = InstrKind::WriteRef; return i; }
    static Instr freeze_ref() { Instr i; i.kind = InstrKind::FreezeRef; return i; }
    static Instr pop() { Instr i; i.kind = InstrKind::Pop; return i; }
    static Instr pack(QualifiedName r) { Instr i; i.kind = InstrKind::Pack; i.record = std::move(r); return i; }
    static Instr unpack(QualifiedName r) { Instr i; i.kind = InstrKind::Unpack; i.record = std::move(r); return i; }
    static Instr oper(OpCode o) { Instr i; i.kind = InstrKind::Op; i.op = o; return i; }
    static Instr ld_const(ConstVal c) { Instr i; i.kind = InstrKind::LdConst; i.cval = c; return i; }
    static Instr call(QualifiedName p) { Instr i; i.kind = InstrKind::Call; i.callee = std::move(p); return i; }
    static Instr ret() { Instr i; i.kind = InstrKind::Ret; return i; }
    static Instr branch(uint32_t a, uint32_t b) { Instr i; i.kind = InstrKind::Branch; i.t1 = a; i.t2 = b; return i; }
    static Instr move_to(QualifiedName r) { Instr i; i.kind = InstrKind::MoveTo; i.record = std::move(r); return i; }
    static Instr move_from(QualifiedName r) { Instr i; i.kind = InstrKind::MoveFrom; i.record = std::move(r); return i; }
    static Instr borrow_global(QualifiedName r) { Instr i; i.kind = InstrKind::BorrowGlobal; i.record = std::move(r); return i; }
};

struct FieldDecl {
    std::string name;
    ValType type;
    auto operator<=>(const FieldDecl&) const = default;
};

struct RecordDecl {
    std::string name;
    std::vector<FieldDecl> fields;

    const FieldDecl* find_field(std::string_view f) const;
    std::optional<uint32_t> field_index(std::string_view f) const;
    auto operator<=>(const RecordDecl&) const = default;
};

struct Procedure {
    std::string name;
    std::string module;
    std::vector<Type> ins;
    std::vector<Type> outs;
    uint32_t locals_count = 0;
    std::set<QualifiedName> acquires;
    std::vector<Instr> code;

    QualifiedName qualified() const { return {module, name}; }
    bool is_input(uint32_t local) const { return local < ins.size(); }
    auto operator<=>(const Procedure&) const = default;
};

struct Module {
    std::string name;
    std::vector<RecordDecl> records;
    std::vector<Procedure> procs;
    auto operator<=>(const Module&) const = default;
};

/// A parsed program: named modules of record and procedure declarations.
/// Immutable after construction; lookups index by qualified name.
struct Program {
    std::vector<Module> modules;

    const Module* find_module(std::string_view name) const;
    const RecordDecl* find_record(const QualifiedName& qn) const;
    const Procedure* find_proc(const QualifiedName& qn) const;

    bool operator==(const Program&) const = default;
};

/// One diagnostic, rendered as `<module>::<proc>@<offset>: <kind>: <message>`.
struct Diagnostic {
    enum class Severity : uint8_t { Error, Warning } severity = Severity::Error;
    std::string module;
    std::string proc;
    std::optional<uint32_t> offset;
    std::string kind;
    std::string message;
    // Source position, set by the parser only.
    uint32_t line = 0;
    uint32_t column = 0;

    std::string str() const;
};

struct ParseResult {
    std::optional<Program> program;
    std::vector<Diagnostic> diagnostics;
    bool ok() const { return program.has_value(); }
};

/// Parses the textual assembly format. On failure the result carries
/// parse diagnostics with line/column positions and no program.
ParseResult parse_program(std::string_view text);

/// Prints a program in the canonical assembly format. Parsing the output
/// of format_program yields a structurally equal program.
std::string format_program(const Program& p);

/// Structural validation: nonempty code ending in Branch/Ret, in-range
/// branch targets and local indices, resolvable names, unique names,
/// acyclic record graphs, and global ops restricted to their declaring
/// module. Empty result means the program is structurally valid.
std::vector<Diagnostic> validate_structure(const Program& p);

std::string type_str(const Type& t);
std::string valtype_str(const ValType& t);
std::string instr_str(const Instr& in);

} // namespace mvbc

#endif
