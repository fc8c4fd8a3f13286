// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/ir.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <stdexcept>

namespace mvbc {

std::string Addr::to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out = "0x";
    for (uint8_t b : bytes) {
        out += digits[b >> 4];
        out += digits[b & 0xf];
    }
    return out;
}

std::optional<Addr> Addr::from_hex(std::string_view text) {
    if (text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X'))
        text.remove_prefix(2);
    if (text.empty() || text.size() > 32)
        return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Addr a;
    // Right-align: short literals denote low-order bytes.
    size_t bit = 0;
    for (size_t k = 0; k < text.size(); ++k) {
        int v = nibble(text[text.size() - 1 - k]);
        if (v < 0)
            return std::nullopt;
        size_t byte_idx = 15 - bit / 2;
        if (bit % 2 == 0)
            a.bytes[byte_idx] = static_cast<uint8_t>(v);
        else
            a.bytes[byte_idx] |= static_cast<uint8_t>(v << 4);
        ++bit;
    }
    return a;
}

std::string Path::str() const {
    std::string out;
    for (size_t i = 0; i < segments.size(); ++i) {
        if (i) out += '.';
        out += segments[i];
    }
    if (extensible)
        out += segments.empty() ? "*" : ".*";
    return out.empty() ? "eps" : out;
}

Path path_concat(const Path& p, const Path& q) {
    if (p.extensible)
        return p;
    Path out = p;
    out.segments.insert(out.segments.end(), q.segments.begin(), q.segments.end());
    out.extensible = q.extensible;
    return out;
}

bool path_prefix(const Path& p, const Path& q) {
    if (p.extensible || q.extensible)
        throw std::invalid_argument("path_prefix requires fixed paths");
    if (p.segments.size() > q.segments.size())
        return false;
    return std::equal(p.segments.begin(), p.segments.end(), q.segments.begin());
}

bool path_matches(const Path& pattern, const Path& target) {
    assert(!target.extensible);
    if (!pattern.extensible)
        return pattern.segments == target.segments;
    if (pattern.segments.size() > target.segments.size())
        return false;
    return std::equal(pattern.segments.begin(), pattern.segments.end(), target.segments.begin());
}

namespace {

struct OpInfo {
    OpCode code;
    const char* name;
    OpSig sig;
};

const std::vector<OpInfo>& op_table() {
    using P = PrimKind;
    static const std::vector<OpInfo> table = {
        {OpCode::Add, "add", {{P::Int, P::Int}, P::Int}},
        {OpCode::Sub, "sub", {{P::Int, P::Int}, P::Int}},
        {OpCode::Mul, "mul", {{P::Int, P::Int}, P::Int}},
        {OpCode::Neg, "neg", {{P::Int}, P::Int}},
        {OpCode::Lt, "lt", {{P::Int, P::Int}, P::Bool}},
        {OpCode::Le, "le", {{P::Int, P::Int}, P::Bool}},
        {OpCode::Gt, "gt", {{P::Int, P::Int}, P::Bool}},
        {OpCode::Ge, "ge", {{P::Int, P::Int}, P::Bool}},
        {OpCode::EqInt, "eq", {{P::Int, P::Int}, P::Bool}},
        {OpCode::NeInt, "ne", {{P::Int, P::Int}, P::Bool}},
        {OpCode::EqBool, "eq", {{P::Bool, P::Bool}, P::Bool}},
        {OpCode::NeBool, "ne", {{P::Bool, P::Bool}, P::Bool}},
        {OpCode::EqAddr, "eq", {{P::Addr, P::Addr}, P::Bool}},
        {OpCode::NeAddr, "ne", {{P::Addr, P::Addr}, P::Bool}},
        {OpCode::And, "and", {{P::Bool, P::Bool}, P::Bool}},
        {OpCode::Or, "or", {{P::Bool, P::Bool}, P::Bool}},
        {OpCode::Not, "not", {{P::Bool}, P::Bool}},
    };
    return table;
}

} // namespace

const OpSig& op_signature(OpCode op) {
    for (const auto& e : op_table())
        if (e.code == op)
            return e.sig;
    throw std::logic_error("unknown opcode");
}

const char* op_name(OpCode op) {
    for (const auto& e : op_table())
        if (e.code == op)
            return e.name;
    throw std::logic_error("unknown opcode");
}

std::optional<OpCode> op_from_name_sig(std::string_view name, const OpSig& sig) {
    for (const auto& e : op_table())
        if (name == e.name && sig.operands == e.sig.operands && sig.result == e.sig.result)
            return e.code;
    return std::nullopt;
}

std::string ConstVal::str() const {
    switch (kind) {
    case PrimKind::Bool: return b ? "true" : "false";
    case PrimKind::Int: return std::to_string(i);
    case PrimKind::Addr: return a.to_hex();
    }
    return {};
}

const char* instr_mnemonic(InstrKind k) {
    switch (k) {
    case InstrKind::MoveLoc: return "MoveLoc";
    case InstrKind::CopyLoc: return "CopyLoc";
    case InstrKind::StoreLoc: return "StoreLoc";
    case InstrKind::BorrowLoc: return "BorrowLoc";
    case InstrKind::BorrowField: return "BorrowField";
    case InstrKind::ReadRef: return "ReadRef";
    case InstrKind::WriteRef: return "WriteRef";
    case InstrKind::FreezeRef: return "FreezeRef";
    case InstrKind::Pop: return "Pop";
    case InstrKind::Pack: return "Pack";
    case InstrKind::Unpack: return "Unpack";
    case InstrKind::Op: return "Op";
    case InstrKind::LdConst: return "LdConst";
    case InstrKind::Call: return "Call";
    case InstrKind::Ret: return "Ret";
    case InstrKind::Branch: return "Branch";
    case InstrKind::MoveTo: return "MoveTo";
    case InstrKind::MoveFrom: return "MoveFrom";
    case InstrKind::BorrowGlobal: return "BorrowGlobal";
    }
    return "?";
}

const FieldDecl* RecordDecl::find_field(std::string_view f) const {
    for (const auto& fd : fields)
        if (fd.name == f)
            return &fd;
    return nullptr;
}

std::optional<uint32_t> RecordDecl::field_index(std::string_view f) const {
    for (uint32_t i = 0; i < fields.size(); ++i)
        if (fields[i].name == f)
            return i;
    return std::nullopt;
}

const Module* Program::find_module(std::string_view name) const {
    for (const auto& m : modules)
        if (m.name == name)
            return &m;
    return nullptr;
}

const RecordDecl* Program::find_record(const QualifiedName& qn) const {
    const Module* m = find_module(qn.module);
    if (!m)
        return nullptr;
    for (const auto& r : m->records)
        if (r.name == qn.name)
            return &r;
    return nullptr;
}

const Procedure* Program::find_proc(const QualifiedName& qn) const {
    const Module* m = find_module(qn.module);
    if (!m)
        return nullptr;
    for (const auto& p : m->procs)
        if (p.name == qn.name)
            return &p;
    return nullptr;
}

std::string Diagnostic::str() const {
    std::ostringstream os;
    if (severity == Severity::Warning)
        os << "warning: ";
    if (!module.empty()) {
        os << module;
        if (!proc.empty())
            os << "::" << proc;
        if (offset)
            os << "@" << *offset;
        os << ": ";
    } else if (line) {
        os << "line " << line << ":" << column << ": ";
    }
    os << kind << ": " << message;
    return os.str();
}

std::string valtype_str(const ValType& t) {
    if (t.kind == ValType::Kind::Prim) {
        switch (t.prim) {
        case PrimKind::Bool: return "bool";
        case PrimKind::Int: return "int";
        case PrimKind::Addr: return "addr";
        }
    }
    return t.record.str();
}

std::string type_str(const Type& t) {
    switch (t.kind) {
    case Type::Kind::Val: return valtype_str(t.val);
    case Type::Kind::ImmRef: return "&" + valtype_str(t.val);
    case Type::Kind::MutRef: return "&mut " + valtype_str(t.val);
    }
    return {};
}

std::string instr_str(const Instr& in) {
    std::ostringstream os;
    os << instr_mnemonic(in.kind);
    switch (in.kind) {
    case InstrKind::MoveLoc:
    case InstrKind::CopyLoc:
    case InstrKind::StoreLoc:
    case InstrKind::BorrowLoc:
        os << " " << in.local;
        break;
    case InstrKind::BorrowField:
        os << " " << in.field << " " << in.local;
        break;
    case InstrKind::Pack:
    case InstrKind::Unpack:
    case InstrKind::MoveTo:
    case InstrKind::MoveFrom:
    case InstrKind::BorrowGlobal:
        os << " " << in.record.str();
        break;
    case InstrKind::Op: {
        const OpSig& sig = op_signature(in.op);
        os << " " << op_name(in.op) << " (";
        for (size_t i = 0; i < sig.operands.size(); ++i) {
            if (i) os << ", ";
            os << valtype_str(ValType::make_prim(sig.operands[i]));
        }
        os << ") -> " << valtype_str(ValType::make_prim(sig.result));
        break;
    }
    case InstrKind::LdConst:
        os << " " << in.cval.str();
        break;
    case InstrKind::Call:
        os << " " << in.callee.str();
        break;
    case InstrKind::Branch:
        os << " " << in.t1 << " " << in.t2;
        break;
    default:
        break;
    }
    return os.str();
}

namespace {

class StructureChecker {
public:
    explicit StructureChecker(const Program& p) : program_(p) {}

    std::vector<Diagnostic> run() {
        check_unique_names();
        check_records();
        for (const auto& m : program_.modules)
            for (const auto& proc : m.procs)
                check_proc(proc);
        return std::move(diags_);
    }

private:
    void error(std::string module, std::string proc, std::optional<uint32_t> offset,
               std::string kind, std::string msg) {
        Diagnostic d;
        d.module = std::move(module);
        d.proc = std::move(proc);
        d.offset = offset;
        d.kind = std::move(kind);
        d.message = std::move(msg);
        diags_.push_back(std::move(d));
    }

    void check_unique_names() {
        std::set<std::string> mod_names;
        for (const auto& m : program_.modules) {
            if (!mod_names.insert(m.name).second)
                error(m.name, "", {}, "duplicate declaration", "module '" + m.name + "' declared twice");
            std::set<std::string> names;
            for (const auto& r : m.records)
                if (!names.insert(r.name).second)
                    error(m.name, "", {}, "duplicate declaration", "record '" + r.name + "' declared twice");
            std::set<std::string> pnames;
            for (const auto& p : m.procs)
                if (!pnames.insert(p.name).second)
                    error(m.name, p.name, {}, "duplicate declaration", "proc '" + p.name + "' declared twice");
        }
    }

    void check_records() {
        // Resolve field types, then reject cycles in the record reference graph.
        std::vector<std::pair<QualifiedName, const RecordDecl*>> all;
        for (const auto& m : program_.modules) {
            for (const auto& r : m.records) {
                all.push_back({{m.name, r.name}, &r});
                std::set<std::string> fnames;
                for (const auto& f : r.fields) {
                    if (!fnames.insert(f.name).second)
                        error(m.name, "", {}, "duplicate declaration",
                              "field '" + f.name + "' declared twice in record '" + r.name + "'");
                    if (f.type.is_record() && !program_.find_record(f.type.record))
                        error(m.name, "", {}, "unresolved name",
                              "record '" + f.type.record.str() + "' in field '" + r.name + "." + f.name + "'");
                }
            }
        }
        // Depth-first walk; 0 = unvisited, 1 = on stack, 2 = done.
        std::map<QualifiedName, int> state;
        auto visit = [&](auto&& self, const QualifiedName& qn) -> bool {
            int& st = state[qn];
            if (st == 2) return true;
            if (st == 1) return false;
            st = 1;
            const RecordDecl* r = program_.find_record(qn);
            if (r)
                for (const auto& f : r->fields)
                    if (f.type.is_record() && program_.find_record(f.type.record) && !self(self, f.type.record))
                        return false;
            st = 2;
            return true;
        };
        for (const auto& [qn, r] : all) {
            (void)r;
            if (!visit(visit, qn))
                error(qn.module, "", {}, "recursive record",
                      "record '" + qn.str() + "' participates in a type cycle");
        }
    }

    void resolve_record(const Procedure& proc, std::optional<uint32_t> off, const QualifiedName& qn) {
        if (!program_.find_record(qn))
            error(proc.module, proc.name, off, "unresolved name", "record '" + qn.str() + "'");
    }

    void check_type(const Procedure& proc, const Type& t) {
        if (t.val.is_record())
            resolve_record(proc, {}, t.val.record);
    }

    void check_proc(const Procedure& proc) {
        for (const auto& t : proc.ins)
            check_type(proc, t);
        for (const auto& t : proc.outs)
            check_type(proc, t);
        for (const auto& qn : proc.acquires)
            resolve_record(proc, {}, qn);
        if (proc.locals_count < proc.ins.size())
            error(proc.module, proc.name, {}, "bad locals count",
                  "locals " + std::to_string(proc.locals_count) + " is fewer than the " +
                      std::to_string(proc.ins.size()) + " formals");
        if (proc.code.empty()) {
            error(proc.module, proc.name, {}, "empty code", "procedure body has no instructions");
            return;
        }
        InstrKind last = proc.code.back().kind;
        if (last != InstrKind::Ret && last != InstrKind::Branch)
            error(proc.module, proc.name, static_cast<uint32_t>(proc.code.size() - 1),
                  "terminator required", "last instruction must be Branch or Ret");
        for (uint32_t off = 0; off < proc.code.size(); ++off) {
            const Instr& in = proc.code[off];
            switch (in.kind) {
            case InstrKind::MoveLoc:
            case InstrKind::CopyLoc:
            case InstrKind::StoreLoc:
            case InstrKind::BorrowLoc:
            case InstrKind::BorrowField:
                if (in.local >= proc.locals_count)
                    error(proc.module, proc.name, off, "bad local index",
                          "local " + std::to_string(in.local) + " out of range");
                break;
            case InstrKind::Branch:
                if (in.t1 >= proc.code.size() || in.t2 >= proc.code.size())
                    error(proc.module, proc.name, off, "illegal branch target",
                          "target outside code range");
                break;
            case InstrKind::Pack:
            case InstrKind::Unpack:
                resolve_record(proc, off, in.record);
                break;
            case InstrKind::MoveTo:
            case InstrKind::MoveFrom:
            case InstrKind::BorrowGlobal:
                resolve_record(proc, off, in.record);
                if (in.record.module != proc.module)
                    error(proc.module, proc.name, off, "global op outside declaring module",
                          "'" + in.record.str() + "' is not declared in module '" + proc.module + "'");
                break;
            case InstrKind::Call:
                if (!program_.find_proc(in.callee))
                    error(proc.module, proc.name, off, "unresolved name",
                          "proc '" + in.callee.str() + "'");
                break;
            default:
                break;
            }
        }
    }

    const Program& program_;
    std::vector<Diagnostic> diags_;
};

} // namespace

std::vector<Diagnostic> validate_structure(const Program& p) {
    return StructureChecker(p).run();
}

} // namespace mvbc
