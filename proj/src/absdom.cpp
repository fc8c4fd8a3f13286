// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/absdom.hpp"

#include <algorithm>
#include <sstream>

namespace mvbc {

std::optional<Type> LocalAbstractState::type_at(const Position& pos) const {
    switch (pos.kind) {
    case Position::Kind::Local: {
        if (pos.frame != 0)
            return std::nullopt;
        auto it = locals.find(pos.index);
        if (it == locals.end())
            return std::nullopt;
        return it->second;
    }
    case Position::Kind::Stack:
        if (pos.index >= stack.size())
            return std::nullopt;
        return stack[pos.index];
    case Position::Kind::Global:
        return std::nullopt;
    }
    return std::nullopt;
}

std::string LocalAbstractState::str() const {
    std::ostringstream os;
    os << "L={";
    bool first = true;
    for (const auto& [i, t] : locals) {
        if (!first) os << ", ";
        first = false;
        os << i << ":" << type_str(t);
    }
    os << "} S=[";
    for (size_t i = 0; i < stack.size(); ++i) {
        if (i) os << ", ";
        os << type_str(stack[i]);
    }
    os << "] B={";
    first = true;
    for (const auto& e : graph.edges()) {
        if (!first) os << "; ";
        first = false;
        os << e.str();
    }
    os << "}";
    return os.str();
}

const char* prop_error_kind_str(PropErrorKind k) {
    switch (k) {
    case PropErrorKind::MovedBorrowedValue: return "MovedBorrowedValue";
    case PropErrorKind::StoreBorrowedValue: return "StoreBorrowedValue";
    case PropErrorKind::WriteBorrowedRef: return "WriteBorrowedRef";
    case PropErrorKind::NotFreezable: return "NotFreezable";
    case PropErrorKind::BorrowedMutArg: return "BorrowedMutArg";
    case PropErrorKind::FactorFieldFailure: return "FactorFieldFailure";
    case PropErrorKind::RetBorrowedLocal: return "RetBorrowedLocal";
    case PropErrorKind::RetStackMismatch: return "RetStackMismatch";
    case PropErrorKind::RetBorrowedMutOutput: return "RetBorrowedMutOutput";
    case PropErrorKind::TypeMismatch: return "TypeMismatch";
    case PropErrorKind::InputOverwrite: return "InputOverwrite";
    case PropErrorKind::GlobalBorrowed: return "GlobalBorrowed";
    case PropErrorKind::UnboundLocal: return "UnboundLocal";
    case PropErrorKind::StackUnderflow: return "StackUnderflow";
    }
    return "?";
}

std::string PropagationError::str() const {
    std::string out = prop_error_kind_str(kind);
    if (position)
        out += " at " + position->str();
    if (!detail.empty())
        out += ": " + detail;
    return out;
}

bool freezable(const LocalAbstractState& ls, const Position& pos) {
    std::set<Position> visited;
    auto walk = [&](auto&& self, const Position& at) -> bool {
        if (!visited.insert(at).second)
            return true;
        for (const Position& target : ls.graph.borrowed_targets(at)) {
            auto t = ls.type_at(target);
            if (!t || !t->is_imm_ref())
                return false;
            if (!self(self, target))
                return false;
        }
        return true;
    };
    return walk(walk, pos);
}

bool ls_leq(const LocalAbstractState& a, const LocalAbstractState& b) {
    return a.locals == b.locals && a.stack == b.stack && graph_leq(a.graph, b.graph);
}

LocalAbstractState initial_state(const Procedure& proc) {
    LocalAbstractState ls;
    for (uint32_t i = 0; i < proc.ins.size(); ++i)
        ls.locals.emplace(i, proc.ins[i]);
    return ls;
}

bool well_formed(const Procedure& proc, const LocalAbstractState& ls) {
    for (uint32_t i = 0; i < proc.ins.size(); ++i)
        if (!ls.locals.count(i))
            return false;
    if (ls.graph.has_cycle())
        return false;
    auto in_dom = [&](const Position& p) {
        if (p.kind == Position::Kind::Global)
            return proc.acquires.count(p.global) > 0;
        return ls.type_at(p).has_value();
    };
    for (const auto& e : ls.graph.edges()) {
        if (!in_dom(e.src) || !in_dom(e.dst))
            return false;
        if (e.dst.kind == Position::Kind::Local && e.dst.frame == 0 &&
            e.dst.index < proc.ins.size())
            return false;
    }
    return true;
}

namespace {

class Propagator {
public:
    Propagator(const Program& p, const Procedure& proc, const LocalAbstractState& ls)
        : p_(p), proc_(proc), out_(ls) {}

    PropResult apply(const Instr& in) {
        switch (in.kind) {
        case InstrKind::MoveLoc: return move_loc(in);
        case InstrKind::CopyLoc: return copy_loc(in);
        case InstrKind::StoreLoc: return store_loc(in);
        case InstrKind::BorrowLoc: return borrow_loc(in);
        case InstrKind::BorrowField: return borrow_field(in);
        case InstrKind::ReadRef: return read_ref();
        case InstrKind::WriteRef: return write_ref();
        case InstrKind::FreezeRef: return freeze_ref();
        case InstrKind::Pop: return do_pop();
        case InstrKind::Pack: return pack(in);
        case InstrKind::Unpack: return unpack(in);
        case InstrKind::Op: return arith(in);
        case InstrKind::LdConst: return ld_const(in);
        case InstrKind::Call: return call(in);
        case InstrKind::Ret: return ret();
        case InstrKind::Branch: return branch();
        case InstrKind::MoveTo: return move_to(in);
        case InstrKind::MoveFrom: return move_from(in);
        case InstrKind::BorrowGlobal: return borrow_global(in);
        }
        return err(PropErrorKind::TypeMismatch, {}, "unknown instruction");
    }

private:
    static PropagationError err(PropErrorKind k, std::optional<Position> pos, std::string detail) {
        return PropagationError{k, std::move(pos), std::move(detail)};
    }

    uint32_t height() const { return static_cast<uint32_t>(out_.stack.size()); }
    Position top_pos() const { return Position::stack(height() - 1); }
    Position push_pos() const { return Position::stack(height()); }

    std::optional<PropagationError> need_stack(size_t n, const char* who) {
        if (out_.stack.size() < n)
            return err(PropErrorKind::StackUnderflow, {}, std::string(who) + " needs " +
                       std::to_string(n) + " operands, stack has " + std::to_string(out_.stack.size()));
        return std::nullopt;
    }

    PropResult move_loc(const Instr& in) {
        auto it = out_.locals.find(in.local);
        if (it == out_.locals.end())
            return err(PropErrorKind::UnboundLocal, Position::local(0, in.local),
                       "MoveLoc of unbound local");
        Position src = Position::local(0, in.local);
        if (it->second.is_val() && !out_.graph.unborrowed(src))
            return err(PropErrorKind::MovedBorrowedValue, src, "local is still borrowed");
        if (proc_.is_input(in.local))
            return err(PropErrorKind::InputOverwrite, src, "inputs may not be moved");
        Type t = it->second;
        out_.locals.erase(it);
        out_.graph = out_.graph.rename({{src, push_pos()}});
        out_.stack.push_back(std::move(t));
        return std::move(out_);
    }

    PropResult copy_loc(const Instr& in) {
        auto it = out_.locals.find(in.local);
        if (it == out_.locals.end())
            return err(PropErrorKind::UnboundLocal, Position::local(0, in.local),
                       "CopyLoc of unbound local");
        Type t = it->second;
        if (t.is_ref())
            out_.graph = out_.graph.add(Position::local(0, in.local), Path::eps(), push_pos());
        out_.stack.push_back(std::move(t));
        return std::move(out_);
    }

    PropResult store_loc(const Instr& in) {
        if (auto e = need_stack(1, "StoreLoc"))
            return *e;
        if (in.local >= proc_.locals_count)
            return err(PropErrorKind::UnboundLocal, Position::local(0, in.local),
                       "StoreLoc to undeclared local");
        Position dst = Position::local(0, in.local);
        Type pushed = out_.stack.back();
        auto it = out_.locals.find(in.local);
        if (it != out_.locals.end() && it->second != pushed)
            return err(PropErrorKind::TypeMismatch, dst,
                       "stored " + type_str(pushed) + " over local of type " +
                           type_str(it->second));
        if (proc_.is_input(in.local))
            return err(PropErrorKind::InputOverwrite, Position::local(0, in.local),
                       "inputs may not be overwritten");
        if (it != out_.locals.end()) {
            if (it->second.is_ref())
                out_.graph = out_.graph.elim(dst);
            else if (!out_.graph.unborrowed(dst))
                return err(PropErrorKind::StoreBorrowedValue, dst, "local is still borrowed");
        }
        out_.stack.pop_back();
        out_.graph = out_.graph.rename({{Position::stack(height()), dst}});
        out_.locals[in.local] = std::move(pushed);
        return std::move(out_);
    }

    PropResult borrow_loc(const Instr& in) {
        auto it = out_.locals.find(in.local);
        if (it == out_.locals.end())
            return err(PropErrorKind::UnboundLocal, Position::local(0, in.local),
                       "BorrowLoc of unbound local");
        if (!it->second.is_val())
            return err(PropErrorKind::TypeMismatch, Position::local(0, in.local),
                       "BorrowLoc of a reference");
        ValType t = it->second.val;
        out_.graph = out_.graph.factor(Position::local(0, in.local), push_pos());
        out_.stack.push_back(Type::make_mut_ref(std::move(t)));
        return std::move(out_);
    }

    PropResult borrow_field(const Instr& in) {
        auto it = out_.locals.find(in.local);
        if (it == out_.locals.end())
            return err(PropErrorKind::UnboundLocal, Position::local(0, in.local),
                       "BorrowField of unbound local");
        const Type& src_t = it->second;
        if (!src_t.is_ref() || !src_t.val.is_record())
            return err(PropErrorKind::TypeMismatch, Position::local(0, in.local),
                       "BorrowField requires a record reference");
        const RecordDecl* decl = p_.find_record(src_t.val.record);
        const FieldDecl* field = decl ? decl->find_field(in.field) : nullptr;
        if (!field)
            return err(PropErrorKind::TypeMismatch, Position::local(0, in.local),
                       "no field '" + in.field + "' in " + src_t.val.record.str());
        Position src = Position::local(0, in.local);
        if (src_t.is_mut_ref()) {
            auto factored = out_.graph.factor_field(in.field, src, push_pos());
            if (!factored)
                return err(PropErrorKind::FactorFieldFailure, src,
                           "an edge labeled eps or * leaves the source reference");
            out_.graph = std::move(*factored);
            out_.stack.push_back(Type::make_mut_ref(field->type));
        } else {
            out_.graph = out_.graph.add(src, Path::field(in.field), push_pos());
            out_.stack.push_back(Type::make_imm_ref(field->type));
        }
        return std::move(out_);
    }

    PropResult read_ref() {
        if (auto e = need_stack(1, "ReadRef"))
            return *e;
        Type t = out_.stack.back();
        if (!t.is_ref())
            return err(PropErrorKind::TypeMismatch, top_pos(), "ReadRef on a non-reference");
        if (!freezable(out_, top_pos()))
            return err(PropErrorKind::NotFreezable, top_pos(),
                       "a mutable reference is borrowed from the operand");
        Position at = top_pos();
        out_.stack.pop_back();
        out_.graph = out_.graph.elim(at);
        out_.stack.push_back(Type::make_val(t.val));
        return std::move(out_);
    }

    PropResult write_ref() {
        if (auto e = need_stack(2, "WriteRef"))
            return *e;
        Type ref_t = out_.stack[height() - 1];
        Type val_t = out_.stack[height() - 2];
        if (!ref_t.is_mut_ref())
            return err(PropErrorKind::TypeMismatch, top_pos(),
                       "WriteRef target must be a mutable reference");
        if (val_t != Type::make_val(ref_t.val))
            return err(PropErrorKind::TypeMismatch, Position::stack(height() - 2),
                       "WriteRef value type disagreement");
        if (!out_.graph.unborrowed(top_pos()))
            return err(PropErrorKind::WriteBorrowedRef, top_pos(),
                       "target reference is still borrowed");
        Position ref_pos = top_pos();
        out_.stack.pop_back();
        out_.stack.pop_back();
        out_.graph = out_.graph.elim(ref_pos);
        return std::move(out_);
    }

    PropResult freeze_ref() {
        if (auto e = need_stack(1, "FreezeRef"))
            return *e;
        Type t = out_.stack.back();
        if (!t.is_mut_ref())
            return err(PropErrorKind::TypeMismatch, top_pos(),
                       "FreezeRef requires a mutable reference");
        if (!freezable(out_, top_pos()))
            return err(PropErrorKind::NotFreezable, top_pos(),
                       "a mutable reference is borrowed from the operand");
        out_.stack.back() = Type::make_imm_ref(t.val);
        return std::move(out_);
    }

    PropResult do_pop() {
        if (auto e = need_stack(1, "Pop"))
            return *e;
        Position at = top_pos();
        out_.stack.pop_back();
        out_.graph = out_.graph.elim(at);
        return std::move(out_);
    }

    PropResult pack(const Instr& in) {
        const RecordDecl* decl = p_.find_record(in.record);
        if (!decl)
            return err(PropErrorKind::TypeMismatch, {}, "unknown record " + in.record.str());
        size_t n = decl->fields.size();
        if (auto e = need_stack(n, "Pack"))
            return *e;
        size_t base = out_.stack.size() - n;
        for (size_t i = 0; i < n; ++i)
            if (out_.stack[base + i] != Type::make_val(decl->fields[i].type))
                return err(PropErrorKind::TypeMismatch, Position::stack(static_cast<uint32_t>(base + i)),
                           "Pack field '" + decl->fields[i].name + "' type disagreement");
        out_.stack.resize(base);
        out_.stack.push_back(Type::make_val(ValType::make_record(in.record)));
        return std::move(out_);
    }

    PropResult unpack(const Instr& in) {
        if (auto e = need_stack(1, "Unpack"))
            return *e;
        const RecordDecl* decl = p_.find_record(in.record);
        if (!decl)
            return err(PropErrorKind::TypeMismatch, {}, "unknown record " + in.record.str());
        if (out_.stack.back() != Type::make_val(ValType::make_record(in.record)))
            return err(PropErrorKind::TypeMismatch, top_pos(), "Unpack of a non-" + in.record.str());
        out_.stack.pop_back();
        for (const auto& f : decl->fields)
            out_.stack.push_back(Type::make_val(f.type));
        return std::move(out_);
    }

    PropResult arith(const Instr& in) {
        const OpSig& sig = op_signature(in.op);
        size_t n = sig.operands.size();
        if (auto e = need_stack(n, "Op"))
            return *e;
        size_t base = out_.stack.size() - n;
        for (size_t i = 0; i < n; ++i)
            if (out_.stack[base + i] != Type::prim(sig.operands[i]))
                return err(PropErrorKind::TypeMismatch, Position::stack(static_cast<uint32_t>(base + i)),
                           "Op operand type disagreement");
        out_.stack.resize(base);
        out_.stack.push_back(Type::prim(sig.result));
        return std::move(out_);
    }

    PropResult ld_const(const Instr& in) {
        out_.stack.push_back(Type::prim(in.cval.kind));
        return std::move(out_);
    }

    PropResult branch() {
        if (auto e = need_stack(1, "Branch"))
            return *e;
        if (out_.stack.back() != Type::prim(PrimKind::Bool))
            return err(PropErrorKind::TypeMismatch, top_pos(), "Branch on a non-bool");
        out_.stack.pop_back();
        return std::move(out_);
    }

    PropResult call(const Instr& in) {
        const Procedure* callee = p_.find_proc(in.callee);
        if (!callee)
            return err(PropErrorKind::TypeMismatch, {}, "unknown callee " + in.callee.str());
        size_t n = callee->ins.size();
        if (auto e = need_stack(n, "Call"))
            return *e;
        uint32_t base = static_cast<uint32_t>(out_.stack.size() - n);
        for (size_t i = 0; i < n; ++i)
            if (out_.stack[base + i] != callee->ins[i])
                return err(PropErrorKind::TypeMismatch, Position::stack(base + static_cast<uint32_t>(i)),
                           "argument " + std::to_string(i) + " type disagreement");
        // A mutable reference passed to a call must not be borrowed.
        for (size_t i = 0; i < n; ++i)
            if (callee->ins[i].is_mut_ref() && !out_.graph.unborrowed(Position::stack(base + static_cast<uint32_t>(i))))
                return err(PropErrorKind::BorrowedMutArg, Position::stack(base + static_cast<uint32_t>(i)),
                           "mutable reference argument is borrowed");
        // A same-module callee that acquires T is treated as a move of l_T.
        if (callee->module == proc_.module)
            for (const auto& t : callee->acquires)
                if (!out_.graph.unborrowed(Position::global_node(t)))
                    return err(PropErrorKind::GlobalBorrowed, Position::global_node(t),
                               "callee acquires " + t.str() + " which is borrowed");
        // Simulate the call: arguments become the callee's input locals.
        std::map<Position, Position> arg_rename;
        std::set<Position> callee_inputs;
        for (uint32_t i = 0; i < n; ++i) {
            arg_rename.emplace(Position::stack(base + i), Position::local(1, i));
            callee_inputs.insert(Position::local(1, i));
        }
        BorrowGraph b1 = out_.graph.rename(arg_rename);
        out_.stack.resize(base);
        for (const auto& t : callee->outs)
            out_.stack.push_back(t);
        // Simulate the return: reference outputs conservatively borrow
        // from reference inputs; a callee cannot mint a mutable reference
        // out of an immutable one.
        std::set<Position> mut_ins, ref_ins, mut_outs, imm_outs;
        for (uint32_t i = 0; i < n; ++i) {
            if (callee->ins[i].is_mut_ref())
                mut_ins.insert(Position::local(1, i));
            if (callee->ins[i].is_ref())
                ref_ins.insert(Position::local(1, i));
        }
        for (uint32_t j = 0; j < callee->outs.size(); ++j) {
            if (callee->outs[j].is_mut_ref())
                mut_outs.insert(Position::stack(base + j));
            else if (callee->outs[j].is_imm_ref())
                imm_outs.insert(Position::stack(base + j));
        }
        BorrowGraph b2 = b1.extend_star(mut_ins, mut_outs);
        BorrowGraph b3 = b2.extend_star(ref_ins, imm_outs);
        out_.graph = b3.elim_all(callee_inputs);
        return std::move(out_);
    }

    PropResult ret() {
        if (out_.stack.size() != proc_.outs.size())
            return err(PropErrorKind::RetStackMismatch, {},
                       "operand stack height " + std::to_string(out_.stack.size()) +
                           " does not match output signature");
        for (size_t i = 0; i < proc_.outs.size(); ++i)
            if (out_.stack[i] != proc_.outs[i])
                return err(PropErrorKind::RetStackMismatch, Position::stack(static_cast<uint32_t>(i)),
                           "operand type does not match output signature");
        for (const auto& [x, t] : out_.locals)
            if (t.is_val() && !out_.graph.unborrowed(Position::local(0, x)))
                return err(PropErrorKind::RetBorrowedLocal, Position::local(0, x),
                           "a value local is still borrowed at return");
        for (const auto& t : proc_.acquires)
            if (!out_.graph.unborrowed(Position::global_node(t)))
                return err(PropErrorKind::GlobalBorrowed, Position::global_node(t),
                           "a global reference would escape the module");
        for (uint32_t i = 0; i < proc_.outs.size(); ++i)
            if (proc_.outs[i].is_mut_ref() && !out_.graph.unborrowed(Position::stack(i)))
                return err(PropErrorKind::RetBorrowedMutOutput, Position::stack(i),
                           "a mutable reference output is borrowed");
        return std::move(out_);
    }

    PropResult move_to(const Instr& in) {
        if (auto e = need_stack(2, "MoveTo"))
            return *e;
        Type want = Type::make_val(ValType::make_record(in.record));
        if (out_.stack[height() - 1] != want)
            return err(PropErrorKind::TypeMismatch, top_pos(), "MoveTo value is not a " + in.record.str());
        if (out_.stack[height() - 2] != Type::prim(PrimKind::Addr))
            return err(PropErrorKind::TypeMismatch, Position::stack(height() - 2),
                       "MoveTo address is not an addr");
        out_.stack.pop_back();
        out_.stack.pop_back();
        return std::move(out_);
    }

    PropResult move_from(const Instr& in) {
        if (auto e = need_stack(1, "MoveFrom"))
            return *e;
        if (out_.stack.back() != Type::prim(PrimKind::Addr))
            return err(PropErrorKind::TypeMismatch, top_pos(), "MoveFrom address is not an addr");
        Position node = Position::global_node(in.record);
        if (!out_.graph.unborrowed(node))
            return err(PropErrorKind::GlobalBorrowed, node,
                       in.record.str() + " is borrowed");
        out_.stack.pop_back();
        out_.stack.push_back(Type::make_val(ValType::make_record(in.record)));
        return std::move(out_);
    }

    PropResult borrow_global(const Instr& in) {
        if (auto e = need_stack(1, "BorrowGlobal"))
            return *e;
        if (out_.stack.back() != Type::prim(PrimKind::Addr))
            return err(PropErrorKind::TypeMismatch, top_pos(), "BorrowGlobal address is not an addr");
        Position node = Position::global_node(in.record);
        if (!out_.graph.unborrowed(node))
            return err(PropErrorKind::GlobalBorrowed, node,
                       in.record.str() + " is borrowed");
        out_.stack.pop_back();
        Position ref_pos = push_pos();
        out_.graph = out_.graph.factor(node, ref_pos);
        out_.stack.push_back(Type::make_mut_ref(ValType::make_record(in.record)));
        return std::move(out_);
    }

    const Program& p_;
    const Procedure& proc_;
    LocalAbstractState out_;
};

} // namespace

PropResult propagate(const Program& p, const Procedure& proc, const Instr& op,
                     const LocalAbstractState& ls) {
    return Propagator(p, proc, ls).apply(op);
}

} // namespace mvbc
