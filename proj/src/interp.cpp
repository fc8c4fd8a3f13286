// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/interp.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace mvbc {

bool RecordValue::operator==(const RecordValue& o) const {
    return type == o.type && fields == o.fields;
}

RuntimeValue RuntimeValue::of_const(const ConstVal& c) {
    switch (c.kind) {
    case PrimKind::Bool: return of_bool(c.b);
    case PrimKind::Int: return of_int(c.i);
    case PrimKind::Addr: return of_addr(c.a);
    }
    return of_int(0);
}

std::string RuntimeValue::str() const {
    struct V {
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(int64_t i) const { return std::to_string(i); }
        std::string operator()(const Addr& a) const { return a.to_hex(); }
        std::string operator()(const RecordValue& r) const {
            std::string out = r.type.str() + "{";
            for (size_t i = 0; i < r.fields.size(); ++i) {
                if (i) out += ", ";
                out += r.fields[i].str();
            }
            return out + "}";
        }
        std::string operator()(const Reference& r) const {
            return "ref(" + std::to_string(r.loc) + ", " + r.path.str() + ")";
        }
    };
    return std::visit(V{}, v);
}

const RuntimeValue* value_at_path(const Program& p, const RuntimeValue& root, const Path& path) {
    assert(!path.extensible);
    const RuntimeValue* cur = &root;
    for (const auto& seg : path.segments) {
        const auto* rec = std::get_if<RecordValue>(&cur->v);
        if (!rec)
            return nullptr;
        const RecordDecl* decl = p.find_record(rec->type);
        if (!decl)
            return nullptr;
        auto idx = decl->field_index(seg);
        if (!idx || *idx >= rec->fields.size())
            return nullptr;
        cur = &rec->fields[*idx];
    }
    return cur;
}

bool set_value_at_path(const Program& p, RuntimeValue& root, const Path& path, RuntimeValue v) {
    assert(!path.extensible);
    RuntimeValue* cur = &root;
    for (const auto& seg : path.segments) {
        auto* rec = std::get_if<RecordValue>(&cur->v);
        if (!rec)
            return false;
        const RecordDecl* decl = p.find_record(rec->type);
        if (!decl)
            return false;
        auto idx = decl->field_index(seg);
        if (!idx || *idx >= rec->fields.size())
            return false;
        cur = &rec->fields[*idx];
    }
    *cur = std::move(v);
    return true;
}

ValType runtime_valtype(const RuntimeValue& v) {
    if (std::holds_alternative<bool>(v.v))
        return ValType::make_prim(PrimKind::Bool);
    if (std::holds_alternative<int64_t>(v.v))
        return ValType::make_prim(PrimKind::Int);
    if (std::holds_alternative<Addr>(v.v))
        return ValType::make_prim(PrimKind::Addr);
    if (const auto* r = std::get_if<RecordValue>(&v.v))
        return ValType::make_record(r->type);
    assert(false && "references have no value type");
    return ValType::make_prim(PrimKind::Bool);
}

bool value_has_valtype(const RuntimeValue& v, const ValType& t) {
    if (v.is_ref())
        return false;
    return runtime_valtype(v) == t;
}

const char* fault_kind_str(FaultKind k) {
    switch (k) {
    case FaultKind::DanglingAccess: return "DanglingAccess";
    case FaultKind::StackUnderflow: return "StackUnderflow";
    case FaultKind::TypeMismatch: return "TypeMismatch";
    case FaultKind::UnboundLocal: return "UnboundLocal";
    case FaultKind::MissingGlobal: return "MissingGlobal";
    case FaultKind::GlobalExists: return "GlobalExists";
    }
    return "?";
}

std::string Fault::str() const {
    std::ostringstream os;
    os << "Fault(" << fault_kind_str(kind) << ") at " << proc.str() << "@" << pc;
    if (!detail.empty())
        os << ": " << detail;
    return os.str();
}

std::variant<ConcreteState, InitError> init_state(const Program& p, const QualifiedName& entry,
                                                  const std::vector<RuntimeValue>& args) {
    const Procedure* proc = p.find_proc(entry);
    if (!proc)
        return InitError{"entry proc '" + entry.str() + "' not found"};
    if (args.size() != proc->ins.size())
        return InitError{"expected " + std::to_string(proc->ins.size()) + " arguments, got " +
                         std::to_string(args.size())};
    ConcreteState s;
    Frame frame;
    frame.proc = entry;
    frame.pc = 0;
    for (uint32_t i = 0; i < args.size(); ++i) {
        if (args[i].is_ref())
            return InitError{"reference input at transaction start (argument " +
                             std::to_string(i) + ")"};
        if (!proc->ins[i].is_val() || !value_has_valtype(args[i], proc->ins[i].val))
            return InitError{"argument " + std::to_string(i) + " does not have type " +
                             type_str(proc->ins[i])};
        Location c = s.fresh_loc();
        s.memory.emplace(c, args[i]);
        frame.locals.emplace(i, c);
    }
    s.callstack.push_back(std::move(frame));
    return s;
}

namespace {

class Stepper {
public:
    Stepper(const Program& p, ConcreteState& s) : p_(p), s_(s) {}

    StepResult exec() {
        Frame& frame = s_.callstack.back();
        const Procedure* proc = p_.find_proc(frame.proc);
        if (!proc || frame.pc >= proc->code.size())
            return fail(FaultKind::TypeMismatch, "program counter out of range");
        proc_ = proc;
        const Instr& in = proc->code[frame.pc];
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
        case InstrKind::Branch: return branch(in);
        case InstrKind::MoveTo: return move_to(in);
        case InstrKind::MoveFrom: return move_from(in);
        case InstrKind::BorrowGlobal: return borrow_global(in);
        }
        return fail(FaultKind::TypeMismatch, "unknown instruction");
    }

private:
    Frame& frame() { return s_.callstack.back(); }

    StepResult fail(FaultKind k, std::string detail) {
        return StepResult::faulted(Fault{k, frame().proc, frame().pc, std::move(detail)});
    }

    StepResult advance() {
        frame().pc += 1;
        return StepResult::running();
    }

    std::optional<RuntimeValue> pop() {
        if (s_.operands.empty())
            return std::nullopt;
        RuntimeValue v = std::move(s_.operands.back());
        s_.operands.pop_back();
        return v;
    }

    StepResult move_loc(const Instr& in) {
        auto it = frame().locals.find(in.local);
        if (it == frame().locals.end())
            return fail(FaultKind::UnboundLocal, "MoveLoc of unbound local " + std::to_string(in.local));
        if (const auto* c = std::get_if<Location>(&it->second)) {
            auto mem = s_.memory.find(*c);
            if (mem == s_.memory.end())
                return fail(FaultKind::DanglingAccess, "moved-from location");
            s_.operands.push_back(mem->second);
            s_.memory.erase(mem);
        } else {
            s_.operands.push_back(RuntimeValue{std::get<Reference>(it->second)});
        }
        frame().locals.erase(it);
        return advance();
    }

    StepResult copy_loc(const Instr& in) {
        auto it = frame().locals.find(in.local);
        if (it == frame().locals.end())
            return fail(FaultKind::UnboundLocal, "CopyLoc of unbound local " + std::to_string(in.local));
        if (const auto* c = std::get_if<Location>(&it->second)) {
            auto mem = s_.memory.find(*c);
            if (mem == s_.memory.end())
                return fail(FaultKind::DanglingAccess, "copied-from location");
            s_.operands.push_back(mem->second); // deep copy
        } else {
            s_.operands.push_back(RuntimeValue{std::get<Reference>(it->second)});
        }
        return advance();
    }

    StepResult store_loc(const Instr& in) {
        if (in.local >= proc_->locals_count)
            return fail(FaultKind::UnboundLocal, "StoreLoc to undeclared local");
        auto top = pop();
        if (!top)
            return fail(FaultKind::StackUnderflow, "StoreLoc on empty stack");
        // Overwriting a value binding frees the old location.
        auto it = frame().locals.find(in.local);
        if (it != frame().locals.end()) {
            if (const auto* old = std::get_if<Location>(&it->second))
                s_.memory.erase(*old);
            frame().locals.erase(it);
        }
        if (top->is_ref()) {
            frame().locals.emplace(in.local, top->as_ref());
        } else {
            Location c = s_.fresh_loc();
            s_.memory.emplace(c, std::move(*top));
            frame().locals.emplace(in.local, c);
        }
        return advance();
    }

    StepResult borrow_loc(const Instr& in) {
        auto it = frame().locals.find(in.local);
        if (it == frame().locals.end())
            return fail(FaultKind::UnboundLocal, "BorrowLoc of unbound local");
        const auto* c = std::get_if<Location>(&it->second);
        if (!c)
            return fail(FaultKind::TypeMismatch, "BorrowLoc of a reference local");
        s_.operands.push_back(RuntimeValue{Reference{*c, Path::eps()}});
        return advance();
    }

    StepResult borrow_field(const Instr& in) {
        auto it = frame().locals.find(in.local);
        if (it == frame().locals.end())
            return fail(FaultKind::UnboundLocal, "BorrowField of unbound local");
        const auto* r = std::get_if<Reference>(&it->second);
        if (!r)
            return fail(FaultKind::TypeMismatch, "BorrowField requires a reference-typed local");
        Reference extended{r->loc, path_concat(r->path, Path::field(in.field))};
        s_.operands.push_back(RuntimeValue{std::move(extended)});
        return advance();
    }

    StepResult read_ref() {
        auto top = pop();
        if (!top)
            return fail(FaultKind::StackUnderflow, "ReadRef on empty stack");
        if (!top->is_ref())
            return fail(FaultKind::TypeMismatch, "ReadRef on a non-reference");
        const Reference r = top->as_ref();
        auto mem = s_.memory.find(r.loc);
        if (mem == s_.memory.end())
            return fail(FaultKind::DanglingAccess, "read from dangling reference");
        const RuntimeValue* v = value_at_path(p_, mem->second, r.path);
        if (!v)
            return fail(FaultKind::TypeMismatch, "reference path does not exist in target");
        s_.operands.push_back(*v); // deep copy
        return advance();
    }

    StepResult write_ref() {
        auto top = pop();
        if (!top)
            return fail(FaultKind::StackUnderflow, "WriteRef on empty stack");
        if (!top->is_ref())
            return fail(FaultKind::TypeMismatch, "WriteRef target is not a reference");
        auto val = pop();
        if (!val)
            return fail(FaultKind::StackUnderflow, "WriteRef without a value");
        if (val->is_ref())
            return fail(FaultKind::TypeMismatch, "WriteRef of a reference value");
        const Reference r = top->as_ref();
        auto mem = s_.memory.find(r.loc);
        if (mem == s_.memory.end())
            return fail(FaultKind::DanglingAccess, "write through dangling reference");
        const RuntimeValue* slot = value_at_path(p_, mem->second, r.path);
        if (!slot || runtime_valtype(*slot) != runtime_valtype(*val))
            return fail(FaultKind::TypeMismatch, "WriteRef type disagreement");
        set_value_at_path(p_, mem->second, r.path, std::move(*val));
        return advance();
    }

    StepResult freeze_ref() {
        // No-op at runtime; the permission change is purely static.
        if (s_.operands.empty())
            return fail(FaultKind::StackUnderflow, "FreezeRef on empty stack");
        if (!s_.operands.back().is_ref())
            return fail(FaultKind::TypeMismatch, "FreezeRef on a non-reference");
        return advance();
    }

    StepResult do_pop() {
        if (!pop())
            return fail(FaultKind::StackUnderflow, "Pop on empty stack");
        return advance();
    }

    StepResult pack(const Instr& in) {
        const RecordDecl* decl = p_.find_record(in.record);
        if (!decl)
            return fail(FaultKind::TypeMismatch, "unknown record");
        size_t n = decl->fields.size();
        if (s_.operands.size() < n)
            return fail(FaultKind::StackUnderflow, "Pack with too few operands");
        RecordValue rec;
        rec.type = in.record;
        rec.fields.resize(n);
        // Last field is on top.
        for (size_t i = 0; i < n; ++i) {
            RuntimeValue v = std::move(s_.operands.back());
            s_.operands.pop_back();
            size_t idx = n - 1 - i;
            if (!value_has_valtype(v, decl->fields[idx].type))
                return fail(FaultKind::TypeMismatch,
                            "Pack field '" + decl->fields[idx].name + "' type disagreement");
            rec.fields[idx] = std::move(v);
        }
        s_.operands.push_back(RuntimeValue{std::move(rec)});
        return advance();
    }

    StepResult unpack(const Instr& in) {
        auto top = pop();
        if (!top)
            return fail(FaultKind::StackUnderflow, "Unpack on empty stack");
        auto* rec = std::get_if<RecordValue>(&top->v);
        if (!rec || rec->type != in.record)
            return fail(FaultKind::TypeMismatch, "Unpack of a non-" + in.record.str());
        for (auto& f : rec->fields)
            s_.operands.push_back(std::move(f));
        return advance();
    }

    StepResult arith(const Instr& in) {
        const OpSig& sig = op_signature(in.op);
        size_t n = sig.operands.size();
        if (s_.operands.size() < n)
            return fail(FaultKind::StackUnderflow, "Op with too few operands");
        std::vector<RuntimeValue> args(n);
        for (size_t i = 0; i < n; ++i) {
            args[n - 1 - i] = std::move(s_.operands.back());
            s_.operands.pop_back();
        }
        for (size_t i = 0; i < n; ++i)
            if (!value_has_valtype(args[i], ValType::make_prim(sig.operands[i])))
                return fail(FaultKind::TypeMismatch, "Op operand type disagreement");
        s_.operands.push_back(eval_op(in.op, args));
        return advance();
    }

    static RuntimeValue eval_op(OpCode op, const std::vector<RuntimeValue>& a) {
        auto i = [&](size_t k) { return std::get<int64_t>(a[k].v); };
        auto b = [&](size_t k) { return std::get<bool>(a[k].v); };
        auto wrap = [](uint64_t v) { return static_cast<int64_t>(v); };
        switch (op) {
        case OpCode::Add: return RuntimeValue::of_int(wrap(static_cast<uint64_t>(i(0)) + static_cast<uint64_t>(i(1))));
        case OpCode::Sub: return RuntimeValue::of_int(wrap(static_cast<uint64_t>(i(0)) - static_cast<uint64_t>(i(1))));
        case OpCode::Mul: return RuntimeValue::of_int(wrap(static_cast<uint64_t>(i(0)) * static_cast<uint64_t>(i(1))));
        case OpCode::Neg: return RuntimeValue::of_int(wrap(0 - static_cast<uint64_t>(i(0))));
        case OpCode::Lt: return RuntimeValue::of_bool(i(0) < i(1));
        case OpCode::Le: return RuntimeValue::of_bool(i(0) <= i(1));
        case OpCode::Gt: return RuntimeValue::of_bool(i(0) > i(1));
        case OpCode::Ge: return RuntimeValue::of_bool(i(0) >= i(1));
        case OpCode::EqInt: return RuntimeValue::of_bool(i(0) == i(1));
        case OpCode::NeInt: return RuntimeValue::of_bool(i(0) != i(1));
        case OpCode::EqBool: return RuntimeValue::of_bool(b(0) == b(1));
        case OpCode::NeBool: return RuntimeValue::of_bool(b(0) != b(1));
        case OpCode::EqAddr: return RuntimeValue::of_bool(std::get<Addr>(a[0].v) == std::get<Addr>(a[1].v));
        case OpCode::NeAddr: return RuntimeValue::of_bool(!(std::get<Addr>(a[0].v) == std::get<Addr>(a[1].v)));
        case OpCode::And: return RuntimeValue::of_bool(b(0) && b(1));
        case OpCode::Or: return RuntimeValue::of_bool(b(0) || b(1));
        case OpCode::Not: return RuntimeValue::of_bool(!b(0));
        }
        return RuntimeValue::of_int(0);
    }

    StepResult ld_const(const Instr& in) {
        s_.operands.push_back(RuntimeValue::of_const(in.cval));
        return advance();
    }

    StepResult call(const Instr& in) {
        const Procedure* callee = p_.find_proc(in.callee);
        if (!callee)
            return fail(FaultKind::TypeMismatch, "unknown callee");
        size_t n = callee->ins.size();
        if (s_.operands.size() < n)
            return fail(FaultKind::StackUnderflow, "Call with too few arguments");
        Frame next;
        next.proc = in.callee;
        next.pc = 0;
        // Topmost operand is the last parameter.
        for (size_t i = 0; i < n; ++i) {
            size_t param = n - 1 - i;
            RuntimeValue v = std::move(s_.operands.back());
            s_.operands.pop_back();
            const Type& want = callee->ins[param];
            if (want.is_ref()) {
                if (!v.is_ref())
                    return fail(FaultKind::TypeMismatch, "value passed for reference parameter");
                next.locals.emplace(static_cast<uint32_t>(param), v.as_ref());
            } else {
                if (v.is_ref() || !value_has_valtype(v, want.val))
                    return fail(FaultKind::TypeMismatch, "argument type disagreement");
                Location c = s_.fresh_loc();
                s_.memory.emplace(c, std::move(v));
                next.locals.emplace(static_cast<uint32_t>(param), c);
            }
        }
        s_.callstack.push_back(std::move(next));
        return StepResult::running();
    }

    StepResult ret() {
        // Locations still bound in the departing frame are deallocated;
        // the checker guarantees no reference escapes them.
        for (const auto& [idx, slot] : frame().locals) {
            (void)idx;
            if (const auto* c = std::get_if<Location>(&slot))
                s_.memory.erase(*c);
        }
        s_.callstack.pop_back();
        if (s_.callstack.empty())
            return StepResult::halted();
        s_.callstack.back().pc += 1;
        return StepResult::running();
    }

    StepResult branch(const Instr& in) {
        auto top = pop();
        if (!top)
            return fail(FaultKind::StackUnderflow, "Branch on empty stack");
        const auto* b = std::get_if<bool>(&top->v);
        if (!b)
            return fail(FaultKind::TypeMismatch, "Branch on a non-bool");
        frame().pc = *b ? in.t1 : in.t2;
        return StepResult::running();
    }

    StepResult move_to(const Instr& in) {
        auto val = pop();
        if (!val)
            return fail(FaultKind::StackUnderflow, "MoveTo on empty stack");
        if (val->is_ref() || !value_has_valtype(*val, ValType::make_record(in.record)))
            return fail(FaultKind::TypeMismatch, "MoveTo value is not a " + in.record.str());
        auto addr = pop();
        if (!addr)
            return fail(FaultKind::StackUnderflow, "MoveTo without an address");
        const auto* a = std::get_if<Addr>(&addr->v);
        if (!a)
            return fail(FaultKind::TypeMismatch, "MoveTo address is not an addr");
        auto key = std::make_pair(in.record, *a);
        if (s_.globals.count(key))
            return fail(FaultKind::GlobalExists, "global already published at " + a->to_hex());
        Location c = s_.fresh_loc();
        s_.memory.emplace(c, std::move(*val));
        s_.globals.emplace(std::move(key), c);
        return advance();
    }

    StepResult move_from(const Instr& in) {
        auto addr = pop();
        if (!addr)
            return fail(FaultKind::StackUnderflow, "MoveFrom on empty stack");
        const auto* a = std::get_if<Addr>(&addr->v);
        if (!a)
            return fail(FaultKind::TypeMismatch, "MoveFrom address is not an addr");
        auto key = std::make_pair(in.record, *a);
        auto it = s_.globals.find(key);
        if (it == s_.globals.end())
            return fail(FaultKind::MissingGlobal, "no global at " + a->to_hex());
        auto mem = s_.memory.find(it->second);
        if (mem == s_.memory.end())
            return fail(FaultKind::DanglingAccess, "global cell missing from memory");
        s_.operands.push_back(std::move(mem->second));
        s_.memory.erase(mem);
        s_.globals.erase(it);
        return advance();
    }

    StepResult borrow_global(const Instr& in) {
        auto addr = pop();
        if (!addr)
            return fail(FaultKind::StackUnderflow, "BorrowGlobal on empty stack");
        const auto* a = std::get_if<Addr>(&addr->v);
        if (!a)
            return fail(FaultKind::TypeMismatch, "BorrowGlobal address is not an addr");
        auto it = s_.globals.find(std::make_pair(in.record, *a));
        if (it == s_.globals.end())
            return fail(FaultKind::MissingGlobal, "no global at " + a->to_hex());
        s_.operands.push_back(RuntimeValue{Reference{it->second, Path::eps()}});
        return advance();
    }

    const Program& p_;
    ConcreteState& s_;
    const Procedure* proc_ = nullptr;
};

} // namespace

StepResult step(const Program& p, ConcreteState& s) {
    assert(!s.callstack.empty());
    return Stepper(p, s).exec();
}

std::string trace_line(const ConcreteState& s, const Instr& in) {
    const Frame& f = s.callstack.back();
    std::ostringstream os;
    os << "pc=" << f.pc << " proc=" << f.proc.str() << " instr=" << instr_mnemonic(in.kind)
       << " stack=" << s.operands.size();
    return os.str();
}

Outcome run(const Program& p, const QualifiedName& entry, const std::vector<RuntimeValue>& args,
            uint64_t fuel, const StepHook& hook) {
    Outcome out;
    auto init = init_state(p, entry, args);
    if (const auto* err = std::get_if<InitError>(&init)) {
        out.kind = Outcome::Kind::Faulted;
        out.fault = Fault{FaultKind::TypeMismatch, entry, 0, err->message};
        return out;
    }
    ConcreteState s = std::move(std::get<ConcreteState>(init));
    for (uint64_t used = 0; used < fuel; ++used) {
        if (hook) {
            const Procedure* proc = p.find_proc(s.callstack.back().proc);
            hook(s, proc->code[s.callstack.back().pc]);
        }
        StepResult r = step(p, s);
        out.steps = used + 1;
        if (r.kind == StepResult::Kind::Faulted) {
            out.kind = Outcome::Kind::Faulted;
            out.fault = std::move(r.fault);
            return out;
        }
        if (r.kind == StepResult::Kind::Halted) {
            out.kind = Outcome::Kind::Halted;
            out.final_operands = std::move(s.operands);
            std::set<Location> owned;
            for (const auto& [key, loc] : s.globals) {
                (void)key;
                owned.insert(loc);
            }
            for (const auto& [loc, v] : s.memory) {
                (void)v;
                if (!owned.count(loc))
                    out.leaked.push_back(loc);
            }
            return out;
        }
    }
    out.kind = Outcome::Kind::FuelExhausted;
    return out;
}

} // namespace mvbc
