// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/soundness.hpp"

#include <algorithm>
#include <sstream>

namespace mvbc {

const char* invariant_kind_str(InvariantKind k) {
    switch (k) {
    case InvariantKind::TypeAgreement: return "type-agreement";
    case InvariantKind::MemoryBijection: return "memory-bijection";
    case InvariantKind::DanglingReference: return "dangling-reference";
    case InvariantKind::ReferentialTransparency: return "referential-transparency";
    case InvariantKind::ImmutableToMutablePath: return "immutable-to-mutable-path";
    case InvariantKind::MutableArgAliasing: return "mutable-arg-aliasing";
    case InvariantKind::RuntimeFault: return "runtime-fault";
    case InvariantKind::LeakAtHalt: return "leak-at-halt";
    case InvariantKind::Internal: return "internal";
    }
    return "?";
}

std::string InvariantViolation::str() const {
    std::ostringstream os;
    os << invariant_kind_str(kind) << " at step " << step << ": " << detail;
    return os.str();
}

namespace {

// A position's concrete content, if it denotes a single slot of s.
struct Slot {
    enum class Kind { Loc, Ref, Value, None } kind = Kind::None;
    Location loc = 0;
    Reference ref;
    const RuntimeValue* value = nullptr;
};

Slot read_position(const ConcreteState& s, const Position& pos) {
    Slot out;
    if (pos.kind == Position::Kind::Local) {
        if (pos.frame >= s.callstack.size())
            return out;
        const auto& locals = s.callstack[pos.frame].locals;
        auto it = locals.find(pos.index);
        if (it == locals.end())
            return out;
        if (const auto* c = std::get_if<Location>(&it->second)) {
            out.kind = Slot::Kind::Loc;
            out.loc = *c;
        } else {
            out.kind = Slot::Kind::Ref;
            out.ref = std::get<Reference>(it->second);
        }
        return out;
    }
    if (pos.kind == Position::Kind::Stack) {
        if (pos.index >= s.operands.size())
            return out;
        const RuntimeValue& v = s.operands[pos.index];
        if (v.is_ref()) {
            out.kind = Slot::Kind::Ref;
            out.ref = v.as_ref();
        } else {
            out.kind = Slot::Kind::Value;
            out.value = &v;
        }
        return out;
    }
    return out; // global pseudo-locations have no single slot
}

bool ref_leq(const Reference& a, const Reference& b) {
    return a.loc == b.loc && path_prefix(a.path, b.path);
}

} // namespace

bool edge_realized(const Program& p, const ConcreteState& s, const Position& m,
                   const Path& label, const Position& n) {
    (void)p;
    Slot target = read_position(s, n);
    if (target.kind != Slot::Kind::Ref)
        return false;
    const Reference& rn = target.ref;
    if (m.kind == Position::Kind::Global) {
        for (const auto& [key, loc] : s.globals)
            if (key.first == m.global && loc == rn.loc)
                return path_matches(label, rn.path);
        return false;
    }
    Slot src = read_position(s, m);
    if (src.kind == Slot::Kind::Loc)
        return src.loc == rn.loc && path_matches(label, rn.path);
    if (src.kind == Slot::Kind::Ref) {
        if (src.ref.loc != rn.loc)
            return false;
        return path_matches(path_concat(src.ref.path, label), rn.path);
    }
    return false;
}

std::variant<AbstractState, std::string>
abstract_state(const Program& p, const std::map<QualifiedName, ProcAnnotations>& ann,
               const ConcreteState& s) {
    AbstractState out;
    uint32_t stack_offset = 0;
    for (uint32_t i = 0; i < s.callstack.size(); ++i) {
        const Frame& frame = s.callstack[i];
        bool top = i + 1 == s.callstack.size();
        auto proc_ann = ann.find(frame.proc);
        const Procedure* proc = p.find_proc(frame.proc);
        if (!proc || proc_ann == ann.end())
            return "no annotations for " + frame.proc.str();
        if (frame.pc >= proc_ann->second.size() || !proc_ann->second[frame.pc])
            return "no annotation at " + frame.proc.str() + "@" + std::to_string(frame.pc);
        LocalAbstractState ls = *proc_ann->second[frame.pc];

        if (!top) {
            // A waiting frame sits at a Call; its stack view still carries
            // the callee arguments, which concretely moved into the callee
            // frame. Strip and rename them into the next frame's locals.
            const Instr& in = proc->code[frame.pc];
            if (in.kind != InstrKind::Call)
                return frame.proc.str() + "@" + std::to_string(frame.pc) +
                       " is waiting on a non-call instruction";
            const Procedure* callee = p.find_proc(in.callee);
            size_t n_args = callee->ins.size();
            if (ls.stack.size() < n_args)
                return "annotation stack is shorter than the callee arguments";
            uint32_t base = static_cast<uint32_t>(ls.stack.size() - n_args);
            std::map<Position, Position> strip;
            for (uint32_t k = 0; k < n_args; ++k)
                strip.emplace(Position::stack(base + k), Position::local(1, k));
            ls.graph = ls.graph.rename(strip);
            ls.stack.resize(base);
        }

        AbstractState::Frame af;
        af.proc = frame.proc;
        af.pc = frame.pc;
        af.locals = ls.locals;
        out.frames.push_back(std::move(af));

        // Shift the frame's relative positions to absolute ones.
        std::map<Position, Position> shift;
        for (const auto& e : ls.graph.edges()) {
            for (const Position* pos : {&e.src, &e.dst}) {
                if (shift.count(*pos))
                    continue;
                if (pos->kind == Position::Kind::Local)
                    shift.emplace(*pos, Position::local(pos->frame + i, pos->index));
                else if (pos->kind == Position::Kind::Stack)
                    shift.emplace(*pos, Position::stack(pos->index + stack_offset));
            }
        }
        BorrowGraph shifted = ls.graph.rename(shift);
        std::set<BorrowEdge> merged = out.graph.edges();
        merged.insert(shifted.edges().begin(), shifted.edges().end());
        out.graph = BorrowGraph(std::move(merged));

        for (const auto& t : ls.stack)
            out.stack.push_back(t);
        stack_offset += static_cast<uint32_t>(ls.stack.size());
    }
    return out;
}

namespace {

class InvariantChecker {
public:
    InvariantChecker(const Program& p, const ConcreteState& s, const AbstractState& abs)
        : p_(p), s_(s), abs_(abs) {}

    std::vector<InvariantViolation> run() {
        collect_positions();
        check_type_agreement();
        check_bijection();
        compute_realized();
        check_dangling();
        check_transparency();
        check_no_imm_to_mut_path();
        return std::move(found_);
    }

private:
    void fail(InvariantKind k, std::string detail) {
        found_.push_back(InvariantViolation{k, std::move(detail), 0});
    }

    void collect_positions() {
        for (uint32_t i = 0; i < abs_.frames.size(); ++i)
            for (const auto& [idx, t] : abs_.frames[i].locals)
                positions_.emplace_back(Position::local(i, idx), t);
        for (uint32_t i = 0; i < abs_.stack.size(); ++i)
            positions_.emplace_back(Position::stack(i), abs_.stack[i]);
    }

    bool ref_target_type_matches(const Reference& r, const ValType& want) const {
        auto mem = s_.memory.find(r.loc);
        if (mem == s_.memory.end())
            return false;
        const RuntimeValue* v = value_at_path(p_, mem->second, r.path);
        return v && !v->is_ref() && runtime_valtype(*v) == want;
    }

    void check_type_agreement() {
        if (s_.callstack.size() != abs_.frames.size()) {
            fail(InvariantKind::TypeAgreement, "call stack heights differ");
            return;
        }
        if (s_.operands.size() != abs_.stack.size()) {
            fail(InvariantKind::TypeAgreement,
                 "operand stack heights differ: " + std::to_string(s_.operands.size()) + " vs " +
                     std::to_string(abs_.stack.size()));
            return;
        }
        for (uint32_t i = 0; i < abs_.frames.size(); ++i) {
            const Frame& cf = s_.callstack[i];
            const AbstractState::Frame& af = abs_.frames[i];
            if (cf.proc != af.proc || cf.pc != af.pc) {
                fail(InvariantKind::TypeAgreement, "frame " + std::to_string(i) + " disagrees");
                continue;
            }
            std::set<uint32_t> conc, abst;
            for (const auto& [k, v] : cf.locals) {
                (void)v;
                conc.insert(k);
            }
            for (const auto& [k, v] : af.locals) {
                (void)v;
                abst.insert(k);
            }
            if (conc != abst)
                fail(InvariantKind::TypeAgreement,
                     "bound locals differ in frame " + std::to_string(i));
        }
        for (const auto& [pos, t] : positions_) {
            Slot slot = read_position(s_, pos);
            bool ok = false;
            switch (slot.kind) {
            case Slot::Kind::Loc: {
                auto mem = s_.memory.find(slot.loc);
                ok = t.is_val() && mem != s_.memory.end() && !mem->second.is_ref() &&
                     runtime_valtype(mem->second) == t.val;
                break;
            }
            case Slot::Kind::Ref:
                ok = t.is_ref() && ref_target_type_matches(slot.ref, t.val);
                break;
            case Slot::Kind::Value:
                ok = t.is_val() && value_has_valtype(*slot.value, t.val);
                break;
            case Slot::Kind::None:
                ok = false;
                break;
            }
            if (!ok)
                fail(InvariantKind::TypeAgreement,
                     pos.str() + " does not have type " + type_str(t));
        }
    }

    void check_bijection() {
        // Call-stack locations plus global cells must own dom(memory)
        // exactly, with no sharing.
        std::map<Location, std::string> owners;
        auto claim = [&](Location c, std::string who) {
            auto [it, inserted] = owners.emplace(c, who);
            if (!inserted)
                fail(InvariantKind::MemoryBijection,
                     "location " + std::to_string(c) + " owned by both " + it->second + " and " + who);
        };
        for (uint32_t i = 0; i < s_.callstack.size(); ++i)
            for (const auto& [idx, slot] : s_.callstack[i].locals)
                if (const auto* c = std::get_if<Location>(&slot))
                    claim(*c, Position::local(i, idx).str());
        for (const auto& [key, loc] : s_.globals)
            claim(loc, "global " + key.first.str() + "@" + key.second.to_hex());
        for (const auto& [loc, owner] : owners) {
            (void)owner;
            if (!s_.memory.count(loc))
                fail(InvariantKind::MemoryBijection,
                     "location " + std::to_string(loc) + " is owned but absent from memory");
        }
        for (const auto& [loc, v] : s_.memory) {
            (void)v;
            if (!owners.count(loc))
                fail(InvariantKind::MemoryBijection,
                     "location " + std::to_string(loc) + " is in memory but unowned");
        }
    }

    void compute_realized() {
        for (const auto& e : abs_.graph.edges())
            if (edge_realized(p_, s_, e.src, e.label, e.dst))
                realized_succ_[e.src].insert(e.dst);
    }

    bool realized_path(const Position& from, const Position& to) const {
        if (from == to)
            return false; // paths here are nonempty edge sequences
        std::set<Position> seen{from};
        std::vector<Position> frontier{from};
        while (!frontier.empty()) {
            Position cur = frontier.back();
            frontier.pop_back();
            auto it = realized_succ_.find(cur);
            if (it == realized_succ_.end())
                continue;
            for (const auto& nxt : it->second) {
                if (nxt == to)
                    return true;
                if (seen.insert(nxt).second)
                    frontier.push_back(nxt);
            }
        }
        return false;
    }

    void check_dangling() {
        if (abs_.graph.has_cycle())
            fail(InvariantKind::DanglingReference, "borrow graph has a cycle");
        std::map<Position, bool> has_realized_in;
        for (const auto& e : abs_.graph.edges()) {
            bool& flag = has_realized_in[e.dst];
            if (!flag)
                flag = edge_realized(p_, s_, e.src, e.label, e.dst);
        }
        std::set<Position> has_any_in;
        for (const auto& e : abs_.graph.edges())
            has_any_in.insert(e.dst);
        for (const auto& [pos, t] : positions_) {
            if (t.is_val()) {
                if (has_any_in.count(pos))
                    fail(InvariantKind::DanglingReference,
                         "value position " + pos.str() + " has an incoming borrow edge");
            } else {
                auto it = has_realized_in.find(pos);
                if (it == has_realized_in.end() || !it->second)
                    fail(InvariantKind::DanglingReference,
                         "reference position " + pos.str() + " has no realized incoming edge");
            }
        }
    }

    void check_transparency() {
        for (const auto& [m, mt] : positions_) {
            Slot sm = read_position(s_, m);
            if (sm.kind != Slot::Kind::Loc && sm.kind != Slot::Kind::Ref)
                continue;
            for (const auto& [n, nt] : positions_) {
                if (m == n || !nt.is_ref())
                    continue;
                Slot sn = read_position(s_, n);
                if (sn.kind != Slot::Kind::Ref)
                    continue;
                bool leq = sm.kind == Slot::Kind::Loc
                               ? sm.loc == sn.ref.loc
                               : ref_leq(sm.ref, sn.ref);
                if (!leq)
                    continue;
                bool d1 = mt.is_imm_ref() && nt.is_imm_ref();
                bool d2 = !mt.is_imm_ref() && realized_path(m, n);
                bool d3 = sm.kind == Slot::Kind::Ref && sm.ref == sn.ref && realized_path(n, m);
                if (!d1 && !d2 && !d3)
                    fail(InvariantKind::ReferentialTransparency,
                         m.str() + " <= " + n.str() + " with no witnessing disjunct");
            }
        }
    }

    void check_no_imm_to_mut_path() {
        for (const auto& [m, mt] : positions_) {
            if (!mt.is_imm_ref())
                continue;
            for (const auto& [n, nt] : positions_) {
                if (m == n || !nt.is_mut_ref())
                    continue;
                if (realized_path(m, n))
                    fail(InvariantKind::ImmutableToMutablePath,
                         "realized path from immutable " + m.str() + " to mutable " + n.str());
            }
        }
    }

    const Program& p_;
    const ConcreteState& s_;
    const AbstractState& abs_;
    std::vector<std::pair<Position, Type>> positions_;
    std::map<Position, std::set<Position>> realized_succ_;
    std::vector<InvariantViolation> found_;
};

} // namespace

std::vector<InvariantViolation>
check_invariants(const Program& p, const std::map<QualifiedName, ProcAnnotations>& ann,
                 const ConcreteState& s) {
    auto abs = abstract_state(p, ann, s);
    if (const auto* err = std::get_if<std::string>(&abs))
        return {InvariantViolation{InvariantKind::Internal, *err, 0}};
    return InvariantChecker(p, s, std::get<AbstractState>(abs)).run();
}

namespace {

// The aliasing guarantee checked directly on the concrete arguments of a
// call: a mutable reference parameter overlaps no other parameter.
std::optional<InvariantViolation> check_call_args(const Program& p, const ConcreteState& s,
                                                  const Instr& in) {
    const Procedure* callee = p.find_proc(in.callee);
    if (!callee || s.operands.size() < callee->ins.size())
        return std::nullopt;
    size_t base = s.operands.size() - callee->ins.size();
    for (size_t i = 0; i < callee->ins.size(); ++i) {
        if (!callee->ins[i].is_mut_ref())
            continue;
        const RuntimeValue& vi = s.operands[base + i];
        if (!vi.is_ref())
            continue;
        for (size_t j = 0; j < callee->ins.size(); ++j) {
            if (j == i || !callee->ins[j].is_ref())
                continue;
            const RuntimeValue& vj = s.operands[base + j];
            if (!vj.is_ref())
                continue;
            if (ref_leq(vi.as_ref(), vj.as_ref()) || ref_leq(vj.as_ref(), vi.as_ref()))
                return InvariantViolation{
                    InvariantKind::MutableArgAliasing,
                    "arguments " + std::to_string(i) + " and " + std::to_string(j) +
                        " of " + in.callee.str() + " overlap",
                    0};
        }
    }
    return std::nullopt;
}

} // namespace

DifferentialResult differential_run(const Program& p,
                                    const std::map<QualifiedName, ProcAnnotations>& ann,
                                    const QualifiedName& entry,
                                    const std::vector<RuntimeValue>& args, uint64_t fuel,
                                    const DifferentialHook& hook) {
    DifferentialResult out;
    auto init = init_state(p, entry, args);
    if (const auto* err = std::get_if<InitError>(&init)) {
        out.violation = InvariantViolation{InvariantKind::Internal, err->message, 0};
        return out;
    }
    ConcreteState s = std::move(std::get<ConcreteState>(init));
    for (uint64_t used = 0; used < fuel; ++used) {
        std::vector<InvariantViolation> vs = check_invariants(p, ann, s);
        if (hook)
            hook(used, s, vs.size());
        if (!vs.empty()) {
            vs.front().step = used;
            out.violation = vs.front();
            out.steps = used;
            return out;
        }
        const Procedure* proc = p.find_proc(s.callstack.back().proc);
        const Instr& in = proc->code[s.callstack.back().pc];
        if (in.kind == InstrKind::Call) {
            if (auto alias = check_call_args(p, s, in)) {
                alias->step = used;
                out.violation = alias;
                out.steps = used;
                return out;
            }
        }
        StepResult r = step(p, s);
        out.steps = used + 1;
        if (r.kind == StepResult::Kind::Faulted) {
            out.violation = InvariantViolation{InvariantKind::RuntimeFault, r.fault->str(), used};
            out.outcome = Outcome::Kind::Faulted;
            return out;
        }
        if (r.kind == StepResult::Kind::Halted) {
            out.outcome = Outcome::Kind::Halted;
            if (!s.operands.empty()) {
                out.violation = InvariantViolation{
                    InvariantKind::LeakAtHalt,
                    std::to_string(s.operands.size()) + " operands left at halt", used};
                return out;
            }
            std::set<Location> owned;
            for (const auto& [key, loc] : s.globals) {
                (void)key;
                owned.insert(loc);
            }
            for (const auto& [loc, v] : s.memory) {
                (void)v;
                if (!owned.count(loc)) {
                    out.violation = InvariantViolation{
                        InvariantKind::LeakAtHalt,
                        "location " + std::to_string(loc) + " leaked at halt", used};
                    return out;
                }
            }
            return out;
        }
    }
    out.outcome = Outcome::Kind::FuelExhausted;
    return out;
}

} // namespace mvbc
