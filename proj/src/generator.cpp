// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/generator.hpp"

#include <algorithm>
#include <random>

namespace mvbc {

namespace {

// mt19937_64 output is pinned by the standard; raw modulo sampling keeps
// generated programs byte-identical across platforms (std distributions
// are not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next() { return eng_(); }
    uint32_t below(uint32_t n) { return n == 0 ? 0 : static_cast<uint32_t>(next() % n); }
    uint32_t range(uint32_t lo, uint32_t hi) { return lo + below(hi - lo + 1); }
    bool chance(uint32_t pct) { return below(100) < pct; }

private:
    std::mt19937_64 eng_;
};

struct SimLocal {
    Type type;
    bool bound = false;
};

// Exact mirror of the shape the stack analysis tracks; borrow facts are
// deliberately not modeled.
struct Sim {
    std::vector<SimLocal> locals;
    std::vector<Type> stack;

    uint32_t fresh_local(const Type& t) {
        locals.push_back(SimLocal{t, false});
        return static_cast<uint32_t>(locals.size() - 1);
    }
};

class Generator {
public:
    Generator(uint64_t seed, const GenOptions& opts) : rng_(seed), opts_(opts) {}

    Program run() {
        build_records();
        uint32_t helpers = rng_.below(5); // helpers p0..p3, then main
        for (uint32_t i = 0; i < helpers; ++i)
            build_proc("p" + std::to_string(i), false);
        build_proc("main", true);
        finish_acquires();
        if (rng_.chance(45))
            apply_mutation();
        return std::move(program_);
    }

private:
    // ---- program skeleton -------------------------------------------------

    void build_records() {
        program_.modules.push_back(Module{"m0", {}, {}});
        if (rng_.chance(35))
            program_.modules.push_back(Module{"m1", {}, {}});
        uint32_t total = rng_.range(1, 4);
        for (uint32_t i = 0; i < total; ++i) {
            uint32_t mod = rng_.below(static_cast<uint32_t>(program_.modules.size()));
            RecordDecl rec;
            rec.name = "T" + std::to_string(i);
            uint32_t nfields = rng_.range(1, 3);
            for (uint32_t f = 0; f < nfields; ++f) {
                ValType ft = ValType::make_prim(rng_.chance(70) ? PrimKind::Int : PrimKind::Bool);
                if (!all_records_.empty() && rng_.chance(20)) {
                    const auto& nested = all_records_[rng_.below(static_cast<uint32_t>(all_records_.size()))];
                    ft = ValType::make_record(nested);
                }
                rec.fields.push_back(FieldDecl{"f" + std::to_string(f), ft});
            }
            all_records_.push_back({program_.modules[mod].name, rec.name});
            program_.modules[mod].records.push_back(std::move(rec));
        }
    }

    const RecordDecl* record_of(const QualifiedName& qn) const {
        return program_.find_record(qn);
    }

    // Any record with at least one int field is usable by the borrow and
    // write gadgets.
    std::optional<QualifiedName> pick_record_with_int_field() {
        std::vector<QualifiedName> ok;
        for (const auto& qn : all_records_)
            for (const auto& f : record_of(qn)->fields)
                if (f.type == ValType::make_prim(PrimKind::Int)) {
                    ok.push_back(qn);
                    break;
                }
        if (ok.empty())
            return std::nullopt;
        return ok[rng_.below(static_cast<uint32_t>(ok.size()))];
    }

    std::string int_field_of(const QualifiedName& qn) {
        std::vector<std::string> names;
        for (const auto& f : record_of(qn)->fields)
            if (f.type == ValType::make_prim(PrimKind::Int))
                names.push_back(f.name);
        return names[rng_.below(static_cast<uint32_t>(names.size()))];
    }

    void build_proc(const std::string& name, bool is_main) {
        Module& mod = program_.modules[is_main ? 0 : rng_.below(static_cast<uint32_t>(program_.modules.size()))];
        Procedure proc;
        proc.name = name;
        proc.module = mod.name;
        Sim sim;
        if (!is_main) {
            uint32_t nparams = rng_.below(3);
            for (uint32_t i = 0; i < nparams; ++i) {
                Type t = random_param_type();
                proc.ins.push_back(t);
                sim.locals.push_back(SimLocal{t, true});
            }
            proc.outs = pick_outs(proc.ins);
        }
        if (!is_main && name == "p0" && rng_.chance(50)) {
            // A sink with two mutable reference parameters keeps the
            // aliased-argument rule under pressure at call sites.
            proc.ins = {Type::make_mut_ref(ValType::make_prim(PrimKind::Int)),
                        Type::make_mut_ref(ValType::make_prim(PrimKind::Int))};
            sim.locals.assign(2, SimLocal{proc.ins[0], true});
            proc.outs.clear();
        }
        cur_ = &proc;
        sim_ = &sim;
        code_.clear();

        uint32_t budget = opts_.budget;
        while (budget > 2) {
            uint32_t before = static_cast<uint32_t>(code_.size());
            emit_gadget(is_main);
            uint32_t used = static_cast<uint32_t>(code_.size()) - before;
            if (used == 0)
                break;
            budget = used >= budget ? 0 : budget - used;
        }
        emit_cleanup_and_ret();

        proc.code = std::move(code_);
        proc.locals_count = static_cast<uint32_t>(sim.locals.size());
        mod.procs.push_back(std::move(proc));
        cur_ = nullptr;
        sim_ = nullptr;
    }

    Type random_param_type() {
        switch (rng_.below(6)) {
        case 0: return Type::prim(PrimKind::Int);
        case 1: return Type::prim(PrimKind::Bool);
        case 2:
            if (!all_records_.empty())
                return Type::make_val(ValType::make_record(pick_any_record()));
            return Type::prim(PrimKind::Int);
        case 3:
            if (!all_records_.empty())
                return Type::make_mut_ref(ValType::make_record(pick_any_record()));
            return Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
        case 4:
            if (!all_records_.empty())
                return Type::make_imm_ref(ValType::make_record(pick_any_record()));
            return Type::make_imm_ref(ValType::make_prim(PrimKind::Int));
        default: return Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
        }
    }

    QualifiedName pick_any_record() {
        return all_records_[rng_.below(static_cast<uint32_t>(all_records_.size()))];
    }

    std::vector<Type> pick_outs(const std::vector<Type>& ins) {
        ret_ref_param_.reset();
        ret_ref_field_.clear();
        uint32_t roll = rng_.below(100);
        if (roll < 40)
            return {};
        if (roll < 60)
            return {Type::prim(PrimKind::Int)};
        if (roll < 68) {
            // Return a reference with no parameter to borrow from; the
            // epilogue borrows a frame-local instead, which a correct
            // checker must reject at the Ret.
            return {Type::make_mut_ref(ValType::make_prim(PrimKind::Int))};
        }
        // Try to return a reference borrowed from a reference parameter.
        for (uint32_t i = 0; i < ins.size(); ++i) {
            if (!ins[i].is_ref() || !ins[i].val.is_record())
                continue;
            const RecordDecl* rec = record_of(ins[i].val.record);
            for (const auto& f : rec->fields) {
                if (f.type.kind != ValType::Kind::Prim)
                    continue;
                ret_ref_param_ = i;
                ret_ref_field_ = f.name;
                return {ins[i].is_mut_ref() ? Type::make_mut_ref(f.type)
                                            : Type::make_imm_ref(f.type)};
            }
        }
        if (roll < 85 && !ins.empty() && ins[0].is_mut_ref() &&
            ins[0].val == ValType::make_prim(PrimKind::Int)) {
            ret_ref_param_ = 0;
            ret_ref_field_.clear();
            return {Type::make_mut_ref(ValType::make_prim(PrimKind::Int))};
        }
        return {};
    }

    // ---- emission helpers -------------------------------------------------

    void emit(Instr in) { code_.push_back(std::move(in)); }

    void push_const_of(const ValType& t) {
        if (t.kind == ValType::Kind::Prim) {
            switch (t.prim) {
            case PrimKind::Int:
                emit(Instr::ld_const(ConstVal::of_int(static_cast<int64_t>(rng_.below(100)))));
                break;
            case PrimKind::Bool:
                emit(Instr::ld_const(ConstVal::of_bool(rng_.chance(50))));
                break;
            case PrimKind::Addr:
                emit(Instr::ld_const(ConstVal::of_addr(fresh_addr())));
                break;
            }
            sim_->stack.push_back(Type::make_val(t));
            return;
        }
        const RecordDecl* rec = record_of(t.record);
        for (const auto& f : rec->fields)
            push_const_of(f.type);
        emit(Instr::pack(t.record));
        sim_->stack.resize(sim_->stack.size() - rec->fields.size());
        sim_->stack.push_back(Type::make_val(t));
    }

    Addr fresh_addr() {
        Addr a;
        uint64_t v = ++addr_counter_;
        for (int i = 0; i < 8; ++i)
            a.bytes[15 - i] = static_cast<uint8_t>(v >> (8 * i));
        return a;
    }

    uint32_t make_value_local(const ValType& t) {
        push_const_of(t);
        uint32_t x = sim_->fresh_local(Type::make_val(t));
        emit(Instr::store_loc(x));
        sim_->locals[x].bound = true;
        sim_->stack.pop_back();
        return x;
    }

    std::optional<uint32_t> find_bound_local(const Type& t, const std::set<uint32_t>& exclude = {}) {
        std::vector<uint32_t> hits;
        for (uint32_t i = 0; i < sim_->locals.size(); ++i)
            if (sim_->locals[i].bound && sim_->locals[i].type == t && !exclude.count(i))
                hits.push_back(i);
        if (hits.empty())
            return std::nullopt;
        return hits[rng_.below(static_cast<uint32_t>(hits.size()))];
    }

    std::optional<uint32_t> find_record_local() {
        std::vector<uint32_t> hits;
        for (uint32_t i = 0; i < sim_->locals.size(); ++i)
            if (sim_->locals[i].bound && sim_->locals[i].type.is_val() &&
                sim_->locals[i].type.val.is_record())
                hits.push_back(i);
        if (hits.empty())
            return std::nullopt;
        return hits[rng_.below(static_cast<uint32_t>(hits.size()))];
    }

    // Borrow a local into a fresh ref local; returns its index.
    uint32_t bind_ref_to(uint32_t x) {
        emit(Instr::borrow_loc(x));
        Type rt = Type::make_mut_ref(sim_->locals[x].type.val);
        uint32_t r = sim_->fresh_local(rt);
        emit(Instr::store_loc(r));
        sim_->locals[r].bound = true;
        return r;
    }

    void release_ref(uint32_t r) {
        emit(Instr::move_loc(r));
        emit(Instr::pop());
        sim_->locals[r].bound = false;
    }

    // ---- gadgets ----------------------------------------------------------

    void emit_gadget(bool is_main) {
        uint32_t roll = rng_.below(100);
        if (roll < 12) {
            gadget_arith();
        } else if (roll < 28) {
            gadget_make_local();
        } else if (roll < 42) {
            gadget_borrow_read();
        } else if (roll < 54) {
            gadget_borrow_write();
        } else if (roll < 62) {
            gadget_freeze_read();
        } else if (roll < 72) {
            gadget_call();
        } else if (roll < 78) {
            gadget_use_param();
        } else if (roll < 86) {
            gadget_diamond();
        } else if (roll < 94) {
            gadget_loop();
        } else if (is_main) {
            gadget_global();
        } else {
            gadget_arith();
        }
    }

    void gadget_arith() {
        push_const_of(ValType::make_prim(PrimKind::Int));
        push_const_of(ValType::make_prim(PrimKind::Int));
        static const OpCode ops[] = {OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::Lt,
                                     OpCode::EqInt};
        OpCode op = ops[rng_.below(5)];
        emit(Instr::oper(op));
        sim_->stack.resize(sim_->stack.size() - 2);
        sim_->stack.push_back(Type::prim(op_signature(op).result));
        emit(Instr::pop());
        sim_->stack.pop_back();
    }

    void gadget_make_local() {
        ValType t = ValType::make_prim(PrimKind::Int);
        if (!all_records_.empty() && rng_.chance(55))
            t = ValType::make_record(pick_any_record());
        else if (rng_.chance(25))
            t = ValType::make_prim(PrimKind::Bool);
        make_value_local(t);
    }

    uint32_t ensure_record_local() {
        if (auto x = find_record_local())
            return *x;
        QualifiedName qn = all_records_.empty() ? QualifiedName{} : pick_any_record();
        if (all_records_.empty())
            return make_value_local(ValType::make_prim(PrimKind::Int));
        return make_value_local(ValType::make_record(qn));
    }

    void gadget_borrow_read() {
        auto qn = pick_record_with_int_field();
        if (!qn) {
            gadget_arith();
            return;
        }
        uint32_t x = ensure_typed_record_local(*qn);
        uint32_t r = bind_ref_to(x);
        emit(Instr::borrow_field(int_field_of(*qn), r));
        sim_->stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
        emit(Instr::read_ref());
        sim_->stack.back() = Type::prim(PrimKind::Int);
        emit(Instr::pop());
        sim_->stack.pop_back();
        release_ref(r);
    }

    void gadget_borrow_write() {
        auto qn = pick_record_with_int_field();
        if (!qn) {
            gadget_arith();
            return;
        }
        uint32_t x = ensure_typed_record_local(*qn);
        uint32_t r = bind_ref_to(x);
        push_const_of(ValType::make_prim(PrimKind::Int));
        emit(Instr::borrow_field(int_field_of(*qn), r));
        sim_->stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
        emit(Instr::write_ref());
        sim_->stack.resize(sim_->stack.size() - 2);
        release_ref(r);
    }

    void gadget_freeze_read() {
        auto qn = pick_record_with_int_field();
        if (!qn) {
            gadget_arith();
            return;
        }
        uint32_t x = ensure_typed_record_local(*qn);
        emit(Instr::borrow_loc(x));
        emit(Instr::freeze_ref());
        Type it = Type::make_imm_ref(sim_->locals[x].type.val);
        uint32_t r = sim_->fresh_local(it);
        emit(Instr::store_loc(r));
        sim_->locals[r].bound = true;
        emit(Instr::borrow_field(int_field_of(*qn), r));
        sim_->stack.push_back(Type::make_imm_ref(ValType::make_prim(PrimKind::Int)));
        emit(Instr::read_ref());
        sim_->stack.back() = Type::prim(PrimKind::Int);
        emit(Instr::pop());
        sim_->stack.pop_back();
        release_ref(r);
    }

    uint32_t ensure_typed_record_local(const QualifiedName& qn) {
        Type want = Type::make_val(ValType::make_record(qn));
        if (auto x = find_bound_local(want))
            return *x;
        return make_value_local(want.val);
    }

    void gadget_use_param() {
        std::vector<uint32_t> params;
        for (uint32_t i = 0; i < cur_->ins.size(); ++i)
            params.push_back(i);
        if (params.empty()) {
            gadget_arith();
            return;
        }
        uint32_t i = params[rng_.below(static_cast<uint32_t>(params.size()))];
        const Type& t = cur_->ins[i];
        emit(Instr::copy_loc(i));
        sim_->stack.push_back(t);
        if (t.is_ref()) {
            if (t.val.kind == ValType::Kind::Prim || rng_.chance(60)) {
                emit(Instr::read_ref());
                sim_->stack.back() = Type::make_val(t.val);
            }
        }
        emit(Instr::pop());
        sim_->stack.pop_back();
    }

    static std::optional<std::pair<uint32_t, uint32_t>> alias_pair(const Procedure& callee) {
        for (uint32_t i = 0; i < callee.ins.size(); ++i)
            for (uint32_t j = i + 1; j < callee.ins.size(); ++j)
                if (callee.ins[i].is_ref() && callee.ins[j].is_ref() &&
                    callee.ins[i].val == callee.ins[j].val &&
                    (callee.ins[i].is_mut_ref() || callee.ins[j].is_mut_ref()))
                    return {{i, j}};
        return std::nullopt;
    }

    void gadget_call() {
        // Only earlier procedures are callable, so the call graph is a DAG.
        std::vector<const Procedure*> candidates;
        for (const auto& m : program_.modules)
            for (const auto& pr : m.procs)
                candidates.push_back(&pr);
        if (candidates.empty()) {
            gadget_arith();
            return;
        }
        // Occasionally two reference parameters are fed from the same
        // local on purpose; the checker must refuse such a call when one
        // of them is mutable.
        std::optional<std::pair<uint32_t, uint32_t>> alias;
        const Procedure* callee = nullptr;
        if (rng_.chance(12)) {
            std::vector<const Procedure*> aliasable;
            for (const Procedure* pr : candidates)
                if (alias_pair(*pr))
                    aliasable.push_back(pr);
            if (!aliasable.empty()) {
                callee = aliasable[rng_.below(static_cast<uint32_t>(aliasable.size()))];
                alias = alias_pair(*callee);
            }
        }
        if (!callee)
            callee = candidates[rng_.below(static_cast<uint32_t>(candidates.size()))];

        // Stage ref arguments in distinct locals first, then push left to
        // right so argument evaluation stays contiguous.
        std::vector<std::optional<uint32_t>> ref_src(callee->ins.size());
        std::set<uint32_t> used;
        for (uint32_t i = 0; i < callee->ins.size(); ++i) {
            const Type& t = callee->ins[i];
            if (!t.is_ref())
                continue;
            if (alias && alias->second == i) {
                ref_src[i] = ref_src[alias->first];
                continue;
            }
            Type want = Type::make_val(t.val);
            auto x = find_bound_local(want, used);
            if (!x)
                x = make_value_local(t.val);
            used.insert(*x);
            ref_src[i] = *x;
        }
        for (uint32_t i = 0; i < callee->ins.size(); ++i) {
            const Type& t = callee->ins[i];
            if (t.is_ref()) {
                emit(Instr::borrow_loc(*ref_src[i]));
                if (t.is_imm_ref())
                    emit(Instr::freeze_ref());
                sim_->stack.push_back(t);
            } else {
                push_const_of(t.val);
            }
        }
        emit(Instr::call(callee->qualified()));
        sim_->stack.resize(sim_->stack.size() - callee->ins.size());
        for (const auto& t : callee->outs)
            sim_->stack.push_back(t);
        // Consume outputs top-down; returned references get dereferenced
        // half the time so a bogus one cannot die unobserved.
        for (size_t k = 0; k < callee->outs.size(); ++k) {
            if (sim_->stack.back().is_ref() && rng_.chance(50)) {
                emit(Instr::read_ref());
                sim_->stack.back() = Type::make_val(sim_->stack.back().val);
            }
            emit(Instr::pop());
            sim_->stack.pop_back();
        }
    }

    void gadget_global() {
        if (all_records_.empty()) {
            gadget_arith();
            return;
        }
        // Globals only on records of the current module.
        std::vector<QualifiedName> own;
        for (const auto& qn : all_records_)
            if (qn.module == cur_->module)
                own.push_back(qn);
        if (own.empty()) {
            gadget_arith();
            return;
        }
        QualifiedName t = own[rng_.below(static_cast<uint32_t>(own.size()))];
        Addr a = fresh_addr();
        emit(Instr::ld_const(ConstVal::of_addr(a)));
        sim_->stack.push_back(Type::prim(PrimKind::Addr));
        push_const_of(ValType::make_record(t));
        emit(Instr::move_to(t));
        sim_->stack.resize(sim_->stack.size() - 2);
        if (rng_.chance(65)) {
            emit(Instr::ld_const(ConstVal::of_addr(a)));
            sim_->stack.push_back(Type::prim(PrimKind::Addr));
            emit(Instr::borrow_global(t));
            sim_->stack.back() = Type::make_mut_ref(ValType::make_record(t));
            uint32_t g = sim_->fresh_local(sim_->stack.back());
            emit(Instr::store_loc(g));
            sim_->locals[g].bound = true;
            sim_->stack.pop_back();
            release_ref(g);
        }
        if (rng_.chance(50)) {
            emit(Instr::ld_const(ConstVal::of_addr(a)));
            sim_->stack.push_back(Type::prim(PrimKind::Addr));
            emit(Instr::move_from(t));
            sim_->stack.back() = Type::make_val(ValType::make_record(t));
            emit(Instr::pop());
            sim_->stack.pop_back();
        }
    }

    // A conditional whose arms both restore the entry shape; one shared
    // ref local may be bound to different sources on the two sides so
    // joins see genuinely different graphs.
    void gadget_diamond() {
        bool bind_variant = rng_.chance(50) && !all_records_.empty();
        std::optional<QualifiedName> qn =
            bind_variant ? pick_record_with_int_field() : std::nullopt;
        if (!qn)
            bind_variant = false;

        // Source locals exist on every path into the arms.
        uint32_t x = 0, y = 0, r = 0;
        if (bind_variant) {
            x = ensure_typed_record_local(*qn);
            y = make_value_local(ValType::make_record(*qn));
            r = sim_->fresh_local(Type::make_mut_ref(ValType::make_record(*qn)));
        }

        emit(Instr::ld_const(ConstVal::of_bool(rng_.chance(50))));
        sim_->stack.push_back(Type::prim(PrimKind::Bool));
        uint32_t branch_at = static_cast<uint32_t>(code_.size());
        emit(Instr::branch(0, 0)); // patched below
        sim_->stack.pop_back();

        uint32_t then_start = static_cast<uint32_t>(code_.size());
        if (bind_variant) {
            emit(Instr::borrow_loc(x));
            emit(Instr::store_loc(r));
        } else {
            gadget_arith();
        }
        emit(Instr::ld_const(ConstVal::of_bool(true)));
        uint32_t jump_at = static_cast<uint32_t>(code_.size());
        emit(Instr::branch(0, 0)); // patched below

        uint32_t else_start = static_cast<uint32_t>(code_.size());
        if (bind_variant) {
            emit(Instr::borrow_loc(y));
            emit(Instr::store_loc(r));
        } else {
            gadget_arith();
        }
        uint32_t join = static_cast<uint32_t>(code_.size());
        code_[branch_at] = Instr::branch(then_start, else_start);
        code_[jump_at] = Instr::branch(join, join);

        if (bind_variant) {
            sim_->locals[r].bound = true;
            emit(Instr::borrow_field(int_field_of(*qn), r));
            sim_->stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
            emit(Instr::read_ref());
            sim_->stack.back() = Type::prim(PrimKind::Int);
            emit(Instr::pop());
            sim_->stack.pop_back();
            release_ref(r);
        }
    }

    void gadget_loop() {
        // Pre-bind everything the body touches so the loop-head join sees
        // identical local maps from the entry edge and the back edge.
        bool borrow_body = rng_.chance(60);
        std::optional<QualifiedName> qn =
            borrow_body ? pick_record_with_int_field() : std::nullopt;
        if (qn)
            ensure_typed_record_local(*qn);
        else
            borrow_body = false;
        emit(Instr::ld_const(ConstVal::of_int(static_cast<int64_t>(rng_.range(1, 3)))));
        sim_->stack.push_back(Type::prim(PrimKind::Int));
        uint32_t c = sim_->fresh_local(Type::prim(PrimKind::Int));
        emit(Instr::store_loc(c));
        sim_->locals[c].bound = true;
        sim_->stack.pop_back();
        uint32_t head = static_cast<uint32_t>(code_.size());
        if (borrow_body)
            gadget_borrow_read();
        else
            gadget_arith();
        // c := c - 1; loop while c > 0
        emit(Instr::copy_loc(c));
        emit(Instr::ld_const(ConstVal::of_int(1)));
        emit(Instr::oper(OpCode::Sub));
        emit(Instr::store_loc(c));
        emit(Instr::copy_loc(c));
        emit(Instr::ld_const(ConstVal::of_int(0)));
        emit(Instr::oper(OpCode::Gt));
        uint32_t branch_at = static_cast<uint32_t>(code_.size());
        emit(Instr::branch(head, branch_at + 1));
    }

    // ---- epilogue and acquires --------------------------------------------

    void emit_cleanup_and_ret() {
        while (!sim_->stack.empty()) {
            emit(Instr::pop());
            sim_->stack.pop_back();
        }
        for (uint32_t i = static_cast<uint32_t>(cur_->ins.size()); i < sim_->locals.size(); ++i)
            if (sim_->locals[i].bound && sim_->locals[i].type.is_ref())
                release_ref(i);
        // Push outputs.
        if (!cur_->outs.empty()) {
            const Type& out = cur_->outs[0];
            if (out.is_ref() && ret_ref_param_) {
                if (ret_ref_field_.empty())
                    emit(Instr::copy_loc(*ret_ref_param_));
                else
                    emit(Instr::borrow_field(ret_ref_field_, *ret_ref_param_));
            } else if (out.is_ref()) {
                // No parameter to borrow from: hand out a reference into
                // this frame's own storage.
                uint32_t v = make_value_local(out.val);
                emit(Instr::borrow_loc(v));
            } else {
                push_const_of(out.val);
                sim_->stack.pop_back();
            }
        }
        emit(Instr::ret());
        ret_ref_param_.reset();
        ret_ref_field_.clear();
    }

    // Acquires closure over direct global ops and same-module callees.
    void finish_acquires() {
        bool changed = true;
        while (changed) {
            changed = false;
            for (auto& m : program_.modules) {
                for (auto& proc : m.procs) {
                    std::set<QualifiedName> need;
                    for (const auto& in : proc.code) {
                        if (in.kind == InstrKind::BorrowGlobal || in.kind == InstrKind::MoveFrom)
                            need.insert(in.record);
                        if (in.kind == InstrKind::Call) {
                            const Procedure* callee = program_.find_proc(in.callee);
                            if (callee && callee->module == proc.module)
                                need.insert(callee->acquires.begin(), callee->acquires.end());
                        }
                    }
                    for (const auto& t : need)
                        if (proc.acquires.insert(t).second)
                            changed = true;
                }
            }
        }
    }

    // ---- deliberate ownership violations ------------------------------------

    void apply_mutation() {
        Module& m0 = program_.modules[0];
        Procedure& victim = m0.procs[rng_.below(static_cast<uint32_t>(m0.procs.size()))];
        switch (rng_.below(4)) {
        case 0: mutate_move_borrowed(victim); break;
        case 1: mutate_store_borrowed(victim); break;
        case 2: mutate_drop_release(victim); break;
        default: mutate_drop_acquires(victim); break;
        }
    }

    // Insert "borrow v; keep the borrow live; move v" before the
    // terminator. Structurally valid and stack-neutral up to the Ret.
    void mutate_move_borrowed(Procedure& proc) {
        uint32_t v = proc.locals_count++;
        uint32_t r = proc.locals_count++;
        std::vector<Instr> inject = {
            Instr::ld_const(ConstVal::of_int(7)),
            Instr::store_loc(v),
            Instr::borrow_loc(v),
            Instr::store_loc(r),
            Instr::move_loc(v),
            Instr::pop(),
            Instr::move_loc(r),
            Instr::pop(),
        };
        insert_before_terminator(proc, inject);
    }

    void mutate_store_borrowed(Procedure& proc) {
        uint32_t v = proc.locals_count++;
        uint32_t r = proc.locals_count++;
        std::vector<Instr> inject = {
            Instr::ld_const(ConstVal::of_int(1)),
            Instr::store_loc(v),
            Instr::borrow_loc(v),
            Instr::store_loc(r),
            Instr::ld_const(ConstVal::of_int(2)),
            Instr::store_loc(v),
            Instr::move_loc(r),
            Instr::pop(),
        };
        insert_before_terminator(proc, inject);
    }

    // Leave a borrow of a value local alive across the Ret.
    void mutate_drop_release(Procedure& proc) {
        uint32_t v = proc.locals_count++;
        uint32_t r = proc.locals_count++;
        std::vector<Instr> inject = {
            Instr::ld_const(ConstVal::of_int(3)),
            Instr::store_loc(v),
            Instr::borrow_loc(v),
            Instr::store_loc(r),
        };
        insert_before_terminator(proc, inject);
    }

    void mutate_drop_acquires(Procedure& proc) {
        if (!proc.acquires.empty()) {
            proc.acquires.erase(proc.acquires.begin());
            return;
        }
        mutate_move_borrowed(proc);
    }

    // Splices instructions immediately before the final Ret, fixing up
    // branch targets that pointed at or past the insertion point.
    void insert_before_terminator(Procedure& proc, const std::vector<Instr>& inject) {
        if (proc.code.empty() || proc.code.back().kind != InstrKind::Ret)
            return;
        uint32_t at = static_cast<uint32_t>(proc.code.size()) - 1;
        uint32_t shift = static_cast<uint32_t>(inject.size());
        for (auto& in : proc.code) {
            if (in.kind != InstrKind::Branch)
                continue;
            if (in.t1 >= at)
                in.t1 += shift;
            if (in.t2 >= at)
                in.t2 += shift;
        }
        proc.code.insert(proc.code.begin() + at, inject.begin(), inject.end());
    }

    Rng rng_;
    GenOptions opts_;
    Program program_;
    std::vector<QualifiedName> all_records_;
    Procedure* cur_ = nullptr;
    Sim* sim_ = nullptr;
    std::vector<Instr> code_;
    uint64_t addr_counter_ = 0;
    std::optional<uint32_t> ret_ref_param_;
    std::string ret_ref_field_;
};

} // namespace

Program generate_program(uint64_t seed, const GenOptions& opts) {
    return Generator(seed, opts).run();
}

} // namespace mvbc
