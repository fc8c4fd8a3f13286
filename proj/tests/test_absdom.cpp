// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mvbc/absdom.hpp"
#include "mvbc/ir.hpp"

#include <random>

using namespace mvbc;

namespace {

// Shared fixture: one record type and a procedure context with a value
// input and a mutable reference input.
const char* kContext =
    "module m\n"
    "record R { f: int, g: int }\n"
    "proc ctx(int, &mut R) -> () locals 8 {\n"
    "  0: Ret\n"
    "}\n"
    "proc sink(&mut R, &mut R) -> () locals 2 {\n"
    "  0: Ret\n"
    "}\n"
    "proc source(&mut R) -> (&mut int) locals 1 {\n"
    "  0: BorrowField f 0\n"
    "  1: Ret\n"
    "}\n"
    "proc mixed(&R, &mut R) -> (&int) locals 2 {\n"
    "  0: BorrowField f 0\n"
    "  1: Ret\n"
    "}\n";

struct Fixture {
    Program program;
    const Procedure* ctx;

    Fixture() {
        ParseResult r = parse_program(kContext);
        REQUIRE(r.ok());
        program = std::move(*r.program);
        ctx = program.find_proc({"m", "ctx"});
        REQUIRE(ctx);
    }

    PropResult go(const Instr& in, const LocalAbstractState& ls) const {
        return propagate(program, *ctx, in, ls);
    }
};

ValType rec_r() { return ValType::make_record({"m", "R"}); }

LocalAbstractState ctx_state() {
    LocalAbstractState ls;
    ls.locals.emplace(0, Type::prim(PrimKind::Int));
    ls.locals.emplace(1, Type::make_mut_ref(rec_r()));
    return ls;
}

PropagationError expect_err(const PropResult& r, PropErrorKind kind) {
    REQUIRE(std::holds_alternative<PropagationError>(r));
    PropagationError e = std::get<PropagationError>(r);
    CHECK(e.kind == kind);
    return e;
}

LocalAbstractState expect_ok(const PropResult& r) {
    if (const auto* e = std::get_if<PropagationError>(&r))
        MESSAGE(e->str());
    REQUIRE(std::holds_alternative<LocalAbstractState>(r));
    return std::get<LocalAbstractState>(r);
}

BorrowGraph make(std::initializer_list<BorrowEdge> edges) {
    return BorrowGraph(std::set<BorrowEdge>(edges));
}

} // namespace

TEST_CASE("initial_state binds the formals only") {
    Fixture fx;
    LocalAbstractState ls = initial_state(*fx.ctx);
    CHECK(ls.locals == std::map<uint32_t, Type>{{0, Type::prim(PrimKind::Int)},
                                                {1, Type::make_mut_ref(rec_r())}});
    CHECK(ls.stack.empty());
    CHECK(ls.graph.empty());
    CHECK(well_formed(*fx.ctx, ls));
}

TEST_CASE("BorrowField on a mutable reference factors through the field") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    LocalAbstractState out = expect_ok(fx.go(Instr::borrow_field("f", 1), ls));
    CHECK(out.stack == std::vector<Type>{Type::make_mut_ref(ValType::make_prim(PrimKind::Int))});
    CHECK(out.graph ==
          make({{Position::local(0, 1), Path::field("f"), Position::stack(0)}}));
    CHECK(well_formed(*fx.ctx, out));
}

TEST_CASE("BorrowField fails when an eps edge already leaves the source") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals.emplace(2, Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::local(0, 1), Path::eps(), Position::local(0, 2)}});
    expect_err(fx.go(Instr::borrow_field("f", 1), ls), PropErrorKind::FactorFieldFailure);
}

TEST_CASE("BorrowField on an immutable reference adds one labeled edge") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_imm_ref(rec_r());
    LocalAbstractState out = expect_ok(fx.go(Instr::borrow_field("g", 2), ls));
    CHECK(out.stack.back() == Type::make_imm_ref(ValType::make_prim(PrimKind::Int)));
    CHECK(out.graph == make({{Position::local(0, 2), Path::field("g"), Position::stack(0)}}));
}

TEST_CASE("MoveLoc of a borrowed value is rejected") {
    // The move-after-borrow shape: local 2 holds a record, local 3 holds
    // a reference borrowed from it through a field.
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    ls.locals[3] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls.graph = make({{Position::local(0, 2), Path::field("f"), Position::local(0, 3)}});
    expect_err(fx.go(Instr::move_loc(2), ls), PropErrorKind::MovedBorrowedValue);
}

TEST_CASE("MoveLoc renames the moved position to the stack top") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_mut_ref(rec_r());
    ls.locals[3] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls.graph = make({{Position::local(0, 2), Path::field("f"), Position::local(0, 3)}});
    LocalAbstractState out = expect_ok(fx.go(Instr::move_loc(2), ls));
    CHECK(out.locals.count(2) == 0);
    CHECK(out.graph == make({{Position::stack(0), Path::field("f"), Position::local(0, 3)}}));
}

TEST_CASE("inputs may not be moved or overwritten") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    expect_err(fx.go(Instr::move_loc(0), ls), PropErrorKind::InputOverwrite);
    expect_err(fx.go(Instr::move_loc(1), ls), PropErrorKind::InputOverwrite);
    LocalAbstractState ls2 = ctx_state();
    ls2.stack.push_back(Type::prim(PrimKind::Int));
    expect_err(fx.go(Instr::store_loc(0), ls2), PropErrorKind::InputOverwrite);
}

TEST_CASE("CopyLoc of a reference borrows it; of a borrowed value it is silent") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    LocalAbstractState out = expect_ok(fx.go(Instr::copy_loc(1), ls));
    CHECK(out.graph == make({{Position::local(0, 1), Path::eps(), Position::stack(0)}}));

    LocalAbstractState ls2 = ctx_state();
    ls2.locals[2] = Type::make_val(rec_r());
    ls2.locals[3] = Type::make_mut_ref(rec_r());
    ls2.graph = make({{Position::local(0, 2), Path::eps(), Position::local(0, 3)}});
    LocalAbstractState out2 = expect_ok(fx.go(Instr::copy_loc(2), ls2));
    CHECK(out2.graph == ls2.graph);
}

TEST_CASE("StoreLoc: elim for references, borrow check for values, rebinding rules") {
    Fixture fx;
    // Storing over a reference local splices its edges away.
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_mut_ref(rec_r());
    ls.locals[3] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls.graph = make({{Position::local(0, 1), Path::eps(), Position::local(0, 2)},
                     {Position::local(0, 2), Path::field("f"), Position::local(0, 3)}});
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    LocalAbstractState out = expect_ok(fx.go(Instr::store_loc(2), ls));
    CHECK(out.graph.contains(
        BorrowEdge{Position::local(0, 1), Path::field("f"), Position::local(0, 3)}));

    // Storing over a borrowed value local is rejected.
    LocalAbstractState ls2 = ctx_state();
    ls2.locals[2] = Type::make_val(rec_r());
    ls2.locals[3] = Type::make_mut_ref(rec_r());
    ls2.graph = make({{Position::local(0, 2), Path::eps(), Position::local(0, 3)}});
    ls2.stack.push_back(Type::make_val(rec_r()));
    expect_err(fx.go(Instr::store_loc(2), ls2), PropErrorKind::StoreBorrowedValue);

    // A bound local only accepts its current type.
    LocalAbstractState ls3 = ctx_state();
    ls3.locals[2] = Type::prim(PrimKind::Int);
    ls3.stack.push_back(Type::prim(PrimKind::Bool));
    expect_err(fx.go(Instr::store_loc(2), ls3), PropErrorKind::TypeMismatch);

    // An unbound local takes whatever is stored.
    LocalAbstractState ls4 = ctx_state();
    ls4.stack.push_back(Type::prim(PrimKind::Bool));
    LocalAbstractState out4 = expect_ok(fx.go(Instr::store_loc(4), ls4));
    CHECK(out4.locals.at(4) == Type::prim(PrimKind::Bool));
}

TEST_CASE("BorrowLoc factors existing borrows under the new reference") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    LocalAbstractState once = expect_ok(fx.go(Instr::borrow_loc(2), ls));
    CHECK(once.graph == make({{Position::local(0, 2), Path::eps(), Position::stack(0)}}));
    // A second borrow of the same local chains the first under it.
    LocalAbstractState twice = expect_ok(fx.go(Instr::borrow_loc(2), once));
    CHECK(twice.graph == make({{Position::local(0, 2), Path::eps(), Position::stack(1)},
                               {Position::stack(1), Path::eps(), Position::stack(0)}}));
    // BorrowLoc of a reference local is a type error.
    expect_err(fx.go(Instr::borrow_loc(1), ls), PropErrorKind::TypeMismatch);
}

TEST_CASE("WriteRef requires an unborrowed mutable target") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.stack.push_back(Type::prim(PrimKind::Int));
    ls.stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
    LocalAbstractState out = expect_ok(fx.go(Instr::write_ref(), ls));
    CHECK(out.stack.empty());

    LocalAbstractState ls2 = ctx_state();
    ls2.locals[2] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls2.stack.push_back(Type::prim(PrimKind::Int));
    ls2.stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
    ls2.graph = make({{Position::stack(1), Path::eps(), Position::local(0, 2)}});
    expect_err(fx.go(Instr::write_ref(), ls2), PropErrorKind::WriteBorrowedRef);

    LocalAbstractState ls3 = ctx_state();
    ls3.stack.push_back(Type::prim(PrimKind::Int));
    ls3.stack.push_back(Type::make_imm_ref(ValType::make_prim(PrimKind::Int)));
    expect_err(fx.go(Instr::write_ref(), ls3), PropErrorKind::TypeMismatch);
}

TEST_CASE("FreezeRef and ReadRef demand freezability") {
    Fixture fx;
    // Freezing is fine while borrows from the operand are immutable.
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_imm_ref(ValType::make_prim(PrimKind::Int));
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::stack(0), Path::field("f"), Position::local(0, 2)}});
    LocalAbstractState out = expect_ok(fx.go(Instr::freeze_ref(), ls));
    CHECK(out.stack.back() == Type::make_imm_ref(rec_r()));
    CHECK(out.graph == ls.graph);

    // A mutable borrow from the operand blocks both FreezeRef and ReadRef.
    LocalAbstractState ls2 = ctx_state();
    ls2.locals[2] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls2.stack.push_back(Type::make_mut_ref(rec_r()));
    ls2.graph = make({{Position::stack(0), Path::field("f"), Position::local(0, 2)}});
    expect_err(fx.go(Instr::freeze_ref(), ls2), PropErrorKind::NotFreezable);
    expect_err(fx.go(Instr::read_ref(), ls2), PropErrorKind::NotFreezable);
}

TEST_CASE("freezability is transitive") {
    Fixture fx;
    // stack0 -> imm local2 -> mut local3: the chain poisons the root.
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_imm_ref(rec_r());
    ls.locals[3] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::stack(0), Path::eps(), Position::local(0, 2)},
                     {Position::local(0, 2), Path::field("f"), Position::local(0, 3)}});
    CHECK_FALSE(freezable(ls, Position::stack(0)));
    ls.locals[3] = Type::make_imm_ref(ValType::make_prim(PrimKind::Int));
    CHECK(freezable(ls, Position::stack(0)));
}

TEST_CASE("Pop splices transitive borrows through the popped reference") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    ls.locals[3] = Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::local(0, 2), Path::eps(), Position::stack(0)},
                     {Position::stack(0), Path::field("f"), Position::local(0, 3)}});
    LocalAbstractState out = expect_ok(fx.go(Instr::pop(), ls));
    CHECK(out.graph ==
          make({{Position::local(0, 2), Path::field("f"), Position::local(0, 3)}}));
}

TEST_CASE("Call rejects a borrowed mutable argument") {
    // The aliased-argument shape: both stack slots are mutable refs and
    // the lower one borrows from the upper one.
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::local(0, 2), Path::eps(), Position::stack(1)},
                     {Position::stack(1), Path::eps(), Position::stack(0)}});
    expect_err(fx.go(Instr::call({"m", "sink"}), ls), PropErrorKind::BorrowedMutArg);
}

TEST_CASE("Call summarizes reference outputs as star borrows of reference inputs") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::local(0, 2), Path::eps(), Position::stack(0)}});
    LocalAbstractState out = expect_ok(fx.go(Instr::call({"m", "source"}), ls));
    REQUIRE(out.stack.size() == 1);
    CHECK(out.stack[0] == Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
    // The callee's frame is eliminated; the output borrows from whatever
    // the argument borrowed from, with an extensible label.
    CHECK(out.graph == make({{Position::local(0, 2), Path{{}, true}, Position::stack(0)}}));
    CHECK(well_formed(*fx.ctx, out));
}

TEST_CASE("Call gives immutable outputs borrows from every reference input") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.locals[2] = Type::make_val(rec_r());
    ls.locals[3] = Type::make_val(rec_r());
    ls.stack.push_back(Type::make_imm_ref(rec_r()));
    ls.stack.push_back(Type::make_mut_ref(rec_r()));
    ls.graph = make({{Position::local(0, 2), Path::eps(), Position::stack(0)},
                     {Position::local(0, 3), Path::eps(), Position::stack(1)}});
    LocalAbstractState out = expect_ok(fx.go(Instr::call({"m", "mixed"}), ls));
    REQUIRE(out.stack.size() == 1);
    CHECK(out.stack[0] == Type::make_imm_ref(ValType::make_prim(PrimKind::Int)));
    CHECK(out.graph == make({{Position::local(0, 2), Path{{}, true}, Position::stack(0)},
                             {Position::local(0, 3), Path{{}, true}, Position::stack(0)}}));
}

TEST_CASE("Call argument types must match exactly") {
    Fixture fx;
    LocalAbstractState ls = ctx_state();
    ls.stack.push_back(Type::make_imm_ref(rec_r()));
    ls.stack.push_back(Type::make_imm_ref(rec_r()));
    expect_err(fx.go(Instr::call({"m", "sink"}), ls), PropErrorKind::TypeMismatch);
}

TEST_CASE("Ret checks the stack against the signature and borrow residue") {
    Fixture fx;
    const Procedure* src = fx.program.find_proc({"m", "source"});
    REQUIRE(src);

    // Returning a field borrow of a reference parameter is accepted.
    LocalAbstractState ok;
    ok.locals.emplace(0, Type::make_mut_ref(rec_r()));
    ok.stack.push_back(Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
    ok.graph = make({{Position::local(0, 0), Path::field("f"), Position::stack(0)}});
    CHECK(std::holds_alternative<LocalAbstractState>(
        propagate(fx.program, *src, Instr::ret(), ok)));

    // A borrowed value local blocks the return.
    LocalAbstractState bad = ok;
    bad.locals.emplace(1, Type::prim(PrimKind::Int));
    bad.graph = bad.graph.add(Position::local(0, 1), Path::eps(), Position::stack(0));
    expect_err(propagate(fx.program, *src, Instr::ret(), bad), PropErrorKind::RetBorrowedLocal);

    // Stack must equal the output signature exactly.
    LocalAbstractState wrong = ok;
    wrong.stack.push_back(Type::prim(PrimKind::Int));
    expect_err(propagate(fx.program, *src, Instr::ret(), wrong), PropErrorKind::RetStackMismatch);

    // A borrowed mutable output blocks the return.
    LocalAbstractState outb = ok;
    outb.locals.emplace(1, Type::make_mut_ref(ValType::make_prim(PrimKind::Int)));
    outb.graph = outb.graph.add(Position::stack(0), Path::eps(), Position::local(0, 1));
    expect_err(propagate(fx.program, *src, Instr::ret(), outb),
               PropErrorKind::RetBorrowedMutOutput);
}

TEST_CASE("global rules treat the type node like a local") {
    ParseResult r = parse_program("module m\n"
                                  "record T { v: int }\n"
                                  "proc g(addr) -> () locals 3 acquires T {\n"
                                  "  0: Ret\n"
                                  "}\n");
    REQUIRE(r.ok());
    Program p = std::move(*r.program);
    const Procedure* g = p.find_proc({"m", "g"});
    Position node = Position::global_node({"m", "T"});

    LocalAbstractState ls;
    ls.locals.emplace(0, Type::prim(PrimKind::Addr));
    ls.stack.push_back(Type::prim(PrimKind::Addr));

    // BorrowGlobal factors the node into the new reference.
    auto out = propagate(p, *g, Instr::borrow_global({"m", "T"}), ls);
    LocalAbstractState s1 = expect_ok(out);
    CHECK(s1.stack.back() == Type::make_mut_ref(ValType::make_record({"m", "T"})));
    CHECK(s1.graph == make({{node, Path::eps(), Position::stack(0)}}));

    // While the node is borrowed, MoveFrom and BorrowGlobal are blocked.
    LocalAbstractState busy = ls;
    busy.locals.emplace(1, Type::make_mut_ref(ValType::make_record({"m", "T"})));
    busy.graph = make({{node, Path::eps(), Position::local(0, 1)}});
    expect_err(propagate(p, *g, Instr::move_from({"m", "T"}), busy),
               PropErrorKind::GlobalBorrowed);
    expect_err(propagate(p, *g, Instr::borrow_global({"m", "T"}), busy),
               PropErrorKind::GlobalBorrowed);

    // Ret with a borrowed global node is a rejection.
    LocalAbstractState at_ret = busy;
    at_ret.stack.clear();
    expect_err(propagate(p, *g, Instr::ret(), at_ret), PropErrorKind::GlobalBorrowed);

    // MoveTo needs no borrow check and consumes value and address.
    LocalAbstractState mt = ls;
    mt.stack.push_back(Type::make_val(ValType::make_record({"m", "T"})));
    LocalAbstractState s2 = expect_ok(propagate(p, *g, Instr::move_to({"m", "T"}), mt));
    CHECK(s2.stack.empty());
}

TEST_CASE("ls_leq is componentwise with graph subsumption") {
    LocalAbstractState a = ctx_state();
    CHECK(ls_leq(a, a));
    LocalAbstractState b = a;
    b.stack.push_back(Type::prim(PrimKind::Int));
    CHECK_FALSE(ls_leq(a, b));
    LocalAbstractState c = a;
    a.graph = make({{Position::local(0, 1), Path{{"f", "g"}, false}, Position::stack(0)}});
    c.graph = a.graph.widen_paths(1);
    CHECK(ls_leq(a, c));
    CHECK_FALSE(ls_leq(c, a));
}

// ---- randomized properties -------------------------------------------------

namespace {

struct StateGen {
    std::mt19937_64 eng;
    const Program& program;
    const Procedure& proc;

    StateGen(uint64_t seed, const Program& p, const Procedure& pr)
        : eng(seed), program(p), proc(pr) {}

    uint32_t below(uint32_t n) { return n ? static_cast<uint32_t>(eng() % n) : 0; }

    Type random_type() {
        switch (below(7)) {
        case 0: return Type::prim(PrimKind::Int);
        case 1: return Type::prim(PrimKind::Bool);
        case 2: return Type::prim(PrimKind::Addr);
        case 3: return Type::make_val(rec_r());
        case 4: return Type::make_mut_ref(rec_r());
        case 5: return Type::make_imm_ref(rec_r());
        default: return Type::make_mut_ref(ValType::make_prim(PrimKind::Int));
        }
    }

    LocalAbstractState state() {
        LocalAbstractState ls = initial_state(proc);
        uint32_t extra = below(4);
        for (uint32_t i = 0; i < extra; ++i)
            ls.locals.emplace(2 + i, random_type());
        uint32_t sh = below(4);
        for (uint32_t i = 0; i < sh; ++i)
            ls.stack.push_back(random_type());
        // Candidate endpoints. Sources follow the reachable-state shape:
        // locals and stack references borrow, stack values never do.
        std::vector<Position> srcs, dsts;
        for (const auto& [idx, t] : ls.locals) {
            srcs.push_back(Position::local(0, idx));
            if (t.is_ref() && !proc.is_input(idx))
                dsts.push_back(Position::local(0, idx));
        }
        for (uint32_t i = 0; i < ls.stack.size(); ++i) {
            if (!ls.stack[i].is_ref())
                continue;
            srcs.push_back(Position::stack(i));
            dsts.push_back(Position::stack(i));
        }
        if (dsts.empty())
            return ls;
        uint32_t edges = below(4);
        static const char* fields[] = {"f", "g"};
        for (uint32_t i = 0; i < edges; ++i) {
            Path label;
            uint32_t len = below(3);
            for (uint32_t k = 0; k < len; ++k)
                label.segments.push_back(fields[below(2)]);
            label.extensible = below(3) == 0;
            BorrowGraph candidate = ls.graph.add(srcs[below(static_cast<uint32_t>(srcs.size()))],
                                                 label,
                                                 dsts[below(static_cast<uint32_t>(dsts.size()))]);
            if (!candidate.has_cycle())
                ls.graph = candidate;
        }
        return ls;
    }

    Instr random_instr() {
        switch (below(12)) {
        case 0: return Instr::move_loc(below(8));
        case 1: return Instr::copy_loc(below(8));
        case 2: return Instr::store_loc(below(8));
        case 3: return Instr::borrow_loc(below(8));
        case 4: return Instr::borrow_field(below(2) ? "f" : "g", below(8));
        case 5: return Instr::read_ref();
        case 6: return Instr::write_ref();
        case 7: return Instr::freeze_ref();
        case 8: return Instr::pop();
        case 9: return Instr::ld_const(ConstVal::of_int(1));
        case 10: return Instr::oper(OpCode::Add);
        default: return Instr::pack({"m", "R"});
        }
    }
};

int net_effect(const Program& p, const Instr& in) {
    switch (in.kind) {
    case InstrKind::MoveLoc:
    case InstrKind::CopyLoc:
    case InstrKind::BorrowLoc:
    case InstrKind::BorrowField:
    case InstrKind::LdConst:
        return 1;
    case InstrKind::StoreLoc:
    case InstrKind::Pop:
    case InstrKind::Branch:
        return -1;
    case InstrKind::WriteRef:
    case InstrKind::MoveTo:
        return -2;
    case InstrKind::ReadRef:
    case InstrKind::FreezeRef:
    case InstrKind::MoveFrom:
    case InstrKind::BorrowGlobal:
        return 0;
    case InstrKind::Op:
        return 1 - static_cast<int>(op_signature(in.op).operands.size());
    case InstrKind::Pack:
        return 1 - static_cast<int>(p.find_record(in.record)->fields.size());
    case InstrKind::Unpack:
        return static_cast<int>(p.find_record(in.record)->fields.size()) - 1;
    case InstrKind::Call: {
        const Procedure* c = p.find_proc(in.callee);
        return static_cast<int>(c->outs.size()) - static_cast<int>(c->ins.size());
    }
    case InstrKind::Ret:
        return 0;
    }
    return 0;
}

} // namespace

TEST_CASE("propagation preserves well-formedness and never borrows values or inputs") {
    Fixture fx;
    StateGen gen(41, fx.program, *fx.ctx);
    int successes = 0;
    for (int i = 0; i < 6000; ++i) {
        LocalAbstractState ls = gen.state();
        if (!well_formed(*fx.ctx, ls))
            continue;
        Instr in = gen.random_instr();
        PropResult r = fx.go(in, ls);
        if (!std::holds_alternative<LocalAbstractState>(r))
            continue;
        ++successes;
        const LocalAbstractState& out = std::get<LocalAbstractState>(r);
        CHECK(well_formed(*fx.ctx, out));
        CHECK(static_cast<int>(out.stack.size()) - static_cast<int>(ls.stack.size()) ==
              net_effect(fx.program, in));
        for (const auto& e : out.graph.edges()) {
            auto t = out.type_at(e.dst);
            REQUIRE(t.has_value());
            CHECK(t->is_ref());
        }
    }
    CHECK(successes > 1000);
}

TEST_CASE("propagation is monotone in the borrow graph") {
    Fixture fx;
    StateGen gen(43, fx.program, *fx.ctx);
    int comparable = 0;
    for (int i = 0; i < 6000; ++i) {
        LocalAbstractState lo = gen.state();
        if (!well_formed(*fx.ctx, lo))
            continue;
        LocalAbstractState hi = lo;
        hi.graph = lo.graph.widen_paths(1);
        if (!well_formed(*fx.ctx, hi))
            continue;
        Instr in = gen.random_instr();
        PropResult rlo = fx.go(in, lo);
        if (!std::holds_alternative<LocalAbstractState>(rlo))
            continue;
        PropResult rhi = fx.go(in, hi);
        if (!std::holds_alternative<LocalAbstractState>(rhi))
            continue; // failing on the larger state is allowed
        ++comparable;
        CHECK(graph_leq(std::get<LocalAbstractState>(rlo).graph,
                        std::get<LocalAbstractState>(rhi).graph));
    }
    CHECK(comparable > 500);
}
