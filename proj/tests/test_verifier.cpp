// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mvbc/generator.hpp"
#include "mvbc/verifier.hpp"

using namespace mvbc;

namespace {

Program parse_ok(const std::string& text) {
    ParseResult r = parse_program(text);
    REQUIRE(r.ok());
    return std::move(*r.program);
}

// Reference block splitting: leaders are offset 0, every branch target,
// and every instruction after a terminator.
std::vector<uint32_t> leader_oracle(const Procedure& proc) {
    std::set<uint32_t> leaders{0};
    for (uint32_t i = 0; i < proc.code.size(); ++i) {
        const Instr& in = proc.code[i];
        if (in.kind == InstrKind::Branch) {
            leaders.insert(in.t1);
            leaders.insert(in.t2);
            if (i + 1 < proc.code.size())
                leaders.insert(i + 1);
        } else if (in.kind == InstrKind::Ret && i + 1 < proc.code.size()) {
            leaders.insert(i + 1);
        }
    }
    return {leaders.begin(), leaders.end()};
}

void check_cfg_against_oracle(const Procedure& proc) {
    std::vector<BasicBlock> cfg = build_cfg(proc);
    std::vector<uint32_t> leaders = leader_oracle(proc);
    REQUIRE(cfg.size() == leaders.size());
    for (size_t i = 0; i < cfg.size(); ++i) {
        CHECK(cfg[i].start == leaders[i]);
        uint32_t expected_end =
            (i + 1 < leaders.size() ? leaders[i + 1] : static_cast<uint32_t>(proc.code.size())) - 1;
        CHECK(cfg[i].end == expected_end);
    }
    // Blocks partition the code and control flow leaves only from the end.
    for (const auto& b : cfg)
        for (uint32_t off = b.start; off < b.end; ++off) {
            CHECK(proc.code[off].kind != InstrKind::Branch);
            CHECK(proc.code[off].kind != InstrKind::Ret);
        }
}

bool has_error_at(const std::vector<Diagnostic>& diags, const std::string& kind,
                  std::optional<uint32_t> offset = {}) {
    for (const auto& d : diags)
        if (d.kind == kind && (!offset || d.offset == offset))
            return true;
    return false;
}

} // namespace

TEST_CASE("cfg: straight-line code is one block") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 1 {\n"
                         "  0: LdConst 1\n"
                         "  1: StoreLoc 0\n"
                         "  2: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    std::vector<BasicBlock> cfg = build_cfg(*proc);
    REQUIRE(cfg.size() == 1);
    CHECK(cfg[0].start == 0);
    CHECK(cfg[0].end == 2);
    CHECK(cfg[0].succs.empty());
    check_cfg_against_oracle(*proc);
}

TEST_CASE("cfg: one branch yields entry plus two arms") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: LdConst true\n"
                         "  1: Branch 2 3\n"
                         "  2: Ret\n"
                         "  3: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    std::vector<BasicBlock> cfg = build_cfg(*proc);
    REQUIRE(cfg.size() == 3);
    CHECK(cfg[0].succs == std::vector<uint32_t>{1, 2});
    check_cfg_against_oracle(*proc);
}

TEST_CASE("cfg: diamond splits into four blocks") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: LdConst true\n"
                         "  1: Branch 2 4\n"
                         "  2: LdConst true\n"
                         "  3: Branch 6 6\n"
                         "  4: LdConst true\n"
                         "  5: Branch 6 6\n"
                         "  6: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    std::vector<BasicBlock> cfg = build_cfg(*proc);
    REQUIRE(cfg.size() == 4);
    check_cfg_against_oracle(*proc);
    for (const auto& b : cfg)
        CHECK(b.reachable);
}

TEST_CASE("cfg: generated programs match the leader oracle") {
    for (uint64_t seed = 0; seed < 200; ++seed) {
        Program p = generate_program(seed);
        for (const auto& m : p.modules)
            for (const auto& proc : m.procs)
                check_cfg_against_oracle(proc);
    }
}

TEST_CASE("stack usage: balanced loop is fine") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 1 {\n"
                         "  0: LdConst 2\n"
                         "  1: StoreLoc 0\n"
                         "  2: CopyLoc 0\n"
                         "  3: LdConst 0\n"
                         "  4: Op gt (int, int) -> bool\n"
                         "  5: Branch 2 6\n"
                         "  6: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    CHECK(check_stack_usage(p, *proc, build_cfg(*proc)).empty());
}

TEST_CASE("stack usage: arm leaves an extra value before the join") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: LdConst true\n"
                         "  1: Branch 2 4\n"
                         "  2: LdConst 1\n"
                         "  3: Branch 5 5\n"
                         "  4: LdConst true\n"
                         "  5: Pop\n"
                         "  6: Ret\n"
                         "}\n");
    // One arm reaches the join two entries deep, the other one deep.
    Program q = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: LdConst true\n"
                         "  1: Branch 2 6\n"
                         "  2: LdConst 1\n"
                         "  3: LdConst 2\n"
                         "  4: LdConst true\n"
                         "  5: Branch 7 7\n"
                         "  6: LdConst 1\n"
                         "  7: Pop\n"
                         "  8: Ret\n"
                         "}\n");
    const Procedure* proc = q.find_proc({"m", "p"});
    auto diags = check_stack_usage(q, *proc, build_cfg(*proc));
    CHECK(has_error_at(diags, "stack height"));
    (void)p;
}

TEST_CASE("stack usage: Ret must sit at the declared output height") {
    Program p = parse_ok("module m\n"
                         "proc p() -> (int) locals 0 {\n"
                         "  0: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    auto diags = check_stack_usage(p, *proc, build_cfg(*proc));
    CHECK(has_error_at(diags, "stack height", 0u));
}

TEST_CASE("stack usage: underflow inside a block") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: Pop\n"
                         "  1: Ret\n"
                         "}\n");
    const Procedure* proc = p.find_proc({"m", "p"});
    auto diags = check_stack_usage(p, *proc, build_cfg(*proc));
    CHECK(has_error_at(diags, "stack underflow", 0u));
}

TEST_CASE("acquires: direct annotation satisfies the check") {
    Program p = parse_ok("module m\n"
                         "record T { v: int }\n"
                         "proc f(addr) -> (T) locals 1 acquires T {\n"
                         "  0: CopyLoc 0\n"
                         "  1: MoveFrom T\n"
                         "  2: Ret\n"
                         "}\n");
    CHECK(check_acquires(p).empty());
}

TEST_CASE("acquires: same-module caller must repeat the annotation") {
    Program p = parse_ok("module m\n"
                         "record T { v: int }\n"
                         "proc remove_t(addr) -> (T) locals 1 acquires T {\n"
                         "  0: CopyLoc 0\n"
                         "  1: MoveFrom T\n"
                         "  2: Ret\n"
                         "}\n"
                         "proc caller(addr) -> () locals 1 {\n"
                         "  0: CopyLoc 0\n"
                         "  1: Call remove_t\n"
                         "  2: Pop\n"
                         "  3: Ret\n"
                         "}\n");
    auto diags = check_acquires(p);
    CHECK(has_error_at(diags, "missing acquires", 1u));
}

TEST_CASE("acquires: cross-module callers need no annotation") {
    Program p = parse_ok("module m1\n"
                         "record T { v: int }\n"
                         "proc remove_t(addr) -> (T) locals 1 acquires T {\n"
                         "  0: CopyLoc 0\n"
                         "  1: MoveFrom T\n"
                         "  2: Ret\n"
                         "}\n"
                         "module m2\n"
                         "proc caller(addr) -> () locals 1 {\n"
                         "  0: CopyLoc 0\n"
                         "  1: Call m1::remove_t\n"
                         "  2: Pop\n"
                         "  3: Ret\n"
                         "}\n");
    for (const auto& d : check_acquires(p))
        CHECK(d.severity == Diagnostic::Severity::Warning);
}

TEST_CASE("acquires: unnecessary annotations warn") {
    Program p = parse_ok("module m\n"
                         "record T { v: int }\n"
                         "proc f() -> () locals 0 acquires T {\n"
                         "  0: Ret\n"
                         "}\n");
    auto diags = check_acquires(p);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].severity == Diagnostic::Severity::Warning);
    CHECK(diags[0].kind == "unnecessary acquires");
}

TEST_CASE("borrow check: move of a borrowed local is rejected at the move") {
    Program p = parse_ok("module m\n"
                         "record Coin { f: int }\n"
                         "proc dangle(Coin) -> () locals 5 {\n"
                         "  0: BorrowLoc 0\n"
                         "  1: StoreLoc 1\n"
                         "  2: BorrowField f 1\n"
                         "  3: StoreLoc 2\n"
                         "  4: MoveLoc 1\n"
                         "  5: Pop\n"
                         "  6: MoveLoc 0\n"
                         "  7: StoreLoc 3\n"
                         "  8: CopyLoc 2\n"
                         "  9: ReadRef\n"
                         "  10: StoreLoc 4\n"
                         "  11: Ret\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    CHECK_FALSE(r.verified);
    CHECK(has_error_at(r.diagnostics, "MovedBorrowedValue", 6u));
}

TEST_CASE("borrow check: returning a copied reference parameter verifies") {
    Program p = parse_ok("module m\n"
                         "proc ret_ref(&int) -> (&int) locals 1 {\n"
                         "  0: CopyLoc 0\n"
                         "  1: Ret\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    CHECK(r.verified);
    REQUIRE(r.annotations.count({"m", "ret_ref"}));
}

TEST_CASE("borrow check: a loop that re-borrows each iteration stabilizes") {
    Program p = parse_ok("module m\n"
                         "record R { f: int }\n"
                         "proc loop() -> () locals 4 {\n"
                         "  0: LdConst 3\n"
                         "  1: Pack R\n"
                         "  2: StoreLoc 0\n"
                         "  3: LdConst 2\n"
                         "  4: StoreLoc 1\n"
                         "  5: BorrowLoc 0\n"
                         "  6: StoreLoc 2\n"
                         "  7: BorrowField f 2\n"
                         "  8: ReadRef\n"
                         "  9: Pop\n"
                         "  10: MoveLoc 2\n"
                         "  11: Pop\n"
                         "  12: CopyLoc 1\n"
                         "  13: LdConst 1\n"
                         "  14: Op sub (int, int) -> int\n"
                         "  15: StoreLoc 1\n"
                         "  16: CopyLoc 1\n"
                         "  17: LdConst 0\n"
                         "  18: Op gt (int, int) -> bool\n"
                         "  19: Branch 5 20\n"
                         "  20: Ret\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    for (const auto& d : r.diagnostics)
        MESSAGE(d.str());
    CHECK(r.verified);
    CHECK_FALSE(r.ceiling_hit);
    CHECK(r.max_block_visits <= 5);
    // The loop head annotation is a genuine fixpoint: it carries the
    // state both from offset 4 and from the back edge.
    const auto& ann = r.annotations.at({"m", "loop"});
    REQUIRE(ann[5].has_value());
    CHECK(ann[5]->stack.empty());
}

TEST_CASE("borrow check: deep field chains verify under aggressive widening") {
    Program p = parse_ok("module m\n"
                         "record A { x: int }\n"
                         "record B { a: A }\n"
                         "record C { b: B }\n"
                         "proc deep(C) -> () locals 6 {\n"
                         "  0: BorrowLoc 0\n"
                         "  1: StoreLoc 1\n"
                         "  2: BorrowField b 1\n"
                         "  3: StoreLoc 2\n"
                         "  4: BorrowField a 2\n"
                         "  5: StoreLoc 3\n"
                         "  6: BorrowField x 3\n"
                         "  7: ReadRef\n"
                         "  8: Pop\n"
                         "  9: MoveLoc 3\n"
                         "  10: Pop\n"
                         "  11: MoveLoc 2\n"
                         "  12: Pop\n"
                         "  13: MoveLoc 1\n"
                         "  14: Pop\n"
                         "  15: Ret\n"
                         "}\n");
    VerifyOptions opts;
    opts.widen_k = 1;
    VerificationReport r = verify_program(p, opts);
    for (const auto& d : r.diagnostics)
        MESSAGE(d.str());
    CHECK(r.verified);
}

TEST_CASE("borrow check: join of divergent borrows verifies, reuse after join works") {
    Program p = parse_ok("module m\n"
                         "record R { f: int }\n"
                         "proc pick(bool) -> () locals 4 {\n"
                         "  0: LdConst 1\n"
                         "  1: Pack R\n"
                         "  2: StoreLoc 1\n"
                         "  3: LdConst 2\n"
                         "  4: Pack R\n"
                         "  5: StoreLoc 2\n"
                         "  6: CopyLoc 0\n"
                         "  7: Branch 8 11\n"
                         "  8: BorrowLoc 1\n"
                         "  9: LdConst true\n"
                         "  10: Branch 12 12\n"
                         "  11: BorrowLoc 2\n"
                         "  12: StoreLoc 3\n"
                         "  13: BorrowField f 3\n"
                         "  14: ReadRef\n"
                         "  15: Pop\n"
                         "  16: MoveLoc 3\n"
                         "  17: Pop\n"
                         "  18: Ret\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    for (const auto& d : r.diagnostics)
        MESSAGE(d.str());
    CHECK(r.verified);
    // At the join the reference may come from either record local.
    const auto& ann = r.annotations.at({"m", "pick"});
    REQUIRE(ann[12].has_value());
    CHECK(ann[12]->graph.size() == 2);
}

TEST_CASE("verify_program: empty module verifies") {
    Program p = parse_ok("module m\n");
    VerificationReport r = verify_program(p);
    CHECK(r.verified);
    CHECK(r.render_text() == "VERIFIED\n");
}

TEST_CASE("verify_program: structural failures reject before analysis") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: LdConst 1\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    CHECK_FALSE(r.verified);
    CHECK(has_error_at(r.diagnostics, "terminator required"));
}

TEST_CASE("verify_program: type errors surface before borrow errors at one offset") {
    Program p = parse_ok("module m\n"
                         "record R { f: int }\n"
                         "proc p() -> () locals 3 {\n"
                         "  0: LdConst 1\n"
                         "  1: Pack R\n"
                         "  2: StoreLoc 0\n"
                         "  3: BorrowLoc 0\n"
                         "  4: StoreLoc 1\n"
                         "  5: LdConst true\n"
                         "  6: StoreLoc 0\n"
                         "  7: MoveLoc 1\n"
                         "  8: Pop\n"
                         "  9: Ret\n"
                         "}\n");
    // Offset 6 both stores a wrong type and clobbers a borrowed local;
    // the type complaint wins.
    VerificationReport r = verify_program(p);
    CHECK_FALSE(r.verified);
    CHECK(has_error_at(r.diagnostics, "TypeMismatch", 6u));
    CHECK_FALSE(has_error_at(r.diagnostics, "StoreBorrowedValue", 6u));
}

TEST_CASE("verify_program: unreachable blocks warn but do not reject") {
    Program p = parse_ok("module m\n"
                         "proc p() -> () locals 0 {\n"
                         "  0: Ret\n"
                         "  1: Ret\n"
                         "}\n");
    VerificationReport r = verify_program(p);
    CHECK(r.verified);
    bool warned = false;
    for (const auto& d : r.diagnostics)
        warned = warned || (d.kind == "unreachable code" &&
                            d.severity == Diagnostic::Severity::Warning);
    CHECK(warned);
}

TEST_CASE("verify_program: deterministic across runs") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Program p = generate_program(seed);
        VerificationReport a = verify_program(p);
        VerificationReport b = verify_program(p);
        CHECK(a.verified == b.verified);
        CHECK(a.render_text() == b.render_text());
        REQUIRE(a.annotations.size() == b.annotations.size());
        for (const auto& [qn, ann] : a.annotations) {
            const auto& other = b.annotations.at(qn);
            REQUIRE(ann.size() == other.size());
            for (size_t i = 0; i < ann.size(); ++i)
                CHECK(ann[i] == other[i]);
        }
    }
}

TEST_CASE("verify_program: generated corpus verdict distribution is sane") {
    int verified = 0, rejected = 0;
    for (uint64_t seed = 0; seed < 400; ++seed) {
        Program p = generate_program(seed);
        VerificationReport r = verify_program(p);
        (r.verified ? verified : rejected)++;
        CHECK_FALSE(r.ceiling_hit);
    }
    MESSAGE("verified: ", verified, " rejected: ", rejected);
    CHECK(verified > 400 / 5);
    CHECK(rejected > 400 / 5);
}
