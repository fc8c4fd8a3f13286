// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/verifier.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "json.hpp"

namespace mvbc {

namespace {

Diagnostic make_diag(const Procedure& proc, std::optional<uint32_t> offset, std::string kind,
                     std::string msg,
                     Diagnostic::Severity sev = Diagnostic::Severity::Error) {
    Diagnostic d;
    d.severity = sev;
    d.module = proc.module;
    d.proc = proc.name;
    d.offset = offset;
    d.kind = std::move(kind);
    d.message = std::move(msg);
    return d;
}

// Net operand-stack effect of one instruction as (pops, pushes).
std::pair<uint32_t, uint32_t> stack_effect(const Program& p, const Instr& in) {
    switch (in.kind) {
    case InstrKind::MoveLoc:
    case InstrKind::CopyLoc:
    case InstrKind::BorrowLoc:
    case InstrKind::BorrowField:
    case InstrKind::LdConst:
        return {0, 1};
    case InstrKind::StoreLoc:
    case InstrKind::Pop:
    case InstrKind::Branch:
        return {1, 0};
    case InstrKind::ReadRef:
    case InstrKind::FreezeRef:
    case InstrKind::MoveFrom:
    case InstrKind::BorrowGlobal:
        return {1, 1};
    case InstrKind::WriteRef:
    case InstrKind::MoveTo:
        return {2, 0};
    case InstrKind::Pack: {
        const RecordDecl* r = p.find_record(in.record);
        return {r ? static_cast<uint32_t>(r->fields.size()) : 0u, 1};
    }
    case InstrKind::Unpack: {
        const RecordDecl* r = p.find_record(in.record);
        return {1, r ? static_cast<uint32_t>(r->fields.size()) : 0u};
    }
    case InstrKind::Op:
        return {static_cast<uint32_t>(op_signature(in.op).operands.size()), 1};
    case InstrKind::Call: {
        const Procedure* callee = p.find_proc(in.callee);
        return {callee ? static_cast<uint32_t>(callee->ins.size()) : 0u,
                callee ? static_cast<uint32_t>(callee->outs.size()) : 0u};
    }
    case InstrKind::Ret:
        return {0, 0}; // handled specially: height must equal |outs|
    }
    return {0, 0};
}

} // namespace

std::vector<BasicBlock> build_cfg(const Procedure& proc) {
    const auto& code = proc.code;
    std::set<uint32_t> leaders{0};
    for (uint32_t i = 0; i < code.size(); ++i) {
        const Instr& in = code[i];
        if (in.kind == InstrKind::Branch) {
            leaders.insert(in.t1);
            leaders.insert(in.t2);
            if (i + 1 < code.size())
                leaders.insert(i + 1);
        } else if (in.kind == InstrKind::Ret) {
            if (i + 1 < code.size())
                leaders.insert(i + 1);
        }
    }
    std::vector<BasicBlock> blocks;
    std::map<uint32_t, uint32_t> block_of_leader;
    for (auto it = leaders.begin(); it != leaders.end(); ++it) {
        auto next = std::next(it);
        BasicBlock b;
        b.start = *it;
        b.end = (next == leaders.end() ? static_cast<uint32_t>(code.size()) : *next) - 1;
        block_of_leader.emplace(b.start, static_cast<uint32_t>(blocks.size()));
        blocks.push_back(b);
    }
    for (auto& b : blocks) {
        const Instr& last = code[b.end];
        if (last.kind == InstrKind::Branch) {
            b.succs.push_back(block_of_leader.at(last.t1));
            if (last.t2 != last.t1)
                b.succs.push_back(block_of_leader.at(last.t2));
        } else if (last.kind != InstrKind::Ret) {
            b.succs.push_back(block_of_leader.at(b.end + 1));
        }
    }
    // Reachability from the entry block.
    std::deque<uint32_t> work{0};
    while (!work.empty()) {
        uint32_t id = work.front();
        work.pop_front();
        if (blocks[id].reachable)
            continue;
        blocks[id].reachable = true;
        for (uint32_t s : blocks[id].succs)
            work.push_back(s);
    }
    return blocks;
}

std::vector<Diagnostic> check_stack_usage(const Program& p, const Procedure& proc,
                                          const std::vector<BasicBlock>& cfg) {
    std::vector<Diagnostic> diags;
    std::vector<std::optional<int64_t>> entry_height(cfg.size());
    entry_height[0] = 0;
    std::deque<uint32_t> work{0};
    std::set<uint32_t> queued{0};
    while (!work.empty()) {
        uint32_t id = work.front();
        work.pop_front();
        queued.erase(id);
        const BasicBlock& b = cfg[id];
        int64_t h = *entry_height[id];
        bool block_ok = true;
        for (uint32_t off = b.start; off <= b.end && block_ok; ++off) {
            const Instr& in = proc.code[off];
            if (in.kind == InstrKind::Ret) {
                if (h != static_cast<int64_t>(proc.outs.size()))
                    diags.push_back(make_diag(proc, off, "stack height",
                                              "height " + std::to_string(h) +
                                                  " at Ret does not match the " +
                                                  std::to_string(proc.outs.size()) +
                                                  " declared outputs"));
                h = 0;
                continue;
            }
            auto [pops, pushes] = stack_effect(p, in);
            if (h < static_cast<int64_t>(pops)) {
                diags.push_back(make_diag(proc, off, "stack underflow",
                                          instr_mnemonic(in.kind) +
                                              std::string(" needs ") + std::to_string(pops) +
                                              " operands, height is " + std::to_string(h)));
                block_ok = false;
                break;
            }
            h += static_cast<int64_t>(pushes) - static_cast<int64_t>(pops);
        }
        if (!block_ok)
            continue;
        for (uint32_t s : b.succs) {
            if (!entry_height[s]) {
                entry_height[s] = h;
                if (queued.insert(s).second)
                    work.push_back(s);
            } else if (*entry_height[s] != h) {
                diags.push_back(make_diag(proc, cfg[s].start, "stack height",
                                          "join height mismatch: " + std::to_string(h) +
                                              " vs " + std::to_string(*entry_height[s])));
            }
        }
    }
    return diags;
}

std::vector<Diagnostic> check_acquires(const Program& p) {
    std::vector<Diagnostic> diags;
    for (const auto& m : p.modules) {
        for (const auto& proc : m.procs) {
            // Required types with the first offset demanding each.
            std::map<QualifiedName, std::pair<uint32_t, std::string>> required;
            for (uint32_t off = 0; off < proc.code.size(); ++off) {
                const Instr& in = proc.code[off];
                if (in.kind == InstrKind::BorrowGlobal || in.kind == InstrKind::MoveFrom) {
                    required.emplace(in.record,
                                     std::make_pair(off, std::string(instr_mnemonic(in.kind))));
                } else if (in.kind == InstrKind::Call) {
                    const Procedure* callee = p.find_proc(in.callee);
                    if (callee && callee->module == proc.module)
                        for (const auto& t : callee->acquires)
                            required.emplace(t, std::make_pair(off, "call to " + in.callee.str()));
                }
            }
            for (const auto& [t, where] : required)
                if (!proc.acquires.count(t))
                    diags.push_back(make_diag(proc, where.first, "missing acquires",
                                              where.second + " requires 'acquires " + t.str() +
                                                  "'"));
            for (const auto& t : proc.acquires)
                if (!required.count(t))
                    diags.push_back(make_diag(proc, {}, "unnecessary acquires",
                                              "'" + t.str() + "' is never acquired",
                                              Diagnostic::Severity::Warning));
        }
    }
    return diags;
}

namespace {

std::vector<uint32_t> next_offsets(const Procedure& proc, uint32_t off) {
    const Instr& in = proc.code[off];
    if (in.kind == InstrKind::Ret)
        return {};
    if (in.kind == InstrKind::Branch) {
        if (in.t1 == in.t2)
            return {in.t1};
        return {in.t1, in.t2};
    }
    return {off + 1};
}

// Reverse post-order over reachable blocks; ties break by start offset
// through the DFS visiting successors in id order.
std::vector<uint32_t> reverse_post_order(const std::vector<BasicBlock>& cfg) {
    std::vector<uint32_t> post;
    std::vector<int> state(cfg.size(), 0);
    auto dfs = [&](auto&& self, uint32_t id) -> void {
        if (state[id])
            return;
        state[id] = 1;
        for (uint32_t s : cfg[id].succs)
            self(self, s);
        post.push_back(id);
    };
    dfs(dfs, 0);
    std::reverse(post.begin(), post.end());
    return post;
}

class BorrowFixpoint {
public:
    BorrowFixpoint(const Program& p, const Procedure& proc, const std::vector<BasicBlock>& cfg,
                   const VerifyOptions& opts)
        : p_(p), proc_(proc), cfg_(cfg), opts_(opts) {}

    bool run(std::vector<Diagnostic>& diags, ProcAnnotations& out, uint32_t& max_visits,
             bool& ceiling_hit) {
        std::vector<uint32_t> rpo = reverse_post_order(cfg_);
        std::map<uint32_t, uint32_t> rpo_index;
        for (uint32_t i = 0; i < rpo.size(); ++i)
            rpo_index[rpo[i]] = i;

        std::vector<std::optional<LocalAbstractState>> entry(cfg_.size());
        entry[0] = initial_state(proc_);
        std::set<std::pair<uint32_t, uint32_t>> work; // (rpo index, block id)
        work.insert({rpo_index.at(0), 0});
        std::vector<uint32_t> visits(cfg_.size(), 0);

        while (!work.empty()) {
            auto [idx, id] = *work.begin();
            work.erase(work.begin());
            (void)idx;
            if (++visits[id] > opts_.max_block_visits) {
                ceiling_hit = true;
                diags.push_back(make_diag(proc_, cfg_[id].start, "fixpoint ceiling",
                                          "block revisited more than " +
                                              std::to_string(opts_.max_block_visits) +
                                              " times"));
                return false;
            }
            max_visits = std::max(max_visits, visits[id]);

            LocalAbstractState state = *entry[id];
            bool failed = false;
            for (uint32_t off = cfg_[id].start; off <= cfg_[id].end; ++off) {
                PropResult r = propagate(p_, proc_, proc_.code[off], state);
                if (auto* e = std::get_if<PropagationError>(&r)) {
                    diags.push_back(make_diag(proc_, off, prop_error_kind_str(e->kind),
                                              e->detail + (e->position ? " (" + e->position->str() + ")"
                                                                       : "")));
                    failed = true;
                    break;
                }
                state = std::move(std::get<LocalAbstractState>(r));
            }
            if (failed)
                return false;
            state.graph = state.graph.widen_paths(opts_.widen_k);
            for (uint32_t s : cfg_[id].succs) {
                if (!entry[s]) {
                    entry[s] = state;
                    work.insert({rpo_index.at(s), s});
                    continue;
                }
                LocalAbstractState& existing = *entry[s];
                if (existing.locals != state.locals) {
                    diags.push_back(make_diag(proc_, cfg_[s].start, "join mismatch",
                                              "local variable types disagree at join point"));
                    return false;
                }
                if (existing.stack != state.stack) {
                    diags.push_back(make_diag(proc_, cfg_[s].start, "join mismatch",
                                              "operand stack types disagree at join point"));
                    return false;
                }
                auto joined = graph_join(existing.graph, state.graph);
                if (std::holds_alternative<CycleError>(joined)) {
                    diags.push_back(make_diag(proc_, cfg_[s].start, "join cycle",
                                              "joined borrow graph has a cycle"));
                    return false;
                }
                BorrowGraph jg = std::move(std::get<BorrowGraph>(joined));
                if (!graph_leq(jg, existing.graph)) {
                    existing.graph = std::move(jg);
                    work.insert({rpo_index.at(s), s});
                }
            }
        }

        // Record per-offset entry states, then certify the well-typedness
        // conditions directly so a widening or join bug cannot slip through.
        out.assign(proc_.code.size(), std::nullopt);
        for (uint32_t id = 0; id < cfg_.size(); ++id) {
            if (!cfg_[id].reachable || !entry[id])
                continue;
            LocalAbstractState state = *entry[id];
            for (uint32_t off = cfg_[id].start; off <= cfg_[id].end; ++off) {
                out[off] = state;
                PropResult r = propagate(p_, proc_, proc_.code[off], state);
                if (std::holds_alternative<PropagationError>(r)) {
                    diags.push_back(make_diag(proc_, off, "certification failure",
                                              "stabilized annotation fails to propagate"));
                    return false;
                }
                state = std::move(std::get<LocalAbstractState>(r));
            }
        }
        if (!out.empty() && out[0] && !(*out[0] == initial_state(proc_))) {
            diags.push_back(make_diag(proc_, 0u, "entry state mismatch",
                                      "entry annotation must be the procedure's initial state"));
            return false;
        }
        for (uint32_t off = 0; off < proc_.code.size(); ++off) {
            if (!out[off])
                continue;
            if (!well_formed(proc_, *out[off])) {
                diags.push_back(make_diag(proc_, off, "certification failure",
                                          "annotation is not well-formed"));
                return false;
            }
            PropResult r = propagate(p_, proc_, proc_.code[off], *out[off]);
            if (std::holds_alternative<PropagationError>(r)) {
                diags.push_back(make_diag(proc_, off, "certification failure",
                                          "annotation fails to propagate"));
                return false;
            }
            const LocalAbstractState& res = std::get<LocalAbstractState>(r);
            for (uint32_t j : next_offsets(proc_, off)) {
                if (!out[j] || !ls_leq(res, *out[j])) {
                    diags.push_back(make_diag(proc_, off, "certification failure",
                                              "propagated state exceeds the successor annotation at " +
                                                  std::to_string(j)));
                    return false;
                }
            }
        }
        return true;
    }

private:
    const Program& p_;
    const Procedure& proc_;
    const std::vector<BasicBlock>& cfg_;
    const VerifyOptions& opts_;
};

} // namespace

bool borrow_check(const Program& p, const Procedure& proc, const std::vector<BasicBlock>& cfg,
                  const VerifyOptions& opts, std::vector<Diagnostic>& diags, ProcAnnotations& out,
                  uint32_t* max_visits, bool* ceiling_hit) {
    uint32_t mv = 0;
    bool ch = false;
    bool ok = BorrowFixpoint(p, proc, cfg, opts).run(diags, out, mv, ch);
    if (max_visits)
        *max_visits = std::max(*max_visits, mv);
    if (ceiling_hit)
        *ceiling_hit = *ceiling_hit || ch;
    return ok;
}

VerificationReport verify_program(const Program& p, const VerifyOptions& opts) {
    VerificationReport report;
    std::vector<Diagnostic> structural = validate_structure(p);
    bool structure_ok = true;
    for (auto& d : structural)
        if (d.severity == Diagnostic::Severity::Error)
            structure_ok = false;
    report.diagnostics = std::move(structural);
    if (!structure_ok) {
        report.verified = false;
        return report;
    }

    std::vector<Diagnostic> acq = check_acquires(p);
    std::set<std::pair<std::string, std::string>> acq_failed;
    for (const auto& d : acq)
        if (d.severity == Diagnostic::Severity::Error)
            acq_failed.insert({d.module, d.proc});
    report.diagnostics.insert(report.diagnostics.end(), acq.begin(), acq.end());

    bool all_ok = true;
    for (const auto& m : p.modules) {
        for (const auto& proc : m.procs) {
            report.instructions += proc.code.size();
            bool proc_ok = true;
            std::vector<BasicBlock> cfg = build_cfg(proc);
            for (const auto& b : cfg)
                if (!b.reachable)
                    report.diagnostics.push_back(make_diag(proc, b.start, "unreachable code",
                                                           "block is never executed",
                                                           Diagnostic::Severity::Warning));
            std::vector<Diagnostic> stack_diags = check_stack_usage(p, proc, cfg);
            bool stack_ok = stack_diags.empty();
            report.diagnostics.insert(report.diagnostics.end(), stack_diags.begin(),
                                      stack_diags.end());
            if (!stack_ok)
                proc_ok = false;
            if (acq_failed.count({proc.module, proc.name}))
                proc_ok = false;
            if (proc_ok) {
                ProcAnnotations ann;
                std::vector<Diagnostic> borrow_diags;
                bool ok = borrow_check(p, proc, cfg, opts, borrow_diags, ann,
                                       &report.max_block_visits, &report.ceiling_hit);
                report.diagnostics.insert(report.diagnostics.end(), borrow_diags.begin(),
                                          borrow_diags.end());
                if (ok)
                    report.annotations.emplace(proc.qualified(), std::move(ann));
                else
                    proc_ok = false;
            }
            report.proc_verdicts.emplace(proc.qualified(), proc_ok);
            all_ok = all_ok && proc_ok;
        }
    }
    report.verified = all_ok;
    return report;
}

std::string VerificationReport::render_text() const {
    std::ostringstream os;
    for (const auto& d : diagnostics)
        os << d.str() << "\n";
    for (const auto& [qn, ok] : proc_verdicts)
        os << qn.str() << ": " << (ok ? "verified" : "rejected") << "\n";
    os << (verified ? "VERIFIED" : "REJECTED") << "\n";
    return os.str();
}

std::string VerificationReport::render_json() const {
    nlohmann::json j;
    j["verdict"] = verified ? "verified" : "rejected";
    j["instructions"] = instructions;
    nlohmann::json procs = nlohmann::json::object();
    for (const auto& [qn, ok] : proc_verdicts)
        procs[qn.str()] = ok ? "verified" : "rejected";
    j["procs"] = std::move(procs);
    nlohmann::json diags = nlohmann::json::array();
    for (const auto& d : diagnostics) {
        nlohmann::json jd;
        jd["severity"] = d.severity == Diagnostic::Severity::Error ? "error" : "warning";
        jd["module"] = d.module;
        jd["proc"] = d.proc;
        if (d.offset)
            jd["offset"] = *d.offset;
        jd["kind"] = d.kind;
        jd["message"] = d.message;
        diags.push_back(std::move(jd));
    }
    j["diagnostics"] = std::move(diags);
    return j.dump(2);
}

} // namespace mvbc
