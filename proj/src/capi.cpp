// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc.h"

#include "mvbc/fuzz.hpp"
#include "mvbc/interp.hpp"
#include "mvbc/ir.hpp"
#include "mvbc/soundness.hpp"
#include "mvbc/verifier.hpp"

#include <cstring>
#include <sstream>

struct mvbc_program {
    mvbc::Program prog;
};

struct mvbc_report {
    mvbc::VerificationReport rep;
};

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out)
        std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_out(char** slot, const std::string& s) {
    if (slot)
        *slot = dup_string(s);
}

// Comma-separated primitive literals: ints, true/false, 0x addresses.
std::optional<std::vector<mvbc::RuntimeValue>> parse_args(const char* text, std::string& err) {
    std::vector<mvbc::RuntimeValue> out;
    if (!text)
        return out;
    std::string s(text);
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        pos = comma == std::string::npos ? s.size() : comma + 1;
        size_t b = tok.find_first_not_of(" \t");
        size_t e = tok.find_last_not_of(" \t");
        if (b == std::string::npos)
            continue;
        tok = tok.substr(b, e - b + 1);
        if (tok == "true" || tok == "false") {
            out.push_back(mvbc::RuntimeValue::of_bool(tok == "true"));
        } else if (tok.rfind("0x", 0) == 0 || tok.rfind("0X", 0) == 0) {
            auto a = mvbc::Addr::from_hex(tok);
            if (!a) {
                err = "bad address literal '" + tok + "'";
                return std::nullopt;
            }
            out.push_back(mvbc::RuntimeValue::of_addr(*a));
        } else {
            try {
                out.push_back(mvbc::RuntimeValue::of_int(std::stoll(tok)));
            } catch (...) {
                err = "bad argument literal '" + tok + "'";
                return std::nullopt;
            }
        }
    }
    return out;
}

std::optional<mvbc::QualifiedName> parse_entry(const char* entry, std::string& err) {
    if (!entry || !*entry) {
        err = "missing entry proc";
        return std::nullopt;
    }
    std::string s(entry);
    size_t sep = s.find("::");
    if (sep == std::string::npos) {
        err = "entry proc must be written module::proc";
        return std::nullopt;
    }
    return mvbc::QualifiedName{s.substr(0, sep), s.substr(sep + 2)};
}

} // namespace

extern "C" {

const char* mvbc_version(void) { return "0.1.0"; }

void mvbc_string_free(char* s) { std::free(s); }

mvbc_status mvbc_program_parse(const char* text, size_t len, mvbc_program** out_program,
                               char** out_diagnostics) {
    if (!text || !out_program)
        return MVBC_ERROR;
    *out_program = nullptr;
    mvbc::ParseResult result = mvbc::parse_program(std::string_view(text, len));
    if (!result.ok()) {
        std::string all;
        for (const auto& d : result.diagnostics) {
            all += d.str();
            all += '\n';
        }
        set_out(out_diagnostics, all);
        return MVBC_ERROR;
    }
    *out_program = new mvbc_program{std::move(*result.program)};
    return MVBC_OK;
}

void mvbc_program_free(mvbc_program* p) { delete p; }

mvbc_status mvbc_program_format(const mvbc_program* p, char** out_text) {
    if (!p || !out_text)
        return MVBC_ERROR;
    set_out(out_text, mvbc::format_program(p->prog));
    return MVBC_OK;
}

mvbc_status mvbc_verify(const mvbc_program* p, uint32_t widen_k, mvbc_report** out_report) {
    if (!p || !out_report)
        return MVBC_ERROR;
    mvbc::VerifyOptions opts;
    if (widen_k > 0)
        opts.widen_k = widen_k;
    auto* r = new mvbc_report{mvbc::verify_program(p->prog, opts)};
    *out_report = r;
    return r->rep.verified ? MVBC_OK : MVBC_REJECTED;
}

void mvbc_report_free(mvbc_report* r) { delete r; }

int mvbc_report_verified(const mvbc_report* r) { return r && r->rep.verified ? 1 : 0; }

mvbc_status mvbc_report_render(const mvbc_report* r, mvbc_format format, char** out_text) {
    if (!r || !out_text)
        return MVBC_ERROR;
    set_out(out_text, format == MVBC_FORMAT_JSON ? r->rep.render_json() : r->rep.render_text());
    return MVBC_OK;
}

mvbc_status mvbc_run(const mvbc_program* p, const char* entry_proc, const char* args,
                     uint64_t fuel, uint32_t flags, char** out_text) {
    if (!p)
        return MVBC_ERROR;
    std::string err;
    auto entry = parse_entry(entry_proc, err);
    if (!entry) {
        set_out(out_text, err + "\n");
        return MVBC_ERROR;
    }
    auto argv = parse_args(args, err);
    if (!argv) {
        set_out(out_text, err + "\n");
        return MVBC_ERROR;
    }
    if (!p->prog.find_proc(*entry)) {
        set_out(out_text, "entry proc '" + entry->str() + "' not found\n");
        return MVBC_ERROR;
    }
    std::ostringstream os;
    if (!(flags & MVBC_RUN_UNSAFE)) {
        mvbc::VerificationReport rep = mvbc::verify_program(p->prog);
        if (!rep.verified) {
            os << "refusing to run an unverified program (pass the unsafe flag to override)\n";
            os << rep.render_text();
            set_out(out_text, os.str());
            return MVBC_REJECTED;
        }
    }
    mvbc::StepHook hook;
    if (flags & MVBC_RUN_TRACE_STEPS)
        hook = [&os](const mvbc::ConcreteState& s, const mvbc::Instr& in) {
            os << mvbc::trace_line(s, in) << "\n";
        };
    mvbc::Outcome outcome = mvbc::run(p->prog, *entry, *argv, fuel, hook);
    mvbc_status status = MVBC_OK;
    switch (outcome.kind) {
    case mvbc::Outcome::Kind::Halted:
        os << "halted after " << outcome.steps << " steps\n";
        for (const auto& v : outcome.final_operands)
            os << "result: " << v.str() << "\n";
        if (!outcome.leaked.empty()) {
            os << "leaked locations:";
            for (auto loc : outcome.leaked)
                os << " " << loc;
            os << "\n";
        }
        break;
    case mvbc::Outcome::Kind::Faulted:
        os << outcome.fault->str() << "\n";
        status = MVBC_REJECTED;
        break;
    case mvbc::Outcome::Kind::FuelExhausted:
        os << "fuel exhausted after " << outcome.steps << " steps\n";
        status = MVBC_REJECTED;
        break;
    }
    set_out(out_text, os.str());
    return status;
}

mvbc_status mvbc_trace(const mvbc_program* p, const char* entry_proc, const char* args,
                       uint64_t fuel, uint32_t flags, char** out_text) {
    if (!p)
        return MVBC_ERROR;
    std::string err;
    auto entry = parse_entry(entry_proc, err);
    if (!entry) {
        set_out(out_text, err + "\n");
        return MVBC_ERROR;
    }
    auto argv = parse_args(args, err);
    if (!argv) {
        set_out(out_text, err + "\n");
        return MVBC_ERROR;
    }
    if (!p->prog.find_proc(*entry)) {
        set_out(out_text, "entry proc '" + entry->str() + "' not found\n");
        return MVBC_ERROR;
    }
    mvbc::VerificationReport rep = mvbc::verify_program(p->prog);
    if (!rep.verified) {
        set_out(out_text, "program did not verify; nothing to trace\n" + rep.render_text());
        return MVBC_ERROR;
    }
    if (flags & MVBC_TRACE_CORRUPT) {
        // Strip every borrow edge from the annotations; any live reference
        // then lacks its realized incoming edge.
        for (auto& [qn, ann] : rep.annotations) {
            (void)qn;
            for (auto& state : ann)
                if (state)
                    state->graph = mvbc::BorrowGraph();
        }
    }
    std::ostringstream os;
    mvbc::DifferentialHook hook = [&os](uint64_t step, const mvbc::ConcreteState& s,
                                        size_t violations) {
        const mvbc::Frame& f = s.callstack.back();
        os << "step " << step << " proc=" << f.proc.str() << " pc=" << f.pc
           << " invariants=" << (violations == 0 ? "ok" : "VIOLATED") << "\n";
    };
    mvbc::DifferentialResult diff =
        mvbc::differential_run(p->prog, rep.annotations, *entry, *argv, fuel, hook);
    if (diff.violation) {
        os << diff.violation->str() << "\n";
        set_out(out_text, os.str());
        return MVBC_REJECTED;
    }
    os << "trace ok: " << diff.steps << " steps, no invariant violations\n";
    set_out(out_text, os.str());
    return MVBC_OK;
}

mvbc_status mvbc_fuzz(uint64_t seed_start, uint64_t seed_count, uint32_t budget, uint64_t fuel,
                      uint32_t widen_k, uint32_t jobs, char** out_jsonl) {
    mvbc::FuzzOptions opts;
    opts.seed_start = seed_start;
    opts.seed_count = seed_count;
    if (budget)
        opts.budget = budget;
    if (fuel)
        opts.fuel = fuel;
    if (widen_k)
        opts.widen_k = widen_k;
    if (jobs)
        opts.jobs = jobs;
    mvbc::FuzzReport report = mvbc::run_fuzz(opts);
    set_out(out_jsonl, report.to_jsonl());
    return report.violation_count == 0 ? MVBC_OK : MVBC_REJECTED;
}

} // extern "C"
