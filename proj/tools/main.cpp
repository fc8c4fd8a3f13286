// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc.h"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace {

// RAII for strings handed out by the C API.
struct ApiString {
    char* s = nullptr;
    ~ApiString() { mvbc_string_free(s); }
    std::string str() const { return s ? s : ""; }
};

struct ApiProgram {
    mvbc_program* p = nullptr;
    ~ApiProgram() { mvbc_program_free(p); }
};

struct ApiReport {
    mvbc_report* r = nullptr;
    ~ApiReport() { mvbc_report_free(r); }
};

int load_program(const std::string& path, ApiProgram& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot read '" << path << "'\n";
        return MVBC_ERROR;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    ApiString diags;
    mvbc_status st = mvbc_program_parse(text.c_str(), text.size(), &out.p, &diags.s);
    if (st != MVBC_OK) {
        std::cerr << path << ":\n" << diags.str();
        return MVBC_ERROR;
    }
    return MVBC_OK;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mvbc: assembler, reference-safety verifier, and interpreter for a"
                 " stack-machine bytecode with borrowed references"};
    app.require_subcommand(1);

    std::string format = "text";
    uint64_t fuel = 10000;
    uint32_t widen_k = 8;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--format", format, "Output format: text or json")
            ->check(CLI::IsMember({"text", "json"}));
        cmd->add_option("--widen-k", widen_k, "Max fixed borrow-path length before widening");
    };

    // verify
    auto* verify = app.add_subcommand("verify", "Verify programs; exit 0 verified, 1 rejected");
    std::vector<std::string> verify_paths;
    verify->add_option("files", verify_paths, "Assembly files")->required();
    add_common(verify);

    // run
    auto* run = app.add_subcommand("run", "Execute a program");
    std::string run_path, entry, args_literal;
    bool unsafe = false, trace_steps = false;
    run->add_option("file", run_path, "Assembly file")->required();
    run->add_option("--entry", entry, "Entry proc as module::proc")->required();
    run->add_option("--args", args_literal, "Comma-separated literal arguments");
    run->add_option("--fuel", fuel, "Max interpreter steps");
    run->add_flag("--unsafe", unsafe, "Run even if verification fails");
    run->add_flag("--trace", trace_steps, "Print one line per executed instruction");
    add_common(run);

    // trace
    auto* trace = app.add_subcommand("trace", "Run with per-step invariant checking");
    std::string trace_path;
    bool corrupt = false;
    trace->add_option("file", trace_path, "Assembly file")->required();
    trace->add_option("--entry", entry, "Entry proc as module::proc")->required();
    trace->add_option("--args", args_literal, "Comma-separated literal arguments");
    trace->add_option("--fuel", fuel, "Max interpreter steps");
    trace->add_flag("--corrupt-annotations", corrupt,
                    "Damage the annotations first (negative control)");
    add_common(trace);

    // fuzz
    auto* fuzz = app.add_subcommand("fuzz", "Random-program campaign; JSONL report on stdout");
    uint64_t seed_start = 0, seed_count = 100;
    uint32_t budget = 40, jobs = 1;
    fuzz->add_option("--seed-start", seed_start, "First seed");
    fuzz->add_option("--seed-count", seed_count, "Number of seeds");
    fuzz->add_option("--budget", budget, "Instruction budget per generated procedure");
    fuzz->add_option("--fuel", fuel, "Max interpreter steps per run");
    fuzz->add_option("--jobs", jobs, "Worker threads");
    add_common(fuzz);

    CLI11_PARSE(app, argc, argv);

    if (verify->parsed()) {
        int worst = MVBC_OK;
        for (const auto& path : verify_paths) {
            ApiProgram prog;
            if (load_program(path, prog) != MVBC_OK)
                return MVBC_ERROR;
            ApiReport report;
            mvbc_status st = mvbc_verify(prog.p, widen_k, &report.r);
            ApiString text;
            mvbc_report_render(report.r, format == "json" ? MVBC_FORMAT_JSON : MVBC_FORMAT_TEXT,
                               &text.s);
            if (verify_paths.size() > 1)
                std::cout << path << ":\n";
            std::cout << text.str();
            if (st > worst)
                worst = st;
        }
        return worst;
    }

    if (run->parsed()) {
        ApiProgram prog;
        if (load_program(run_path, prog) != MVBC_OK)
            return MVBC_ERROR;
        uint32_t flags = (unsafe ? MVBC_RUN_UNSAFE : 0) | (trace_steps ? MVBC_RUN_TRACE_STEPS : 0);
        ApiString text;
        mvbc_status st =
            mvbc_run(prog.p, entry.c_str(), args_literal.c_str(), fuel, flags, &text.s);
        std::cout << text.str();
        return st;
    }

    if (trace->parsed()) {
        ApiProgram prog;
        if (load_program(trace_path, prog) != MVBC_OK)
            return MVBC_ERROR;
        uint32_t flags = corrupt ? MVBC_TRACE_CORRUPT : 0;
        ApiString text;
        mvbc_status st =
            mvbc_trace(prog.p, entry.c_str(), args_literal.c_str(), fuel, flags, &text.s);
        std::cout << text.str();
        return st;
    }

    if (fuzz->parsed()) {
        ApiString jsonl;
        mvbc_status st =
            mvbc_fuzz(seed_start, seed_count, budget, fuel, widen_k, jobs, &jsonl.s);
        std::cout << jsonl.str();
        return st;
    }

    return MVBC_ERROR;
}
