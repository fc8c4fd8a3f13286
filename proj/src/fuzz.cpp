// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/fuzz.hpp"

#include <atomic>
#include <thread>

#include "json.hpp"

namespace mvbc {

namespace {

FuzzSeedResult run_one(uint64_t seed, const FuzzOptions& opts) {
    FuzzSeedResult out;
    out.seed = seed;
    Program prog = generate_program(seed, GenOptions{opts.budget});
    VerifyOptions vopts;
    vopts.widen_k = opts.widen_k;
    VerificationReport report = verify_program(prog, vopts);
    out.ceiling_hit = report.ceiling_hit;
    out.verified = report.verified;
    if (!report.verified)
        return out;
    DifferentialResult diff = differential_run(prog, report.annotations, {"m0", "main"}, {},
                                               opts.fuel);
    out.steps = diff.steps;
    if (diff.violation)
        out.violation = diff.violation->str();
    return out;
}

} // namespace

std::string FuzzReport::to_jsonl() const {
    std::string out;
    for (const auto& r : results) {
        nlohmann::json j;
        j["seed"] = r.seed;
        j["verdict"] = r.verified ? "verified" : "rejected";
        j["steps"] = r.steps;
        if (r.violation)
            j["violation"] = *r.violation;
        out += j.dump();
        out += '\n';
    }
    return out;
}

FuzzReport run_fuzz(const FuzzOptions& opts) {
    FuzzReport report;
    report.results.resize(opts.seed_count);
    uint32_t jobs = std::max<uint32_t>(1, opts.jobs);
    if (jobs == 1) {
        for (uint64_t i = 0; i < opts.seed_count; ++i)
            report.results[i] = run_one(opts.seed_start + i, opts);
    } else {
        std::atomic<uint64_t> next{0};
        auto worker = [&] {
            while (true) {
                uint64_t i = next.fetch_add(1);
                if (i >= opts.seed_count)
                    return;
                report.results[i] = run_one(opts.seed_start + i, opts);
            }
        };
        std::vector<std::thread> pool;
        for (uint32_t t = 0; t < jobs; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& r : report.results) {
        if (r.verified)
            ++report.verified_count;
        else
            ++report.rejected_count;
        if (r.violation)
            ++report.violation_count;
        report.ceiling_hit = report.ceiling_hit || r.ceiling_hit;
    }
    return report;
}

} // namespace mvbc
