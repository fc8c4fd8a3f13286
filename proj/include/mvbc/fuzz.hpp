// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_FUZZ_HPP
#define MVBC_FUZZ_HPP

#include "mvbc/generator.hpp"
#include "mvbc/soundness.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mvbc {

struct FuzzOptions {
    uint64_t seed_start = 0;
    uint64_t seed_count = 100;
    uint32_t budget = 40;
    uint64_t fuel = 10000;
    uint32_t widen_k = 8;
    uint32_t jobs = 1;
};

struct FuzzSeedResult {
    uint64_t seed = 0;
    bool verified = false;
    uint64_t steps = 0;
    std::optional<std::string> violation;
    bool ceiling_hit = false;
};

struct FuzzReport {
    std::vector<FuzzSeedResult> results; // ordered by seed
    uint64_t verified_count = 0;
    uint64_t rejected_count = 0;
    uint64_t violation_count = 0;
    bool ceiling_hit = false;

    /// One JSON object per seed, in seed order.
    std::string to_jsonl() const;
};

/// Generates, verifies, and differentially runs one program per seed.
/// Verified programs execute from m0::main with per-step invariant
/// checking; any violation, fault, or leak is recorded. Results are
/// deterministic per seed regardless of the worker count.
FuzzReport run_fuzz(const FuzzOptions& opts);

} // namespace mvbc

#endif
