// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_GENERATOR_HPP
#define MVBC_GENERATOR_HPP

#include "mvbc/ir.hpp"

namespace mvbc {

struct GenOptions {
    uint32_t budget = 40; // rough instruction budget per procedure body
};

/// Generates a structurally valid, stack-height-correct program by typed
/// construction. Output is deterministic per seed and makes no attempt
/// to be borrow-safe: roughly half the programs carry a deliberate
/// ownership violation, so both verifier verdicts are exercised. The
/// entry point is always m0::main() -> ().
Program generate_program(uint64_t seed, const GenOptions& opts = {});

} // namespace mvbc

#endif
