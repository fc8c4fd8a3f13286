/*
 * Copyright (c) mvbc contributors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API for the mvbc bytecode reference-safety toolchain. All handles are
 * opaque; every function returns an mvbc_status. Strings returned through
 * out-parameters are heap-allocated and must be released with
 * mvbc_string_free().
 */

#ifndef MVBC_H
#define MVBC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mvbc_program mvbc_program;
typedef struct mvbc_report mvbc_report;

/* Status codes double as process exit codes for the CLI. */
typedef enum mvbc_status {
    MVBC_OK = 0,       /* verified / ran cleanly */
    MVBC_REJECTED = 1, /* verification or invariant failure, or runtime fault */
    MVBC_ERROR = 2     /* parse error, bad arguments, internal error */
} mvbc_status;

typedef enum mvbc_format {
    MVBC_FORMAT_TEXT = 0,
    MVBC_FORMAT_JSON = 1
} mvbc_format;

/* Flags for mvbc_run / mvbc_trace. */
#define MVBC_RUN_UNSAFE 0x1u          /* execute without requiring verification */
#define MVBC_RUN_TRACE_STEPS 0x2u     /* emit one line per executed instruction */
#define MVBC_TRACE_CORRUPT 0x4u       /* perturb one annotation (negative control) */

const char* mvbc_version(void);

void mvbc_string_free(char* s);

/*
 * Parses assembly text into a program. On success *out_program is set.
 * On failure *out_diagnostics (when non-NULL) receives the parse
 * diagnostics, one per line.
 */
mvbc_status mvbc_program_parse(const char* text, size_t len, mvbc_program** out_program,
                               char** out_diagnostics);

void mvbc_program_free(mvbc_program* p);

/* Canonical assembly text; parsing it reproduces the program. */
mvbc_status mvbc_program_format(const mvbc_program* p, char** out_text);

/*
 * Runs the full verification pipeline. A report is produced for both
 * verdicts; the status tells them apart.
 */
mvbc_status mvbc_verify(const mvbc_program* p, uint32_t widen_k, mvbc_report** out_report);

void mvbc_report_free(mvbc_report* r);

/* 1 when every procedure verified, else 0. */
int mvbc_report_verified(const mvbc_report* r);

mvbc_status mvbc_report_render(const mvbc_report* r, mvbc_format format, char** out_text);

/*
 * Executes entry_proc ("module::proc") with comma-separated literal
 * arguments (ints, true/false, 0x... addresses; empty string for none).
 * Unverified programs are refused unless MVBC_RUN_UNSAFE is set. Output
 * describes the outcome (and the step trace when requested).
 */
mvbc_status mvbc_run(const mvbc_program* p, const char* entry_proc, const char* args,
                     uint64_t fuel, uint32_t flags, char** out_text);

/*
 * Verifies, then interprets while checking the per-step soundness
 * invariants against the annotations. MVBC_TRACE_CORRUPT deliberately
 * damages one annotation first to demonstrate violation detection.
 */
mvbc_status mvbc_trace(const mvbc_program* p, const char* entry_proc, const char* args,
                       uint64_t fuel, uint32_t flags, char** out_text);

/*
 * Generates, verifies and differentially runs one program per seed.
 * *out_jsonl receives one JSON object per seed. Returns MVBC_OK when no
 * seed produced an invariant violation, fault, or leak.
 */
mvbc_status mvbc_fuzz(uint64_t seed_start, uint64_t seed_count, uint32_t budget, uint64_t fuel,
                      uint32_t widen_k, uint32_t jobs, char** out_jsonl);

#ifdef __cplusplus
}
#endif

#endif /* MVBC_H */
