/* C interface of the watermark-attack toolkit.
 *
 * Everything the command-line tool does goes through this header: open an
 * experiment config, override its seed / output directory / scale, execute
 * stages (each stage transparently runs or reuses its prerequisites), sweep
 * one knob across several values, and render reports.
 *
 * Conventions:
 *   - every fallible call returns a dlove_status; DLOVE_OK is zero;
 *   - on failure, dlove_last_error() returns a thread-local message that
 *     stays valid until the next failing call on the same thread;
 *   - objects are opaque handles released with their _close function;
 *   - string outputs are copied into caller-provided buffers and are always
 *     NUL-terminated (truncated if the buffer is too small).
 */
#ifndef DLOVE_DLOVE_H
#define DLOVE_DLOVE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dlove_status {
    DLOVE_OK = 0,
    DLOVE_ERR_INVALID_ARGUMENT = 1, /* bad value, bad config field, misuse */
    DLOVE_ERR_IO = 2,               /* file missing or unreadable/unwritable */
    DLOVE_ERR_FORMAT = 3,           /* file exists but cannot be parsed */
    DLOVE_ERR_UNSUPPORTED = 4,      /* valid request outside the toolkit's scope */
    DLOVE_ERR_SHAPE = 5,            /* tensor/payload size mismatch */
    DLOVE_ERR_STATE = 6,            /* operation invalid in the current state;
                                       also: a pipeline stage failed */
    DLOVE_ERR_DIVERGENCE = 7,       /* an optimization went non-finite */
    DLOVE_ERR_INTERNAL = 8          /* anything not covered above */
} dlove_status;

/* Toolkit version string, e.g. "0.1.0". Static storage; never freed. */
const char* dlove_version(void);

/* Message of the most recent failure on this thread ("" if none yet). */
const char* dlove_last_error(void);

/* An experiment: a parsed config plus pending overrides. Runs are executed
 * against the config's out_dir as a graph of content-addressed stages, so
 * repeating a call reuses everything that already exists. */
typedef struct dlove_experiment dlove_experiment;

/* Parses a JSON experiment config from a file. The config is validated when
 * a run starts, not here, so overrides can be applied first. */
dlove_status dlove_experiment_open(const char* config_path,
                                   dlove_experiment** out);

/* Same, from an in-memory JSON document. */
dlove_status dlove_experiment_open_json(const char* config_json,
                                        dlove_experiment** out);

void dlove_experiment_close(dlove_experiment* exp);

/* Overrides, applied on top of the parsed config before any run. */
dlove_status dlove_experiment_override_seed(dlove_experiment* exp,
                                            uint64_t seed);
dlove_status dlove_experiment_override_out_dir(dlove_experiment* exp,
                                               const char* out_dir);
dlove_status dlove_experiment_override_scale(dlove_experiment* exp,
                                             double scale);

/* Worker-thread count for the per-image attack fan-out (clamped to [1, 64]).
 * Results are merged by input index, so the count never changes numbers. */
dlove_status dlove_experiment_set_workers(dlove_experiment* exp, int workers);

/* Runs every stage up to and including `stage`, one of: train-target,
 * train-surrogate, harvest, finetune, attack, evaluate. "evaluate" is the
 * full pipeline. Writes <out_dir>/manifest.json on success. */
dlove_status dlove_experiment_run(dlove_experiment* exp, const char* stage);

/* One full run per value along `axis` (finetune-epochs | finetune-pairs |
 * epsilon), reusing unchanged stages, then records the smallest value whose
 * attack success rate is within 2 percentage points of the maximum. */
dlove_status dlove_experiment_sweep(dlove_experiment* exp, const char* axis,
                                    const double* values, int count);

/* Output directory the next run would use (config value or override). */
dlove_status dlove_experiment_out_dir(const dlove_experiment* exp,
                                      char* path_buf, int path_cap);

/* Renders the report for the manifest found in `out_dir`. `format` is "csv"
 * or "text-table". On success copies the written file's path into path_buf. */
dlove_status dlove_report(const char* out_dir, const char* format,
                          char* path_buf, int path_cap);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DLOVE_DLOVE_H */
