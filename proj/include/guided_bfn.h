/* C API of the guided-bfn library.
 *
 * All functions return a gbfn_status; on any non-OK status a human-readable
 * message is available from gbfn_last_error() (thread-local). Handles are
 * opaque and must be released with their matching free function.
 */
#ifndef GUIDED_BFN_H
#define GUIDED_BFN_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gbfn_status {
    GBFN_OK = 0,
    GBFN_ERR_INVALID_ARGUMENT = 1,
    GBFN_ERR_CONFIG = 2,
    GBFN_ERR_RUNTIME = 3,
    GBFN_ERR_IO = 4,
    GBFN_ERR_VERIFY_FAILED = 5
} gbfn_status;

typedef struct gbfn_config gbfn_config;

const char* gbfn_version(void);

/* Message for the most recent error on this thread; empty string if none. */
const char* gbfn_last_error(void);

/* Loads and validates a JSON run configuration. Unknown keys are errors. */
gbfn_status gbfn_config_load(const char* path, gbfn_config** out_config);
gbfn_status gbfn_config_parse(const char* json_text, gbfn_config** out_config);
void gbfn_config_free(gbfn_config* config);

/* Overrides applied after loading. */
gbfn_status gbfn_config_set_out_dir(gbfn_config* config, const char* out_dir);
gbfn_status gbfn_config_set_base_seed(gbfn_config* config, unsigned long long seed);

/* Runs all chains of the configured sampler and writes artifacts into the
 * configured output directory. jobs <= 0 means one worker. */
gbfn_status gbfn_run(const gbfn_config* config, int jobs);

/* Compares two or more completed run directories; writes comparison.csv and
 * summary.json into out_dir. */
gbfn_status gbfn_compare(const char* const* run_dirs, int n_dirs, const char* out_dir);

/* Executes the oracle suite, printing one pass/fail line per property to
 * stdout. Returns GBFN_OK iff everything passed; *n_failed (optional) gets
 * the failure count. */
gbfn_status gbfn_verify(int* n_failed);

#ifdef __cplusplus
}
#endif

#endif /* GUIDED_BFN_H */
