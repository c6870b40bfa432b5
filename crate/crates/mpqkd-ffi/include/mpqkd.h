/* C interface to the mpqkd mode-pairing QKD library.
 *
 * Conventions:
 *  - Every fallible function returns an int32_t status (MPQKD_OK == 0,
 *    errors are negative). Output parameters are written only on success.
 *  - Handles are opaque; create and destroy them only through this API.
 *  - The library is thread-safe for concurrent use of distinct handles;
 *    do not share a mutable handle across threads without synchronization.
 */

#ifndef MPQKD_H
#define MPQKD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. */
#define MPQKD_OK 0
#define MPQKD_ERR_TRUNCATION (-1)          /* Poisson tail beyond cutoff too large */
#define MPQKD_ERR_INVALID_CONFIG (-2)      /* config field out of range / bad syntax */
#define MPQKD_ERR_DEGENERATE_DECOY (-3)    /* mu == nu */
#define MPQKD_ERR_PHOTON_ABOVE_CUTOFF (-4)
#define MPQKD_ERR_ABORT_RATE (-5)          /* s11z = 0, phase-error rate undefined */
#define MPQKD_ERR_IO (-6)
#define MPQKD_ERR_JSON (-7)
#define MPQKD_ERR_NULL_POINTER (-8)
#define MPQKD_ERR_UTF8 (-9)
#define MPQKD_ERR_UNKNOWN_FIELD (-10)
#define MPQKD_ERR_PANIC (-11)              /* internal error, report a bug */

/* Opaque handles. */
typedef struct MpqkdConfig MpqkdConfig;
typedef struct MpqkdReport MpqkdReport;

/* Static description of a status code; never returns NULL. */
const char *mpqkd_strerror(int32_t code);

/* Creates a configuration with the library defaults. Free with
 * mpqkd_config_free. */
MpqkdConfig *mpqkd_config_default(void);

/* Parses flat "key = value" text ('#' starts a comment) into a new handle.
 * Unknown keys are rejected. */
int32_t mpqkd_config_parse(const char *text, MpqkdConfig **out);

/* Sets one key from its textual form, e.g. ("distance_km", "120").
 * Validation runs on the full updated configuration. */
int32_t mpqkd_config_set(MpqkdConfig *cfg, const char *key, const char *value);

void mpqkd_config_free(MpqkdConfig *cfg);

/* Analytic key-rate report (decoy estimation pipeline). */
int32_t mpqkd_analytic_report(const MpqkdConfig *cfg, MpqkdReport **out);

/* Monte Carlo run with the given seed, then the same estimation pipeline on
 * the tallies. Deterministic for fixed (config, seed). */
int32_t mpqkd_simulate_report(const MpqkdConfig *cfg, uint64_t seed,
                              MpqkdReport **out);

/* Reads one named field into *value. Known fields: distance_km, l, R,
 * R_star, ratio, e11x, Ez, s11z, q11z, q11z_star, r_p, r_z, r_p_star,
 * r_z_star, p_eff, p_eff_z, f. */
int32_t mpqkd_report_get(const MpqkdReport *report, const char *name,
                         double *value);

void mpqkd_report_free(MpqkdReport *report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MPQKD_H */
