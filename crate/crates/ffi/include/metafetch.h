#ifndef METAFETCH_H
#define METAFETCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_UTF8 = 2,
  MF_STATUS_INVALID_PATH = 3,
  MF_STATUS_CONFIG = 4,
  MF_STATUS_TRACE = 5,
  MF_STATUS_EXPERIMENT = 6,
  MF_STATUS_PANIC = 7,
} MfStatus;

// Opaque thread-safe LRU metadata cache.
typedef struct MfCache MfCache;

// Opaque experiment configuration.
typedef struct MfConfig MfConfig;

// Opaque result of one experiment run.
typedef struct MfReport MfReport;

// Summary of a trace file.
typedef struct MfTraceStats {
  uint64_t events;
  uint64_t list_ops;
  uint64_t unique_paths;
  uint64_t once_paths;
  double unique_fraction;
  double once_fraction;
} MfTraceStats;

// One cached entry as seen by [`mf_cache_lookup`].
typedef struct MfEntry {
  bool is_directory;
  bool is_live;
  uint64_t size_bytes;
  uint64_t mtime;
  uint64_t children;
} MfEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of this thread's last failure, or NULL. Owned by the library.
const char *mf_last_error(void);

// Library version as a static NUL-terminated string.
const char *mf_version(void);

// # Safety
// `s` is NULL or a string returned by this library and not yet freed.
void mf_string_free(char *s);

// Builds a configuration from TOML text merged over the defaults. `toml`
// may be NULL for the defaults alone.
//
// # Safety
// `toml` is NULL or a NUL-terminated string; `out` is writable.
enum MfStatus mf_config_new(const char *toml, struct MfConfig **out);

// Reads a TOML configuration file.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum MfStatus mf_config_load(const char *path, struct MfConfig **out);

// Applies one `key.path=value` override, e.g. `edge.predictor=dls`. The
// configuration is unchanged if the result does not validate.
//
// # Safety
// `cfg` is a live handle; `assignment` is a NUL-terminated string.
enum MfStatus mf_config_set(struct MfConfig *cfg, const char *assignment);

// The resolved configuration as TOML; free with [`mf_string_free`].
//
// # Safety
// `cfg` is a live handle; `out` is writable.
enum MfStatus mf_config_to_toml(const struct MfConfig *cfg, char **out);

// # Safety
// `cfg` is NULL or a handle from this library, not used afterwards.
void mf_config_free(struct MfConfig *cfg);

// Replays the configured trace on a fresh simulated continuum.
//
// # Safety
// `cfg` is a live handle; `out` is writable.
enum MfStatus mf_run(const struct MfConfig *cfg, struct MfReport **out);

// Edge hit rate, in `[0, 1]`.
//
// # Safety
// `report` is a live handle; `out` is writable.
enum MfStatus mf_report_hit_rate(const struct MfReport *report, double *out);

// Mean demand latency in simulated milliseconds.
//
// # Safety
// `report` is a live handle; `out` is writable.
enum MfStatus mf_report_avg_latency_ms(const struct MfReport *report, double *out);

// Number of demand reads replayed.
//
// # Safety
// `report` is a live handle; `out` is writable.
enum MfStatus mf_report_demands(const struct MfReport *report, uint64_t *out);

// `layer,metric,value` CSV; free with [`mf_string_free`].
//
// # Safety
// `report` is a live handle; `out` is writable.
enum MfStatus mf_report_csv(const struct MfReport *report, char **out);

// Full JSON report including the resolved configuration; free with
// [`mf_string_free`].
//
// # Safety
// `report` is a live handle; `out` is writable.
enum MfStatus mf_report_json(const struct MfReport *report, char **out);

// # Safety
// `report` is NULL or a handle from this library, not used afterwards.
void mf_report_free(struct MfReport *report);

// Counts events, list operations and path reuse in a trace file.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum MfStatus mf_trace_stats(const char *path, struct MfTraceStats *out);

// A cache of at most `capacity` entries; 0 caches nothing. The handle
// may be shared between threads.
//
// # Safety
// `out` is writable.
enum MfStatus mf_cache_new(size_t capacity, struct MfCache **out);

// Stores a record unless a strictly newer one is cached. `stored` may be
// NULL.
//
// # Safety
// `cache` is a live handle; `path` is a NUL-terminated string; `stored`
// is NULL or writable.
enum MfStatus mf_cache_put(const struct MfCache *cache,
                           const char *path,
                           bool is_directory,
                           uint64_t size_bytes,
                           uint64_t mtime,
                           bool *stored);

// Looks a path up, counting a hit or miss. `found` is set to false on a
// miss and `entry` is then left untouched.
//
// # Safety
// `cache` is a live handle; `path` is a NUL-terminated string; `found`
// and `entry` are writable.
enum MfStatus mf_cache_lookup(const struct MfCache *cache,
                              const char *path,
                              bool *found,
                              struct MfEntry *entry);

// Marks `path` and everything cached below it deleted; `marked` receives
// the number of entries touched and may be NULL.
//
// # Safety
// `cache` is a live handle; `path` is a NUL-terminated string; `marked`
// is NULL or writable.
enum MfStatus mf_cache_mark_deleted(const struct MfCache *cache, const char *path, size_t *marked);

// Number of cached entries, or 0 for a NULL handle.
//
// # Safety
// `cache` is NULL or a live handle.
size_t mf_cache_len(const struct MfCache *cache);

// Hits over lookups so far, or 0 for a NULL handle.
//
// # Safety
// `cache` is NULL or a live handle.
double mf_cache_hit_rate(const struct MfCache *cache);

// # Safety
// `cache` is NULL or a handle from this library, not used afterwards.
void mf_cache_free(struct MfCache *cache);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METAFETCH_H */
