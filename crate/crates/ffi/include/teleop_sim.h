#ifndef TELEOP_SIM_H
#define TELEOP_SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TeleopStatus {
  TELEOP_STATUS_OK = 0,
  TELEOP_STATUS_NULL_POINTER = 1,
  TELEOP_STATUS_INVALID_ARGUMENT = 2,
  TELEOP_STATUS_CONFIG = 3,
  TELEOP_STATUS_MISSING_GAIN = 4,
  TELEOP_STATUS_RUNTIME = 5,
  TELEOP_STATUS_PANIC = 6,
} TeleopStatus;

/*
 Outcome of one simulation run.
 */
typedef struct TeleopReport TeleopReport;

/*
 Sampled test track.
 */
typedef struct TeleopTrack TeleopTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *teleop_last_error(void);

/*
 Builds the track from a TOML configuration, or the defaults if `config_toml` is null.

 # Safety
 `config_toml` must be null or a NUL-terminated string; `out` must be writable.
 */
enum TeleopStatus teleop_track_new(const char *config_toml, struct TeleopTrack **out);

/*
 # Safety
 `track` must be null or a handle from `teleop_track_new` not yet freed.
 */
void teleop_track_free(struct TeleopTrack *track);

/*
 Course length from the start of A to the end of H, m.

 # Safety
 `track` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_track_length(const struct TeleopTrack *track, double *out);

/*
 Region index (0 = A .. 7 = H) at arc length `s`.

 # Safety
 `track` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_track_region_at(const struct TeleopTrack *track, double s, uint32_t *out);

/*
 Closest centerline point to (x, y): arc length and signed cross-track error.

 # Safety
 `track` must be a live handle; `out_s` and `out_cross_track` must be writable.
 */
enum TeleopStatus teleop_track_closest_point(const struct TeleopTrack *track,
                                             double x,
                                             double y,
                                             double *out_s,
                                             double *out_cross_track);

/*
 Peak open-loop steer-rate requirement per region at `speed` m/s; writes 8 values.

 # Safety
 `track` must be a live handle; `out8` must point to 8 writable doubles.
 */
enum TeleopStatus teleop_track_peak_steer_rate(const struct TeleopTrack *track,
                                               double speed,
                                               double wheelbase,
                                               double *out8);

/*
 Draws `n` downlink delays, s, from the configured policy.

 # Safety
 `config_toml` must be null or a NUL-terminated string; `out` must point to `n` writable doubles.
 */
enum TeleopStatus teleop_sample_delays(const char *config_toml,
                                       uint64_t seed,
                                       size_t n,
                                       double *out);

/*
 Runs one mode. `gain` is the driver gain (k1 or k) and is ignored for SRPT
 modes; a non-positive gain for a driver mode yields `MissingGain`.
 Faults during the run still produce a report; see `teleop_report_failed`.

 # Safety
 `config_toml` must be null or a NUL-terminated string; `mode` must be a
 NUL-terminated string; `out` must be writable.
 */
enum TeleopStatus teleop_run(const char *config_toml,
                             const char *mode,
                             uint32_t speed_kmh,
                             uint64_t seed,
                             double gain,
                             struct TeleopReport **out);

/*
 # Safety
 `report` must be null or a handle from `teleop_run` not yet freed.
 */
void teleop_report_free(struct TeleopReport *report);

/*
 RMS cross-track error, m, of region 0..7, or of the whole run for -1.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_report_rms(const struct TeleopReport *report, int32_t region, double *out);

/*
 Completion time, s, of region 0..7 (NaN if not left), or total run time for -1.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_report_completion_time(const struct TeleopReport *report,
                                                int32_t region,
                                                double *out);

/*
 Reset count of region 0..7, or of the whole run for -1.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_report_reset_count(const struct TeleopReport *report,
                                            int32_t region,
                                            uint32_t *out);

/*
 Peak plant steer rate over the run, rad/s.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_report_peak_steer_rate(const struct TeleopReport *report, double *out);

/*
 1 if the run was aborted, else 0. The reason is available through
 `teleop_last_error` after this call returns 1.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum TeleopStatus teleop_report_failed(const struct TeleopReport *report, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TELEOP_SIM_H */
