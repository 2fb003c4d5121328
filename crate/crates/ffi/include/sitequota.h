#ifndef SITEQUOTA_H
#define SITEQUOTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SqStatus {
  SQ_STATUS_OK = 0,
  SQ_STATUS_NULL_ARGUMENT = 1,
  SQ_STATUS_INVALID_UTF8 = 2,
  SQ_STATUS_INVALID_JSON = 3,
  /**
   * Input parsed but failed validation (including unclassifiable sites).
   */
  SQ_STATUS_VALIDATION = 4,
  /**
   * Well-formed input the method cannot act on, such as a duplicate site.
   */
  SQ_STATUS_DOMAIN = 5,
  SQ_STATUS_IO = 6,
  SQ_STATUS_PANIC = 7,
} SqStatus;

/**
 * Opaque admission ledger.
 */
typedef struct SqLedger SqLedger;

/**
 * Opaque quota plan.
 */
typedef struct SqPlan SqPlan;

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *sq_last_error(void);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sq_string_free(char *s);

/**
 * Parses and validates a plan document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SqStatus sq_plan_from_json(const char *json, struct SqPlan **out);

/**
 * Builds a plan for `total` sites from a population-estimates document,
 * with uniform slack `delta`.
 *
 * # Safety
 * `estimates_json` must be a NUL-terminated string; `out` must be writable.
 */
enum SqStatus sq_plan_build(const char *estimates_json,
                            uint32_t total,
                            double delta,
                            struct SqPlan **out);

/**
 * Serializes a plan. Free the result with [`sq_string_free`].
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum SqStatus sq_plan_to_json(const struct SqPlan *plan, char **out);

/**
 * Feasibility report as JSON.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum SqStatus sq_plan_feasibility(const struct SqPlan *plan, char **out);

/**
 * # Safety
 * `plan` must be a handle from this library, or NULL.
 */
void sq_plan_free(struct SqPlan *plan);

/**
 * A fresh ledger. The ledger keeps its own reference to the plan, so the
 * plan handle may be freed afterwards.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum SqStatus sq_ledger_new(const struct SqPlan *plan, struct SqLedger **out);

/**
 * Rebuilds a ledger from newline-delimited event JSON, checking every
 * event against the plan.
 *
 * # Safety
 * `plan` must be a live handle; `events_ndjson` a NUL-terminated string;
 * `out` must be writable.
 */
enum SqStatus sq_ledger_replay(const struct SqPlan *plan,
                               const char *events_ndjson,
                               struct SqLedger **out);

/**
 * # Safety
 * `ledger` must be a handle from this library, or NULL.
 */
void sq_ledger_free(struct SqLedger *ledger);

/**
 * Adjudicates a site and records the outcome. A rejection is
 * [`SqStatus::Ok`] with `"verdict": "rejected"` in the decision.
 *
 * # Safety
 * `ledger` must be a live handle not used concurrently; `site_json` a
 * NUL-terminated string; `out_decision` must be writable.
 */
enum SqStatus sq_ledger_admit(struct SqLedger *ledger, const char *site_json, char **out_decision);

/**
 * Adjudicates a site without recording anything.
 *
 * # Safety
 * `ledger` must be a live handle; `site_json` a NUL-terminated string;
 * `out_decision` must be writable.
 */
enum SqStatus sq_ledger_what_if(const struct SqLedger *ledger,
                                const char *site_json,
                                char **out_decision);

/**
 * Withdraws an accepted site; writes the event's sequence number.
 *
 * # Safety
 * `ledger` must be a live handle not used concurrently; `site_id` a
 * NUL-terminated string; `out_seq` writable or NULL.
 */
enum SqStatus sq_ledger_withdraw(struct SqLedger *ledger, const char *site_id, uint64_t *out_seq);

/**
 * Progress report as JSON.
 *
 * # Safety
 * `ledger` must be a live handle; `out` must be writable.
 */
enum SqStatus sq_ledger_status(const struct SqLedger *ledger, char **out);

/**
 * Events with `seq > since`, as newline-delimited JSON (the on-disk log
 * format).
 *
 * # Safety
 * `ledger` must be a live handle; `out` must be writable.
 */
enum SqStatus sq_ledger_events_since(const struct SqLedger *ledger, uint64_t since, char **out);

/**
 * Sequence number of the last event, 0 for a fresh ledger or NULL.
 *
 * # Safety
 * `ledger` must be a live handle or NULL.
 */
uint64_t sq_ledger_last_seq(const struct SqLedger *ledger);

#endif  /* SITEQUOTA_H */
