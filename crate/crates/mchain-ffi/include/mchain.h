#ifndef MCHAIN_H
#define MCHAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum MchainStatus {
  MCHAIN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MCHAIN_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MCHAIN_STATUS_INVALID_UTF8 = 2,
  /**
   * The instance JSON did not parse.
   */
  MCHAIN_STATUS_INVALID_JSON = 3,
  /**
   * The instance parsed but violates a model invariant.
   */
  MCHAIN_STATUS_INVALID_INSTANCE = 4,
  /**
   * An index argument was out of range.
   */
  MCHAIN_STATUS_OUT_OF_RANGE = 5,
} MchainStatus;

/**
 * Opaque problem-instance handle. Create with
 * `mchain_instance_from_json`, destroy with `mchain_instance_free`.
 */
typedef struct MchainInstance MchainInstance;

/**
 * Opaque auction-outcome handle. Create with `mchain_run`, destroy with
 * `mchain_outcome_free`.
 */
typedef struct MchainOutcome MchainOutcome;

/**
 * One executed trade.
 */
typedef struct MchainTrade {
  uint64_t buyer_id;
  uint64_t seller_id;
  uint32_t period;
  double buyer_payment;
  double seller_payment;
} MchainTrade;

/**
 * Result of a single McAfee double auction.
 */
typedef struct MchainMcafeeResult {
  bool traded;
  /**
   * Number of (buyer, seller) pairs that trade.
   */
  uintptr_t num_trades;
  /**
   * Uniform prices; NaN when `traded` is false.
   */
  double buyer_price;
  double seller_price;
} MchainMcafeeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns a static, null-terminated description of a status code.
 */
const char *mchain_status_message(enum MchainStatus status);

/**
 * Parses a problem instance from JSON and returns an owned handle in
 * `*out`.
 *
 * # Safety
 *
 * `json` must point to a null-terminated string and `out` to writable
 * storage for one pointer. On success the caller owns the handle and must
 * release it with `mchain_instance_free`.
 */
enum MchainStatus mchain_instance_from_json(const char *json, struct MchainInstance **out);

/**
 * Releases an instance handle. A null handle is a no-op.
 *
 * # Safety
 *
 * `instance` must be a handle returned by `mchain_instance_from_json`
 * that has not been freed already.
 */
void mchain_instance_free(struct MchainInstance *instance);

/**
 * Writes the number of users in the instance to `*out`.
 *
 * # Safety
 *
 * `instance` must be a live handle and `out` writable.
 */
enum MchainStatus mchain_instance_user_count(const struct MchainInstance *instance, uintptr_t *out);

/**
 * Runs the dynamic mechanism on truthful reports and returns an owned
 * outcome handle in `*out`.
 *
 * # Safety
 *
 * `instance` must be a live handle and `out` writable storage for one
 * pointer. On success the caller owns the outcome and must release it
 * with `mchain_outcome_free`.
 */
enum MchainStatus mchain_run(const struct MchainInstance *instance, struct MchainOutcome **out);

/**
 * Releases an outcome handle. A null handle is a no-op.
 *
 * # Safety
 *
 * `outcome` must be a handle returned by `mchain_run` that has not been
 * freed already.
 */
void mchain_outcome_free(struct MchainOutcome *outcome);

/**
 * Writes the total gains from trade to `*out`.
 *
 * # Safety
 *
 * `outcome` must be a live handle and `out` writable.
 */
enum MchainStatus mchain_outcome_total_value(const struct MchainOutcome *outcome, double *out);

/**
 * Writes the number of executed trades to `*out`.
 *
 * # Safety
 *
 * `outcome` must be a live handle and `out` writable.
 */
enum MchainStatus mchain_outcome_trade_count(const struct MchainOutcome *outcome, uintptr_t *out);

/**
 * Copies trade number `index` (0-based) into `*out`.
 *
 * # Safety
 *
 * `outcome` must be a live handle and `out` writable storage for one
 * `MchainTrade`.
 */
enum MchainStatus mchain_outcome_trade(const struct MchainOutcome *outcome,
                                       uintptr_t index,
                                       struct MchainTrade *out);

/**
 * Writes the offline optimal total gains from trade to `*out`.
 *
 * # Safety
 *
 * `instance` must be a live handle and `out` writable.
 */
enum MchainStatus mchain_offline_optimal(const struct MchainInstance *instance, double *out);

/**
 * Runs one McAfee double auction over `num_bids` bids and `num_asks`
 * asks and writes the summary to `*out`.
 *
 * # Safety
 *
 * `bids` and `asks` must point to arrays of at least `num_bids` and
 * `num_asks` doubles (null is allowed only with a zero length), and
 * `out` must be writable storage for one `MchainMcafeeResult`.
 */
enum MchainStatus mchain_mcafee(const double *bids,
                                uintptr_t num_bids,
                                const double *asks,
                                uintptr_t num_asks,
                                struct MchainMcafeeResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCHAIN_H */
