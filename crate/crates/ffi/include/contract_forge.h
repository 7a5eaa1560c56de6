#ifndef CONTRACT_FORGE_H
#define CONTRACT_FORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfMode {
  CF_MODE_ROBUST = 0,
  CF_MODE_FULL_ACCESS = 1,
} CfMode;

/**
 * Call outcome. Codes 2 to 4 match the CLI exit codes.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, index out of range.
   */
  CF_STATUS_INVALID_ARGUMENT = 1,
  CF_STATUS_VALIDATION = 2,
  CF_STATUS_NOT_IMPLEMENTABLE = 3,
  CF_STATUS_NUMERICAL = 4,
  CF_STATUS_PANIC = 5,
} CfStatus;

/**
 * A finite menu, optionally tied to the target it was built for.
 */
typedef struct CfContract CfContract;

/**
 * A validated scenario with its response curve.
 */
typedef struct CfSetting CfSetting;

/**
 * A synthesized transfer schedule.
 */
typedef struct CfSynthesis CfSynthesis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *cf_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *cf_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void cf_string_free(char *s);

/**
 * Builds a setting from a builtin scenario name or a config file path.
 * `grid = 0` keeps the configured action grid.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string; `out_setting` a valid slot.
 */
enum CfStatus cf_setting_new(const char *scenario, size_t grid, struct CfSetting **out_setting);

/**
 * Builds a setting from TOML config text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out_setting` a valid slot.
 */
enum CfStatus cf_setting_from_toml(const char *toml, struct CfSetting **out_setting);

/**
 * # Safety
 * `s` must come from `cf_setting_new` and not be freed twice.
 */
void cf_setting_free(struct CfSetting *s);

/**
 * Outside-option action.
 *
 * # Safety
 * `s` must be a live setting handle.
 */
enum CfStatus cf_setting_a0(const struct CfSetting *s, double *out_a0);

/**
 * Outsider best reply `r(a)`.
 *
 * # Safety
 * `s` must be a live setting handle.
 */
enum CfStatus cf_setting_reply(const struct CfSetting *s, double a, double *out_r);

/**
 * 1 when every model assumption passed, 0 otherwise.
 *
 * # Safety
 * `s` must be a live setting handle.
 */
enum CfStatus cf_setting_assumptions_passed(const struct CfSetting *s, int32_t *out_passed);

/**
 * Robust (or full-access) schedule for the target that plays `a1` with
 * probability `1 - weight2` and `a2` with `weight2`. Pass `weight2 = 0`
 * for a pure target.
 *
 * # Safety
 * `s` must be a live setting handle; `out_synthesis` a valid slot.
 */
enum CfStatus cf_synthesize(const struct CfSetting *s,
                            double a1,
                            double a2,
                            double weight2,
                            enum CfMode mode,
                            struct CfSynthesis **out_synthesis);

/**
 * # Safety
 * `r` must come from `cf_synthesize` and not be freed twice.
 */
void cf_synthesis_free(struct CfSynthesis *r);

/**
 * Schedule value `t*(a)`.
 *
 * # Safety
 * `r` must be a live synthesis handle.
 */
enum CfStatus cf_synthesis_transfer(const struct CfSynthesis *r, double a, double *out_t);

/**
 * Value bound `U_0 + T_bar`.
 *
 * # Safety
 * `r` must be a live synthesis handle.
 */
enum CfStatus cf_synthesis_bound(const struct CfSynthesis *r, double *out_bound);

/**
 * Full synthesis report as JSON; release with `cf_string_free`.
 *
 * # Safety
 * `r` must be a live synthesis handle.
 */
enum CfStatus cf_synthesis_report_json(const struct CfSynthesis *r, char **out_json);

/**
 * Finite menu `M_n` sampled from the schedule with `plans` plans.
 *
 * # Safety
 * `r` must be a live synthesis handle; `out_contract` a valid slot.
 */
enum CfStatus cf_synthesis_menu(const struct CfSynthesis *r,
                                uint32_t n,
                                double eps,
                                size_t plans,
                                struct CfContract **out_contract);

/**
 * Partial-implementation menu for a pure target.
 *
 * # Safety
 * `s` must be a live setting handle; `out_contract` a valid slot.
 */
enum CfStatus cf_partial_menu(const struct CfSetting *s,
                              double a,
                              struct CfContract **out_contract);

/**
 * Menu from raw plan arrays. The null plan is added if missing.
 *
 * # Safety
 * `actions` and `transfers` must point to `len` readable doubles.
 */
enum CfStatus cf_contract_from_plans(const struct CfSetting *s,
                                     const double *actions,
                                     const double *transfers,
                                     size_t len,
                                     struct CfContract **out_contract);

/**
 * # Safety
 * `c` must come from this library and not be freed twice.
 */
void cf_contract_free(struct CfContract *c);

/**
 * Number of plans.
 *
 * # Safety
 * `c` must be a live contract handle.
 */
enum CfStatus cf_contract_len(const struct CfContract *c, size_t *out_len);

/**
 * Plan `i` in ascending action order.
 *
 * # Safety
 * `c` must be a live contract handle.
 */
enum CfStatus cf_contract_plan(const struct CfContract *c,
                               size_t i,
                               double *out_action,
                               double *out_transfer);

/**
 * Number of equilibria found with supports up to `support_cap`.
 *
 * # Safety
 * `s` and `c` must be live handles.
 */
enum CfStatus cf_contract_count_equilibria(const struct CfSetting *s,
                                           const struct CfContract *c,
                                           size_t support_cap,
                                           size_t *out_count);

/**
 * Whether the menu uniquely implements the target it was built for
 * (1 yes, 0 no). Menus from raw plans have no target.
 *
 * # Safety
 * `s` and `c` must be live handles.
 */
enum CfStatus cf_contract_certify(const struct CfSetting *s,
                                  const struct CfContract *c,
                                  size_t support_cap,
                                  int32_t *out_unique);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTRACT_FORGE_H */
