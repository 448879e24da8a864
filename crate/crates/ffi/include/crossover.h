#ifndef CROSSOVER_H
#define CROSSOVER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CxStatus {
  CX_STATUS_OK = 0,
  CX_STATUS_NULL_POINTER = 1,
  CX_STATUS_INVALID = 2,
  CX_STATUS_BUDGET = 3,
  CX_STATUS_SINGULAR = 4,
  CX_STATUS_INFEASIBLE = 5,
  CX_STATUS_IO = 6,
  CX_STATUS_PANIC = 7,
} CxStatus;

typedef enum CxRegime {
  CX_REGIME_CLOSED_FORM_I = 0,
  CX_REGIME_CLOSED_FORM_II = 1,
  CX_REGIME_CLOSED_FORM_II_BOUNDARY = 2,
  CX_REGIME_CLOSED_FORM_III = 3,
  CX_REGIME_NUMERIC = 4,
} CxRegime;

typedef enum CxCriterion {
  CX_CRITERION_A = 0,
  CX_CRITERION_D = 1,
  CX_CRITERION_E = 2,
  CX_CRITERION_T = 3,
} CxCriterion;

typedef enum CxMethod {
  CX_METHOD_EXACT = 0,
  CX_METHOD_MONTE_CARLO = 1,
} CxMethod;

/*
 Minimax certificate handle.
 */
typedef struct CxCertificate CxCertificate;

/*
 Exact design handle.
 */
typedef struct CxDesign CxDesign;

/*
 Dropout mechanism handle.
 */
typedef struct CxMechanism CxMechanism;

typedef struct CxQCoefficients {
  double q11;
  double q12;
  double q22;
} CxQCoefficients;

typedef struct CxCertificateSummary {
  double x_star;
  double y_star;
  uintptr_t t;
  uintptr_t support_len;
  enum CxRegime regime;
} CxCertificateSummary;

typedef struct CxReport {
  double phi0;
  double phi0_stderr;
  double v_phi;
  double sd_phi;
  double phi1;
  double gap;
  double e1_tilde;
  double ell;
  uint64_t replications;
} CxReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Error message if the most recent call on this thread failed, else NULL.
 The pointer stays valid until the next library call on the same thread.
 */
const char *cx_last_error_message(void);

/*
 # Safety
 `s` must be NULL or a string returned by this library, freed once.
 */
void cx_string_free(char *s);

/*
 Mechanism with `p` periods, `n` subjects and dropout probabilities
 `a[0..len]`.

 # Safety
 `a` must point to `len` doubles; `out` must be writable.
 */
enum CxStatus cx_mechanism_new(uintptr_t p,
                               uintptr_t n,
                               const double *a,
                               uintptr_t len,
                               struct CxMechanism **out);

/*
 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CxStatus cx_mechanism_from_json(const char *json, struct CxMechanism **out);

/*
 Dropout coefficient alpha_k for 1 <= k <= p.

 # Safety
 `mech` must be a live handle; `out` must be writable.
 */
enum CxStatus cx_mechanism_alpha(const struct CxMechanism *mech, uintptr_t k, double *out);

/*
 # Safety
 `mech` must be NULL or a handle from this library, freed once.
 */
void cx_mechanism_free(struct CxMechanism *mech);

/*
 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CxStatus cx_design_from_json(const char *json, struct CxDesign **out);

/*
 Built-in design `name` and the mechanism it was built for.

 # Safety
 `name` must be a NUL-terminated string; both outputs must be writable.
 */
enum CxStatus cx_design_fixture(const char *name,
                                struct CxDesign **design_out,
                                struct CxMechanism **mech_out);

/*
 Design serialized as JSON; free with `cx_string_free`.

 # Safety
 `design` must be a live handle; `out` must be writable.
 */
enum CxStatus cx_design_to_json(const struct CxDesign *design, char **out);

/*
 Number of subjects, or 0 for NULL.

 # Safety
 `design` must be NULL or a live handle.
 */
uintptr_t cx_design_subjects(const struct CxDesign *design);

/*
 # Safety
 `design` must be NULL or a handle from this library, freed once.
 */
void cx_design_free(struct CxDesign *design);

/*
 q-coefficients of `sequence` (e.g. "1234") with `t` treatments.

 # Safety
 `mech` must be a live handle, `sequence` NUL-terminated, `out` writable.
 */
enum CxStatus cx_q_coeffs(const struct CxMechanism *mech,
                          const char *sequence,
                          uintptr_t t,
                          struct CxQCoefficients *out);

/*
 Minimax certificate for `t` treatments.

 # Safety
 `mech` must be a live handle; `out` must be writable.
 */
enum CxStatus cx_solve_minimax(const struct CxMechanism *mech,
                               uintptr_t t,
                               struct CxCertificate **out);

/*
 # Safety
 `cert` must be a live handle; `out` must be writable.
 */
enum CxStatus cx_certificate_summary(const struct CxCertificate *cert,
                                     struct CxCertificateSummary *out);

/*
 Certificate serialized as JSON; free with `cx_string_free`.

 # Safety
 `cert` must be a live handle; `out` must be writable.
 */
enum CxStatus cx_certificate_to_json(const struct CxCertificate *cert, char **out);

/*
 # Safety
 `cert` must be NULL or a handle from this library, freed once.
 */
void cx_certificate_free(struct CxCertificate *cert);

/*
 Evaluation report for one criterion. `exact_budget` of 0 selects the
 default budget.

 # Safety
 All handles must be live; `out` must be writable.
 */
enum CxStatus cx_evaluate(const struct CxDesign *design,
                          const struct CxMechanism *mech,
                          const struct CxCertificate *cert,
                          enum CxCriterion criterion,
                          enum CxMethod method,
                          uintptr_t reps,
                          uint64_t seed,
                          uint64_t exact_budget,
                          struct CxReport *out);

/*
 Searches for an exact design with `n` subjects; the mechanism must have
 `n` subjects. Writes the design and its residual.

 # Safety
 Handles must be live; both outputs must be writable.
 */
enum CxStatus cx_exact_search(uintptr_t n,
                              const struct CxCertificate *cert,
                              const struct CxMechanism *mech,
                              uint64_t seed,
                              uintptr_t restarts,
                              uintptr_t iters,
                              struct CxDesign **design_out,
                              double *residual_out);

/*
 Optimality-system residual of an exact design against a certificate.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CxStatus cx_design_residual(const struct CxDesign *design,
                                 const struct CxCertificate *cert,
                                 const struct CxMechanism *mech,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROSSOVER_H */
