#ifndef TBH_H
#define TBH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbhStatus {
  TBH_STATUS_OK = 0,
  TBH_STATUS_NULL_POINTER = 1,
  TBH_STATUS_INVALID_ARGUMENT = 2,
  TBH_STATUS_OVERFLOW = 3,
  TBH_STATUS_OUT_OF_RANGE = 4,
  TBH_STATUS_DIMENSION_TOO_LARGE = 5,
  TBH_STATUS_NUMERICAL = 6,
  TBH_STATUS_BUFFER_TOO_SMALL = 7,
  TBH_STATUS_PANIC = 8,
} TbhStatus;

/**
 * Fock basis of `N` bosons on `M` sites.
 */
typedef struct TbhBasis TbhBasis;

/**
 * Eigenvalues, optionally eigenvectors, of one Hamiltonian.
 */
typedef struct TbhSpectrum TbhSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *tbh_last_error_message(void);

/**
 * Number of Fock states of `n_bosons` on `n_sites`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum TbhStatus tbh_dimension(size_t n_bosons, size_t n_sites, size_t *out);

/**
 * Builds the basis. Release with [`tbh_basis_free`].
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum TbhStatus tbh_basis_new(size_t n_bosons, size_t n_sites, struct TbhBasis **out);

/**
 * # Safety
 * `basis` must come from [`tbh_basis_new`] and not be used afterwards.
 */
void tbh_basis_free(struct TbhBasis *basis);

/**
 * # Safety
 * `basis` must be a live handle and `out` valid for writes.
 */
enum TbhStatus tbh_basis_dim(const struct TbhBasis *basis, size_t *out);

/**
 * Index of the occupation vector `occupations[0..n_sites]`.
 *
 * # Safety
 * `basis` must be a live handle, `occupations` must point to `len` values
 * and `out` must be valid for writes.
 */
enum TbhStatus tbh_basis_rank(const struct TbhBasis *basis,
                              const uint32_t *occupations,
                              size_t len,
                              size_t *out);

/**
 * Writes the occupations of state `index` into `occupations[0..len]`;
 * `len` must be at least the number of sites.
 *
 * # Safety
 * `basis` must be a live handle and `occupations` valid for `len` writes.
 */
enum TbhStatus tbh_basis_unrank(const struct TbhBasis *basis,
                                size_t index,
                                uint32_t *occupations,
                                size_t len);

/**
 * Diagonalizes the Hamiltonian with hopping `j`, interaction `u` and tilt
 * `d`. Eigenvectors are kept when `with_vectors` is true, which survival
 * probabilities need. Release with [`tbh_spectrum_free`].
 *
 * # Safety
 * `basis` must be a live handle and `out` valid for writes.
 */
enum TbhStatus tbh_spectrum_compute(const struct TbhBasis *basis,
                                    double j,
                                    double u,
                                    double d,
                                    bool with_vectors,
                                    struct TbhSpectrum **out);

/**
 * # Safety
 * `spectrum` must come from [`tbh_spectrum_compute`] and not be used
 * afterwards.
 */
void tbh_spectrum_free(struct TbhSpectrum *spectrum);

/**
 * # Safety
 * `spectrum` must be a live handle and `out` valid for writes.
 */
enum TbhStatus tbh_spectrum_len(const struct TbhSpectrum *spectrum, size_t *out);

/**
 * Copies the ascending eigenvalues into `buffer[0..len]`.
 *
 * # Safety
 * `spectrum` must be a live handle and `buffer` valid for `len` writes.
 */
enum TbhStatus tbh_spectrum_eigenvalues(const struct TbhSpectrum *spectrum,
                                        double *buffer,
                                        size_t len);

/**
 * Mean gap ratio of the spectrum after dropping `edge_discard` of the
 * levels at each edge.
 *
 * # Safety
 * `spectrum` must be a live handle and `out` valid for writes.
 */
enum TbhStatus tbh_spectrum_gap_ratio(const struct TbhSpectrum *spectrum,
                                      double edge_discard,
                                      double *out);

/**
 * Mean gap ratio of an arbitrary ascending level sequence.
 *
 * # Safety
 * `levels` must point to `len` values and `out` be valid for writes.
 */
enum TbhStatus tbh_gap_ratio(const double *levels, size_t len, double edge_discard, double *out);

/**
 * Page value of the single-site entanglement entropy.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum TbhStatus tbh_page_value(size_t n_bosons, size_t n_sites, double *out);

/**
 * Survival probability of the Fock state `occupations[0..len]` at the
 * strictly increasing `times[0..n_times]`, written to `out[0..n_times]`.
 * Needs a spectrum computed with eigenvectors.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum TbhStatus tbh_survival_probability(const struct TbhSpectrum *spectrum,
                                        const uint32_t *occupations,
                                        size_t len,
                                        const double *times,
                                        size_t n_times,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TBH_H */
