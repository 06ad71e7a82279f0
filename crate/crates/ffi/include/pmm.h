#ifndef PMM_H
#define PMM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum PmmStatus {
  PMM_STATUS_OK = 0,
  PMM_STATUS_NULL_POINTER = 1,
  PMM_STATUS_INVALID_ARGUMENT = 2,
  PMM_STATUS_INVALID_PERMUTATION = 3,
  PMM_STATUS_INVALID_POWER = 4,
  PMM_STATUS_OUT_OF_RANGE = 5,
  PMM_STATUS_DIMENSION_MISMATCH = 6,
  PMM_STATUS_NOT_POSITIVE_DEFINITE = 7,
  PMM_STATUS_SINGULAR_CHANNEL = 8,
  PMM_STATUS_SEARCH_SPACE_TOO_LARGE = 9,
  PMM_STATUS_OVERFLOW = 10,
  PMM_STATUS_NOT_CONVERGED = 11,
  PMM_STATUS_BUFFER_TOO_SMALL = 12,
  PMM_STATUS_UNSUPPORTED = 13,
  PMM_STATUS_IO = 14,
  PMM_STATUS_PANIC = 15,
} PmmStatus;

// Rate schemes understood by [`pmm_rate`].
typedef enum PmmScheme {
  PMM_SCHEME_PMM = 0,
  PMM_SCHEME_PMM_CAPACITY = 1,
  PMM_SCHEME_SM = 2,
  PMM_SCHEME_GSM = 3,
  PMM_SCHEME_VBLAST_CAPACITY = 4,
  // PMM on the SVD-precoded link, with the best merge.
  PMM_SCHEME_PMM_CSIT = 5,
} PmmScheme;

typedef enum PmmDetector {
  PMM_DETECTOR_ML = 0,
  PMM_DETECTOR_ZF = 1,
} PmmDetector;

// Opaque channel realization.
typedef struct PmmChannel PmmChannel;

// How a frame of bits divides between symbols and the permutation.
typedef struct PmmBitSplit {
  uint32_t symbol_bits;
  uint32_t permutation_bits;
  uint64_t usable_permutations;
} PmmBitSplit;

// Detected permutation index, and the decoded frame as a bit word with
// symbol bits first, most significant bit first.
typedef struct PmmDetection {
  uint64_t permutation_index;
  uint64_t bit_word;
} PmmDetection;

// Flop counts for one configuration.
typedef struct PmmFlops {
  uint64_t ml;
  uint64_t zf;
  // Zero when the receive and transmit counts differ.
  uint64_t zf_direct;
  double ratio;
} PmmFlops;

// Symbol-error-rate sweep over an SNR grid.
//
// `power_fractions` may be null, in which case `power` selects a preset:
// 0 for the tabulated allocation, 1 for the sparser 4-antenna one.
typedef struct PmmSerConfig {
  uint32_t tx;
  uint32_t rx;
  uint32_t mod_order;
  // A [`PmmDetector`] value.
  uint32_t detector;
  uint32_t power;
  const double *power_fractions;
  double snr_start_db;
  double snr_stop_db;
  double snr_step_db;
  uint64_t bits_per_point;
  uint64_t master_seed;
} PmmSerConfig;

typedef struct PmmSerPoint {
  double snr_db;
  uint64_t symbol_errors;
  uint64_t symbols_sent;
  double ser;
  double wilson_low;
  double wilson_high;
} PmmSerPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of the calling thread into `buf` as a
// NUL-terminated string, truncating if needed. Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t pmm_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *pmm_version(void);

// # Safety
// `out` must point to a writable [`PmmBitSplit`].
enum PmmStatus pmm_split_bits(uint32_t n, uint32_t q, struct PmmBitSplit *out);

// Writes the permutation addressed by `word` into `map[0..n]`, where row
// `k` of the permutation matrix has its one in column `map[k]`.
//
// # Safety
// `map` must point to `n` writable values.
enum PmmStatus pmm_bits_to_permutation(uint64_t word, uint32_t n, uint32_t *map);

// Inverse of [`pmm_bits_to_permutation`].
//
// # Safety
// `map` must point to `n` readable values and `word` to a writable `u64`.
enum PmmStatus pmm_permutation_to_bits(const uint32_t *map, uint32_t n, uint64_t *word);

// Builds a channel from row-major real and imaginary parts of an `m × n`
// matrix.
//
// # Safety
// `re` and `im` must point to `m·n` readable values and `out` to a
// writable handle pointer.
enum PmmStatus pmm_channel_new(uint32_t m,
                               uint32_t n,
                               const double *re,
                               const double *im,
                               struct PmmChannel **out);

// Draws a Rayleigh channel from the stream addressed by
// `(seed, point, trial)`, the same stream the simulator uses.
//
// # Safety
// `out` must point to a writable handle pointer.
enum PmmStatus pmm_channel_draw(uint32_t m,
                                uint32_t n,
                                uint64_t seed,
                                uint64_t point,
                                uint64_t trial,
                                struct PmmChannel **out);

// Copies the channel matrix out in row-major order.
//
// # Safety
// `ch` must be a live handle; `re` and `im` must point to `rx·tx` writable
// values.
enum PmmStatus pmm_channel_matrix(const struct PmmChannel *ch, double *re, double *im, size_t len);

// Writes the receive and transmit antenna counts.
//
// # Safety
// `ch` must be a live handle; `rx` and `tx` must be writable.
enum PmmStatus pmm_channel_dims(const struct PmmChannel *ch, uint32_t *rx, uint32_t *tx);

// Releases a handle. Null is ignored.
//
// # Safety
// `ch` must be null or a live handle, and must not be used afterwards.
void pmm_channel_free(struct PmmChannel *ch);

// Rate in bits per channel use, with equiprobable components. `scheme` is
// a [`PmmScheme`] value.
//
// `gamma` holds one power per transmit antenna; its sum is the total power
// used by the baselines. `gsm_active` of zero means half the antennas.
//
// # Safety
// `ch` must be a live handle, `gamma` must point to `n` readable values and
// `out` must be writable.
enum PmmStatus pmm_rate(const struct PmmChannel *ch,
                        uint32_t scheme,
                        const double *gamma,
                        uint32_t n,
                        uint32_t gsm_active,
                        double *out);

// Detects one received vector with a [`PmmDetector`]. `symbols` receives `n` constellation
// indices in natural (not Gray) order.
//
// # Safety
// `ch` must be a live handle; `gamma` must point to `n` values; `y_re` and
// `y_im` to `rx` values; `symbols` to `n` writable values; `out` writable.
enum PmmStatus pmm_detect(const struct PmmChannel *ch,
                          uint32_t detector,
                          const double *gamma,
                          uint32_t n,
                          uint32_t mod_order,
                          const double *y_re,
                          const double *y_im,
                          uint32_t *symbols,
                          struct PmmDetection *out);

// Flop counts for ML and ZF detection. Fails with `Overflow` when a count
// exceeds 64 bits.
//
// # Safety
// `out` must point to a writable [`PmmFlops`].
enum PmmStatus pmm_flops(uint32_t n, uint32_t m, uint32_t q, struct PmmFlops *out);

// Runs a symbol-error-rate sweep. `written` receives the number of SNR
// points; if `capacity` is smaller, nothing is written to `points` and the
// call fails with `BufferTooSmall`.
//
// # Safety
// `config` must be readable (and its `power_fractions` null or `tx`
// values long); `points` must point to `capacity` writable entries and
// `written` must be writable.
enum PmmStatus pmm_run_ser(const struct PmmSerConfig *config,
                           struct PmmSerPoint *points,
                           size_t capacity,
                           size_t *written);

// Optimizes the power split on the SVD-precoded link of a square channel,
// starting from the tabulated allocation at total power `rho`.
//
// # Safety
// `ch` must be a live handle; `gamma` must point to `n` writable values;
// `rate` and `kkt_residual` must be writable.
enum PmmStatus pmm_optimize_power(const struct PmmChannel *ch,
                                  double rho,
                                  double *gamma,
                                  uint32_t n,
                                  double *rate,
                                  double *kkt_residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMM_H */
