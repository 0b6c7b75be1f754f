#ifndef BRIDGELAB_H
#define BRIDGELAB_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum BridgelabStatus {
  BRIDGELAB_STATUS_OK = 0,
  BRIDGELAB_STATUS_NULL_POINTER = 1,
  // Bad model name, point, time, grid or other argument.
  BRIDGELAB_STATUS_INVALID_ARGUMENT = 2,
  // Series truncation, quadrature accuracy or rejection efficiency failure.
  BRIDGELAB_STATUS_NUMERICAL = 3,
  // An output buffer is shorter than required.
  BRIDGELAB_STATUS_BUFFER_TOO_SMALL = 4,
  // A Rust panic was caught at the boundary.
  BRIDGELAB_STATUS_PANIC = 5,
} BridgelabStatus;

// Bridge sampler choice.
typedef enum BridgelabSampler {
  BRIDGELAB_SAMPLER_SDE = 0,
  BRIDGELAB_SAMPLER_EXACT = 1,
} BridgelabSampler;

// Opaque bridge handle: endpoints, horizon, grid and sampler.
typedef struct BridgelabBridge BridgelabBridge;

// Opaque model handle.
typedef struct BridgelabModel BridgelabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bridgelab_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length. An
// empty message means the last call succeeded. `buf` may be null to query
// the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t bridgelab_last_error(char *buf, size_t len);

// Creates a model from `euclidean:<m>`, `s1`, `s2` or `h3`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable pointer.
enum BridgelabStatus bridgelab_model_new(const char *name, struct BridgelabModel **out);

// # Safety
// `model` must be null or a handle from [`bridgelab_model_new`] not yet freed.
void bridgelab_model_free(struct BridgelabModel *model);

// Intrinsic dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t bridgelab_model_dim(const struct BridgelabModel *model);

// Number of chart coordinates per point, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t bridgelab_model_chart_len(const struct BridgelabModel *model);

// Converts lenient input (an angle on the circle, colatitude and longitude
// on the sphere, three spatial coordinates on H3, Cartesian coordinates on
// Euclidean space) into chart coordinates.
//
// # Safety
// `input` must hold `n` doubles and `out` `out_len` writable doubles.
enum BridgelabStatus bridgelab_model_point(const struct BridgelabModel *model,
                                           const double *input,
                                           size_t n,
                                           double *out,
                                           size_t out_len);

// Geodesic distance between two points.
//
// # Safety
// `x` and `y` must hold `chart_len` doubles; `out` must be writable.
enum BridgelabStatus bridgelab_distance(const struct BridgelabModel *model,
                                        const double *x,
                                        const double *y,
                                        double *out);

// Heat kernel of `(1/2)Δ` at `(t, x, y)`. Writes the value and its log;
// when `grad` is non-null, also the gradient of `log p(t, ·, y)` at `x` in
// the model's canonical frame (`dim` doubles).
//
// # Safety
// Pointers must be null where allowed or valid for the sizes above.
enum BridgelabStatus bridgelab_kernel(const struct BridgelabModel *model,
                                      double t,
                                      const double *x,
                                      const double *y,
                                      double *value,
                                      double *log_value,
                                      double *grad,
                                      size_t grad_len);

// Bridge from `x` to `y` over `[0, horizon]` on a uniform grid of `steps`
// steps. The model handle may be freed afterwards.
//
// # Safety
// `x` and `y` must hold `chart_len` doubles; `out` must be writable.
enum BridgelabStatus bridgelab_bridge_new(const struct BridgelabModel *model,
                                          const double *x,
                                          const double *y,
                                          double horizon,
                                          size_t steps,
                                          enum BridgelabSampler sampler,
                                          struct BridgelabBridge **out);

// # Safety
// `bridge` must be null or a handle from [`bridgelab_bridge_new`] not yet freed.
void bridgelab_bridge_free(struct BridgelabBridge *bridge);

// Grid points per path (`steps + 1`), or 0 for a null handle.
//
// # Safety
// `bridge` must be null or a live handle.
size_t bridgelab_bridge_len(const struct BridgelabBridge *bridge);

// Writes the grid times (`bridgelab_bridge_len` doubles).
//
// # Safety
// `out` must hold `out_len` writable doubles.
enum BridgelabStatus bridgelab_bridge_times(const struct BridgelabBridge *bridge,
                                            double *out,
                                            size_t out_len);

// Samples path number `index` of the stream family `seed` and writes its
// points row by row (`len · chart_len` doubles). The same `(seed, index)`
// always gives the same path.
//
// # Safety
// `out` must hold `out_len` writable doubles.
enum BridgelabStatus bridgelab_bridge_sample(const struct BridgelabBridge *bridge,
                                             uint64_t seed,
                                             uint64_t index,
                                             double *out,
                                             size_t out_len);

// Samples like [`bridgelab_bridge_sample`] and writes the horizontal lift of
// the path started from the canonical frame: per grid point, `dim` frame
// vectors of `chart_len` ambient components (`len · dim · chart_len`
// doubles, row-major). `points` may be null.
//
// # Safety
// `frames` must hold `frames_len` writable doubles; `points` null or
// `points_len` writable doubles.
enum BridgelabStatus bridgelab_bridge_sample_lift(const struct BridgelabBridge *bridge,
                                                  uint64_t seed,
                                                  uint64_t index,
                                                  double *points,
                                                  size_t points_len,
                                                  double *frames,
                                                  size_t frames_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRIDGELAB_H */
