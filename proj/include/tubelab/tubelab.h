/* C interface to the tubelab core. All handles are opaque; every call that can
 * fail returns a tl_status and leaves a message for tl_last_error(). */
#ifndef TUBELAB_H
#define TUBELAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TL_API __declspec(dllexport)
#else
#define TL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tl_status {
  TL_OK = 0,
  TL_ERR_INVALID_ARGUMENT = 1,
  TL_ERR_CONFIG = 2,
  TL_ERR_IO = 3,
  TL_ERR_TUBE_TOO_LARGE = 4,
  TL_ERR_INFEASIBLE = 5,
  TL_ERR_NUMERIC = 6, /* instability, non-convergence */
  TL_ERR_TRAINING = 7,
  TL_ERR_PARTIAL = 8, /* command finished but some cells failed */
  TL_ERR_INTERNAL = 99
} tl_status;

typedef enum tl_log_level { TL_LOG_DEBUG = 0, TL_LOG_INFO = 1, TL_LOG_WARN = 2, TL_LOG_ERROR = 3 } tl_log_level;

typedef void (*tl_log_fn)(tl_log_level level, const char* message, void* user);

typedef struct tl_session tl_session;
typedef struct tl_synthesis tl_synthesis;
typedef struct tl_policy tl_policy;

TL_API const char* tl_version(void);

/* Message of the last failed call on this thread; empty string if none. */
TL_API const char* tl_last_error(void);

/* Process-wide sink; NULL restores silence. */
TL_API void tl_set_log_callback(tl_log_fn fn, void* user);

/* config_path may be NULL for the built-in defaults. */
TL_API tl_status tl_session_create(const char* config_path, tl_session** out);
TL_API void tl_session_destroy(tl_session* session);
TL_API tl_status tl_session_set_seed(tl_session* session, uint64_t seed);
/* Full evaluation counts (10 seeds x 10 episodes). */
TL_API tl_status tl_session_set_full_scale(tl_session* session, int enabled);
/* FNV-1a hash of the canonical config, as 16 hex digits plus NUL. */
TL_API tl_status tl_session_config_hash(const tl_session* session, char out[17]);

/* Commands. Artifacts go under out_dir, which is created if missing. */
TL_API tl_status tl_cmd_synth(tl_session* session, const char* out_dir);
TL_API tl_status tl_cmd_demo(tl_session* session, const char* out_dir);
TL_API tl_status tl_cmd_train(tl_session* session, const char* out_dir);
/* policy_path NULL or "" evaluates the expert. */
TL_API tl_status tl_cmd_eval(tl_session* session, const char* policy_path, const char* out_dir);
TL_API tl_status tl_cmd_experiment(tl_session* session, const char* out_dir);
/* policy_path NULL uses sweep.policy from the config. */
TL_API tl_status tl_cmd_noise_sweep(tl_session* session, const char* policy_path, const char* out_dir);

/* Synthesis results. */
typedef enum tl_box_id {
  TL_BOX_Z = 0,
  TL_BOX_S = 1,
  TL_BOX_S_CTRL = 2,
  TL_BOX_X_BAR = 3,
  TL_BOX_U_BAR = 4
} tl_box_id;

TL_API tl_status tl_synthesize(tl_session* session, tl_synthesis** out);
TL_API void tl_synthesis_destroy(tl_synthesis* syn);
/* Copies up to capacity entries of lo/hi; *dim receives the box dimension. */
TL_API tl_status tl_synthesis_box(const tl_synthesis* syn, tl_box_id which, double* lo, double* hi, size_t capacity,
                                  size_t* dim);
/* Row-major ancillary gain K (3 x 8). */
TL_API tl_status tl_synthesis_gain(const tl_synthesis* syn, double* k, size_t capacity, size_t* rows, size_t* cols);

/* Policies. */
TL_API tl_status tl_policy_load(const char* path, tl_policy** out);
TL_API void tl_policy_destroy(tl_policy* policy);
TL_API tl_status tl_policy_parameter_count(const tl_policy* policy, size_t* count);
/* image: image_pixels floats in [0,1] (may be NULL when the policy has no
 * image trunk); other: 6 values; ref: 48 values. action: 3 outputs, state: 8
 * outputs (may be NULL). */
TL_API tl_status tl_policy_forward(const tl_policy* policy, const float* image, size_t image_pixels,
                                   const double* other, const double* ref, double* action, double* state);

#ifdef __cplusplus
}
#endif

#endif
