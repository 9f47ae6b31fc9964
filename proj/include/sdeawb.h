/* sdeawb — illumination estimation for auto white balance.
 *
 * Plain C interface over the C++ core. All functions return a status code;
 * on failure sdeawb_last_error() describes the most recent error on the
 * calling thread. Strings are UTF-8, paths are filesystem paths.
 */
#ifndef SDEAWB_H
#define SDEAWB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SDEAWB_API __declspec(dllexport)
#else
#define SDEAWB_API __attribute__((visibility("default")))
#endif

typedef enum sdeawb_status {
  SDEAWB_OK = 0,
  SDEAWB_ERR_CONFIG = 1,  /* bad arguments, config or CLI usage */
  SDEAWB_ERR_NUMERIC = 2, /* non-finite loss/gradients, failed checks */
  SDEAWB_ERR_DATA = 3     /* unreadable/malformed files, missing records */
} sdeawb_status;

/* Description of the last error on this thread; empty string if none. */
SDEAWB_API const char* sdeawb_last_error(void);

/* --- coarse pipeline commands (mirror the CLI subcommands) --------------- */

/* Expands the training set: builds the ground-truth chroma histogram from
 * the configured trainset1, filters trainset2 candidates through it and
 * writes a merged manifest under out_dir. Counts are optional outputs. */
SDEAWB_API sdeawb_status sdeawb_prepare(const char* config_path, const char* out_dir,
                                        int force, int* accepted, int* candidates);

/* Trains the configured model and writes checkpoints plus a training log.
 * seed_override >= 0 replaces the configured seed. */
SDEAWB_API sdeawb_status sdeawb_train(const char* config_path, long long seed_override,
                                      int force);

/* Runs inference over a manifest directory and writes a predictions CSV. */
SDEAWB_API sdeawb_status sdeawb_predict(const char* checkpoint_path, const char* manifest_dir,
                                        const char* out_csv, int force);

/* Scores predictions against ground truth. track is "general", "indoor" or
 * "two_illuminant". Writes a metric CSV when out_csv is non-NULL/non-empty. */
SDEAWB_API sdeawb_status sdeawb_eval(const char* predictions_csv, const char* gt_csv,
                                     const char* track, const char* out_csv);

/* Baseline predictions: method is "grayworld" or "const". trainset_dir is
 * required for "const" (mean of its ground truths), ignored otherwise. */
SDEAWB_API sdeawb_status sdeawb_baseline(const char* manifest_dir, const char* method,
                                         const char* trainset_dir, const char* track,
                                         const char* out_csv, int force);

/* Runs the gradient-check suite. *passed is set to 1 iff every component
 * meets the tolerance. When report/report_cap are given, the per-component
 * report text is copied (NUL-terminated, truncated to fit). Returns
 * SDEAWB_ERR_NUMERIC when the suite fails. */
SDEAWB_API sdeawb_status sdeawb_gradcheck(int* passed, char* report, size_t report_cap);

/* --- model handle -------------------------------------------------------- */

typedef struct sdeawb_model sdeawb_model;

/* Loads a checkpoint into an inference-ready model. */
SDEAWB_API sdeawb_status sdeawb_model_load(const char* checkpoint_path, sdeawb_model** out);

SDEAWB_API void sdeawb_model_free(sdeawb_model* model);

/* Model kind string: "A", "B", "C", "A2" or "C2". Valid until free. */
SDEAWB_API const char* sdeawb_model_kind(const sdeawb_model* model);

/* 1 when the model predicts two illuminants, else 0. */
SDEAWB_API int sdeawb_model_is_two_illuminant(const sdeawb_model* model);

/* Estimates the illuminant(s) of an interleaved-RGB float image in [0,1],
 * row-major, size width*height*3. exif may be NULL for kind "B"; other kinds
 * require it as [f_number, exposure_seconds, iso, orientation(0..3)].
 * illuminant receives a unit 3-vector; illuminant2 (may be NULL for
 * single-illuminant models) receives the second estimate. */
SDEAWB_API sdeawb_status sdeawb_model_predict(sdeawb_model* model, const float* rgb,
                                              int width, int height, const double* exif,
                                              double illuminant[3], double illuminant2[3]);

/* --- metric helpers ------------------------------------------------------ */

/* Recovery angular error between two RGB vectors, degrees. */
SDEAWB_API sdeawb_status sdeawb_angular_error(const double a[3], const double b[3],
                                              double* degrees);

/* Reproduction angular error of an estimate against ground truth, degrees. */
SDEAWB_API sdeawb_status sdeawb_reproduction_error(const double estimate[3],
                                                   const double gt[3], double* degrees);

#ifdef __cplusplus
}
#endif

#endif /* SDEAWB_H */
