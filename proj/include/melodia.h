/*
 * melodia — attention-guided spectrogram editing engine, C API.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return MELODIA_OK on success; on failure they return an error
 * code and leave a human-readable message in melodia_last_error() (thread
 * local, valid until the next API call on the same thread).
 */
#ifndef MELODIA_H
#define MELODIA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MELODIA_API __declspec(dllexport)
#else
#define MELODIA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum melodia_status {
    MELODIA_OK = 0,
    MELODIA_ERR_INVALID_ARGUMENT = 1,
    MELODIA_ERR_OUT_OF_RANGE = 2,
    MELODIA_ERR_NOT_FOUND = 3,
    MELODIA_ERR_IO = 4,
    MELODIA_ERR_FORMAT = 5,
    MELODIA_ERR_MISMATCH = 6,
    MELODIA_ERR_NUMERIC = 7,
    MELODIA_ERR_RUNTIME = 8
} melodia_status;

typedef struct melodia_model melodia_model;
typedef struct melodia_spectrogram melodia_spectrogram;
typedef struct melodia_repository melodia_repository;
typedef struct melodia_edit_result melodia_edit_result;

MELODIA_API const char* melodia_version(void);
MELODIA_API const char* melodia_status_name(melodia_status status);
MELODIA_API const char* melodia_last_error(void);

/* strings returned through char** outputs are freed with this */
MELODIA_API void melodia_string_free(char* text);

/* ------------------------------------------------------------------ */
/* spectrograms (MSPC container)                                       */

MELODIA_API melodia_status melodia_spectrogram_load(const char* path,
                                                    melodia_spectrogram** out);
MELODIA_API melodia_status melodia_spectrogram_save(const melodia_spectrogram* spec,
                                                    const char* path);
MELODIA_API melodia_status melodia_spectrogram_from_wav(const char* wav_path,
                                                        melodia_spectrogram** out);
MELODIA_API melodia_status melodia_spectrogram_shape(const melodia_spectrogram* spec,
                                                     uint32_t* frames, uint32_t* bins);
/* row-major frames x bins copy; capacity in floats */
MELODIA_API melodia_status melodia_spectrogram_copy_data(const melodia_spectrogram* spec,
                                                         float* dst, size_t capacity);
MELODIA_API melodia_status melodia_spectrogram_render_pgm(const melodia_spectrogram* spec,
                                                          const char* path);
MELODIA_API void melodia_spectrogram_free(melodia_spectrogram* spec);

/* ------------------------------------------------------------------ */
/* model checkpoints (MLDM container)                                  */

MELODIA_API melodia_status melodia_model_load(const char* path, melodia_model** out);
MELODIA_API melodia_status melodia_model_info_json(const melodia_model* model, char** json_out);
MELODIA_API void melodia_model_free(melodia_model* model);

/* ------------------------------------------------------------------ */
/* generation and editing                                              */

typedef struct melodia_edit_options {
    uint32_t t_start;      /* inversion depth in [0, T]; rounded down to the grid */
    const int32_t* layers; /* 1-based injection layers; NULL or count 0 disables */
    size_t layer_count;
    double cfg_strength;
    uint32_t steps;        /* inference steps */
    uint64_t seed;
} melodia_edit_options;

/* fills in the defaults: t_start 700, layers 8-14, cfg 5.5, 50 steps */
MELODIA_API melodia_status melodia_edit_options_init(melodia_edit_options* options);

MELODIA_API melodia_status melodia_generate(const melodia_model* model, const char* prompt,
                                            double cfg_strength, uint32_t steps, uint64_t seed,
                                            melodia_spectrogram** out);

MELODIA_API melodia_status melodia_edit(const melodia_model* model,
                                        const melodia_spectrogram* source,
                                        const char* target_prompt,
                                        const melodia_edit_options* options,
                                        melodia_edit_result** out);

/* which: 0 = edited, 1 = no-injection null-prompt reconstruction */
MELODIA_API melodia_status melodia_edit_result_spectrogram(const melodia_edit_result* result,
                                                           int which,
                                                           melodia_spectrogram** out);
MELODIA_API melodia_status melodia_edit_result_json(const melodia_edit_result* result,
                                                    char** json_out);
MELODIA_API void melodia_edit_result_free(melodia_edit_result* result);

/* ------------------------------------------------------------------ */
/* attention repositories (MREP container)                             */

/* partial inversion of `source`, recording self-attention queries/keys */
MELODIA_API melodia_status melodia_capture(const melodia_model* model,
                                           const melodia_spectrogram* source,
                                           const melodia_edit_options* options,
                                           melodia_repository** out);
MELODIA_API melodia_status melodia_repository_save(const melodia_repository* repo,
                                                   const char* path);
/* model may be NULL to skip the hash check */
MELODIA_API melodia_status melodia_repository_load(const char* path,
                                                   const melodia_model* model,
                                                   melodia_repository** out);
MELODIA_API melodia_status melodia_repository_footprint(const melodia_repository* repo,
                                                        uint64_t* bytes);
MELODIA_API melodia_status melodia_repository_record_count(const melodia_repository* repo,
                                                           uint64_t* count);
MELODIA_API void melodia_repository_free(melodia_repository* repo);

/* ------------------------------------------------------------------ */
/* batch runs: options in, report out, both JSON                       */

MELODIA_API melodia_status melodia_run_synth(const char* options_json, char** report_json);
MELODIA_API melodia_status melodia_run_train(const char* options_json, char** report_json);
MELODIA_API melodia_status melodia_run_probe(const char* options_json, char** report_json);
MELODIA_API melodia_status melodia_run_eval(const char* options_json, char** report_json);
MELODIA_API melodia_status melodia_run_sweep(const char* options_json, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* MELODIA_H */
