/* C API of the talon forecasting library.
 *
 * All entry points return a status code: 0 success, 1 runtime error,
 * 2 usage/config error. talon_last_error() describes the most recent
 * failure on the calling thread. Handles are opaque and must be released
 * with their matching close function.
 */
#ifndef TALON_TALON_H
#define TALON_TALON_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TALON_API __declspec(dllexport)
#else
#define TALON_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum talon_status {
    TALON_OK = 0,
    TALON_ERR_RUNTIME = 1,
    TALON_ERR_USAGE = 2
};

typedef struct talon_config talon_config;
typedef struct talon_model talon_model;
typedef struct talon_series talon_series;

TALON_API const char* talon_build_id(void);
TALON_API const char* talon_last_error(void);
TALON_API void talon_set_threads(int n);

/* ---- configuration ---- */
TALON_API int talon_config_open(const char* path, talon_config** out);
TALON_API int talon_config_create(talon_config** out);
TALON_API int talon_config_set(talon_config* cfg, const char* key, const char* value);
TALON_API void talon_config_close(talon_config* cfg);

/* ---- data ---- */
TALON_API int talon_series_open_csv(const char* path, const char* date_column,
                                    talon_series** out);
TALON_API void talon_series_close(talon_series* s);
TALON_API int talon_series_dims(const talon_series* s, uint64_t* length, uint64_t* channels);

/* Synthetic corpus: writes the CSV and a regime-label sidecar next to it. */
TALON_API int talon_synth(const char* spec_path, const char* out_csv, uint64_t seed);

/* ---- training ---- */
/* Trains per config; writes ckpt/best.tlnc and loss_curve.csv under the
 * config's output directory. */
TALON_API int talon_train(const talon_config* cfg);

/* ---- models ---- */
TALON_API int talon_model_open(const char* ckpt_path, talon_model** out);
TALON_API void talon_model_close(talon_model* m);

/* Rolling forecast from a raw lookback context (length = configured L);
 * out must hold `horizon` doubles. */
TALON_API int talon_forecast(talon_model* m, const double* context, size_t context_len,
                             size_t horizon, double* out);

/* ---- evaluation protocols ---- */
/* horizons: comma-separated list ("96,192"); protocol: "one-for-all" or
 * "one-for-one". Reports land under <out_dir>/reports/. */
TALON_API int talon_eval(talon_model* m, talon_series* data, const char* horizons,
                         const char* protocol, const char* out_dir);
TALON_API int talon_zeroshot(talon_model* m, talon_series* target, const char* horizons,
                             const char* out_dir);

/* ---- diagnostics ---- */
/* what: "experts" (routing histogram + records) or "embeddings"
 * (time-text distance dump). labels_csv may be NULL. */
TALON_API int talon_analyze(talon_model* m, talon_series* data, const char* what,
                            const char* labels_csv, const char* out_dir);

/* ---- ablation harness ---- */
/* switches: comma-separated switch names; one report row per variant. */
TALON_API int talon_ablate(const talon_config* cfg, const char* switches);

#ifdef __cplusplus
}
#endif

#endif /* TALON_TALON_H */
