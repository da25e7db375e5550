#ifndef MSWAVE_MSWAVE_H
#define MSWAVE_MSWAVE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(MSWAVE_BUILDING_LIBRARY)
#define MSW_API __attribute__((visibility("default")))
#else
#define MSW_API
#endif

typedef enum msw_status {
  MSW_OK = 0,
  MSW_ERR_INVALID_ARGUMENT = 1,
  MSW_ERR_IO = 2,
  MSW_ERR_PARSE = 3,
  MSW_ERR_CONFIG = 4,
  MSW_ERR_NUMERIC = 5,
  MSW_ERR_NOT_FOUND = 6,
  MSW_ERR_STATE = 7,
  MSW_ERR_INTERNAL = 8
} msw_status;

typedef struct msw_config msw_config;
typedef struct msw_model msw_model;

/* Message of the last failed call on this thread ("" if none). */
MSW_API const char* msw_last_error(void);
MSW_API const char* msw_status_name(msw_status status);
MSW_API const char* msw_version(void);
/* 0 debug, 1 info, 2 warn, 3 error, 4 off. */
MSW_API void msw_set_log_level(int level);
MSW_API void msw_string_free(char* s);

/* Configuration */
MSW_API msw_status msw_config_default(msw_config** out);
MSW_API msw_status msw_config_toy(msw_config** out);
MSW_API msw_status msw_config_load(const char* path, msw_config** out);
MSW_API msw_status msw_config_set(msw_config* cfg, const char* key, const char* value);
MSW_API msw_status msw_config_save(const msw_config* cfg, const char* path);
/* Full key = value text; release with msw_string_free. */
MSW_API msw_status msw_config_to_string(const msw_config* cfg, char** out);
MSW_API void msw_config_free(msw_config* cfg);

/* Data preparation */
MSW_API msw_status msw_make_toy_corpus(const char* dir, const msw_config* cfg, int speakers, int utterances,
                                       uint64_t seed);
MSW_API msw_status msw_build_manifest(const char* data_root, const char* out_tsv, size_t* n_records,
                                      size_t* n_speakers, size_t* n_skipped);
MSW_API msw_status msw_preprocess(const msw_config* cfg, const char* data_root, const char* cache_dir,
                                  size_t* n_written);

/* Training */
typedef struct msw_loss {
  double decoder_l1;
  double bridge_l1;
  double vocoder_nll;
  double total;
} msw_loss;

typedef struct msw_train_options {
  const char* data_root;  /* corpus with speaker directories */
  const char* cache_dir;  /* feature cache; NULL = <out_dir>/features, filled on demand */
  const char* out_dir;    /* checkpoints and metrics.csv */
  const char* resume;     /* checkpoint to continue from, or NULL */
  long steps;             /* target global step */
  uint64_t seed;
  int log_interval;
} msw_train_options;

MSW_API msw_status msw_train(const msw_config* cfg, const msw_train_options* opts, long* final_step,
                             msw_loss* last_loss);

/* Checkpoints */
MSW_API msw_status msw_model_load(const char* checkpoint, msw_model** out);
MSW_API void msw_model_free(msw_model* model);
MSW_API msw_status msw_model_speaker_count(const msw_model* model, size_t* out);
/* Release with msw_string_free. */
MSW_API msw_status msw_model_speaker_id(const msw_model* model, size_t index, char** out);
MSW_API msw_status msw_model_zero_speaker_projectors(msw_model* model);
/* Copy of the hyperparameters stored in the checkpoint. */
MSW_API msw_status msw_model_config(const msw_model* model, msw_config** out);

/* Synthesis */
typedef struct msw_synthesis_info {
  int decoder_steps;
  int final_argmax;
  int stopped; /* 0 when the step cap ended decoding */
  size_t n_samples;
  int sample_rate_hz;
} msw_synthesis_info;

/* temperature < 0 uses the checkpoint's configured sampling temperature.
   wav_path may be NULL; samples/n_samples may be NULL. Samples are released
   with msw_samples_free. */
MSW_API msw_status msw_synthesize(const msw_model* model, const char* text, const char* speaker_id, uint64_t seed,
                                  double temperature, const char* wav_path, double** samples,
                                  msw_synthesis_info* info);
MSW_API void msw_samples_free(double* samples);

/* Evaluation */
typedef struct msw_classify_report {
  double holdout_accuracy;
  double synthesized_accuracy; /* < 0 without a model */
  size_t n_train;
  size_t n_test;
  size_t n_speakers;
} msw_classify_report;

MSW_API msw_status msw_eval_classify(const msw_config* cfg, const char* data_root, const msw_model* model,
                                     uint64_t seed, msw_classify_report* out);

/* synthetic: NULL, "random" or "gaussian". model may be NULL. */
MSW_API msw_status msw_eval_eer(const msw_config* cfg, const char* data_root, const msw_model* model,
                                const char* synthetic, size_t trials, int enroll, uint64_t seed, double* eer);

typedef struct msw_pca_report {
  double explained_pc1;
  double explained_pc2;
  double separability; /* < 0 without labels */
  size_t n_speakers;
} msw_pca_report;

/* Writes <out_prefix>.csv and <out_prefix>.svg. labels_csv may be NULL. */
MSW_API msw_status msw_embed_pca(const msw_model* model, const char* labels_csv, const char* out_prefix,
                                 msw_pca_report* out);
MSW_API msw_status msw_export_embeddings(const msw_model* model, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif
