#ifndef MUZE_H
#define MUZE_H

/*
 * C interface to the muze library: masked attribute-value prediction for
 * image + table records, the contrastive fine-tuning baselines, retrieval
 * metrics, text curation, and the experiment harness.
 *
 * All functions that can fail take a muze_ctx and return a muze_status;
 * muze_last_error(ctx) holds a message for the most recent failure. Handles
 * (muze_dataset, muze_model) are opaque and freed with their *_free function.
 * Strings returned through const char* stay valid until the owning handle is
 * freed or the next call on the same handle.
 */

#include <stddef.h>
#include <stdint.h>

#ifndef MUZE_API
#define MUZE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum muze_status {
  MUZE_OK = 0,
  MUZE_ERROR = 1,
  MUZE_INVALID_CONFIG = 2,
  MUZE_IO_ERROR = 3,
  MUZE_DATA_ERROR = 4,
} muze_status;

typedef struct muze_ctx muze_ctx;
typedef struct muze_dataset muze_dataset;
typedef struct muze_model muze_model;

MUZE_API const char* muze_version(void);

MUZE_API muze_ctx* muze_ctx_new(void);
MUZE_API void muze_ctx_free(muze_ctx* ctx);
MUZE_API const char* muze_last_error(const muze_ctx* ctx);

/* ---- datasets -------------------------------------------------------- */

/* vocab_json_path may be NULL: it is then derived from the CSV name
 * (<dataset>.<split>.csv -> <dataset>.vocab.json). */
MUZE_API muze_status muze_dataset_load(muze_ctx* ctx, const char* csv_path,
                                       const char* vocab_json_path, muze_dataset** out);
MUZE_API muze_status muze_dataset_save(muze_ctx* ctx, const muze_dataset* dataset,
                                       const char* csv_path, const char* vocab_json_path);
MUZE_API void muze_dataset_free(muze_dataset* dataset);
MUZE_API size_t muze_dataset_num_records(const muze_dataset* dataset);
MUZE_API const char* muze_dataset_object_id(const muze_dataset* dataset, size_t index);
/* Number of values of one attribute for one record; 0 when unknown. */
MUZE_API size_t muze_dataset_value_count(const muze_dataset* dataset, size_t index,
                                         const char* attribute);
MUZE_API const char* muze_dataset_value(const muze_dataset* dataset, size_t index,
                                        const char* attribute, size_t value_index);

/* ---- pipeline stages (file to file) ----------------------------------- */

/* rules_json NULL uses the built-in default rules. Vocabulary paths derive
 * from the CSV names. */
MUZE_API muze_status muze_curate(muze_ctx* ctx, const char* in_csv, const char* rules_json,
                                 const char* out_csv);

/* Precomputes embeddings of every attribute name, vocabulary value, and image
 * key of the dataset into an .embstore file. */
MUZE_API muze_status muze_encode(muze_ctx* ctx, const char* dataset_csv, const char* encoder,
                                 int dim, uint64_t encoder_seed, const char* out_store);

/* Writes <base>.{train,val,test}.csv and <base>.vocab.json. */
MUZE_API muze_status muze_synth_gen(muze_ctx* ctx, const char* spec_json, const char* out_csv);

/* train_config_json may be NULL (defaults) or a JSON file with optional
 * "train" and "parsenet" sections. backbone_ckpt selects a fine-tuned bundle;
 * NULL starts from the named encoder. seed_override >= 0 replaces the config
 * seed. out_curve_csv may be NULL. */
MUZE_API muze_status muze_train_parsenet(muze_ctx* ctx, const char* train_csv,
                                         const char* target_attr, const char* train_config_json,
                                         const char* encoder, int dim, uint64_t encoder_seed,
                                         const char* backbone_ckpt, int64_t seed_override,
                                         const char* out_checkpoint, const char* out_curve_csv);

/* baseline: CLIP_FC | CLIP_FA | CLIP_FPHRASE | CLIP_FTEXT. target_attr is
 * required for the per-attribute modes. */
MUZE_API muze_status muze_finetune(muze_ctx* ctx, const char* train_csv, const char* baseline,
                                   const char* target_attr, const char* train_config_json,
                                   const char* encoder, int dim, uint64_t encoder_seed,
                                   int64_t seed_override, const char* out_checkpoint,
                                   const char* out_curve_csv);

/* parsenet_ckpt is required for MUZE baselines; bundle_ckpt NULL uses a fresh
 * encoder. out_margins_csv may be NULL. */
MUZE_API muze_status muze_evaluate(muze_ctx* ctx, const char* eval_csv, const char* baseline,
                                   const char* parsenet_ckpt, const char* bundle_ckpt,
                                   const char* encoder, int dim, uint64_t encoder_seed,
                                   const char* target_attr, const char* out_metrics_csv,
                                   const char* out_margins_csv);

/* Trains image+context and context-only models with random context dropping,
 * then sweeps the context size from 0 to max_context. */
MUZE_API muze_status muze_ablate(muze_ctx* ctx, const char* train_csv, const char* eval_csv,
                                 const char* target_attr, const char* train_config_json,
                                 const char* encoder, int dim, uint64_t encoder_seed,
                                 int64_t seed_override, int max_context, int trials,
                                 const char* out_csv);

MUZE_API muze_status muze_compare(muze_ctx* ctx, const char* const* run_dirs, size_t n_runs,
                                  const char* out_dir);

/* Runs the declarative experiment config (curate -> encode -> train ->
 * evaluate). Completed run directories are written to run_dirs_out as one
 * path per line when the buffer is large enough. */
MUZE_API muze_status muze_run_experiment(muze_ctx* ctx, const char* config_json_path,
                                         int64_t seed_override, char* run_dirs_out,
                                         size_t run_dirs_cap);

/* ---- prediction -------------------------------------------------------- */

MUZE_API muze_status muze_model_load(muze_ctx* ctx, const char* parsenet_ckpt,
                                     const char* bundle_ckpt, muze_model** out);
MUZE_API void muze_model_free(muze_model* model);

/* Ranks the attribute's vocabulary for one record and writes the top_k value
 * strings to out_values, one per line. */
MUZE_API muze_status muze_predict(muze_ctx* ctx, const muze_model* model,
                                  const muze_dataset* dataset, const char* object_id,
                                  const char* query_attr, int top_k, char* out_values,
                                  size_t out_cap);

#ifdef __cplusplus
}
#endif

#endif /* MUZE_H */
