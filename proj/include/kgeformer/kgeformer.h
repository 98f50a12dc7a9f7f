#ifndef KGEFORMER_H
#define KGEFORMER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define KGF_API __declspec(dllexport)
#else
#define KGF_API __attribute__((visibility("default")))
#endif

typedef enum kgf_status {
  KGF_OK = 0,
  KGF_ERR_SHAPE = 1,
  KGF_ERR_CONFIG = 2,
  KGF_ERR_PARSE = 3,
  KGF_ERR_VALIDATION = 4,
  KGF_ERR_IO = 5,
  KGF_ERR_CONTRACT = 6,
  KGF_ERR_DIVERGENCE = 7,
  KGF_ERR_INVALID_ARGUMENT = 8,
  KGF_ERR_INTERNAL = 9
} kgf_status;

typedef struct kgf_config kgf_config;
typedef struct kgf_model kgf_model;

/* Progress lines from long-running commands. */
typedef void (*kgf_log_fn)(const char* line, void* user);

KGF_API const char* kgf_version(void);
KGF_API const char* kgf_status_name(kgf_status status);
/* Message for the last failure on this thread; "" when none. */
KGF_API const char* kgf_last_error(void);
/* Process exit code for a status: 0 ok, 2 config/validation, 3 divergence, 1 otherwise. */
KGF_API int kgf_exit_code(kgf_status status);
/* Frees strings returned through char** out-parameters. */
KGF_API void kgf_string_free(char* s);

KGF_API kgf_status kgf_config_create(kgf_config** out);
KGF_API void kgf_config_destroy(kgf_config* config);
KGF_API kgf_status kgf_config_load_file(kgf_config* config, const char* path);
KGF_API kgf_status kgf_config_set(kgf_config* config, const char* key, const char* value);
KGF_API kgf_status kgf_config_get(const kgf_config* config, const char* key, char** value);
KGF_API kgf_status kgf_config_canonical(const kgf_config* config, char** text);
KGF_API kgf_status kgf_config_hash(const kgf_config* config, char** hash);

/* Commands. Results are JSON documents (text for inspect_graph). */
KGF_API kgf_status kgf_train(const kgf_config* config, kgf_log_fn log, void* user, char** result_json);
/* dump_csv and metrics_path may be NULL; expected_hash may be NULL or "". */
KGF_API kgf_status kgf_evaluate(const char* checkpoint_dir, const char* data_path, const char* dump_csv,
                                const char* metrics_path, const char* expected_hash, int force, char** result_json);
KGF_API kgf_status kgf_compare(const kgf_config* config, kgf_log_fn log, void* user, char** report_json);
/* csv_path / graph_path may be NULL: defaults under the config's out directory. */
KGF_API kgf_status kgf_synthesize(const kgf_config* config, const char* csv_path, const char* graph_path,
                                  char** result_json);
/* data_path may be NULL to skip the channel mapping. */
KGF_API kgf_status kgf_inspect_graph(const char* graph_path, const char* data_path, char** report_text);

KGF_API kgf_status kgf_model_load(const char* checkpoint_dir, int force, kgf_model** out);
KGF_API void kgf_model_destroy(kgf_model* model);
KGF_API kgf_status kgf_model_parameter_count(const kgf_model* model, size_t* count);
KGF_API kgf_status kgf_model_info(const kgf_model* model, char** info_json);
KGF_API kgf_status kgf_model_save(const kgf_model* model, const char* checkpoint_dir);

#ifdef __cplusplus
}
#endif

#endif
