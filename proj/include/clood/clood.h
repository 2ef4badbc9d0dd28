/* C interface to the clood engine. All handles are opaque; every fallible
 * call returns a clood_status and, on failure, leaves a message retrievable
 * with clood_last_error() on the calling thread. Strings returned through
 * char** are owned by the caller and released with clood_string_free. */
#ifndef CLOOD_CLOOD_H
#define CLOOD_CLOOD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(CLOOD_BUILDING_LIBRARY)
#define CLOOD_API __attribute__((visibility("default")))
#else
#define CLOOD_API
#endif

typedef enum clood_status {
  CLOOD_OK = 0,
  CLOOD_ERR_INVALID_ARGUMENT = 1, /* out-of-range values, null pointers, unknown names */
  CLOOD_ERR_CONFIG = 2,           /* malformed or schema-invalid configuration */
  CLOOD_ERR_IO = 3,               /* filesystem or container format failure */
  CLOOD_ERR_NOT_FOUND = 4,        /* missing dataset, checkpoint or results */
  CLOOD_ERR_RUN_FAILED = 5,       /* one or more grid runs failed; others were saved */
  CLOOD_ERR_INTERNAL = 6
} clood_status;

CLOOD_API const char* clood_version(void);
CLOOD_API const char* clood_status_name(clood_status status);
/* Message of the last failure on this thread; "" if none. Valid until the
 * next failing call on the same thread. */
CLOOD_API const char* clood_last_error(void);
CLOOD_API void clood_string_free(char* s);

/* 0 debug, 1 info, 2 warn, 3 error. Messages go to stderr. */
CLOOD_API clood_status clood_set_log_level(int level);

/* ---- configuration ---- */

typedef struct clood_config clood_config;

CLOOD_API clood_status clood_config_default(clood_config** out);
/* .json files are parsed as JSON, anything else as the key/section format. */
CLOOD_API clood_status clood_config_load(const char* path, clood_config** out);
CLOOD_API clood_status clood_config_parse(const char* text, int is_json, clood_config** out);
/* Replaces the training seed list with the single seed. */
CLOOD_API clood_status clood_config_set_seed(clood_config* cfg, uint64_t seed);
CLOOD_API clood_status clood_config_to_json(const clood_config* cfg, char** json_out);
CLOOD_API void clood_config_free(clood_config* cfg);

/* ---- pipeline commands ---- */

typedef struct clood_run_options {
  const char* out_flag; /* explicit output root, or NULL */
  const char* out_env;  /* value of CLOOD_OUT, or NULL; used when out_flag is unset */
  int jobs;             /* worker count for independent runs; < 1 means 1 */
  int dry_run;          /* nonzero: report the plan, write nothing */
} clood_run_options;

/* command is one of "generate", "train", "probe", "report". On success
 * *result_json receives a JSON summary; on failure it is set to NULL. A
 * train grid with failed runs still saves the others before returning
 * CLOOD_ERR_RUN_FAILED. */
CLOOD_API clood_status clood_run_command(const char* command, const clood_config* cfg,
                                         const clood_run_options* options, char** result_json);

/* ---- datasets ---- */

typedef struct clood_dataset clood_dataset;

CLOOD_API clood_status clood_dataset_generate(const clood_config* cfg, clood_dataset** out);
CLOOD_API clood_status clood_dataset_load(const char* dir, clood_dataset** out);
CLOOD_API clood_status clood_dataset_save(const clood_dataset* ds, const char* dir);
CLOOD_API size_t clood_dataset_size(const clood_dataset* ds);
/* Copies 32*32 floats in row-major order. */
CLOOD_API clood_status clood_dataset_image(const clood_dataset* ds, size_t index, float* pixels, size_t capacity);
CLOOD_API clood_status clood_dataset_labels(const clood_dataset* ds, size_t index, uint8_t* char_id,
                                            uint8_t* font_id);
CLOOD_API clood_status clood_dataset_content_hash(const clood_dataset* ds, char** hash_out);
CLOOD_API void clood_dataset_free(clood_dataset* ds);

/* ---- networks ---- */

typedef struct clood_network clood_network;

CLOOD_API clood_status clood_network_create(uint64_t seed, clood_network** out);
CLOOD_API clood_status clood_network_load(const char* checkpoint_path, clood_network** out);
CLOOD_API size_t clood_network_parameter_count(const clood_network* net);
/* Activations of a tap ("block1".."block4", "repr", "logits") for n images
 * of 32*32 floats. *width receives the per-image feature count; pass
 * features = NULL to query it. capacity counts floats. */
CLOOD_API clood_status clood_network_features(const clood_network* net, const float* images, size_t n,
                                              const char* tap, float* features, size_t capacity,
                                              size_t* width);
CLOOD_API void clood_network_free(clood_network* net);

/* ---- reservoir buffers ---- */

typedef struct clood_reservoir clood_reservoir;

CLOOD_API clood_status clood_reservoir_create(size_t capacity, uint64_t seed, clood_reservoir** out);
CLOOD_API clood_status clood_reservoir_observe(clood_reservoir* r, uint64_t index);
CLOOD_API size_t clood_reservoir_size(const clood_reservoir* r);
CLOOD_API uint64_t clood_reservoir_seen(const clood_reservoir* r);
/* Copies up to capacity retained indices in slot order; returns the count via *count. */
CLOOD_API clood_status clood_reservoir_items(const clood_reservoir* r, uint64_t* indices, size_t capacity,
                                             size_t* count);
CLOOD_API void clood_reservoir_free(clood_reservoir* r);

#ifdef __cplusplus
}
#endif

#endif /* CLOOD_CLOOD_H */
