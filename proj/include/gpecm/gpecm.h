/* C interface to the gpecm library: battery circuit-model state and parameter
 * estimation with recursive Gaussian processes. All functions are reentrant;
 * gpecm_last_error() is per thread. Strings returned through char** are owned
 * by the caller and released with gpecm_string_free(). */
#ifndef GPECM_GPECM_H
#define GPECM_GPECM_H

#include <stddef.h>

#if defined(GPECM_BUILDING_LIBRARY)
#define GPECM_API __attribute__((visibility("default")))
#else
#define GPECM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gpecm_status {
  GPECM_OK = 0,
  GPECM_ERR_INVALID_ARGUMENT = 1,
  GPECM_ERR_CONFIG = 2,
  GPECM_ERR_DATA = 3,
  GPECM_ERR_NUMERICAL = 4,
  GPECM_ERR_INTERNAL = 5
} gpecm_status;

typedef enum gpecm_field {
  GPECM_FIELD_Q_INV = 0,
  GPECM_FIELD_ALPHA = 1,
  GPECM_FIELD_BETA = 2,
  GPECM_FIELD_R0 = 3
} gpecm_field;

typedef struct gpecm_config gpecm_config;
typedef struct gpecm_posterior gpecm_posterior;

GPECM_API const char* gpecm_version(void);
GPECM_API const char* gpecm_status_name(gpecm_status status);
/* Message of the most recent failure on this thread ("" when none). */
GPECM_API const char* gpecm_last_error(void);
GPECM_API void gpecm_string_free(char* s);

/* Hyperparameters in their fixed order. */
GPECM_API size_t gpecm_hyper_count(void);
GPECM_API const char* gpecm_hyper_name(size_t index);

/* path may be NULL for defaults; overrides are "a.b=value" strings. */
GPECM_API gpecm_status gpecm_config_load(const char* path, const char* const* overrides, size_t n_overrides,
                                         gpecm_config** out);
GPECM_API gpecm_status gpecm_config_set(gpecm_config* config, const char* assignment);
GPECM_API gpecm_status gpecm_config_dump(const gpecm_config* config, char** json_out);
GPECM_API void gpecm_config_free(gpecm_config* config);

/* Commands. Each optional char** receives a JSON or text summary. */
GPECM_API gpecm_status gpecm_simulate(const gpecm_config* config, char** summary_json);
GPECM_API gpecm_status gpecm_fit(const gpecm_config* config, int stage, char** artifact_path);
GPECM_API gpecm_status gpecm_estimate(const gpecm_config* config, char** written_json);
GPECM_API gpecm_status gpecm_forecast(const gpecm_config* config, char** written_json);
GPECM_API gpecm_status gpecm_validate(const gpecm_config* config, char** table_text);

/* Negative log marginal likelihood over all configured cells for a full
 * hyperparameter vector (gpecm_hyper_count() entries, natural units). */
GPECM_API gpecm_status gpecm_nlml(const gpecm_config* config, const double* theta, size_t n_theta, double* phi);

/* Smoothed lifetime posterior of one cell under the fitted hyperparameters. */
GPECM_API gpecm_status gpecm_posterior_create(const gpecm_config* config, size_t cell, gpecm_posterior** out);
GPECM_API gpecm_status gpecm_posterior_range(const gpecm_posterior* post, double* first_zeta, double* last_zeta,
                                             size_t* checkpoints);
/* Long-term parameter mean and standard deviation at (zeta, z, current);
 * zeta past the last checkpoint is a forecast. */
GPECM_API gpecm_status gpecm_posterior_query(const gpecm_posterior* post, double zeta, gpecm_field field, double z,
                                             double current, double* mean, double* sd);
GPECM_API void gpecm_posterior_free(gpecm_posterior* post);

#ifdef __cplusplus
}
#endif

#endif
