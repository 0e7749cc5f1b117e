#ifndef SRGAN_SRGAN_H
#define SRGAN_SRGAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SRGAN_API __declspec(dllexport)
#else
#define SRGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the command wrappers. */
typedef enum srgan_status {
  SRGAN_OK = 0,
  SRGAN_ERR_INTERNAL = 1,
  SRGAN_ERR_USAGE = 2,
  SRGAN_ERR_NUMERICAL = 3,
  SRGAN_ERR_IO = 4
} srgan_status;

/* Message and fine-grained error code of the last failure on this thread. */
SRGAN_API const char* srgan_last_error(void);
SRGAN_API int srgan_last_error_detail(void);
SRGAN_API const char* srgan_version(void);

/* 0 = debug, 1 = info, 2 = warn, 3 = error, 4 = off */
SRGAN_API void srgan_set_log_level(int level);
/* Caps internal worker threads; SRGAN_BENCH_THREADS still applies on top. */
SRGAN_API srgan_status srgan_set_threads(int n);

typedef struct srgan_network srgan_network;

SRGAN_API srgan_status srgan_network_load(const char* path, srgan_network** out);
SRGAN_API void srgan_network_free(srgan_network* net);

typedef struct srgan_network_info {
  int is_generator;
  int base_channels;
  int n_residual_blocks;
  int upscale_exponent;
  int input_channels;
  int image_side;
  int64_t parameter_count;
} srgan_network_info;

SRGAN_API srgan_status srgan_network_describe(const srgan_network* net, srgan_network_info* info);

/* Inference-mode forward pass. Input is (n, c, h, w) float data in network
   range [-1,1]. out_shape receives the 4 output dims; out may be NULL to
   query the shape only, otherwise out_len must hold the full output. */
SRGAN_API srgan_status srgan_network_forward(const srgan_network* net, const float* input, int64_t n, int64_t c,
                                             int64_t h, int64_t w, float* out, size_t out_len, int64_t out_shape[4]);

/* Interleaved HWC images with values in [0,1]. */
SRGAN_API srgan_status srgan_psnr(const float* a, const float* b, int width, int height, int channels, double* out);
SRGAN_API srgan_status srgan_ssim(const float* a, const float* b, int width, int height, int channels, double* out);
/* Row-major (n, d) feature matrices. */
SRGAN_API srgan_status srgan_fid(const double* x, int64_t nx, const double* g, int64_t ng, int64_t d, double* out);

/* Command wrappers. Optional arguments accept NULL. */
SRGAN_API srgan_status srgan_cmd_synth(const char* family, int n, uint64_t seed, int test_count, const char* out_dir,
                                       int force);
SRGAN_API srgan_status srgan_cmd_train(const char* config_path, const char* resume_checkpoint, const char* out_dir,
                                       const uint64_t* seed, int* diverged);
SRGAN_API srgan_status srgan_cmd_infer(const char* checkpoint, const char* input_dir, const char* target_dir,
                                       const char* out_dir, int* written);
SRGAN_API srgan_status srgan_cmd_eval(const char* checkpoint, const char* config_path, const char* extractor, int64_t n,
                                      int leakage, const char* out_csv, double* psnr_db, double* ssim, double* fid);
SRGAN_API srgan_status srgan_cmd_matrix(const char* matrix_config, const char* out_dir, const char* extractor,
                                        int64_t n);
SRGAN_API srgan_status srgan_cmd_report(const char* results_dir, const char* out_csv, int64_t* rows);

#ifdef __cplusplus
}
#endif

#endif
