#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "srgan/srgan.h"

static int failures = 0;

#define EXPECT(cond)                                                \
  do {                                                              \
    if (!(cond)) {                                                  \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                   \
    }                                                               \
  } while (0)

static void join(char* buf, size_t len, const char* dir, const char* name) { snprintf(buf, len, "%s/%s", dir, name); }

static int write_text(const char* path, const char* text) {
  FILE* f = fopen(path, "w");
  if (!f) return 0;
  fputs(text, f);
  fclose(f);
  return 1;
}

static int file_exists(const char* path) {
  struct stat st;
  return stat(path, &st) == 0;
}

static void test_errors(const char* work) {
  srgan_network* net = NULL;
  char path[1024];
  EXPECT(srgan_network_load(NULL, &net) == SRGAN_ERR_USAGE);
  join(path, sizeof path, work, "does-not-exist.ckpt");
  EXPECT(srgan_network_load(path, &net) == SRGAN_ERR_IO);
  EXPECT(net == NULL);
  EXPECT(strlen(srgan_last_error()) > 0);
  EXPECT(srgan_last_error_detail() != 0);
  EXPECT(srgan_network_describe(NULL, NULL) == SRGAN_ERR_USAGE);
  EXPECT(srgan_set_threads(0) == SRGAN_ERR_USAGE);
  EXPECT(srgan_cmd_synth("faces", 4, 1, -1, work, 0) == SRGAN_ERR_USAGE);
  EXPECT(srgan_cmd_report(NULL, NULL, NULL) == SRGAN_ERR_USAGE);
  srgan_network_free(NULL);
}

static void test_metrics(void) {
  float a[16 * 16 * 3], b[16 * 16 * 3];
  double v = 0.0;
  for (int i = 0; i < 16 * 16 * 3; ++i) {
    a[i] = (float)(i % 7) / 7.0f;
    b[i] = a[i];
  }
  EXPECT(srgan_psnr(a, b, 16, 16, 3, &v) == SRGAN_OK);
  EXPECT(isinf(v) && v > 0);
  EXPECT(srgan_ssim(a, b, 16, 16, 3, &v) == SRGAN_OK);
  EXPECT(v == 1.0);
  b[0] = 1.0f;
  EXPECT(srgan_psnr(a, b, 16, 16, 3, &v) == SRGAN_OK);
  EXPECT(isfinite(v));
  EXPECT(srgan_psnr(a, b, 0, 16, 3, &v) != SRGAN_OK);

  /* One-dimensional Gaussians: means 0 and 3, spreads 1 and 2. */
  double x[4] = {-1, 1, -1, 1}, g[4] = {1, 5, 1, 5};
  EXPECT(srgan_fid(x, 4, g, 4, 1, &v) == SRGAN_OK);
  /* Unbiased sample variances. */
  double sx = 4.0 / 3.0, sg = 16.0 / 3.0;
  double expect = 9.0 + sx + sg - 2.0 * sqrt(sx * sg);
  EXPECT(fabs(v - expect) < 1e-9);
  EXPECT(srgan_fid(x, 1, g, 4, 1, &v) != SRGAN_OK);
}

static void test_commands(const char* work) {
  char data_dir[1024], cfg[1024], run_dir[1024], ckpt[1024], csv[1024], infer_out[1024], text[2048];
  join(data_dir, sizeof data_dir, work, "disks");
  EXPECT(srgan_cmd_synth("disks", 6, 3, 2, data_dir, 1) == SRGAN_OK);
  char manifest[1100];
  join(manifest, sizeof manifest, data_dir, "manifest.json");
  EXPECT(file_exists(manifest));

  join(run_dir, sizeof run_dir, work, "run");
  join(cfg, sizeof cfg, work, "cfg.json");
  snprintf(text, sizeof text,
           "{\"dataset\": {\"source\": \"synthetic:disks\", \"train_count\": 6, \"test_count\": 4, \"side\": 16},"
           " \"upscale_exponent\": 1, \"generator\": {\"base_channels\": 4, \"n_residual_blocks\": 1},"
           " \"discriminator\": {\"base_channels\": 2, \"dense_hidden\": 8}, \"epochs\": 1, \"batch_size\": 3,"
           " \"seed\": 2, \"out_dir\": \"%s\"}",
           run_dir);
  EXPECT(write_text(cfg, text));
  int diverged = -1;
  EXPECT(srgan_cmd_train(cfg, NULL, NULL, NULL, &diverged) == SRGAN_OK);
  EXPECT(diverged == 0 || diverged == 1);
  join(ckpt, sizeof ckpt, run_dir, "epoch_001.ckpt");
  EXPECT(file_exists(ckpt));

  srgan_network* net = NULL;
  EXPECT(srgan_network_load(ckpt, &net) == SRGAN_OK);
  if (net) {
    srgan_network_info info;
    EXPECT(srgan_network_describe(net, &info) == SRGAN_OK);
    EXPECT(info.is_generator == 1);
    EXPECT(info.base_channels == 4);
    EXPECT(info.upscale_exponent == 1);
    EXPECT(info.input_channels == 3);
    EXPECT(info.parameter_count > 0);

    float input[2 * 3 * 8 * 8];
    for (int i = 0; i < 2 * 3 * 8 * 8; ++i) input[i] = (float)((i % 11) - 5) / 5.0f;
    int64_t shape[4] = {0, 0, 0, 0};
    EXPECT(srgan_network_forward(net, input, 2, 3, 8, 8, NULL, 0, shape) == SRGAN_OK);
    EXPECT(shape[0] == 2 && shape[1] == 3 && shape[2] == 16 && shape[3] == 16);
    size_t len = (size_t)(shape[0] * shape[1] * shape[2] * shape[3]);
    float* out = malloc(len * sizeof(float));
    EXPECT(srgan_network_forward(net, input, 2, 3, 8, 8, out, len - 1, shape) == SRGAN_ERR_USAGE);
    EXPECT(srgan_network_forward(net, input, 2, 3, 8, 8, out, len, shape) == SRGAN_OK);
    for (size_t i = 0; i < len; ++i) EXPECT(out[i] >= -1.0f && out[i] <= 1.0f);
    EXPECT(srgan_network_forward(net, input, 2, 1, 8, 8, out, len, shape) != SRGAN_OK);
    free(out);
    srgan_network_free(net);
  }

  double psnr = 0, ssim = 0, fid = -1;
  join(csv, sizeof csv, work, "eval.csv");
  remove(csv);
  EXPECT(srgan_cmd_eval(ckpt, cfg, "raw16", 4, 0, csv, &psnr, &ssim, &fid) == SRGAN_OK);
  EXPECT(isfinite(psnr) && ssim <= 1.0 && fid >= 0.0);
  EXPECT(srgan_cmd_eval(ckpt, cfg, "raw16", 40, 0, NULL, &psnr, &ssim, &fid) == SRGAN_ERR_USAGE);
  int64_t rows = 0;
  EXPECT(srgan_cmd_report(work, NULL, &rows) == SRGAN_OK);
  EXPECT(rows == 1);

  join(infer_out, sizeof infer_out, work, "infer");
  int written = 0;
  EXPECT(srgan_cmd_infer(ckpt, data_dir, NULL, infer_out, &written) == SRGAN_OK);
  EXPECT(written == 6);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: capi_test <work-dir>\n");
    return 2;
  }
  const char* work = argv[1];
  mkdir(work, 0755);
  srgan_set_log_level(4);
  EXPECT(strlen(srgan_version()) > 0);
  test_errors(work);
  test_metrics();
  test_commands(work);
  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("capi ok\n");
  return 0;
}
