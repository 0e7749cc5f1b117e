#include "srgan/srgan.h"

#include <spdlog/spdlog.h>

#include <cstring>
#include <exception>
#include <string>

#include "srgan/checkpoint.hpp"
#include "srgan/harness.hpp"
#include "srgan/metrics.hpp"
#include "srgan/parallel.hpp"

struct srgan_network {
  srgan::nn::Network<float> net;
};

namespace {

thread_local std::string g_last_error;
thread_local int g_last_detail = 0;

srgan_status status_for(srgan::ErrorCode c) {
  using srgan::ErrorCode;
  switch (c) {
    case ErrorCode::ok: return SRGAN_OK;
    case ErrorCode::invalid_argument:
    case ErrorCode::shape_mismatch:
    case ErrorCode::spec_mismatch:
    case ErrorCode::config:
    case ErrorCode::usage:
    case ErrorCode::conflict: return SRGAN_ERR_USAGE;
    case ErrorCode::numerical: return SRGAN_ERR_NUMERICAL;
    case ErrorCode::io:
    case ErrorCode::bad_magic:
    case ErrorCode::truncated:
    case ErrorCode::unknown_version:
    case ErrorCode::duplicate_tensor:
    case ErrorCode::crc_mismatch:
    case ErrorCode::missing_tensor:
    case ErrorCode::unsupported_format: return SRGAN_ERR_IO;
    case ErrorCode::internal: break;
  }
  return SRGAN_ERR_INTERNAL;
}

template <typename F>
srgan_status guarded(F&& body) {
  g_last_error.clear();
  g_last_detail = 0;
  try {
    body();
    return SRGAN_OK;
  } catch (const srgan::Error& e) {
    g_last_error = e.what();
    g_last_detail = static_cast<int>(e.code());
    return status_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    g_last_detail = static_cast<int>(srgan::ErrorCode::io);
    return SRGAN_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    g_last_detail = static_cast<int>(srgan::ErrorCode::internal);
    return SRGAN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    g_last_detail = static_cast<int>(srgan::ErrorCode::internal);
    return SRGAN_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  srgan::require(p != nullptr, srgan::ErrorCode::usage, std::string(what) + " must not be NULL");
}

srgan::data::ImageBuffer wrap_image(const float* px, int w, int h, int c) {
  need(px, "image data");
  srgan::require(w > 0 && h > 0 && (c == 1 || c == 3), srgan::ErrorCode::invalid_argument,
                 "image must have positive size and 1 or 3 channels");
  srgan::data::ImageBuffer img(w, h, c);
  std::memcpy(img.pixels.data(), px, sizeof(float) * img.pixels.size());
  return img;
}

srgan::metrics::Matrix wrap_matrix(const double* p, int64_t rows, int64_t cols) {
  need(p, "feature matrix");
  srgan::require(rows > 0 && cols > 0, srgan::ErrorCode::invalid_argument, "feature matrix must be non-empty");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(p, rows, cols);
}

}  // namespace

extern "C" {

const char* srgan_last_error(void) { return g_last_error.c_str(); }
int srgan_last_error_detail(void) { return g_last_detail; }
const char* srgan_version(void) { return "1.0.0"; }

void srgan_set_log_level(int level) {
  static const spdlog::level::level_enum levels[] = {spdlog::level::debug, spdlog::level::info, spdlog::level::warn,
                                                     spdlog::level::err, spdlog::level::off};
  spdlog::set_level(levels[level < 0 ? 0 : level > 4 ? 4 : level]);
}

srgan_status srgan_set_threads(int n) {
  return guarded([&] {
    srgan::require(n >= 1, srgan::ErrorCode::usage, "thread count must be >= 1");
    srgan::apply_thread_request(n);
  });
}

srgan_status srgan_network_load(const char* path, srgan_network** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto* h = new srgan_network{srgan::nn::load_checkpoint(path)};
    *out = h;
  });
}

void srgan_network_free(srgan_network* net) { delete net; }

srgan_status srgan_network_describe(const srgan_network* net, srgan_network_info* info) {
  return guarded([&] {
    need(net, "network");
    need(info, "info");
    const auto& s = net->net.spec();
    info->is_generator = s.role == srgan::nn::Role::generator;
    info->base_channels = s.base_channels;
    info->n_residual_blocks = s.n_residual_blocks;
    info->upscale_exponent = s.upscale_exponent;
    info->input_channels = s.input_channels;
    info->image_side = s.image_side;
    info->parameter_count = net->net.parameter_count();
  });
}

srgan_status srgan_network_forward(const srgan_network* net, const float* input, int64_t n, int64_t c, int64_t h,
                                   int64_t w, float* out, size_t out_len, int64_t out_shape[4]) {
  return guarded([&] {
    need(net, "network");
    need(input, "input");
    need(out_shape, "out_shape");
    srgan::require(n > 0 && c > 0 && h > 0 && w > 0, srgan::ErrorCode::invalid_argument, "input dims must be positive");
    const srgan::Shape shape{n, c, h, w};
    std::vector<float> data(input, input + srgan::shape_numel(shape));
    srgan::nn::Network<float> copy = net->net;
    const srgan::Tensor y = copy.infer(srgan::Tensor(shape, std::move(data)));
    for (int i = 0; i < 4; ++i) out_shape[i] = y.dim(i);
    if (!out) return;
    srgan::require(out_len >= static_cast<size_t>(y.numel()), srgan::ErrorCode::usage,
                   "output buffer holds " + std::to_string(out_len) + " floats, need " + std::to_string(y.numel()));
    std::memcpy(out, y.data().data(), sizeof(float) * static_cast<size_t>(y.numel()));
  });
}

srgan_status srgan_psnr(const float* a, const float* b, int width, int height, int channels, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = srgan::metrics::psnr(wrap_image(a, width, height, channels), wrap_image(b, width, height, channels));
  });
}

srgan_status srgan_ssim(const float* a, const float* b, int width, int height, int channels, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = srgan::metrics::ssim(wrap_image(a, width, height, channels), wrap_image(b, width, height, channels));
  });
}

srgan_status srgan_fid(const double* x, int64_t nx, const double* g, int64_t ng, int64_t d, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = srgan::metrics::fid(srgan::metrics::fit_gaussian(wrap_matrix(x, nx, d)),
                               srgan::metrics::fit_gaussian(wrap_matrix(g, ng, d)));
  });
}

srgan_status srgan_cmd_synth(const char* family, int n, uint64_t seed, int test_count, const char* out_dir, int force) {
  return guarded([&] {
    need(family, "family");
    need(out_dir, "out_dir");
    srgan::harness::cmd_synth({family, n, seed, test_count, out_dir, force != 0});
  });
}

srgan_status srgan_cmd_train(const char* config_path, const char* resume_checkpoint, const char* out_dir,
                             const uint64_t* seed, int* diverged) {
  return guarded([&] {
    need(config_path, "config_path");
    srgan::harness::TrainOptions opt;
    opt.config = config_path;
    if (resume_checkpoint) opt.resume = resume_checkpoint;
    if (out_dir) opt.out_dir = out_dir;
    if (seed) opt.seed = *seed;
    const auto res = srgan::harness::cmd_train(opt);
    if (diverged) *diverged = res.convergence == srgan::train::Convergence::diverged;
  });
}

srgan_status srgan_cmd_infer(const char* checkpoint, const char* input_dir, const char* target_dir, const char* out_dir,
                             int* written) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(input_dir, "input_dir");
    need(out_dir, "out_dir");
    srgan::harness::InferOptions opt;
    opt.checkpoint = checkpoint;
    opt.input_dir = input_dir;
    if (target_dir) opt.target_dir = target_dir;
    opt.out_dir = out_dir;
    const int n = srgan::harness::cmd_infer(opt);
    if (written) *written = n;
  });
}

srgan_status srgan_cmd_eval(const char* checkpoint, const char* config_path, const char* extractor, int64_t n,
                            int leakage, const char* out_csv, double* psnr_db, double* ssim, double* fid) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(config_path, "config_path");
    srgan::harness::EvalOptions opt;
    opt.checkpoint = checkpoint;
    opt.config = config_path;
    if (extractor) opt.extractor = extractor;
    opt.n = n;
    opt.leakage = leakage != 0;
    if (out_csv) opt.out_csv = out_csv;
    const auto row = srgan::harness::cmd_eval(opt);
    if (psnr_db) *psnr_db = row.psnr_db;
    if (ssim) *ssim = row.ssim;
    if (fid) *fid = row.fid;
  });
}

srgan_status srgan_cmd_matrix(const char* matrix_config, const char* out_dir, const char* extractor, int64_t n) {
  return guarded([&] {
    need(matrix_config, "matrix_config");
    srgan::harness::MatrixOptions opt;
    opt.config = matrix_config;
    if (out_dir) opt.out_dir = out_dir;
    if (extractor) opt.extractor = extractor;
    if (n > 0) opt.n = n;
    srgan::harness::cmd_matrix(opt);
  });
}

srgan_status srgan_cmd_report(const char* results_dir, const char* out_csv, int64_t* rows) {
  return guarded([&] {
    need(results_dir, "results_dir");
    std::optional<std::filesystem::path> out;
    if (out_csv) out = out_csv;
    const auto rep = srgan::harness::cmd_report(results_dir, out);
    if (rows) *rows = static_cast<int64_t>(rep.rows.size());
  });
}

}  // extern "C"
