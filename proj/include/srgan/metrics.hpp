#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "srgan/image.hpp"
#include "srgan/ops.hpp"

namespace srgan::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE); identical images return kPsnrInfinity.
double psnr(const data::ImageBuffer& a, const data::ImageBuffer& b, double peak = 1.0);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// Gaussian-window SSIM averaged over every valid window position and over
// channels.
double ssim(const data::ImageBuffer& a, const data::ImageBuffer& b, const SsimParams& params = {});

struct GaussianStats {
  Vector mu;
  Matrix sigma;
  std::int64_t n = 0;
};

// Sample mean and 1/(n-1) covariance, symmetrized.
GaussianStats fit_gaussian(const Matrix& features);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
// eigenvalues (ascending) and eigenvectors as columns.
void symmetric_eigen(const Matrix& m, Vector& values, Matrix& vectors);

// Symmetric PSD square root. Eigenvalues below d * eps * max eigenvalue are
// treated as zero; negatives beyond -1e-6 (relative) are an error.
Matrix matrix_sqrt_psd(const Matrix& m);

// ||mu_x - mu_g||^2 + Tr(S_x + S_g - 2 (S_x S_g)^{1/2}), with the cross term
// evaluated as sqrt(S_x^{1/2} S_g S_x^{1/2}).
double fid(const GaussianStats& x, const GaussianStats& g);

// Pure map from an image to a fixed-length feature vector.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<double> extract(const data::ImageBuffer& img) const = 0;
};

// Bicubic to 16x16 grayscale, flattened (d = 256).
class Raw16Extractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "raw16"; }
  int dim() const override { return 256; }
  std::vector<double> extract(const data::ImageBuffer& img) const override;
};

// Frozen stack of stride-2 3x3 convolutions with leaky ReLU, then global
// average pooling. Inputs are images mapped to [-1,1]. Used both as the
// "tinyconv" FID extractor and as the perceptual-loss feature network.
template <typename T>
class ConvFeatureNet {
 public:
  struct Stage {
    TensorT<T> weight;
    TensorT<T> bias;
    int stride = 2;
  };

  ConvFeatureNet(std::string id, std::vector<Stage> stages, double slope = 0.2);

  // Fixed-seed random weights: 3 -> 16 -> 32 -> 64 channels.
  static ConvFeatureNet tinyconv();
  // Conv stages named conv<i>.weight / conv<i>.bias from a checkpoint archive.
  static ConvFeatureNet from_archive(const std::filesystem::path& path);

  const std::string& id() const noexcept { return id_; }
  int dim() const;
  const std::vector<Stage>& stages() const noexcept { return stages_; }

  // Last-stage activation maps; differentiable w.r.t. x, weights constant.
  Var<T> feature_maps(const Var<T>& x) const;

  template <typename U>
  ConvFeatureNet<U> cast() const {
    std::vector<typename ConvFeatureNet<U>::Stage> s;
    for (const auto& st : stages_) s.push_back({st.weight.template cast<U>(), st.bias.template cast<U>(), st.stride});
    return ConvFeatureNet<U>(id_, std::move(s), slope_);
  }

 private:
  std::string id_;
  std::vector<Stage> stages_;
  double slope_;
};

class ConvExtractor final : public FeatureExtractor {
 public:
  explicit ConvExtractor(ConvFeatureNet<float> net) : net_(std::move(net)) {}
  std::string id() const override { return net_.id(); }
  int dim() const override { return net_.dim(); }
  std::vector<double> extract(const data::ImageBuffer& img) const override;

 private:
  ConvFeatureNet<float> net_;
};

// "raw16", "tinyconv", or "archive:<path>".
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id);

// Row i holds the features of image i. All images must share a size.
Matrix extract_features(const std::vector<data::ImageBuffer>& images, const FeatureExtractor& extractor);

struct MetricsRow {
  std::string train_set;
  std::string eval_set;
  double psnr_db = 0;
  double ssim = 0;
  double fid = 0;
  std::int64_t n = 0;
  std::string extractor;
  std::uint64_t seed = 0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kReportHeader = "train_set,eval_set,psnr_db,ssim,fid,n,extractor,seed";

struct MetricsReport {
  std::vector<MetricsRow> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  // Throws ErrorCode::unsupported_format naming `origin` and the line.
  static MetricsReport from_csv(const std::string& text, const std::string& origin);
};

// %.10g, with infinities written as "inf" / "-inf".
std::string format_number(double v);
std::string format_row(const MetricsRow& row);

// Scores aligned (real[i], generated[i]) pairs: mean PSNR and SSIM over the
// first n pairs and FID between the two feature clouds.
MetricsRow score_pair_sets(const std::vector<data::ImageBuffer>& real, const std::vector<data::ImageBuffer>& generated,
                           const FeatureExtractor& extractor, std::int64_t n);

}  // namespace srgan::metrics
