#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xnet/data.hpp"
#include "xnet/networks.hpp"

namespace xnet {

// ---------------------------------------------------------------------------
// Frechet distance

struct FeatureSet {
  Eigen::MatrixXd features;  // [n_samples, d]
  std::string extractor;
};

/// Maps an image batch [N,3,H,W] in [-1,1] to N feature rows.
struct FeatureExtractor {
  std::string id;
  std::function<Eigen::MatrixXd(const Tensor&)> fn;
};

inline constexpr std::size_t kDownsampleSide = 8;

/// Area-downsample to 8x8 RGB and flatten channel-major (d = 192).
FeatureExtractor downsample_extractor();
/// Global average of a frozen encoder's latent map (d = C_z). The encoder
/// must outlive the extractor.
FeatureExtractor encoder_extractor(const Module<float>& encoder, std::string id);

FeatureSet extract_features(const Tensor& images, const FeatureExtractor& extractor);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance plus eps*I, eps = 1e-6 * trace / d.
GaussianSummary fit_gaussian(const FeatureSet& fs);

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// from round-off are clamped to zero.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 sqrt(S1^1/2 S2 S1^1/2)), clamped at 0.
double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2);

double fid(const Tensor& real, const Tensor& fake, const FeatureExtractor& extractor);

// ---------------------------------------------------------------------------
// Latent visualization

struct LatentPca {
  std::size_t height = 0;
  std::size_t width = 0;
  Eigen::MatrixXd components;  // [3, C], orthonormal rows
  Eigen::VectorXd variances;   // [3], descending
  Eigen::MatrixXd scores;      // [H*W, 3], row-major spatial order
};

/// PCA over the H*W positions of batch item `index`, each a C-dim sample.
LatentPca latent_pca(const Tensor& z, std::size_t index = 0);
/// Top-3 scores min-max scaled to [0,255] per channel; components with no
/// variance render as 0.
Image latent_pca_viz(const Tensor& z, std::size_t index = 0);
/// Per-position L2 norm, min-max scaled; 1-channel image.
Image latent_magnitude_map(const Tensor& z, std::size_t index = 0);

// ---------------------------------------------------------------------------
// Foreground extraction

inline constexpr int kWhiteLumaThreshold = 243;

/// Rec. 601 luma scaled by 1000 (exact integer arithmetic).
constexpr int luma_milli(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return 299 * r + 587 * g + 114 * b;
}

constexpr bool nearly_white(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return luma_milli(r, g, b) > kWhiteLumaThreshold * 1000;
}

/// Pixels whose translated luma exceeds 243 become white; all others keep the
/// original (pre-translation) color.
Image foreground_extract(const Image& original, const Image& translated);

/// Per-pixel foreground score 255 - luma(translated), row-major.
std::vector<double> foreground_scores(const Image& translated);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

/// Threshold sweep over the distinct scores (descending, ties grouped) with
/// trapezoidal area. `truth` is nonzero for positives.
RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// Formats with 9 significant digits.
std::string format_sig9(double v);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace xnet
