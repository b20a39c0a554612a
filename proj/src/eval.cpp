#include "xnet/eval.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xnet/error.hpp"

namespace xnet {

FeatureExtractor downsample_extractor() {
  return {"downsample8", [](const Tensor& images) {
            if (images.rank() != 4) {
              throw DimensionError("downsample8: expected [N,C,H,W], got " +
                                   shape_str(images.shape()));
            }
            const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2),
                              w = images.dim(3);
            const std::size_t d = c * kDownsampleSide * kDownsampleSide;
            Eigen::MatrixXd out(n, d);
            std::vector<float> plane(kDownsampleSide * kDownsampleSide);
            const auto data = images.data();
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                area_resample(data.subspan((i * c + ch) * h * w, h * w), w, h, plane,
                              kDownsampleSide, kDownsampleSide);
                for (std::size_t k = 0; k < plane.size(); ++k) {
                  out(i, ch * plane.size() + k) = plane[k];
                }
              }
            }
            return out;
          }};
}

FeatureExtractor encoder_extractor(const Module<float>& encoder, std::string id) {
  return {std::move(id), [&encoder](const Tensor& images) {
            const Tensor z = encoder.forward(images);
            const std::size_t n = z.dim(0), c = z.dim(1), plane = z.dim(2) * z.dim(3);
            Eigen::MatrixXd out(n, c);
            const auto data = z.data();
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (std::size_t k = 0; k < plane; ++k) s += data[(i * c + ch) * plane + k];
                out(i, ch) = s / static_cast<double>(plane);
              }
            }
            return out;
          }};
}

FeatureSet extract_features(const Tensor& images, const FeatureExtractor& extractor) {
  return {extractor.fn(images), extractor.id};
}

GaussianSummary fit_gaussian(const FeatureSet& fs) {
  const auto n = fs.features.rows();
  const auto d = fs.features.cols();
  if (n < 1 || d < 1) throw DataError("fit_gaussian: empty feature set");
  GaussianSummary g;
  g.mean = fs.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = fs.features.rowwise() - g.mean.transpose();
  if (n > 1) {
    g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  } else {
    g.cov = Eigen::MatrixXd::Zero(d, d);
  }
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  const double eps = 1e-6 * g.cov.trace() / static_cast<double>(d);
  g.cov.diagonal().array() += eps;
  return g;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("matrix_sqrt_psd: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("matrix_sqrt_psd: eigendecomposition failed");
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd r = es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2) {
  if (g1.mean.size() != g2.mean.size()) {
    throw DimensionError("frechet_distance: feature dimensions differ (" +
                         std::to_string(g1.mean.size()) + " vs " + std::to_string(g2.mean.size()) +
                         ")");
  }
  const double mean_term = (g1.mean - g2.mean).squaredNorm();
  // tr sqrt(S1^1/2 S2 S1^1/2) equals the sum of singular values of
  // S1^1/2 S2^1/2, which avoids taking a square root of a squared spectrum.
  const Eigen::MatrixXd prod = matrix_sqrt_psd(g1.cov) * matrix_sqrt_psd(g2.cov);
  const double cross_trace = Eigen::BDCSVD<Eigen::MatrixXd>(prod).singularValues().sum();
  const double d = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * cross_trace;
  return std::max(0.0, d);
}

double fid(const Tensor& real, const Tensor& fake, const FeatureExtractor& extractor) {
  return frechet_distance(fit_gaussian(extract_features(real, extractor)),
                          fit_gaussian(extract_features(fake, extractor)));
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd latent_samples(const Tensor& z, std::size_t index) {
  if (z.rank() != 4 || index >= z.dim(0)) {
    throw DimensionError("latent visualization: expected [N,C,H,W] with index < N, got " +
                         shape_str(z.shape()));
  }
  const std::size_t c = z.dim(1), plane = z.dim(2) * z.dim(3);
  Eigen::MatrixXd x(plane, c);
  const auto data = z.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) x(p, ch) = data[(index * c + ch) * plane + p];
  }
  return x;
}

std::uint8_t scale_to_byte(double v, double lo, double hi) {
  if (!(hi > lo)) return 0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (v - lo) / (hi - lo)), 0L, 255L));
}

}  // namespace

LatentPca latent_pca(const Tensor& z, std::size_t index) {
  Eigen::MatrixXd x = latent_samples(z, index);
  if (x.rows() < 3) {
    throw DimensionError("latent_pca: needs at least 3 spatial positions, got " +
                         std::to_string(x.rows()));
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("latent_pca: eigendecomposition failed");
  const auto c = cov.rows();
  const Eigen::Index k = std::min<Eigen::Index>(3, c);
  LatentPca out;
  out.height = z.dim(2);
  out.width = z.dim(3);
  out.components = Eigen::MatrixXd::Zero(3, c);
  out.variances = Eigen::VectorXd::Zero(3);
  for (Eigen::Index i = 0; i < k; ++i) {
    // Eigen sorts ascending.
    out.components.row(i) = es.eigenvectors().col(c - 1 - i).transpose();
    out.variances(i) = std::max(0.0, es.eigenvalues()(c - 1 - i));
  }
  out.scores = x * out.components.transpose();
  return out;
}

Image latent_pca_viz(const Tensor& z, std::size_t index) {
  const LatentPca pca = latent_pca(z, index);
  Image img(pca.width, pca.height, 3);
  const double top = pca.variances(0);
  for (int ch = 0; ch < 3; ++ch) {
    // Directions carrying no variance are numerical noise; render flat.
    if (!(pca.variances(ch) > 1e-12 * std::max(top, 1e-300))) continue;
    const double lo = pca.scores.col(ch).minCoeff();
    const double hi = pca.scores.col(ch).maxCoeff();
    for (Eigen::Index p = 0; p < pca.scores.rows(); ++p) {
      img.pixels[static_cast<std::size_t>(p) * 3 + ch] = scale_to_byte(pca.scores(p, ch), lo, hi);
    }
  }
  return img;
}

Image latent_magnitude_map(const Tensor& z, std::size_t index) {
  const Eigen::MatrixXd x = latent_samples(z, index);
  const Eigen::VectorXd mag = x.rowwise().norm();
  Image img(z.dim(3), z.dim(2), 1);
  const double lo = mag.minCoeff(), hi = mag.maxCoeff();
  for (Eigen::Index p = 0; p < mag.size(); ++p) {
    img.pixels[static_cast<std::size_t>(p)] = scale_to_byte(mag(p), lo, hi);
  }
  return img;
}

// ---------------------------------------------------------------------------

Image foreground_extract(const Image& original, const Image& translated) {
  if (original.width != translated.width || original.height != translated.height ||
      original.channels != 3 || translated.channels != 3) {
    throw DimensionError("foreground_extract: original and translated must be RGB of equal size");
  }
  Image out = original;
  for (std::size_t i = 0; i < original.width * original.height; ++i) {
    const std::uint8_t* t = &translated.pixels[i * 3];
    if (nearly_white(t[0], t[1], t[2])) {
      out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = 255;
    }
  }
  return out;
}

std::vector<double> foreground_scores(const Image& translated) {
  if (translated.channels != 3) throw DimensionError("foreground_scores: expected RGB image");
  std::vector<double> s(translated.width * translated.height);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::uint8_t* t = &translated.pixels[i * 3];
    s[i] = 255.0 - luma_milli(t[0], t[1], t[2]) / 1000.0;
  }
  return s;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) {
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(truth.size()) + " labels");
  }
  std::size_t pos = 0;
  for (std::uint8_t t : truth) pos += t ? 1 : 0;
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: need both positive and negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (truth[order[i]]) ++tp; else ++fp;
      ++i;
    }
    const RocPoint p{s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
    const RocPoint& prev = curve.points.back();
    area += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) * 0.5;
    curve.points.push_back(p);
  }
  curve.auc = area;
  return curve;
}

std::string format_sig9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::string text = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    text += format_sig9(p.threshold) + "," + format_sig9(p.fpr) + "," + format_sig9(p.tpr) + "\n";
  }
  text += "# auc=" + format_sig9(curve.auc) + "\n";
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

}  // namespace xnet
