#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "xnet/error.hpp"
#include "xnet/eval.hpp"

using namespace xnet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_psd(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a * a.transpose();
}

// Pairwise (Mann-Whitney) AUC: ties between a positive and a negative count half.
double auc_by_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!t[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t[j]) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

Image solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(w, h, 3);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[3 * i] = r;
    img.pixels[3 * i + 1] = g;
    img.pixels[3 * i + 2] = b;
  }
  return img;
}

}  // namespace

TEST_CASE("feature extraction") {
  const FeatureExtractor ds = downsample_extractor();
  const Tensor gray = Tensor::full({3, 3, 16, 16}, 0.25f);
  const FeatureSet fs = extract_features(gray, ds);
  CHECK(fs.features.rows() == 3);
  CHECK(fs.features.cols() == 192);
  CHECK(fs.extractor == ds.id);
  CHECK(fs.features.row(0) == fs.features.row(2));
  CHECK(fs.features(1, 100) == doctest::Approx(0.25));
  CHECK_THROWS_AS(extract_features(Tensor::full({3, 16, 16}, 0.f), ds), DimensionError);
}

TEST_CASE("fit_gaussian") {
  FeatureSet two{MatrixXd(2, 2), "t"};
  two.features << 0, 0, 2, 2;
  const GaussianSummary g = fit_gaussian(two);
  const double eps = 1e-6 * 4.0 / 2.0;
  CHECK(g.mean(0) == 1.0);
  CHECK(g.mean(1) == 1.0);
  CHECK(g.cov(0, 0) == doctest::Approx(2.0 + eps).epsilon(1e-14));
  CHECK(g.cov(0, 1) == 2.0);
  CHECK(g.cov(1, 1) == doctest::Approx(2.0 + eps).epsilon(1e-14));

  FeatureSet same{MatrixXd::Constant(5, 3, 7.0), "t"};
  const GaussianSummary s = fit_gaussian(same);
  CHECK(s.mean == VectorXd::Constant(3, 7.0));
  CHECK(s.cov.isDiagonal());
  CHECK(s.cov.diagonal().maxCoeff() >= 0.0);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 3.0);
  FeatureSet r{MatrixXd(40, 6), "t"};
  for (Eigen::Index i = 0; i < r.features.size(); ++i) r.features.data()[i] = n(rng);
  const GaussianSummary gr = fit_gaussian(r);
  CHECK((gr.cov - gr.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  // Few samples relative to d still give a positive definite covariance.
  FeatureSet thin{r.features.topRows(3), "t"};
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(fit_gaussian(thin).cov);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("matrix square root") {
  CHECK(matrix_sqrt_psd(MatrixXd::Identity(5, 5)).isApprox(MatrixXd::Identity(5, 5), 1e-14));
  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  const MatrixXd r = matrix_sqrt_psd(d);
  CHECK(r(0, 0) == doctest::Approx(2.0));
  CHECK(r(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(r(0, 1)) < 1e-14);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MatrixXd m = random_psd(16, seed);
    const MatrixXd root = matrix_sqrt_psd(m);
    CHECK((root * root - m).norm() <= 1e-6 * m.norm());
    CHECK((root - root.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(root);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
  // Rank-deficient input with round-off negatives still yields a real root.
  MatrixXd v(3, 1);
  v << 1, 2, 3;
  const MatrixXd rank1 = v * v.transpose();
  const MatrixXd rr = matrix_sqrt_psd(rank1);
  CHECK(rr.allFinite());
  CHECK((rr * rr - rank1).norm() <= 1e-6 * rank1.norm());
}

TEST_CASE("Frechet distance closed forms") {
  GaussianSummary a{VectorXd::Zero(4), MatrixXd::Identity(4, 4)};
  GaussianSummary b{VectorXd::Constant(4, 3.0), MatrixXd::Identity(4, 4)};
  CHECK(frechet_distance(a, b) == doctest::Approx(36.0).epsilon(1e-6));
  CHECK(frechet_distance(a, a) <= 1e-8);

  // Commuting covariances: trace term is sum (sqrt(x) - sqrt(y))^2.
  for (std::size_t d : {2u, 8u, 16u}) {
    std::mt19937_64 rng(d);
    std::uniform_real_distribution<double> u(0.1, 4.0);
    GaussianSummary p{VectorXd::Zero(d), MatrixXd::Zero(d, d)};
    GaussianSummary q{VectorXd::Zero(d), MatrixXd::Zero(d, d)};
    double expected = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      p.mean(i) = u(rng);
      q.mean(i) = u(rng);
      p.cov(i, i) = u(rng);
      q.cov(i, i) = u(rng);
      expected += std::pow(p.mean(i) - q.mean(i), 2) + std::pow(std::sqrt(p.cov(i, i)) - std::sqrt(q.cov(i, i)), 2);
    }
    // Rotate both by the same orthogonal matrix; the distance is invariant.
    const MatrixXd qr = Eigen::HouseholderQR<MatrixXd>(random_psd(d, d + 100)).householderQ();
    p.cov = qr * p.cov * qr.transpose();
    q.cov = qr * q.cov * qr.transpose();
    p.mean = qr * p.mean;
    q.mean = qr * q.mean;
    CHECK(frechet_distance(p, q) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("Frechet distance symmetry, identity and dimension checks") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    GaussianSummary p{VectorXd(6), random_psd(6, seed + 10)};
    GaussianSummary q{VectorXd(6), random_psd(6, seed + 20)};
    for (int i = 0; i < 6; ++i) {
      p.mean(i) = n(rng);
      q.mean(i) = n(rng);
    }
    CHECK(std::abs(frechet_distance(p, q) - frechet_distance(q, p)) <= 1e-8);
    CHECK(frechet_distance(p, q) > 0.0);
    CHECK(frechet_distance(p, p) <= 1e-8);
  }
  GaussianSummary small{VectorXd::Zero(2), MatrixXd::Identity(2, 2)};
  GaussianSummary big{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
  CHECK_THROWS_AS(frechet_distance(small, big), DimensionError);
}

TEST_CASE("sampled Gaussians approach the analytic distance") {
  const std::size_t d = 8, n = 10000;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  // Shared eigenbasis, so the analytic value has a closed form.
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(random_psd(d, 3)).householderQ();
  VectorXd v1(d), v2(d);
  double analytic = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    v1(k) = 0.5 + 0.25 * k;
    v2(k) = 2.0 - 0.2 * k;
    analytic += 0.25 + std::pow(std::sqrt(v1(k)) - std::sqrt(v2(k)), 2);
  }
  GaussianSummary g1{VectorXd::Zero(d), q * v1.asDiagonal() * q.transpose()};
  GaussianSummary g2{q * VectorXd::Constant(d, 0.5), q * v2.asDiagonal() * q.transpose()};
  auto sample = [&](const GaussianSummary& g) {
    const MatrixXd l = g.cov.llt().matrixL();
    FeatureSet fs{MatrixXd(n, d), "s"};
    for (std::size_t i = 0; i < n; ++i) {
      VectorXd e(d);
      for (std::size_t k = 0; k < d; ++k) e(k) = z(rng);
      fs.features.row(i) = (g.mean + l * e).transpose();
    }
    return fs;
  };
  CHECK(frechet_distance(g1, g2) == doctest::Approx(analytic).epsilon(1e-9));
  const double sampled = frechet_distance(fit_gaussian(sample(g1)), fit_gaussian(sample(g2)));
  MESSAGE("analytic " << analytic << " sampled " << sampled);
  CHECK(sampled == doctest::Approx(analytic).epsilon(0.05));
}

TEST_CASE("fid of a set with itself is zero") {
  std::mt19937_64 rng(3);
  const Tensor x = testing::random_tensor({6, 3, 16, 16}, rng).cast<float>();
  const double self = fid(x, x, downsample_extractor());
  MESSAGE("FID(X,X) = " << self);
  CHECK(self <= 1e-8);
  const Tensor y = testing::random_tensor({6, 3, 16, 16}, rng).cast<float>();
  CHECK(fid(x, y, downsample_extractor()) > 0.0);
}

TEST_CASE("latent PCA") {
  // Rank-1 latent: every position is the same vector times a varying scalar.
  const std::size_t c = 5, h = 3, w = 4;
  std::vector<float> v = {0.5f, -1.f, 2.f, 0.25f, 1.f};
  Tensor z = Tensor::full({1, c, h, w}, 0.f);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t p = 0; p < h * w; ++p) z.mutable_data()[k * h * w + p] = v[k] * (1.0f + p);
  const LatentPca pca = latent_pca(z);
  CHECK(pca.variances(0) > 0.0);
  CHECK(pca.variances(1) <= 1e-9 * pca.variances(0));
  CHECK(pca.variances(2) <= 1e-9 * pca.variances(0));
  CHECK((pca.components * pca.components.transpose() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-6);
  const Image viz = latent_pca_viz(z);
  CHECK(viz.width == w);
  CHECK(viz.height == h);
  CHECK(viz.channels == 3);
  std::uint8_t lo = 255, hi = 0;
  for (std::size_t p = 0; p < h * w; ++p) {
    lo = std::min(lo, viz.pixels[3 * p]);
    hi = std::max(hi, viz.pixels[3 * p]);
    CHECK(viz.pixels[3 * p + 1] == viz.pixels[1]);
    CHECK(viz.pixels[3 * p + 2] == viz.pixels[2]);
  }
  CHECK(lo == 0);
  CHECK(hi == 255);

  std::mt19937_64 rng(5);
  const Tensor r = testing::random_tensor({2, 8, 4, 4}, rng).cast<float>();
  const LatentPca rp = latent_pca(r, 1);
  CHECK((rp.components * rp.components.transpose() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(rp.variances(0) >= rp.variances(1));
  CHECK(rp.variances(1) >= rp.variances(2));

  CHECK_THROWS_AS(latent_pca(Tensor::full({1, 4, 1, 2}, 1.f)), DimensionError);
}

TEST_CASE("latent magnitude map") {
  const Image zero = latent_magnitude_map(Tensor::full({1, 4, 3, 3}, 0.f));
  CHECK(zero.channels == 1);
  for (auto p : zero.pixels) CHECK(p == 0);
  Tensor z = Tensor::full({1, 2, 1, 3}, 0.f);
  z.mutable_data()[1] = 3.f;  // channel 0, x=1
  z.mutable_data()[4] = 4.f;  // channel 1, x=1 -> norm 5
  z.mutable_data()[5] = 1.f;  // channel 1, x=2 -> norm 1
  const Image m = latent_magnitude_map(z);
  CHECK(m.pixels == std::vector<std::uint8_t>{0, 255, 51});
}

TEST_CASE("luma threshold and foreground extraction") {
  static_assert(!nearly_white(243, 243, 243));
  static_assert(nearly_white(244, 244, 244));
  static_assert(luma_milli(255, 255, 255) == 255000);
  const Image original = solid(2, 2, 10, 20, 30);
  CHECK(foreground_extract(original, solid(2, 2, 243, 243, 243)) == original);
  CHECK(foreground_extract(original, solid(2, 2, 244, 244, 244)) == solid(2, 2, 255, 255, 255));
  CHECK(foreground_extract(original, solid(2, 2, 250, 250, 250)) == solid(2, 2, 255, 255, 255));
  CHECK(foreground_extract(original, solid(2, 2, 255, 255, 255)) == solid(2, 2, 255, 255, 255));
  CHECK_THROWS_AS(foreground_extract(original, solid(3, 2, 0, 0, 0)), DimensionError);

  // Every output pixel is white or the original, for every gray level and channel mix.
  Image orig(256, 3, 3), trans(256, 3, 3);
  for (std::size_t x = 0; x < 256; ++x) {
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t k = 0; k < 3; ++k) {
        orig.at(x, y, k) = static_cast<std::uint8_t>((x * 7 + y * 3 + k) & 0xff);
        trans.at(x, y, k) = static_cast<std::uint8_t>(k == y ? x : 255 - (x % 3));
      }
    }
  }
  const Image out = foreground_extract(orig, trans);
  for (std::size_t p = 0; p < 256 * 3; ++p) {
    const bool white = out.pixels[3 * p] == 255 && out.pixels[3 * p + 1] == 255 && out.pixels[3 * p + 2] == 255;
    const bool kept = std::equal(out.pixels.begin() + 3 * p, out.pixels.begin() + 3 * p + 3, orig.pixels.begin() + 3 * p);
    CHECK((white || kept));
    const bool should_white = nearly_white(trans.pixels[3 * p], trans.pixels[3 * p + 1], trans.pixels[3 * p + 2]);
    if (!should_white) CHECK(kept);
  }
  const auto scores = foreground_scores(solid(1, 1, 100, 100, 100));
  CHECK(scores.size() == 1);
  CHECK(scores[0] == doctest::Approx(155.0));
}

TEST_CASE("ROC and AUC") {
  SUBCASE("scores equal to truth give 1") {
    const std::vector<std::uint8_t> t = {1, 0, 1, 1, 0, 0};
    const std::vector<double> s(t.begin(), t.end());
    const RocCurve c = roc_auc(s, t);
    CHECK(c.auc == 1.0);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
  }
  SUBCASE("constant scores give one diagonal segment") {
    const std::vector<std::uint8_t> t = {1, 0, 1, 0, 0};
    const std::vector<double> s(5, 0.3);
    const RocCurve c = roc_auc(s, t);
    CHECK(c.auc == 0.5);
    CHECK(c.points.size() == 2);
  }
  SUBCASE("random scores and a pairwise oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(10000);
    std::vector<std::uint8_t> t(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::floor(u(rng) * 50.0);  // plenty of ties
      t[i] = u(rng) < 0.3;
    }
    const RocCurve c = roc_auc(s, t);
    CHECK(c.auc == doctest::Approx(0.5).epsilon(0.04));
    CHECK(c.auc == doctest::Approx(auc_by_pairs(s, t)).epsilon(1e-9));
    // Strictly monotone transforms leave the AUC unchanged.
    std::vector<double> s2(s.size()), s3(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s2[i] = std::exp(0.1 * s[i]) - 4.0;
      s3[i] = 3.0 * s[i] * s[i] * s[i] + 1.0;
    }
    CHECK(roc_auc(s2, t).auc == doctest::Approx(c.auc).epsilon(1e-12));
    CHECK(roc_auc(s3, t).auc == doctest::Approx(c.auc).epsilon(1e-12));
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
  SUBCASE("small hand example with ties") {
    // scores 3(+) 2(+) 2(-) 1(-): pairs 1 + 1 + 0.5 + 1 = 3.5 of 4.
    const std::vector<double> s = {3, 2, 2, 1};
    const std::vector<std::uint8_t> t = {1, 1, 0, 0};
    CHECK(roc_auc(s, t).auc == doctest::Approx(0.875));
  }
  const std::vector<double> s = {1, 2};
  CHECK_THROWS_AS(roc_auc(s, std::vector<std::uint8_t>{1, 1}), DataError);
  CHECK_THROWS_AS(roc_auc(s, std::vector<std::uint8_t>{1}), DimensionError);
}

TEST_CASE("ROC CSV output") {
  CHECK(format_sig9(1.0 / 3.0) == "0.333333333");
  CHECK(format_sig9(0.5) == "0.5");
  const std::vector<double> s = {0.9, 0.1};
  const std::vector<std::uint8_t> t = {1, 0};
  const auto path = std::filesystem::temp_directory_path() / "xnet_test_roc.csv";
  write_roc_csv(path, roc_auc(s, t));
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  CHECK(text.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(text.find("# auc=1\n") != std::string::npos);
}
