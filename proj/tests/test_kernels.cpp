#include <doctest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "xnet/kernels/parallel.hpp"
#include "xnet/kernels/serial.hpp"
#include "xnet/ops.hpp"

using namespace xnet;
using kernels::ConvGeometry;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Direct-loop references.
void naive_gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
                double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += double(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = s;
    }
}

ConvGeometry geometry(std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t s,
                      std::size_t p) {
  ConvGeometry g;
  g.channels = c;
  g.height = h;
  g.width = w;
  g.kernel_h = g.kernel_w = k;
  g.stride = s;
  g.pad = p;
  g.out_h = conv_out_extent(h, k, s, p);
  g.out_w = conv_out_extent(w, k, s, p);
  return g;
}

class ThreadCount {
 public:
  explicit ThreadCount(int n) : saved_(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

}  // namespace

TEST_CASE("gemm matches a direct loop") {
  const std::size_t m = 7, n = 9, k = 5;
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<float> c(m * n, 0.f);
  kernels::serial::gemm(m, n, k, a.data(), b.data(), c.data());
  std::vector<double> ref(m * n);
  naive_gemm(m, n, k, a.data(), b.data(), ref.data());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("gemm_at and gemm_bt agree with explicit transposes") {
  const std::size_t m = 4, n = 6, k = 3;
  const auto at = random_vec(k * m, 3), b = random_vec(k * n, 4), bt = random_vec(n * k, 5);
  std::vector<float> a(m * k), b_from_bt(k * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) a[i * k + p] = at[p * m + i];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) b_from_bt[p * n + j] = bt[j * k + p];

  std::vector<float> c1(m * n, 0.f), c2(m * n, 0.f);
  kernels::serial::gemm_at(m, n, k, at.data(), b.data(), c1.data());
  kernels::serial::gemm(m, n, k, a.data(), b.data(), c2.data());
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(c2[i]));

  std::vector<float> c3(m * n, 0.f), c4(m * n, 0.f);
  kernels::serial::gemm_bt(m, n, k, a.data(), bt.data(), c3.data());
  kernels::serial::gemm(m, n, k, a.data(), b_from_bt.data(), c4.data());
  for (std::size_t i = 0; i < c3.size(); ++i) CHECK(c3[i] == doctest::Approx(c4[i]));
}

TEST_CASE("im2col places zero padding and strided samples") {
  const ConvGeometry g = geometry(1, 3, 3, 3, 2, 1);
  REQUIRE(g.out_h == 2);
  const std::vector<float> src = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<float> cols(g.patch_size() * g.out_plane());
  kernels::serial::im2col(g, src.data(), cols.data());
  // Centre tap (ky=1,kx=1) samples positions (0,0),(0,2),(2,0),(2,2).
  const float* centre = cols.data() + 4 * g.out_plane();
  CHECK(centre[0] == 1.f);
  CHECK(centre[1] == 3.f);
  CHECK(centre[2] == 7.f);
  CHECK(centre[3] == 9.f);
  // Top-left tap of output (0,0) falls in the padding.
  CHECK(cols[0] == 0.f);
}

TEST_CASE("col2im is the adjoint of im2col") {
  for (auto [c, h, w, k, s, p] : {std::array<std::size_t, 6>{2, 5, 6, 3, 1, 1},
                                 std::array<std::size_t, 6>{3, 8, 8, 4, 2, 1},
                                 std::array<std::size_t, 6>{1, 7, 5, 3, 2, 0}}) {
    const ConvGeometry g = geometry(c, h, w, k, s, p);
    const auto x = random_vec(c * h * w, 11);
    const auto y = random_vec(g.patch_size() * g.out_plane(), 12);
    std::vector<float> cols(y.size()), back(x.size(), 0.f);
    kernels::serial::im2col(g, x.data(), cols.data());
    kernels::serial::col2im(g, y.data(), back.data());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += double(cols[i]) * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x[i]) * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("parallel kernels are bitwise identical to serial for any thread count") {
  const ConvGeometry g = geometry(4, 12, 10, 3, 2, 1);
  const auto x = random_vec(g.channels * g.height * g.width, 21);
  const auto y = random_vec(g.patch_size() * g.out_plane(), 22);
  const std::size_t m = 13, n = 17, k = 11;
  const auto a = random_vec(m * k, 23), b = random_vec(k * n, 24);

  std::vector<float> cols_s(y.size()), back_s(x.size(), 0.f), gemm_s(m * n, 0.f),
      gemm_at_s(k * n, 0.f);
  kernels::serial::im2col(g, x.data(), cols_s.data());
  kernels::serial::col2im(g, y.data(), back_s.data());
  kernels::serial::gemm(m, n, k, a.data(), b.data(), gemm_s.data());
  kernels::serial::gemm_at(k, n, m, a.data(), random_vec(m * n, 25).data(), gemm_at_s.data());

  for (int threads : {1, 2, 3, 8}) {
    ThreadCount tc(threads);
    std::vector<float> cols_p(y.size()), back_p(x.size(), 0.f), gemm_p(m * n, 0.f),
        gemm_at_p(k * n, 0.f);
    kernels::parallel::im2col(g, x.data(), cols_p.data());
    kernels::parallel::col2im(g, y.data(), back_p.data());
    kernels::parallel::gemm(m, n, k, a.data(), b.data(), gemm_p.data());
    kernels::parallel::gemm_at(k, n, m, a.data(), random_vec(m * n, 25).data(), gemm_at_p.data());
    CHECK(cols_p == cols_s);
    CHECK(back_p == back_s);
    CHECK(gemm_p == gemm_s);
    CHECK(gemm_at_p == gemm_at_s);
  }
}

TEST_CASE("instance norm kernels: serial and parallel agree bitwise") {
  const std::size_t planes = 6, channels = 3, plane = 25;
  const auto x = random_vec(planes * plane, 31);
  const auto dy = random_vec(planes * plane, 32);
  const std::vector<float> gain = {1.f, 0.5f, -2.f}, bias = {0.f, 1.f, 0.25f};

  auto run = [&](auto forward, auto backward) {
    std::vector<float> xhat(x.size()), y(x.size()), inv(planes), dx(x.size(), 0.f);
    std::vector<double> dg(planes, 0.0), db(planes, 0.0);
    forward(planes, channels, plane, x.data(), gain.data(), bias.data(), 1e-5f, xhat.data(),
            y.data(), inv.data());
    backward(planes, channels, plane, xhat.data(), dy.data(), gain.data(), inv.data(), dx.data(),
             dg.data(), db.data());
    return std::make_tuple(y, dx, dg, db);
  };
  const auto s = run([](auto... a) { kernels::serial::instance_norm_forward(a...); },
                     [](auto... a) { kernels::serial::instance_norm_backward(a...); });
  ThreadCount tc(4);
  const auto p = run([](auto... a) { kernels::parallel::instance_norm_forward(a...); },
                     [](auto... a) { kernels::parallel::instance_norm_backward(a...); });
  CHECK(std::get<0>(s) == std::get<0>(p));
  CHECK(std::get<1>(s) == std::get<1>(p));
  CHECK(std::get<2>(s) == std::get<2>(p));
  CHECK(std::get<3>(s) == std::get<3>(p));
  // Each normalized plane has zero mean before the affine step.
  const auto& y = std::get<0>(s);
  for (std::size_t i = 0; i < planes; ++i) {
    const std::size_t c = i % channels;
    double m = 0.0;
    for (std::size_t k = 0; k < plane; ++k) m += y[i * plane + k];
    CHECK(m / plane == doctest::Approx(bias[c]).epsilon(1e-4));
  }
}
