#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "xnet/error.hpp"

using namespace xnet;
using testing::grad_check;
using testing::random_tensor;

namespace {

constexpr double kOpTol = 1e-3;

double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// sum(x * w) for a fixed random w, as n/4 * (mean((x+w)^2) - mean((x-w)^2)).
TensorD weighted(const TensorD& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const TensorD w = random_tensor(x.shape(), rng);
  const double n = static_cast<double>(x.numel());
  const TensorD plus = sq_mean(add(x, w), 0.0);
  const TensorD minus = sq_mean(sub(x, w), 0.0);
  return scale(sub(plus, minus), n / 4.0);
}

}  // namespace

TEST_CASE("conv2d examples") {
  const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor identity({1, 1, 1, 1}, {1.f});
  const Tensor y = conv2d(x, identity);
  CHECK(y.shape() == x.shape());
  CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));

  const Tensor ones = Tensor::full({1, 1, 4, 4}, 1.f);
  const Tensor k = Tensor::full({1, 1, 2, 2}, 1.f);
  const Tensor s = conv2d(ones, k, 2);
  CHECK(s.shape() == Shape{1, 1, 2, 2});
  for (float v : s.data()) CHECK(v == 4.f);
}

TEST_CASE("conv2d reports the offending axes") {
  const Tensor x = Tensor::zeros({1, 2, 5, 5});
  const Tensor k = Tensor::zeros({3, 4, 3, 3});
  try {
    conv2d(x, k);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("axis 1") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3})), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 5}), k), DimensionError);
}

TEST_CASE("conv2d gradient matches finite differences") {
  std::mt19937_64 rng(7);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    const auto r = grad_check(
        [&](const std::vector<TensorD>& in) { return weighted(conv2d(in[0], in[1], stride, pad), 3); },
        {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)});
    CAPTURE(stride);
    CAPTURE(pad);
    CHECK(r.rel_error < kOpTol);
  }
  const auto plain = grad_check([](const std::vector<TensorD>& in) { return sum(conv2d(in[0], in[1])); },
                                {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)});
  CHECK(plain.rel_error < kOpTol);
}

TEST_CASE("conv2d_transpose: identity, adjointness, gradient") {
  const Tensor x({1, 1, 2, 2}, {1, -2, 3, 4});
  const Tensor y = conv2d_transpose(x, Tensor({1, 1, 1, 1}, {1.f}));
  CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
  CHECK_THROWS_AS(conv2d_transpose(x, Tensor::zeros({1, 1, 3, 3}), 2, 1, 2), DimensionError);

  std::mt19937_64 rng(9);
  struct Case {
    std::size_t h, k, stride, pad, out_pad;
  };
  for (const Case c : {Case{5, 3, 1, 1, 0}, Case{4, 3, 2, 1, 1}, Case{7, 4, 2, 1, 0},
                       Case{6, 3, 2, 0, 1}}) {
    const std::size_t cin = 3, cout = 2;
    const TensorD k = random_tensor({cout, cin, c.k, c.k}, rng);
    const std::size_t out = conv_out_extent(c.h, c.k, c.stride, c.pad);
    // The transpose of a conv from h maps out -> h only when out_pad fills
    // the remainder; pick the matching output padding.
    const std::size_t op = c.h - conv_transpose_out_extent(out, c.k, c.stride, c.pad, 0);
    REQUIRE(op < c.stride);
    const TensorD x = random_tensor({2, cin, c.h, c.h}, rng);
    const TensorD yv = random_tensor({2, cout, out, out}, rng);
    // conv2d kernel [Cout,Cin] is the transpose kernel [Cin',Cout'] with Cin'=Cout.
    const TensorD lhs = conv2d(x, k, c.stride, c.pad);
    const TensorD rhs = conv2d_transpose(yv, k, c.stride, c.pad, op);
    REQUIRE(rhs.shape() == x.shape());
    CHECK(dot(lhs, yv) == doctest::Approx(dot(x, rhs)).epsilon(1e-10));

    const auto r = grad_check(
        [&](const std::vector<TensorD>& in) {
          return weighted(conv2d_transpose(in[0], in[1], c.stride, c.pad, c.out_pad), 5);
        },
        {random_tensor({1, cout, c.h, c.h}, rng), random_tensor({cout, cin, c.k, c.k}, rng)});
    CHECK(r.rel_error < kOpTol);
  }
}

TEST_CASE("conv adjointness holds in single precision within 1e-5") {
  std::mt19937_64 rng(17);
  const Tensor k = random_tensor({4, 3, 3, 3}, rng).cast<float>();
  const Tensor x = random_tensor({1, 3, 8, 8}, rng).cast<float>();
  const Tensor y = random_tensor({1, 4, 4, 4}, rng).cast<float>();
  const Tensor cx = conv2d(x, k, 2, 1);
  const Tensor ty = conv2d_transpose(y, k, 2, 1, 1);
  double lhs = 0.0, rhs = 0.0, scale_ref = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += double(cx[i]) * y[i];
  for (std::size_t i = 0; i < x.numel(); ++i) {
    rhs += double(x[i]) * ty[i];
    scale_ref += std::abs(double(x[i]) * ty[i]);
  }
  CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, scale_ref));
}

TEST_CASE("shape table for network stride/padding combinations") {
  struct Row {
    std::size_t in, k, stride, pad, expected;
  };
  // stem 7x7 (after reflect 3), downsample 3x3/s2/p1, residual 3x3 (after
  // reflect 1), PatchGAN 4x4/s2/p1 and 4x4/s1/p1.
  for (const Row r : {Row{262, 7, 1, 0, 256}, Row{22, 7, 1, 0, 16}, Row{256, 3, 2, 1, 128},
                      Row{128, 3, 2, 1, 64}, Row{66, 3, 1, 0, 64}, Row{16, 3, 2, 1, 8},
                      Row{256, 4, 2, 1, 128}, Row{32, 4, 1, 1, 31}, Row{31, 4, 1, 1, 30}}) {
    CHECK(conv_out_extent(r.in, r.k, r.stride, r.pad) == r.expected);
    const Tensor out = conv2d(Tensor::zeros({1, 1, r.in, r.in}), Tensor::zeros({1, 1, r.k, r.k}),
                              r.stride, r.pad);
    CHECK(out.dim(2) == r.expected);
  }
  // Decoder: 3x3/s2/p1/op1 doubles the side.
  for (std::size_t in : {2u, 4u, 8u, 16u, 64u}) {
    CHECK(conv_transpose_out_extent(in, 3, 2, 1, 1) == 2 * in);
    const Tensor out = conv2d_transpose(Tensor::zeros({1, 1, in, in}), Tensor::zeros({1, 1, 3, 3}),
                                        2, 1, 1);
    CHECK(out.dim(3) == 2 * in);
  }
}

TEST_CASE("instance norm examples and statistics") {
  const TensorD x({1, 1, 1, 4}, {1, 2, 3, 4});
  const TensorD y = instance_norm(x, TensorD::full({1}, 1.0), TensorD::zeros({1}), 0.0);
  const double sd = std::sqrt(1.25);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx((x[i] - 2.5) / sd));

  const Tensor c = Tensor::full({1, 2, 3, 3}, 5.f);
  const Tensor z = instance_norm(c, Tensor::full({2}, 1.f), Tensor::zeros({2}));
  for (float v : z.data()) CHECK(v == 0.f);

  std::mt19937_64 rng(3);
  const Tensor r = random_tensor({2, 3, 6, 6}, rng, -4.0, 9.0).cast<float>();
  const Tensor n = instance_norm(r, Tensor::full({3}, 1.f), Tensor::zeros({3}));
  for (std::size_t p = 0; p < 6; ++p) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 36; ++i) m += n[p * 36 + i];
    m /= 36;
    for (std::size_t i = 0; i < 36; ++i) v += (n[p * 36 + i] - m) * (n[p * 36 + i] - m);
    v /= 36;
    CHECK(std::abs(m) <= 1e-5);
    CHECK(std::abs(v - 1.0) <= 1e-3);
  }
  CHECK_THROWS_AS(instance_norm(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1}), Tensor::zeros({1})),
                  DimensionError);
}

TEST_CASE("instance norm gradient") {
  std::mt19937_64 rng(5);
  const auto r = grad_check(
      [](const std::vector<TensorD>& in) {
        return weighted(instance_norm(in[0], in[1], in[2]), 8);
      },
      {random_tensor({2, 3, 4, 3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  CHECK(r.rel_error < kOpTol);
}

TEST_CASE("reflection padding") {
  const Tensor row({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor p = pad_reflect(row, 1);
  REQUIRE(p.shape() == Shape{1, 1, 4, 5});
  // Row 1 of the padded tensor is the original first row reflected.
  const float expect_mid[] = {2, 1, 2, 3, 2};
  for (std::size_t i = 0; i < 5; ++i) CHECK(p[5 + i] == expect_mid[i]);
  // Row 0 mirrors original row 1.
  const float expect_top[] = {5, 4, 5, 6, 5};
  for (std::size_t i = 0; i < 5; ++i) CHECK(p[i] == expect_top[i]);
  CHECK(pad_reflect(row, 0).same_storage(row));
  CHECK_THROWS_AS(pad_reflect(row, 2), DimensionError);

  std::mt19937_64 rng(6);
  const auto r = grad_check(
      [](const std::vector<TensorD>& in) { return weighted(pad_reflect(in[0], 2), 4); },
      {random_tensor({1, 2, 4, 5}, rng)});
  CHECK(r.rel_error < kOpTol);
}

TEST_CASE("activations") {
  CHECK(tanh(Tensor::scalar(0.f)).item() == 0.f);
  CHECK(leaky_relu(Tensor::scalar(-2.f), 0.2f).item() == doctest::Approx(-0.4f));
  CHECK(relu(Tensor::scalar(-2.f)).item() == 0.f);
  CHECK(std::isnan(relu(Tensor::scalar(std::nanf(""))).item()));
  CHECK(std::isnan(leaky_relu(Tensor::scalar(std::nanf("")), 0.2f).item()));
  const Tensor big = tanh(Tensor({2}, {50.f, -50.f}));
  CHECK(big[0] <= 1.f);
  CHECK(big[1] >= -1.f);

  // leaky_relu subgradient at 0 is the slope.
  TensorD z({1}, {0.0});
  z.set_grad_enabled(true);
  Tape<double> tape;
  TensorD out;
  {
    Recording<double> rec(tape);
    out = sum(leaky_relu(z, 0.2));
  }
  backward(out, tape);
  CHECK(z.grad()[0] == doctest::Approx(0.2));

  std::mt19937_64 rng(8);
  // Keep samples away from the kink where central differences are invalid.
  TensorD x = random_tensor({3, 7}, rng);
  for (auto& v : x.mutable_data()) {
    if (std::abs(v) < 0.01) v += 0.05;
  }
  CHECK(grad_check([](const auto& in) { return weighted(relu(in[0]), 1); }, {x.clone()}).rel_error <
        kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted(leaky_relu(in[0], 0.2), 1); }, {x.clone()})
            .rel_error < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted(tanh(in[0]), 1); }, {x.clone()}).rel_error <
        kOpTol);
}

TEST_CASE("elementwise and reduction suite") {
  const Tensor a({2}, {1, 2}), b({2}, {0, 4});
  CHECK(l1_mean(a, a).item() == 0.f);
  CHECK(l1_mean(a, b).item() == doctest::Approx(1.5));
  CHECK(sq_mean(Tensor({2}, {0, 2}), 1.f).item() == doctest::Approx(1.0));
  CHECK(add(a, b)[1] == 6.f);
  CHECK(sub(a, b)[1] == -2.f);
  CHECK(scale(a, 3.f)[1] == 6.f);
  CHECK(add_scalar(a, 0.5f)[0] == 1.5f);
  CHECK(sum(a).item() == 3.f);
  CHECK(mean(b).item() == 2.f);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(l1_mean(a, Tensor::zeros({1, 2})), DimensionError);

  std::mt19937_64 rng(10);
  const auto in2 = [&] {
    return std::vector<TensorD>{random_tensor({4, 5}, rng), random_tensor({4, 5}, rng)};
  };
  CHECK(grad_check([](const auto& in) { return l1_mean(in[0], in[1]); }, in2()).rel_error < kOpTol);
  CHECK(grad_check([](const auto& in) { return sq_mean(in[0], 0.7); }, in2()).rel_error < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted(add(in[0], in[1]), 2); }, in2()).rel_error <
        kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted(sub(in[0], in[1]), 2); }, in2()).rel_error <
        kOpTol);
  CHECK(grad_check([](const auto& in) { return mean(scale(add_scalar(in[0], 2.0), -1.5)); }, in2())
            .rel_error < kOpTol);

  const auto bias = grad_check(
      [](const auto& in) { return weighted(add_channel_bias(in[0], in[1]), 3); },
      {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng)});
  CHECK(bias.rel_error < kOpTol);
}

TEST_CASE("sum gradient is all ones and detach cuts the graph") {
  TensorD x({2, 2}, {3, -1, 2, 7});
  x.set_grad_enabled(true);
  Tape<double> tape;
  TensorD loss;
  {
    Recording<double> rec(tape);
    loss = add(sum(x), sum(detach(scale(x, 4.0))));
  }
  backward(loss, tape);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("tape replay is bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(42);
    TensorD x = random_tensor({1, 2, 6, 6}, rng);
    TensorD k = random_tensor({3, 2, 3, 3}, rng);
    x.set_grad_enabled(true);
    k.set_grad_enabled(true);
    Tape<double> tape;
    TensorD loss;
    {
      Recording<double> rec(tape);
      loss = sq_mean(tanh(instance_norm(conv2d(pad_reflect(x, 1), k), TensorD::full({3}, 1.0),
                                        TensorD::zeros({3}))),
                     0.3);
    }
    backward(loss, tape);
    return std::vector<double>(k.grad().begin(), k.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("finite inputs give finite outputs") {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({1, 2, 6, 6}, rng, -100.0, 100.0).cast<float>();
  const Tensor k = random_tensor({2, 2, 3, 3}, rng).cast<float>();
  for (const Tensor& t : {conv2d(x, k, 1, 1), conv2d_transpose(x, k, 2, 1, 1),
                          instance_norm(x, Tensor::full({2}, 1.f), Tensor::zeros({2})),
                          pad_reflect(x, 2), tanh(x), relu(x), leaky_relu(x, 0.2f)}) {
    for (float v : t.data()) CHECK(std::isfinite(v));
  }
}
