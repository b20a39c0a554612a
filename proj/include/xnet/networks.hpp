#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "xnet/ops.hpp"
#include "xnet/optim.hpp"

namespace xnet {

struct GeneratorSpec {
  std::size_t in_channels = 3;
  std::size_t base_width = 64;
  std::size_t latent_channels = 256;
  std::size_t n_res_blocks = 9;
  std::size_t image_side = 256;  // must be a multiple of 4
};

struct TranslatorSpec {
  std::size_t latent_channels = 256;
  std::size_t n_res_blocks = 9;
};

/// PatchGAN: `n_downsample` stride-2 4x4 convs, then two stride-1 4x4 convs.
/// Three downsampling stages give the 70x70 receptive field.
struct DiscriminatorSpec {
  std::size_t in_channels = 3;
  std::size_t base_width = 64;
  std::size_t n_downsample = 3;
  std::size_t max_width_multiplier = 8;
};

struct BundleSpec {
  GeneratorSpec generator;
  TranslatorSpec translator;
  DiscriminatorSpec discriminator;
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

/// A network with named parameters. Parameters live as long as the module and
/// their addresses are stable.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x) const = 0;

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }
  const std::string& name() const { return name_; }

 protected:
  explicit Module(std::string name) : name_(std::move(name)) {}
  Parameter<T>* add_parameter(const std::string& local, BasicTensor<T> value) {
    params_.emplace_back(name_ + "." + local, std::move(value));
    return &params_.back();
  }

 private:
  std::string name_;
  std::deque<Parameter<T>> params_;
};

namespace layers {

template <typename T>
struct Conv {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;  // only where no norm follows
  std::size_t stride = 1;
  std::size_t zero_pad = 0;
  std::size_t reflect_pad = 0;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    BasicTensor<T> y = conv2d(reflect_pad ? pad_reflect(x, reflect_pad) : x, weight->value, stride,
                              zero_pad);
    return bias ? add_channel_bias(y, bias->value) : y;
  }
};

template <typename T>
struct ConvTranspose {
  Parameter<T>* weight = nullptr;
  std::size_t stride = 2;
  std::size_t pad = 1;
  std::size_t output_pad = 1;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return conv2d_transpose(x, weight->value, stride, pad, output_pad);
  }
};

template <typename T>
struct Norm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return instance_norm(x, gain->value, bias->value, static_cast<T>(kNormEps));
  }
};

template <typename T>
struct ResidualBlock {
  Conv<T> conv1, conv2;
  Norm<T> norm1, norm2;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    BasicTensor<T> h = relu(norm1(conv1(x)));
    return add(x, norm2(conv2(h)));
  }
};

}  // namespace layers

/// Shared construction helpers for the concrete networks.
template <typename T>
class ConvNetwork : public Module<T> {
 protected:
  explicit ConvNetwork(std::string name) : Module<T>(std::move(name)) {}

  layers::Conv<T> make_conv(std::mt19937_64& rng, const std::string& local, std::size_t cin, std::size_t cout,
                            std::size_t k, std::size_t stride, std::size_t zero_pad,
                            std::size_t reflect_pad, bool with_bias) {
    layers::Conv<T> c;
    c.weight = this->add_parameter(local + ".weight",
                                   normal_init<T>({cout, cin, k, k}, kInitStd, rng));
    if (with_bias) c.bias = this->add_parameter(local + ".bias", BasicTensor<T>::zeros({cout}));
    c.stride = stride;
    c.zero_pad = zero_pad;
    c.reflect_pad = reflect_pad;
    return c;
  }

  layers::ConvTranspose<T> make_conv_transpose(std::mt19937_64& rng, const std::string& local, std::size_t cin,
                                               std::size_t cout) {
    layers::ConvTranspose<T> c;
    c.weight = this->add_parameter(local + ".weight",
                                   normal_init<T>({cin, cout, 3, 3}, kInitStd, rng));
    return c;
  }

  layers::Norm<T> make_norm(const std::string& local, std::size_t channels) {
    layers::Norm<T> n;
    n.gain = this->add_parameter(local + ".gain", BasicTensor<T>::full({channels}, T(1)));
    n.bias = this->add_parameter(local + ".bias", BasicTensor<T>::zeros({channels}));
    return n;
  }

  layers::ResidualBlock<T> make_residual(std::mt19937_64& rng, const std::string& local, std::size_t channels) {
    layers::ResidualBlock<T> b;
    b.conv1 = make_conv(rng, local + ".conv1", channels, channels, 3, 1, 0, 1, false);
    b.norm1 = make_norm(local + ".norm1", channels);
    b.conv2 = make_conv(rng, local + ".conv2", channels, channels, 3, 1, 0, 1, false);
    b.norm2 = make_norm(local + ".norm2", channels);
    return b;
  }
};

namespace detail {
inline void require_side_multiple_of_4(const std::string& who, const Shape& s) {
  if (s.size() != 4) throw DimensionError(who + ": expected rank-4 image batch, got " + shape_str(s));
  if (s[2] % 4 != 0 || s[3] % 4 != 0) {
    throw DimensionError(who + ": spatial axes 2/3 of " + shape_str(s) + " must be divisible by 4");
  }
}
}  // namespace detail

/// 7x7/s1 conv -> two 3x3/s2 convs -> residual blocks at the latent width.
template <typename T>
class Encoder final : public ConvNetwork<T> {
 public:
  Encoder(std::string name, const GeneratorSpec& spec, std::mt19937_64& rng)
      : ConvNetwork<T>(std::move(name)), spec_(spec) {
    if (spec.image_side % 4 != 0) {
      throw DimensionError("encoder: image_side " + std::to_string(spec.image_side) +
                           " is not divisible by 4");
    }
    const std::size_t b = spec.base_width;
    stem_ = this->make_conv(rng, "conv0", spec.in_channels, b, 7, 1, 0, 3, false);
    stem_norm_ = this->make_norm("norm0", b);
    down1_ = this->make_conv(rng, "down1", b, 2 * b, 3, 2, 1, 0, false);
    down1_norm_ = this->make_norm("down1_norm", 2 * b);
    down2_ = this->make_conv(rng, "down2", 2 * b, spec.latent_channels, 3, 2, 1, 0, false);
    down2_norm_ = this->make_norm("down2_norm", spec.latent_channels);
    for (std::size_t i = 0; i < spec.n_res_blocks; ++i) {
      blocks_.push_back(this->make_residual(rng, "res" + std::to_string(i), spec.latent_channels));
    }
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) const override {
    detail::require_side_multiple_of_4(this->name(), x.shape());
    BasicTensor<T> h = relu(stem_norm_(stem_(x)));
    h = relu(down1_norm_(down1_(h)));
    h = relu(down2_norm_(down2_(h)));
    for (const auto& blk : blocks_) h = blk(h);
    return h;
  }

  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  layers::Conv<T> stem_, down1_, down2_;
  layers::Norm<T> stem_norm_, down1_norm_, down2_norm_;
  std::vector<layers::ResidualBlock<T>> blocks_;
};

/// Two 3x3/s2 transposed convs -> 7x7/s1 conv -> tanh.
template <typename T>
class Decoder final : public ConvNetwork<T> {
 public:
  Decoder(std::string name, const GeneratorSpec& spec, std::mt19937_64& rng)
      : ConvNetwork<T>(std::move(name)), spec_(spec) {
    const std::size_t b = spec.base_width;
    up1_ = this->make_conv_transpose(rng, "up1", spec.latent_channels, 2 * b);
    up1_norm_ = this->make_norm("up1_norm", 2 * b);
    up2_ = this->make_conv_transpose(rng, "up2", 2 * b, b);
    up2_norm_ = this->make_norm("up2_norm", b);
    out_ = this->make_conv(rng, "conv_out", b, spec.in_channels, 7, 1, 0, 3, true);
  }

  BasicTensor<T> forward(const BasicTensor<T>& z) const override {
    if (z.rank() != 4 || z.dim(1) != spec_.latent_channels) {
      throw DimensionError(this->name() + ": latent channel mismatch, expected axis 1 = " +
                           std::to_string(spec_.latent_channels) + ", got " +
                           shape_str(z.shape()));
    }
    BasicTensor<T> h = relu(up1_norm_(up1_(z)));
    h = relu(up2_norm_(up2_(h)));
    return tanh(out_(h));
  }

 private:
  GeneratorSpec spec_;
  layers::ConvTranspose<T> up1_, up2_;
  layers::Norm<T> up1_norm_, up2_norm_;
  layers::Conv<T> out_;
};

/// Residual blocks in latent space; preserves shape.
template <typename T>
class Translator final : public ConvNetwork<T> {
 public:
  Translator(std::string name, const TranslatorSpec& spec, std::mt19937_64& rng)
      : ConvNetwork<T>(std::move(name)), spec_(spec) {
    for (std::size_t i = 0; i < spec.n_res_blocks; ++i) {
      blocks_.push_back(this->make_residual(rng, "res" + std::to_string(i), spec.latent_channels));
    }
  }

  BasicTensor<T> forward(const BasicTensor<T>& z) const override {
    if (z.rank() != 4 || z.dim(1) != spec_.latent_channels) {
      throw DimensionError(this->name() + ": latent channel mismatch, expected axis 1 = " +
                           std::to_string(spec_.latent_channels) + ", got " +
                           shape_str(z.shape()));
    }
    BasicTensor<T> h = z;
    for (const auto& blk : blocks_) h = blk(h);
    return h;
  }

 private:
  TranslatorSpec spec_;
  std::vector<layers::ResidualBlock<T>> blocks_;
};

/// Side length of the discriminator score map for a given input side, or 0
/// when the input is too small to produce one output unit.
inline std::size_t patch_map_extent(const DiscriminatorSpec& spec, std::size_t side) {
  std::size_t s = side;
  for (std::size_t i = 0; i < spec.n_downsample; ++i) {
    if (s + 2 < 4) return 0;
    s = conv_out_extent(s, 4, 2, 1);
  }
  for (int i = 0; i < 2; ++i) {
    if (s + 2 < 4) return 0;
    s = conv_out_extent(s, 4, 1, 1);
  }
  return s;
}

inline std::size_t patch_receptive_field(const DiscriminatorSpec& spec) {
  std::size_t rf = 1;
  for (int i = 0; i < 2; ++i) rf = rf - 1 + 4;
  for (std::size_t i = 0; i < spec.n_downsample; ++i) rf = (rf - 1) * 2 + 4;
  return rf;
}

/// PatchGAN discriminator; outputs an unbounded score map [N,1,h,w].
template <typename T>
class Discriminator final : public ConvNetwork<T> {
 public:
  Discriminator(std::string name, const DiscriminatorSpec& spec, std::mt19937_64& rng)
      : ConvNetwork<T>(std::move(name)), spec_(spec) {
    const std::size_t b = spec.base_width;
    auto width = [&](std::size_t i) {
      return b * std::min<std::size_t>(std::size_t{1} << i, spec.max_width_multiplier);
    };
    convs_.push_back(this->make_conv(rng, "conv0", spec.in_channels, b, 4, 2, 1, 0, true));
    norms_.emplace_back();
    for (std::size_t i = 1; i < spec.n_downsample; ++i) {
      const std::string id = std::to_string(i);
      convs_.push_back(this->make_conv(rng, "conv" + id, width(i - 1), width(i), 4, 2, 1, 0, false));
      norms_.push_back(this->make_norm("norm" + id, width(i)));
    }
    const std::size_t last = spec.n_downsample;
    const std::string id = std::to_string(last);
    convs_.push_back(
        this->make_conv(rng, "conv" + id, width(last - 1), width(last), 4, 1, 1, 0, false));
    norms_.push_back(this->make_norm("norm" + id, width(last)));
    head_ = this->make_conv(rng, "conv_out", width(last), 1, 4, 1, 1, 0, true);
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) const override {
    if (x.rank() != 4) {
      throw DimensionError(this->name() + ": expected rank-4 image batch, got " +
                           shape_str(x.shape()));
    }
    if (patch_map_extent(spec_, x.dim(2)) == 0 || patch_map_extent(spec_, x.dim(3)) == 0) {
      throw DimensionError(this->name() + ": image " + shape_str(x.shape()) +
                           " is smaller than one discriminator receptive field");
    }
    const T slope = static_cast<T>(kLeakySlope);
    BasicTensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i](h);
      if (norms_[i].gain) h = norms_[i](h);
      h = leaky_relu(h, slope);
    }
    return head_(h);
  }

 private:
  DiscriminatorSpec spec_;
  std::vector<layers::Conv<T>> convs_;
  std::vector<layers::Norm<T>> norms_;
  layers::Conv<T> head_;
};

enum class Components { kAll, kGeneratorsOnly };

/// The eight networks. Translators and discriminators may be absent when a
/// bundle is only used for test-time translation.
template <typename T>
struct ModelBundle {
  std::unique_ptr<Module<T>> e_ab, e_ba, d_a, d_b, t_ab, t_ba, q_a, q_b;

  static ModelBundle build(const BundleSpec& spec, std::uint64_t seed,
                           Components which = Components::kAll) {
    std::mt19937_64 rng(seed);
    ModelBundle b;
    b.e_ab = std::make_unique<Encoder<T>>("E_ab", spec.generator, rng);
    b.e_ba = std::make_unique<Encoder<T>>("E_ba", spec.generator, rng);
    b.d_a = std::make_unique<Decoder<T>>("D_a", spec.generator, rng);
    b.d_b = std::make_unique<Decoder<T>>("D_b", spec.generator, rng);
    if (which == Components::kAll) {
      b.t_ab = std::make_unique<Translator<T>>("T_ab", spec.translator, rng);
      b.t_ba = std::make_unique<Translator<T>>("T_ba", spec.translator, rng);
      b.q_a = std::make_unique<Discriminator<T>>("Q_a", spec.discriminator, rng);
      b.q_b = std::make_unique<Discriminator<T>>("Q_b", spec.discriminator, rng);
    }
    return b;
  }

  std::vector<Module<T>*> networks() const {
    std::vector<Module<T>*> out;
    for (auto* m : {e_ab.get(), e_ba.get(), d_a.get(), d_b.get(), t_ab.get(), t_ba.get(),
                    q_a.get(), q_b.get()}) {
      if (m) out.push_back(m);
    }
    return out;
  }

  std::vector<Parameter<T>*> all_parameters() const { return collect(networks()); }

  /// Encoders, decoders and translators.
  std::vector<Parameter<T>*> generator_parameters() const {
    return collect({e_ab.get(), e_ba.get(), d_a.get(), d_b.get(), t_ab.get(), t_ba.get()});
  }

  std::vector<Parameter<T>*> discriminator_parameters() const {
    return collect({q_a.get(), q_b.get()});
  }

  Parameter<T>* find(const std::string& name) const {
    for (Parameter<T>* p : all_parameters()) {
      if (p->name == name) return p;
    }
    return nullptr;
  }

 private:
  static std::vector<Parameter<T>*> collect(std::initializer_list<Module<T>*> mods) {
    return collect(std::vector<Module<T>*>(mods));
  }
  static std::vector<Parameter<T>*> collect(const std::vector<Module<T>*>& mods) {
    std::vector<Parameter<T>*> out;
    for (Module<T>* m : mods) {
      if (!m) continue;
      for (Parameter<T>* p : m->parameters()) out.push_back(p);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Forward data paths

template <typename T>
struct PathResult {
  BasicTensor<T> latent;             // encoder output
  BasicTensor<T> translated_latent;  // cross-translator output, cross paths only
  BasicTensor<T> image;
};

namespace detail {
template <typename T>
const Module<T>& require(const std::unique_ptr<Module<T>>& m, const char* what) {
  if (!m) throw DimensionError(std::string("model bundle has no ") + what + " network");
  return *m;
}
}  // namespace detail

/// D_b(E_ab(x_a))
template <typename T>
PathResult<T> translate_ab(const ModelBundle<T>& m, const BasicTensor<T>& x_a) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ab, "E_ab").forward(x_a);
  r.image = detail::require(m.d_b, "D_b").forward(r.latent);
  return r;
}

/// D_a(E_ba(x_b))
template <typename T>
PathResult<T> translate_ba(const ModelBundle<T>& m, const BasicTensor<T>& x_b) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ba, "E_ba").forward(x_b);
  r.image = detail::require(m.d_a, "D_a").forward(r.latent);
  return r;
}

/// D_a(T_ba(E_ab(x_a)))
template <typename T>
PathResult<T> cross_identity_a(const ModelBundle<T>& m, const BasicTensor<T>& x_a) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ab, "E_ab").forward(x_a);
  r.translated_latent = detail::require(m.t_ba, "T_ba").forward(r.latent);
  r.image = detail::require(m.d_a, "D_a").forward(r.translated_latent);
  return r;
}

/// D_b(T_ab(E_ba(x_b)))
template <typename T>
PathResult<T> cross_identity_b(const ModelBundle<T>& m, const BasicTensor<T>& x_b) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ba, "E_ba").forward(x_b);
  r.translated_latent = detail::require(m.t_ab, "T_ab").forward(r.latent);
  r.image = detail::require(m.d_b, "D_b").forward(r.translated_latent);
  return r;
}

/// D_a(E_ba(x_a)): a domain-A image through the B->A generator.
template <typename T>
PathResult<T> plain_identity_a(const ModelBundle<T>& m, const BasicTensor<T>& x_a) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ba, "E_ba").forward(x_a);
  r.image = detail::require(m.d_a, "D_a").forward(r.latent);
  return r;
}

/// D_b(E_ab(x_b))
template <typename T>
PathResult<T> plain_identity_b(const ModelBundle<T>& m, const BasicTensor<T>& x_b) {
  PathResult<T> r;
  r.latent = detail::require(m.e_ab, "E_ab").forward(x_b);
  r.image = detail::require(m.d_b, "D_b").forward(r.latent);
  return r;
}

/// Copies parameter values (not Adam state) between modules of equal layout.
template <typename T>
void copy_parameter_values(Module<T>& from, Module<T>& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw DimensionError("copy_parameter_values: layout mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->value.shape() != dst[i]->value.shape()) {
      throw DimensionError("copy_parameter_values: shape mismatch at " + dst[i]->name);
    }
    auto d = dst[i]->value.mutable_data();
    auto s = src[i]->value.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace xnet
