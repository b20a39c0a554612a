#include "xnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xnet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (image_side == 0 || image_side % 4 != 0) {
    throw ConfigError("image_side must be a positive multiple of 4, got " + std::to_string(image_side));
  }
  if (decay_start() > epochs) throw ConfigError("decay_start_epoch must not exceed epochs");
  if (!(adam.lr >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (network.generator.base_width == 0 || network.generator.latent_channels == 0) {
    throw ConfigError("network widths must be positive");
  }
  if (network.discriminator.n_downsample == 0 || network.discriminator.base_width == 0) {
    throw ConfigError("discriminator needs at least one downsampling stage and a positive width");
  }
  if (patch_map_extent(network.discriminator, image_side) == 0) {
    throw ConfigError("image_side " + std::to_string(image_side) +
                      " is smaller than one discriminator receptive field");
  }
  weights.validate();
}

BundleSpec TrainConfig::bundle_spec() const {
  BundleSpec spec = network;
  spec.generator.image_side = image_side;
  spec.translator.latent_channels = spec.generator.latent_channels;
  spec.discriminator.in_channels = spec.generator.in_channels;
  return spec;
}

double lr_factor(const TrainConfig& cfg, std::size_t epoch) {
  const std::size_t start = cfg.decay_start();
  if (epoch < start) return 1.0;
  const double span = static_cast<double>(cfg.epochs - start);
  if (span <= 0.0) return 1.0;
  return std::max(0.0, 1.0 - static_cast<double>(epoch - start) / span);
}

// ---------------------------------------------------------------------------

HistoryBuffer::HistoryBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {}

Tensor HistoryBuffer::query(const Tensor& fresh) {
  if (!fresh.defined() || fresh.rank() < 1 || fresh.dim(0) == 0) {
    throw DimensionError("history buffer: empty batch");
  }
  const std::size_t n = fresh.dim(0);
  const std::size_t per = fresh.numel() / n;
  std::vector<float> out(fresh.data().begin(), fresh.data().end());
  if (capacity_ == 0) return Tensor(fresh.shape(), std::move(out));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto first = out.begin() + static_cast<std::ptrdiff_t>(i * per);
    std::vector<float> image(first, first + static_cast<std::ptrdiff_t>(per));
    if (store_.size() < capacity_) {
      store_.push_back(std::move(image));
      continue;
    }
    if (coin(rng_) > 0.5) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(0, capacity_ - 1)(rng_);
      std::copy(store_[j].begin(), store_[j].end(), first);
      store_[j] = std::move(image);
    }
  }
  return Tensor(fresh.shape(), std::move(out));
}

// ---------------------------------------------------------------------------

namespace {

void check_finite(const LossReport& r) {
  const std::pair<const char*, double> terms[] = {{"gan_g", r.gan_g}, {"gan_d", r.gan_d},
                                                  {"id", r.id},       {"ctc", r.ctc},
                                                  {"zid", r.zid},     {"zcyc", r.zcyc},
                                                  {"total", r.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite loss term '") + name + "' (" + std::to_string(v) + ")");
    }
  }
}

std::vector<Parameter<float>*> with_gradients(const std::vector<Parameter<float>*>& params) {
  std::vector<Parameter<float>*> out;
  for (Parameter<float>* p : params) {
    if (p->value.has_grad()) out.push_back(p);
  }
  return out;
}

// Freezes a parameter set for the lifetime of the guard.
class Frozen {
 public:
  explicit Frozen(std::vector<Parameter<float>*> params) : params_(std::move(params)) {
    set_requires_grad<float>(params_, false);
  }
  ~Frozen() { set_requires_grad<float>(params_, true); }
  Frozen(const Frozen&) = delete;
  Frozen& operator=(const Frozen&) = delete;

 private:
  std::vector<Parameter<float>*> params_;
};

}  // namespace

LossReport train_step(ModelBundle<float>& bundle, const Tensor& batch_a, const Tensor& batch_b,
                      const TrainConfig& cfg, HistoryBuffers& buffers, double lr) {
  AdamOptions adam = cfg.adam;
  adam.lr = lr;
  const bool use_gan = cfg.terms.gan && cfg.weights.gan > 0.0;

  LossReport report;
  Tensor fake_a, fake_b;
  {
    Frozen frozen(bundle.discriminator_parameters());
    Tape<float> tape;
    GeneratorObjective<float> obj;
    {
      Recording<float> rec(tape);
      obj = total_generator_loss(bundle, batch_a, batch_b, cfg.weights, cfg.terms);
    }
    report = obj.report;
    check_finite(report);
    backward(obj.total, tape);
    auto params = with_gradients(bundle.generator_parameters());
    if (!params.empty()) adam_step<float>(params, adam);
    fake_a = detach(obj.fake_a);
    fake_b = detach(obj.fake_b);
  }

  if (use_gan) {
    const Tensor hist_a = buffers.fake_a.query(fake_a);
    const Tensor hist_b = buffers.fake_b.query(fake_b);
    Tape<float> tape;
    Tensor loss_a, loss_b, both;
    {
      Recording<float> rec(tape);
      loss_a = loss_gan_discriminator(*bundle.q_a, batch_a, hist_a);
      loss_b = loss_gan_discriminator(*bundle.q_b, batch_b, hist_b);
      both = add(loss_a, loss_b);
    }
    report.gan_d = static_cast<double>(loss_a.item()) + static_cast<double>(loss_b.item());
    if (!std::isfinite(report.gan_d)) {
      throw NumericError("non-finite loss term 'gan_d' (" + std::to_string(report.gan_d) + ")");
    }
    backward(both, tape);
    auto params = with_gradients(bundle.discriminator_parameters());
    if (!params.empty()) adam_step<float>(params, adam);
  }
  return report;
}

// ---------------------------------------------------------------------------

std::size_t steps_per_epoch(const TrainConfig& cfg, std::size_t size_a, std::size_t size_b) {
  return std::max<std::size_t>(1, std::max(size_a, size_b) / cfg.batch_size);
}

Checkpoint train_loop(ModelBundle<float>& bundle, const TrainConfig& cfg, const DomainDataset& a,
                      const DomainDataset& b, const ReportSink& sink,
                      const CheckpointSink& on_checkpoint) {
  cfg.validate();
  if (a.images.empty() || b.images.empty()) throw DataError("train_loop: empty dataset");
  for (const DomainDataset* ds : {&a, &b}) {
    for (const Image& img : ds->images) {
      if (img.width != cfg.image_side || img.height != cfg.image_side) {
        throw DataError("train_loop: dataset image is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ", expected side " +
                        std::to_string(cfg.image_side));
      }
    }
  }
  UnpairedSampler sampler(a.images.size(), b.images.size(), cfg.seed);
  HistoryBuffers buffers(cfg.history_capacity, cfg.seed);
  const std::size_t per_epoch = steps_per_epoch(cfg, a.images.size(), b.images.size());

  std::size_t step = 0;
  std::size_t epoch = 0;
  bool done = false;
  for (; epoch < cfg.epochs && !done; ++epoch) {
    const double lr = cfg.adam.lr * lr_factor(cfg, epoch);
    for (std::size_t i = 0; i < per_epoch; ++i) {
      if (cfg.max_steps && step >= cfg.max_steps) {
        done = true;
        break;
      }
      auto [xa, xb] = sample_unpaired_batch(a, b, cfg.batch_size, sampler);
      StepRecord rec{epoch, step, lr, train_step(bundle, xa, xb, cfg, buffers, lr)};
      if (sink) sink(rec);
      ++step;
    }
    if (on_checkpoint && cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs && !done) {
      Checkpoint ckpt = capture(bundle);
      ckpt.epoch = epoch + 1;
      ckpt.step = step;
      ckpt.rng_state = sampler.rng_state();
      on_checkpoint(ckpt);
    }
  }
  Checkpoint final_ckpt = capture(bundle);
  final_ckpt.epoch = epoch;
  final_ckpt.step = step;
  final_ckpt.rng_state = sampler.rng_state();
  return final_ckpt;
}

Checkpoint train_loop(const TrainConfig& cfg, const DomainDataset& a, const DomainDataset& b,
                      const ReportSink& sink, const CheckpointSink& on_checkpoint) {
  cfg.validate();
  ModelBundle<float> bundle = ModelBundle<float>::build(cfg.bundle_spec(), cfg.seed);
  return train_loop(bundle, cfg, a, b, sink, on_checkpoint);
}

}  // namespace xnet
