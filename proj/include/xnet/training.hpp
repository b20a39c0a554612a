#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "xnet/checkpoint.hpp"
#include "xnet/data.hpp"
#include "xnet/losses.hpp"

namespace xnet {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  std::size_t image_side = 256;
  std::uint64_t seed = 0;
  LossWeights weights;
  LossTerms terms;
  AdamOptions adam;
  // Learning rate is constant before this epoch and decays linearly to zero
  // at `epochs`; unset means epochs / 2.
  std::optional<std::size_t> decay_start_epoch;
  std::size_t history_capacity = 50;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  std::size_t max_steps = 0;         // 0 means no cap
  BundleSpec network;

  void validate() const;
  BundleSpec bundle_spec() const;
  std::size_t decay_start() const { return decay_start_epoch.value_or(epochs / 2); }
};

/// Learning-rate multiplier for a zero-based epoch index.
double lr_factor(const TrainConfig& cfg, std::size_t epoch);

/// Pool of previously generated images used for discriminator updates.
///
/// While below capacity every fresh image is stored and returned. At
/// capacity, each image is swapped with a uniformly chosen stored one with
/// probability 1/2 (the stored image is returned), otherwise returned as is.
class HistoryBuffer {
 public:
  HistoryBuffer(std::size_t capacity, std::uint64_t seed);

  /// Returns a detached [N,C,H,W] batch; `fresh` is never modified.
  Tensor query(const Tensor& fresh);

  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<std::vector<float>> store_;
  std::mt19937_64 rng_;
};

struct HistoryBuffers {
  HistoryBuffer fake_a;
  HistoryBuffer fake_b;

  HistoryBuffers(std::size_t capacity, std::uint64_t seed)
      : fake_a(capacity, seed ^ 0xA5A5A5A5ull), fake_b(capacity, seed ^ 0x5A5A5A5Aull) {}
};

/// One generator update followed by one discriminator update.
///
/// The discriminators are frozen during the generator phase and their inputs
/// are detached during the discriminator phase, so each phase writes
/// gradients only into its own parameter set. A non-finite loss term aborts
/// with NumericError before any parameter is touched.
LossReport train_step(ModelBundle<float>& bundle, const Tensor& batch_a, const Tensor& batch_b,
                      const TrainConfig& cfg, HistoryBuffers& buffers, double lr);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, zero-based
  double lr = 0.0;
  LossReport report;
};

using ReportSink = std::function<void(const StepRecord&)>;
using CheckpointSink = std::function<void(const Checkpoint&)>;

std::size_t steps_per_epoch(const TrainConfig& cfg, std::size_t size_a, std::size_t size_b);

/// Runs epochs x batches (stopping early at max_steps) and returns the final
/// checkpoint. `on_checkpoint` receives intermediate checkpoints every
/// `checkpoint_every` epochs.
Checkpoint train_loop(const TrainConfig& cfg, const DomainDataset& a, const DomainDataset& b,
                      const ReportSink& sink, const CheckpointSink& on_checkpoint = {});

/// Same, continuing from (and updating) an existing bundle.
Checkpoint train_loop(ModelBundle<float>& bundle, const TrainConfig& cfg, const DomainDataset& a,
                      const DomainDataset& b, const ReportSink& sink,
                      const CheckpointSink& on_checkpoint = {});

}  // namespace xnet
