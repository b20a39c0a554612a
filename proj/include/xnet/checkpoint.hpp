#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xnet/networks.hpp"

namespace xnet {

inline constexpr char kCheckpointMagic[4] = {'X', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// In-memory checkpoint. Only `tensors` go into the binary file; the rest is
/// written to a text sidecar (`<file>.meta`).
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<NamedTensor> tensors;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  std::string config_echo;

  const NamedTensor* find(const std::string& name) const;
};

/// Binary layout, little-endian throughout:
///   "XNET" | u32 version | u64 count |
///   count x (u16 name_len | name | u8 rank | rank x u32 dim | f32 payload) |
///   u32 CRC32 of every byte after the magic.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const ModelBundle<float>& bundle, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter value in bundle order.
Checkpoint capture(const ModelBundle<float>& bundle);

/// Copies checkpoint tensors into the bundle's parameters. Every parameter of
/// the bundle must be present with the same shape; the first mismatch is
/// reported by name. Extra tensors in the checkpoint are ignored.
void load_into(ModelBundle<float>& bundle, const Checkpoint& ckpt);

/// Recovers network sizes from tensor shapes. Translator and discriminator
/// fields are left at defaults when those tensors are absent.
BundleSpec infer_bundle_spec(const Checkpoint& ckpt);

/// Builds a bundle from a checkpoint. With kGeneratorsOnly only E/D tensors
/// are read.
ModelBundle<float> bundle_from_checkpoint(const Checkpoint& ckpt,
                                          Components which = Components::kAll);

}  // namespace xnet
