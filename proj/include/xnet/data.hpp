#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xnet/tensor.hpp"

namespace xnet {

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

inline constexpr std::size_t kMaxImageSide = 8192;

/// Binary PNM: P6 (RGB) and P5 (gray), maxval 255.
Image decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Box-filter resample of one float plane; each output pixel averages the
/// source area it covers with fractional edge weights.
void area_resample(std::span<const float> src, std::size_t src_w, std::size_t src_h,
                   std::span<float> dst, std::size_t dst_w, std::size_t dst_h);

Image center_crop_square(const Image& img);
Image area_resize(const Image& img, std::size_t width, std::size_t height);
/// Center-crop to square, then area-resample to side x side; gray becomes RGB.
Image preprocess(const Image& img, std::size_t side);

float normalize_value(std::uint8_t v);
/// Inverse of normalize_value; clamps to [0,255] and rounds half up.
std::uint8_t denormalize_value(float v);

/// Stacks RGB images of equal size into [N,3,H,W] in [-1,1].
Tensor to_batch(std::span<const Image> images);
Tensor normalize(const Image& img);
/// Image `index` of a [N,3,H,W] batch back to 8-bit RGB.
Image denormalize(const Tensor& batch, std::size_t index = 0);

enum class Domain { kA, kB };

struct DomainDataset {
  Domain domain = Domain::kA;
  std::vector<Image> images;
  std::vector<std::string> names;  // file names, for preserving outputs
  std::string manifest;            // provenance line
};

/// Loads `<root>/trainA/*.ppm` (or trainB) sorted by file name, preprocessed
/// to `side`.
DomainDataset load_domain(const std::filesystem::path& root, Domain domain, std::size_t side);
/// All *.ppm / *.pgm files of a directory, sorted by name, unprocessed.
std::vector<std::pair<std::string, Image>> load_directory(const std::filesystem::path& dir);

/// Epoch-wise shuffling without replacement, drawn independently per domain.
class UnpairedSampler {
 public:
  UnpairedSampler(std::size_t size_a, std::size_t size_b, std::uint64_t seed);

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> next(std::size_t batch);
  std::string rng_state() const;

 private:
  struct Stream {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::size_t draw(Stream& s);

  Stream a_, b_;
  std::mt19937_64 rng_;
};

std::pair<Tensor, Tensor> sample_unpaired_batch(const DomainDataset& a, const DomainDataset& b,
                                                std::size_t batch, UnpairedSampler& sampler);

enum class SynthTask { kInvert, kStripes, kShapes };

SynthTask parse_synth_task(const std::string& name);
std::string synth_task_name(SynthTask task);

struct SyntheticSpec {
  SynthTask task = SynthTask::kInvert;
  std::size_t image_side = 16;
  std::size_t count = 32;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  DomainDataset a;
  DomainDataset b;
  std::vector<Image> masks;  // shapes task only; 1 channel, 255 = foreground
};

SyntheticData synth_generate(const SyntheticSpec& spec);

/// Writes trainA/, trainB/, masksB/ (if any) and manifest.txt under root.
void write_dataset(const std::filesystem::path& root, const SyntheticData& data);

}  // namespace xnet
