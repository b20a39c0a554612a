#include "xnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "xnet/data.hpp"
#include "xnet/error.hpp"

namespace xnet {

namespace fs = std::filesystem;

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    auto bits = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes.push_back(static_cast<std::uint8_t>(bits & 0xFFu));
      bits = static_cast<Bits>(bits >> 8);
    }
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename U>
  U get(const char* what) {
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    need(sizeof(U), what);
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits = static_cast<Bits>(bits | (static_cast<Bits>(bytes_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(U);
    return std::bit_cast<U>(bits);
  }
  std::string get_string(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(ckpt.version);
  w.put<std::uint64_t>(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError("tensor name too long: " + t.name.substr(0, 64));
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) w.put<float>(v);
  }
  const std::uint32_t crc =
      crc32_of(std::span<const std::uint8_t>(w.bytes).subspan(sizeof(kCheckpointMagic)));
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 8 + 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  const auto body = bytes.subspan(4, bytes.size() - 8);
  Reader crc_reader(bytes.subspan(bytes.size() - 4));
  const auto stored_crc = crc_reader.get<std::uint32_t>("crc");
  if (crc32_of(body) != stored_crc) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(body);
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>("version");
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint64_t>("parameter count");
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint16_t>("name length");
    t.name = r.get_string(len);
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>("dims"));
    const std::size_t n = shape_numel(shape);
    r.need(n * sizeof(float), "payload");
    std::vector<float> data(n);
    for (auto& v : data) v = r.get<float>("payload");
    t.value = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after last tensor");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  write_file(path, encode_checkpoint(ckpt));
  if (!ckpt.config_echo.empty() || !ckpt.rng_state.empty() || ckpt.epoch || ckpt.step) {
    std::ostringstream meta;
    meta << "epoch=" << ckpt.epoch << "\nstep=" << ckpt.step << "\nrng=" << ckpt.rng_state
         << "\n[config]\n"
         << ckpt.config_echo;
    const std::string s = meta.str();
    write_file(fs::path(path.string() + ".meta"),
               std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()),
                                             s.size()));
  }
}

void save_checkpoint(const ModelBundle<float>& bundle, const fs::path& path) {
  save_checkpoint(capture(bundle), path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    Checkpoint ckpt = decode_checkpoint(bytes);
    std::ifstream meta(path.string() + ".meta");
    std::string line;
    bool in_config = false;
    while (meta && std::getline(meta, line)) {
      if (in_config) {
        ckpt.config_echo += line + "\n";
      } else if (line == "[config]") {
        in_config = true;
      } else if (line.rfind("epoch=", 0) == 0) {
        ckpt.epoch = std::stoull(line.substr(6));
      } else if (line.rfind("step=", 0) == 0) {
        ckpt.step = std::stoull(line.substr(5));
      } else if (line.rfind("rng=", 0) == 0) {
        ckpt.rng_state = line.substr(4);
      }
    }
    return ckpt;
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint capture(const ModelBundle<float>& bundle) {
  Checkpoint ckpt;
  for (const Parameter<float>* p : bundle.all_parameters()) {
    ckpt.tensors.push_back({p->name, p->value.clone()});
  }
  return ckpt;
}

void load_into(ModelBundle<float>& bundle, const Checkpoint& ckpt) {
  for (Parameter<float>* p : bundle.all_parameters()) {
    const NamedTensor* t = ckpt.find(p->name);
    if (!t) throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
    if (t->value.shape() != p->value.shape()) {
      throw CheckpointError("tensor '" + p->name + "' has shape " + shape_str(t->value.shape()) +
                            " in checkpoint but " + shape_str(p->value.shape()) + " in model");
    }
  }
  for (Parameter<float>* p : bundle.all_parameters()) {
    const auto src = ckpt.find(p->name)->value.data();
    auto dst = p->value.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

namespace {

std::size_t count_blocks(const Checkpoint& ckpt, const std::string& prefix) {
  std::size_t n = 0;
  while (ckpt.find(prefix + ".res" + std::to_string(n) + ".conv1.weight")) ++n;
  return n;
}

const Tensor& require_tensor(const Checkpoint& ckpt, const std::string& name) {
  const NamedTensor* t = ckpt.find(name);
  if (!t) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  return t->value;
}

}  // namespace

BundleSpec infer_bundle_spec(const Checkpoint& ckpt) {
  BundleSpec spec;
  const Tensor& stem = require_tensor(ckpt, "E_ab.conv0.weight");
  const Tensor& down2 = require_tensor(ckpt, "E_ab.down2.weight");
  spec.generator.base_width = stem.dim(0);
  spec.generator.in_channels = stem.dim(1);
  spec.generator.latent_channels = down2.dim(0);
  spec.generator.n_res_blocks = count_blocks(ckpt, "E_ab");
  spec.translator.latent_channels = spec.generator.latent_channels;
  if (ckpt.find("T_ab.res0.conv1.weight")) spec.translator.n_res_blocks = count_blocks(ckpt, "T_ab");
  if (const NamedTensor* q0 = ckpt.find("Q_a.conv0.weight")) {
    spec.discriminator.base_width = q0->value.dim(0);
    spec.discriminator.in_channels = q0->value.dim(1);
    // conv1..conv{n-1} are the remaining stride-2 stages; conv{n} is stride 1.
    std::size_t convs = 1;
    while (ckpt.find("Q_a.conv" + std::to_string(convs) + ".weight")) ++convs;
    spec.discriminator.n_downsample = convs - 1;
  }
  return spec;
}

ModelBundle<float> bundle_from_checkpoint(const Checkpoint& ckpt, Components which) {
  ModelBundle<float> bundle = ModelBundle<float>::build(infer_bundle_spec(ckpt), 0, which);
  load_into(bundle, ckpt);
  return bundle;
}

}  // namespace xnet
