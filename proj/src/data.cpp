#include "xnet/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xnet/error.hpp"

namespace xnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PNM codec

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) throw DataError(std::string("pnm: ") + what + " is too large");
    }
    if (digits == 0) throw DataError(std::string("pnm: malformed header, missing ") + what);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw DataError("pnm: malformed header, expected P6 or P5 magic");
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.advance(2);
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw DataError("pnm: zero image dimension");
  if (w > kMaxImageSide || h > kMaxImageSide) {
    throw DataError("pnm: image side exceeds " + std::to_string(kMaxImageSide));
  }
  if (maxval != 255) throw DataError("pnm: only maxval 255 is supported");
  if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()])) {
    throw DataError("pnm: malformed header, missing separator before payload");
  }
  r.advance(1);
  const std::size_t need = w * h * channels;
  if (bytes.size() - r.pos() < need) {
    throw DataError("pnm: truncated payload, expected " + std::to_string(need) + " bytes, got " +
                    std::to_string(bytes.size() - r.pos()));
  }
  Image img(w, h, channels);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()), need, img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("pnm: unsupported channel count");
  if (img.width == 0 || img.height == 0 || img.width > kMaxImageSide || img.height > kMaxImageSide) {
    throw DataError("pnm: image sides must be in [1, 8192]");
  }
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw DataError("pnm: pixel buffer does not match dimensions");
  }
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pnm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_image(const fs::path& path, const Image& img) { write_file(path, encode_pnm(img)); }

// ---------------------------------------------------------------------------
// Resampling

namespace {

// Coverage weights of source cells for each destination cell along one axis.
struct AxisWeights {
  std::vector<std::size_t> first;
  std::vector<std::vector<double>> weights;
};

AxisWeights axis_weights(std::size_t src, std::size_t dst) {
  AxisWeights aw;
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const auto first = static_cast<std::size_t>(std::floor(lo));
    const auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
    std::vector<double> w;
    for (std::size_t i = first; i < last; ++i) {
      const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      w.push_back(cover / scale);
    }
    aw.first.push_back(first);
    aw.weights.push_back(std::move(w));
  }
  return aw;
}

}  // namespace

void area_resample(std::span<const float> src, std::size_t src_w, std::size_t src_h,
                   std::span<float> dst, std::size_t dst_w, std::size_t dst_h) {
  const AxisWeights wx = axis_weights(src_w, dst_w);
  const AxisWeights wy = axis_weights(src_h, dst_h);
  std::vector<double> rows(dst_w * src_h);
  for (std::size_t y = 0; y < src_h; ++y) {
    for (std::size_t ox = 0; ox < dst_w; ++ox) {
      double acc = 0.0;
      const auto& w = wx.weights[ox];
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * src[y * src_w + wx.first[ox] + k];
      rows[y * dst_w + ox] = acc;
    }
  }
  for (std::size_t oy = 0; oy < dst_h; ++oy) {
    const auto& w = wy.weights[oy];
    for (std::size_t ox = 0; ox < dst_w; ++ox) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * rows[(wy.first[oy] + k) * dst_w + ox];
      dst[oy * dst_w + ox] = static_cast<float>(acc);
    }
  }
}

Image center_crop_square(const Image& img) {
  const std::size_t side = std::min(img.width, img.height);
  const std::size_t x0 = (img.width - side) / 2;
  const std::size_t y0 = (img.height - side) / 2;
  Image out(side, side, img.channels);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x + x0, y + y0, c);
    }
  }
  return out;
}

Image area_resize(const Image& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  Image out(width, height, img.channels);
  std::vector<float> src(img.width * img.height), dst(width * height);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < src.size(); ++i) src[i] = img.pixels[i * img.channels + c];
    area_resample(src, img.width, img.height, dst, width, height);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      out.pixels[i * img.channels + c] =
          static_cast<std::uint8_t>(std::clamp(std::floor(dst[i] + 0.5f), 0.0f, 255.0f));
    }
  }
  return out;
}

Image preprocess(const Image& img, std::size_t side) {
  Image sq = area_resize(center_crop_square(img), side, side);
  if (sq.channels == 3) return sq;
  Image rgb(side, side, 3);
  for (std::size_t i = 0; i < side * side; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = sq.pixels[i];
  }
  return rgb;
}

// ---------------------------------------------------------------------------
// Normalization

float normalize_value(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

std::uint8_t denormalize_value(float v) {
  const double scaled = (static_cast<double>(v) + 1.0) * 127.5;
  return static_cast<std::uint8_t>(std::clamp(std::floor(scaled + 0.5), 0.0, 255.0));
}

Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) throw DataError("to_batch: no images");
  const std::size_t w = images[0].width, h = images[0].height;
  std::vector<float> data(images.size() * 3 * w * h);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.width != w || img.height != h || img.channels != 3) {
      throw DataError("to_batch: images must be RGB and share dimensions");
    }
    float* base = data.data() + n * 3 * w * h;
    for (std::size_t i = 0; i < w * h; ++i) {
      for (std::size_t c = 0; c < 3; ++c) base[c * w * h + i] = normalize_value(img.pixels[i * 3 + c]);
    }
  }
  return Tensor({images.size(), 3, h, w}, std::move(data));
}

Tensor normalize(const Image& img) { return to_batch(std::span<const Image>(&img, 1)); }

Image denormalize(const Tensor& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || index >= batch.dim(0)) {
    throw DimensionError("denormalize: expected [N,3,H,W] batch with index < N, got " +
                         shape_str(batch.shape()));
  }
  const std::size_t h = batch.dim(2), w = batch.dim(3);
  Image img(w, h, 3);
  const float* base = batch.data().data() + index * 3 * w * h;
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = denormalize_value(base[c * w * h + i]);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<std::pair<std::string, Image>> load_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, Image>> out;
  for (const auto& f : files) out.emplace_back(f.filename().string(), read_image(f));
  return out;
}

DomainDataset load_domain(const fs::path& root, Domain domain, std::size_t side) {
  const fs::path dir = root / (domain == Domain::kA ? "trainA" : "trainB");
  DomainDataset ds;
  ds.domain = domain;
  ds.manifest = dir.string();
  for (auto& [name, img] : load_directory(dir)) {
    ds.names.push_back(name);
    ds.images.push_back(preprocess(img, side));
  }
  if (ds.images.empty()) throw DataError("empty dataset: " + dir.string());
  return ds;
}

UnpairedSampler::UnpairedSampler(std::size_t size_a, std::size_t size_b, std::uint64_t seed)
    : rng_(seed) {
  if (size_a == 0 || size_b == 0) throw DataError("unpaired sampler: empty dataset");
  a_.order.resize(size_a);
  b_.order.resize(size_b);
  std::iota(a_.order.begin(), a_.order.end(), 0);
  std::iota(b_.order.begin(), b_.order.end(), 0);
  a_.cursor = size_a;  // forces a shuffle on first draw
  b_.cursor = size_b;
}

std::size_t UnpairedSampler::draw(Stream& s) {
  if (s.cursor == s.order.size()) {
    std::shuffle(s.order.begin(), s.order.end(), rng_);
    s.cursor = 0;
  }
  return s.order[s.cursor++];
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> UnpairedSampler::next(
    std::size_t batch) {
  std::vector<std::size_t> ia, ib;
  for (std::size_t i = 0; i < batch; ++i) {
    ia.push_back(draw(a_));
    ib.push_back(draw(b_));
  }
  return {ia, ib};
}

std::string UnpairedSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

std::pair<Tensor, Tensor> sample_unpaired_batch(const DomainDataset& a, const DomainDataset& b,
                                                std::size_t batch, UnpairedSampler& sampler) {
  const auto [ia, ib] = sampler.next(batch);
  std::vector<Image> xa, xb;
  for (std::size_t i : ia) xa.push_back(a.images.at(i));
  for (std::size_t i : ib) xb.push_back(b.images.at(i));
  return {to_batch(xa), to_batch(xb)};
}

// ---------------------------------------------------------------------------
// Synthetic domains

SynthTask parse_synth_task(const std::string& name) {
  if (name == "invert") return SynthTask::kInvert;
  if (name == "stripes") return SynthTask::kStripes;
  if (name == "shapes") return SynthTask::kShapes;
  throw ConfigError("unknown synthetic task '" + name + "' (expected invert|stripes|shapes)");
}

std::string synth_task_name(SynthTask task) {
  switch (task) {
    case SynthTask::kInvert: return "invert";
    case SynthTask::kStripes: return "stripes";
    case SynthTask::kShapes: return "shapes";
  }
  return "unknown";
}

namespace {

using Rgb = std::array<std::uint8_t, 3>;

Rgb random_color(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)),
          static_cast<std::uint8_t>(d(rng))};
}

int luma_of(const Rgb& c) { return (299 * c[0] + 587 * c[1] + 114 * c[2]) / 1000; }

void put(Image& img, std::size_t x, std::size_t y, const Rgb& c) {
  for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

// Gradient background with a few solid rectangles and discs.
Image invert_source(std::size_t side, std::mt19937_64& rng) {
  Image img(side, side, 3);
  const Rgb c0 = random_color(rng, 0, 255);
  const Rgb c1 = random_color(rng, 0, 255);
  const bool vertical = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double t = static_cast<double>(vertical ? y : x) / static_cast<double>(side - 1);
      Rgb c;
      for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::lround(c0[k] * (1 - t) + c1[k] * t));
      put(img, x, y, c);
    }
  }
  const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(side));
  std::uniform_real_distribution<double> rad(side * 0.1, side * 0.3);
  for (int i = 0; i < blobs; ++i) {
    const Rgb c = random_color(rng, 0, 255);
    const double cx = pos(rng), cy = pos(rng), r = rad(rng);
    const bool disc = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const bool inside = disc ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= r;
        if (inside) put(img, x, y, c);
      }
    }
  }
  return img;
}

Image stripes(std::size_t side, bool horizontal, std::mt19937_64& rng) {
  Image img(side, side, 3);
  const Rgb c0 = random_color(rng, 0, 255);
  const Rgb c1 = random_color(rng, 0, 255);
  const std::size_t max_period = std::max<std::size_t>(2, side / 2);
  const std::size_t period = std::uniform_int_distribution<std::size_t>(2, max_period)(rng);
  const std::size_t phase = std::uniform_int_distribution<std::size_t>(0, period - 1)(rng);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t u = ((horizontal ? y : x) + phase) % period;
      put(img, x, y, u * 2 < period ? c0 : c1);
    }
  }
  return img;
}

// Ellipse or rectangle mask covering roughly 12-40% of the frame.
Image shape_mask(std::size_t side, std::mt19937_64& rng) {
  const double area = static_cast<double>(side * side);
  for (;;) {
    Image mask(side, side, 1);
    const double frac = std::uniform_real_distribution<double>(0.12, 0.4)(rng);
    const double aspect = std::uniform_real_distribution<double>(0.6, 1.6)(rng);
    const bool ellipse = std::uniform_int_distribution<int>(0, 2)(rng) != 0;
    double rx, ry;
    if (ellipse) {
      rx = std::sqrt(frac * area * aspect / M_PI);
      ry = std::sqrt(frac * area / (aspect * M_PI));
    } else {
      rx = 0.5 * std::sqrt(frac * area * aspect);
      ry = 0.5 * std::sqrt(frac * area / aspect);
    }
    const double margin_x = std::min(rx, side / 2.0), margin_y = std::min(ry, side / 2.0);
    const double cx = std::uniform_real_distribution<double>(margin_x, side - margin_x)(rng);
    const double cy = std::uniform_real_distribution<double>(margin_y, side - margin_y)(rng);
    std::size_t count = 0;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
        if (inside) {
          mask.at(x, y) = 255;
          ++count;
        }
      }
    }
    const double f = count / area;
    if (f > 0.05 && f < 0.6) return mask;
  }
}

// Coarse value noise plus per-pixel jitter in random colors.
Image noise_background(std::size_t side, std::mt19937_64& rng) {
  Image img(side, side, 3);
  const std::size_t cells = 4;
  std::vector<Rgb> grid((cells + 1) * (cells + 1));
  for (auto& c : grid) c = random_color(rng, 30, 230);
  std::uniform_int_distribution<int> jitter(-40, 40);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) / side * cells;
      const double gy = static_cast<double>(y) / side * cells;
      const auto ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
      const double fx = gx - ix, fy = gy - iy;
      Rgb c;
      for (int k = 0; k < 3; ++k) {
        const double v = grid[iy * (cells + 1) + ix][k] * (1 - fx) * (1 - fy) +
                         grid[iy * (cells + 1) + ix + 1][k] * fx * (1 - fy) +
                         grid[(iy + 1) * (cells + 1) + ix][k] * (1 - fx) * fy +
                         grid[(iy + 1) * (cells + 1) + ix + 1][k] * fx * fy;
        c[k] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(std::lround(v)) + jitter(rng), 0, 235));
      }
      put(img, x, y, c);
    }
  }
  return img;
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
  if (spec.image_side < 4 || spec.image_side > kMaxImageSide) {
    throw ConfigError("synthetic image_side must be in [4, 8192]");
  }
  if (spec.count == 0) throw ConfigError("synthetic count must be positive");
  std::mt19937_64 rng(spec.seed);
  SyntheticData out;
  out.a.domain = Domain::kA;
  out.b.domain = Domain::kB;
  std::ostringstream manifest;
  manifest << "synth task=" << synth_task_name(spec.task) << " side=" << spec.image_side
           << " count=" << spec.count << " seed=" << spec.seed;
  out.a.manifest = out.b.manifest = manifest.str();
  const std::size_t s = spec.image_side;
  for (std::size_t i = 0; i < spec.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.ppm", i);
    out.a.names.emplace_back(name);
    out.b.names.emplace_back(name);
    switch (spec.task) {
      case SynthTask::kInvert: {
        Image a = invert_source(s, rng);
        Image b = a;
        for (auto& v : b.pixels) v = static_cast<std::uint8_t>(255 - v);
        out.a.images.push_back(std::move(a));
        out.b.images.push_back(std::move(b));
        break;
      }
      case SynthTask::kStripes:
        out.a.images.push_back(stripes(s, true, rng));
        out.b.images.push_back(stripes(s, false, rng));
        break;
      case SynthTask::kShapes: {
        Image mask = shape_mask(s, rng);
        Rgb fg = random_color(rng, 0, 200);
        while (luma_of(fg) > 170) fg = random_color(rng, 0, 200);
        Image a(s, s, 3, 255);
        Image b = noise_background(s, rng);
        for (std::size_t y = 0; y < s; ++y) {
          for (std::size_t x = 0; x < s; ++x) {
            if (mask.at(x, y)) {
              put(a, x, y, fg);
              put(b, x, y, fg);
            }
          }
        }
        out.a.images.push_back(std::move(a));
        out.b.images.push_back(std::move(b));
        out.masks.push_back(std::move(mask));
        break;
      }
    }
  }
  return out;
}

void write_dataset(const fs::path& root, const SyntheticData& data) {
  std::ostringstream manifest;
  manifest << "# " << data.a.manifest << "\n";
  for (std::size_t i = 0; i < data.a.images.size(); ++i) {
    write_image(root / "trainA" / data.a.names[i], data.a.images[i]);
    manifest << "trainA/" << data.a.names[i] << "\n";
  }
  for (std::size_t i = 0; i < data.b.images.size(); ++i) {
    write_image(root / "trainB" / data.b.names[i], data.b.images[i]);
    manifest << "trainB/" << data.b.names[i] << "\n";
  }
  for (std::size_t i = 0; i < data.masks.size(); ++i) {
    std::string name = data.b.names[i];
    name.replace(name.size() - 4, 4, ".pgm");
    write_image(root / "masksB" / name, data.masks[i]);
    manifest << "masksB/" << name << "\n";
  }
  const std::string text = manifest.str();
  write_file(root / "manifest.txt", std::span<const std::uint8_t>(
                                        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace xnet
