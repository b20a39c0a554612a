// xnet command-line interface.
//
// Precedence: built-in defaults < --config file < --set key=value flags.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "xnet/checkpoint.hpp"
#include "xnet/config.hpp"
#include "xnet/error.hpp"
#include "xnet/eval.hpp"
#include "xnet/experiment.hpp"
#include "xnet/threads.hpp"

namespace fs = std::filesystem;
using namespace xnet;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

ExperimentConfig resolve_config(const std::string& file, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = file.empty() ? ExperimentConfig{} : load_config(file);
  for (const auto& s : sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

// Per-epoch means of the step reports.
class EpochLog {
 public:
  void add(const StepRecord& r) {
    if (count_ && r.epoch != epoch_) flush();
    epoch_ = r.epoch;
    lr_ = r.lr;
    const double v[] = {r.report.gan_g, r.report.gan_d, r.report.id,  r.report.ctc,
                        r.report.zid,   r.report.zcyc,  r.report.total};
    for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += v[i];
    ++count_;
  }
  std::string finish() {
    if (count_) flush();
    return text_;
  }

 private:
  void flush() {
    text_ += std::to_string(epoch_) + "," + format_sig9(lr_);
    for (double& s : sums_) {
      text_ += "," + format_sig9(s / static_cast<double>(count_));
      s = 0.0;
    }
    text_ += "," + std::to_string(count_) + "\n";
    count_ = 0;
  }

  std::string text_ = "epoch,lr,gan_g,gan_d,id,ctc,zid,zcyc,total,steps\n";
  std::array<double, 7> sums_{};
  std::size_t epoch_ = 0;
  std::size_t count_ = 0;
  double lr_ = 0.0;
};

// Networks are fully convolutional; inputs keep their resolution.
Image as_rgb_square(const Image& img) { return preprocess(img, std::min(img.width, img.height)); }

int cmd_train(const std::string& config_file, const std::vector<std::string>& sets,
              const fs::path& out) {
  const ExperimentConfig cfg = resolve_config(config_file, sets);
  fs::create_directories(out);
  const std::string resolved = serialize_config(cfg);
  write_text(out / "resolved_config.txt", resolved);
  const auto [a, b] = load_datasets(cfg);

  EpochLog log;
  const auto on_checkpoint = [&](const Checkpoint& c) {
    Checkpoint copy = c;
    copy.config_echo = resolved;
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04zu.xnet", c.epoch);
    save_checkpoint(copy, out / name);
  };
  Checkpoint final_ckpt =
      train_loop(cfg.train, a, b, [&](const StepRecord& r) { log.add(r); }, on_checkpoint);
  final_ckpt.config_echo = resolved;
  save_checkpoint(final_ckpt, out / "final.xnet");
  write_text(out / "loss_log.csv", log.finish());
  std::cout << "steps=" << final_ckpt.step << " checkpoint=" << (out / "final.xnet").string()
            << "\n";
  return 0;
}

int cmd_translate(const fs::path& ckpt_path, const fs::path& dir, const std::string& direction,
                  const fs::path& out) {
  const Direction dir_enum = parse_direction(direction);
  const ModelBundle<float> bundle =
      bundle_from_checkpoint(load_checkpoint(ckpt_path), Components::kGeneratorsOnly);
  const auto files = load_directory(dir);
  if (files.empty()) throw DataError("no .ppm/.pgm images in " + dir.string());
  std::vector<Image> inputs;
  for (const auto& [name, img] : files) inputs.push_back(as_rgb_square(img));
  const auto outputs = translate_images(bundle, inputs, dir_enum);
  fs::create_directories(out);
  for (std::size_t i = 0; i < files.size(); ++i) write_image(out / files[i].first, outputs[i]);
  std::cout << "translated=" << files.size() << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_file, const std::vector<std::string>& sets,
               const std::string& terms, const std::string& base, const fs::path& out) {
  const ExperimentConfig cfg = resolve_config(config_file, sets);
  const auto runs = parse_ablation_runs(terms);
  const LossTerms base_terms = parse_term_subset(base);
  fs::create_directories(out);
  const std::string resolved = serialize_config(cfg);
  write_text(out / "resolved_config.txt",
             resolved + "# ablate terms=" + terms + " base=" + base + "\n");
  // Every run starts from this initialization.
  save_checkpoint(ModelBundle<float>::build(cfg.train.bundle_spec(), cfg.train.seed),
                  out / "init.xnet");
  const auto results = run_ablation(cfg, runs, base_terms);
  for (const auto& r : results) {
    Checkpoint c = r.checkpoint;
    c.config_echo = resolved;
    save_checkpoint(c, out / r.run.name / "final.xnet");
  }
  write_ablation_csv(out / "summary.csv", results);
  for (const auto& r : results) {
    std::cout << r.run.name << " fid_total=" << format_sig9(r.fid.total()) << "\n";
  }
  return 0;
}

std::vector<Image> load_images_at(const fs::path& dir, std::size_t side) {
  std::vector<Image> out;
  for (const auto& [name, img] : load_directory(dir)) out.push_back(preprocess(img, side));
  if (out.empty()) throw DataError("no .ppm/.pgm images in " + dir.string());
  return out;
}

int cmd_eval_fid(const fs::path& real, const fs::path& fake, const std::string& extractor_id,
                 const std::string& ckpt_path, std::size_t side) {
  std::optional<ModelBundle<float>> bundle;
  FeatureExtractor extractor;
  if (extractor_id == "downsample8") {
    extractor = downsample_extractor();
  } else if (extractor_id == "encoder_ab" || extractor_id == "encoder_ba") {
    if (ckpt_path.empty()) throw ConfigError("extractor " + extractor_id + " needs --checkpoint");
    bundle = bundle_from_checkpoint(load_checkpoint(ckpt_path), Components::kGeneratorsOnly);
    const Module<float>& enc = extractor_id == "encoder_ab" ? *bundle->e_ab : *bundle->e_ba;
    extractor = encoder_extractor(enc, extractor_id);
  } else {
    throw ConfigError("unknown extractor '" + extractor_id +
                      "' (expected downsample8, encoder_ab or encoder_ba)");
  }
  const double d =
      fid(to_batch(load_images_at(real, side)), to_batch(load_images_at(fake, side)), extractor);
  std::cout << format_sig9(d) << "\n";
  return 0;
}

int cmd_extract_fg(const fs::path& original_dir, const fs::path& translated_dir,
                   const std::string& ckpt_path, const std::string& direction,
                   const fs::path& masks_dir, const fs::path& out) {
  const auto originals = load_directory(original_dir);
  if (originals.empty()) throw DataError("no .ppm/.pgm images in " + original_dir.string());
  std::vector<Image> translated;
  if (!ckpt_path.empty()) {
    const ModelBundle<float> bundle =
        bundle_from_checkpoint(load_checkpoint(ckpt_path), Components::kGeneratorsOnly);
    std::vector<Image> inputs;
    for (const auto& [name, img] : originals) inputs.push_back(as_rgb_square(img));
    translated = translate_images(bundle, inputs, parse_direction(direction));
  } else if (!translated_dir.empty()) {
    for (const auto& [name, img] : originals) translated.push_back(read_image(translated_dir / name));
  } else {
    throw ConfigError("extract-fg needs --translated or --checkpoint");
  }
  fs::create_directories(out);
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const Image& orig = originals[i].second;
    write_image(out / originals[i].first, foreground_extract(orig, translated[i]));
    if (!masks_dir.empty()) {
      const fs::path mask_path = masks_dir / fs::path(originals[i].first).replace_extension(".pgm");
      const Image mask = read_image(mask_path);
      if (mask.width != orig.width || mask.height != orig.height) {
        throw DataError("mask " + mask_path.string() + " does not match image size");
      }
      const auto s = foreground_scores(translated[i]);
      scores.insert(scores.end(), s.begin(), s.end());
      for (std::size_t p = 0; p < mask.width * mask.height; ++p) {
        truth.push_back(mask.pixels[p * mask.channels] > 127 ? 1 : 0);
      }
    }
  }
  if (!masks_dir.empty()) {
    const RocCurve curve = roc_auc(scores, truth);
    write_roc_csv(out / "roc.csv", curve);
    std::cout << "auc=" << format_sig9(curve.auc) << "\n";
  }
  std::cout << "extracted=" << originals.size() << "\n";
  return 0;
}

int cmd_viz_latent(const fs::path& ckpt_path, const fs::path& image_path,
                   const std::string& encoder, const fs::path& out) {
  const ModelBundle<float> bundle =
      bundle_from_checkpoint(load_checkpoint(ckpt_path), Components::kGeneratorsOnly);
  const Module<float>& enc = encoder == "ba" ? *bundle.e_ba : *bundle.e_ab;
  const Image img = as_rgb_square(read_image(image_path));
  const Tensor z = enc.forward(normalize(img));
  fs::create_directories(out);
  const std::string stem = image_path.stem().string();
  write_image(out / (stem + "_pca.ppm"), latent_pca_viz(z));
  write_image(out / (stem + "_magnitude.pgm"), latent_magnitude_map(z));
  std::cout << "latent=" << shape_str(z.shape()) << "\n";
  return 0;
}

int cmd_synth(const std::string& task, std::uint64_t seed, std::size_t count, std::size_t side,
              const fs::path& out) {
  SyntheticSpec spec;
  spec.task = parse_synth_task(task);
  spec.seed = seed;
  spec.count = count;
  spec.image_side = side;
  write_dataset(out, synth_generate(spec));
  std::cout << "wrote " << count << " images per domain to " << out.string() << "\n";
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report(const char* kind, int code, const std::string& msg) {
  std::cerr << "xnet: error kind=" << kind << " code=" << code << " message=\"" << one_line(msg)
            << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xnet: unpaired image translation with latent cross-translators"};
  app.require_subcommand(1);

  std::string config_file, terms = "CTC;ZId;CTC+ZId;ZId+ZCyc;CTC+ZId+ZCyc", base = "GAN+Id";
  std::vector<std::string> sets;
  std::string out, checkpoint, dir, direction = "a2b", real, fake, extractor = "downsample8";
  std::string original, translated, masks, image, encoder = "ab", task;
  std::uint64_t seed = 0;
  std::size_t count = 32, side = 16, fid_side = 0;

  auto* train = app.add_subcommand("train", "train a model bundle");
  train->add_option("--config", config_file, "key=value config file");
  train->add_option("--set", sets, "override a config key (key=value), repeatable");
  train->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("translate", "translate a directory with E and D only");
  tr->add_option("--checkpoint", checkpoint)->required();
  tr->add_option("--dir", dir)->required();
  tr->add_option("--direction", direction)->check(CLI::IsMember({"a2b", "b2a"}));
  tr->add_option("--out", out)->required();

  auto* ab = app.add_subcommand("ablate", "train one run per loss subset and report FIDs");
  ab->add_option("--config", config_file);
  ab->add_option("--set", sets);
  ab->add_option("--terms", terms, "';'-separated subsets, e.g. CTC;ZId;CTC+ZId");
  ab->add_option("--base", base, "terms added to every run (GAN, Id, ... or none)");
  ab->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval-fid", "Frechet distance between two image directories");
  ev->add_option("--real", real)->required();
  ev->add_option("--fake", fake)->required();
  ev->add_option("--extractor", extractor, "downsample8, encoder_ab or encoder_ba");
  ev->add_option("--checkpoint", checkpoint, "needed by encoder extractors");
  ev->add_option("--side", fid_side, "resample images to this side first (0 = keep)");

  auto* fg = app.add_subcommand("extract-fg", "foreground extraction by translation to white");
  fg->add_option("--dir", original, "original images")->required();
  fg->add_option("--translated", translated, "pre-translated images with matching names");
  fg->add_option("--checkpoint", checkpoint, "translate on the fly instead");
  fg->add_option("--direction", direction)->check(CLI::IsMember({"a2b", "b2a"}));
  fg->add_option("--masks", masks, "ground-truth masks (<name>.pgm) for ROC/AUC");
  fg->add_option("--out", out)->required();

  auto* vz = app.add_subcommand("viz-latent", "PCA and magnitude maps of a latent code");
  vz->add_option("--checkpoint", checkpoint)->required();
  vz->add_option("--image", image)->required();
  vz->add_option("--encoder", encoder)->check(CLI::IsMember({"ab", "ba"}));
  vz->add_option("--out", out)->required();

  auto* sy = app.add_subcommand("synth-data", "write a synthetic two-domain dataset");
  sy->add_option("--task", task, "invert, stripes or shapes")->required();
  sy->add_option("--seed", seed);
  sy->add_option("--count", count);
  sy->add_option("--side", side);
  sy->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", static_cast<int>(ExitCode::kConfig), e.what());
  }

  try {
    configure_threads();
    if (*train) return cmd_train(config_file, sets, out);
    if (*tr) return cmd_translate(checkpoint, dir, direction, out);
    if (*ab) return cmd_ablate(config_file, sets, terms, base, out);
    if (*ev) {
      if (fid_side == 0) {
        // Keep native size: take it from the first real image.
        const auto first = load_directory(real);
        if (first.empty()) throw DataError("no .ppm/.pgm images in " + real);
        fid_side = std::min(first.front().second.width, first.front().second.height);
      }
      return cmd_eval_fid(real, fake, extractor, checkpoint, fid_side);
    }
    if (*fg) return cmd_extract_fg(original, translated, checkpoint, direction, masks, out);
    if (*vz) return cmd_viz_latent(checkpoint, image, encoder, out);
    if (*sy) return cmd_synth(task, seed, count, side, out);
  } catch (const Error& e) {
    return report(e.kind(), static_cast<int>(e.code()), e.what());
  } catch (const std::exception& e) {
    return report("internal", 1, e.what());
  }
  return 0;
}
