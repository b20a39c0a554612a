#include "xnet/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "xnet/error.hpp"

namespace xnet {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

Direction parse_direction(const std::string& s) {
  if (s == "a2b") return Direction::kAToB;
  if (s == "b2a") return Direction::kBToA;
  throw ConfigError("direction must be a2b or b2a, got '" + s + "'");
}

std::vector<Image> translate_images(const ModelBundle<float>& bundle, std::span<const Image> images,
                                    Direction dir) {
  std::vector<Image> out;
  out.reserve(images.size());
  for (const Image& img : images) {
    const Tensor x = normalize(img);
    const Tensor y = dir == Direction::kAToB ? translate_ab(bundle, x).image
                                             : translate_ba(bundle, x).image;
    out.push_back(denormalize(y));
  }
  return out;
}

TranslationFid translation_fid(const ModelBundle<float>& bundle, const DomainDataset& a,
                               const DomainDataset& b, const FeatureExtractor& extractor) {
  const auto fake_b = translate_images(bundle, a.images, Direction::kAToB);
  const auto fake_a = translate_images(bundle, b.images, Direction::kBToA);
  TranslationFid f;
  f.ab = fid(to_batch(b.images), to_batch(fake_b), extractor);
  f.ba = fid(to_batch(a.images), to_batch(fake_a), extractor);
  return f;
}

LossTerms parse_term_subset(const std::string& subset) {
  LossTerms t = LossTerms::none();
  if (lower(subset) == "none") return t;
  std::stringstream parts(subset);
  std::string term;
  while (std::getline(parts, term, '+')) {
    const std::string k = lower(term);
    if (k == "gan") {
      t.gan = true;
    } else if (k == "id") {
      t.id = true;
    } else if (k == "ctc") {
      t.ctc = true;
    } else if (k == "zid") {
      t.zid = true;
    } else if (k == "zcyc") {
      t.zcyc = true;
    } else {
      throw ConfigError("unknown loss term '" + term + "' (expected GAN, Id, CTC, ZId, ZCyc or none)");
    }
  }
  return t;
}

std::vector<AblationRun> parse_ablation_runs(const std::string& spec) {
  std::vector<AblationRun> runs;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item.erase(std::remove_if(item.begin(), item.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    runs.push_back({item, parse_term_subset(item)});
  }
  if (runs.empty()) throw ConfigError("no ablation runs requested");
  return runs;
}

LossTerms ablation_terms(const AblationRun& run, const LossTerms& base) {
  return {run.terms.gan || base.gan, run.terms.id || base.id, run.terms.ctc || base.ctc,
          run.terms.zid || base.zid, run.terms.zcyc || base.zcyc};
}

std::vector<AblationResult> run_ablation(
    const ExperimentConfig& cfg, const std::vector<AblationRun>& runs, const LossTerms& base,
    const std::function<void(const AblationRun&, const StepRecord&)>& sink) {
  cfg.validate();
  const auto [a, b] = load_datasets(cfg);
  const FeatureExtractor extractor = downsample_extractor();
  std::vector<AblationResult> results;
  for (const AblationRun& run : runs) {
    TrainConfig tc = cfg.train;
    tc.terms = ablation_terms(run, base);
    ModelBundle<float> bundle = ModelBundle<float>::build(tc.bundle_spec(), tc.seed);
    ReportSink report_sink;
    if (sink) report_sink = [&](const StepRecord& r) { sink(run, r); };
    AblationResult res;
    res.run = run;
    res.terms = tc.terms;
    res.checkpoint = train_loop(bundle, tc, a, b, report_sink);
    res.fid = translation_fid(bundle, a, b, extractor);
    results.push_back(std::move(res));
  }
  return results;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationResult>& rows) {
  std::string text = "run,gan,id,ctc,zid,zcyc,fid_ab,fid_ba,fid_total\n";
  const auto flag = [](bool on) { return std::string(on ? "1," : "0,"); };
  for (const auto& r : rows) {
    const LossTerms& t = r.terms;
    text += r.run.name + "," + flag(t.gan) + flag(t.id) + flag(t.ctc) + flag(t.zid) + flag(t.zcyc) +
            format_sig9(r.fid.ab) + "," + format_sig9(r.fid.ba) + "," + format_sig9(r.fid.total()) +
            "\n";
  }
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

}  // namespace xnet
