#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xnet/config.hpp"
#include "xnet/eval.hpp"

namespace xnet {

enum class Direction { kAToB, kBToA };

Direction parse_direction(const std::string& s);  // "a2b" | "b2a"

/// Runs encoder + decoder only, one image at a time.
std::vector<Image> translate_images(const ModelBundle<float>& bundle, std::span<const Image> images,
                                    Direction dir);

struct TranslationFid {
  double ab = 0.0;  // FID(real B, translated A)
  double ba = 0.0;  // FID(real A, translated B)
  double total() const { return ab + ba; }
};

TranslationFid translation_fid(const ModelBundle<float>& bundle, const DomainDataset& a,
                               const DomainDataset& b, const FeatureExtractor& extractor);

/// Named subset of loss terms. Parsed from e.g. "CTC;ZId;CTC+ZId+ZCyc" with
/// tokens GAN, Id, CTC, ZId, ZCyc; "none" is the empty subset.
struct AblationRun {
  std::string name;
  LossTerms terms = LossTerms::none();
};

LossTerms parse_term_subset(const std::string& subset);
std::vector<AblationRun> parse_ablation_runs(const std::string& spec);

/// Union of a run's terms with the base terms enabled in every run.
LossTerms ablation_terms(const AblationRun& run, const LossTerms& base);

struct AblationResult {
  AblationRun run;
  LossTerms terms;  // effective, base included
  TranslationFid fid;
  Checkpoint checkpoint;
};

/// Trains one run per subset from the same seed and scores each with the
/// default extractor.
std::vector<AblationResult> run_ablation(
    const ExperimentConfig& cfg, const std::vector<AblationRun>& runs, const LossTerms& base,
    const std::function<void(const AblationRun&, const StepRecord&)>& sink = {});

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationResult>& rows);

}  // namespace xnet
