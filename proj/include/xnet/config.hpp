#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xnet/training.hpp"

namespace xnet {

/// File form of a training run: TrainConfig plus data location.
///
/// Text format is one `key = value` per line; `#` starts a comment. Every key
/// is optional and unknown keys are rejected. Data comes from `data_root`
/// (trainA/, trainB/) or, when `synth_task` is set, is generated in memory.
struct ExperimentConfig {
  TrainConfig train;
  std::string data_root;
  std::string synth_task;  // empty, invert, stripes or shapes
  std::size_t synth_count = 32;
  std::uint64_t synth_seed = 0;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// All keys in serialization order, with defaults.
const std::vector<ConfigKey>& config_keys();

std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key=value` override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Field-wise equality (floats compared exactly).
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Loads the configured datasets (synthetic or from disk).
std::pair<DomainDataset, DomainDataset> load_datasets(const ExperimentConfig& cfg);

}  // namespace xnet
