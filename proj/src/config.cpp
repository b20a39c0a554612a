#include "xnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "xnet/error.hpp"

namespace xnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename U>
U parse_uint(const std::string& key, const std::string& v) {
  U out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

struct Field {
  ConfigKey key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define XNET_SIZE_FIELD(name, expr, help)                                             \
  Field {                                                                              \
    {name, "", help}, [](const ExperimentConfig& c) { return std::to_string(c.expr); }, \
        [](ExperimentConfig& c, const std::string& v) {                                \
          c.expr = parse_uint<decltype(c.expr)>(name, v);                              \
        }                                                                              \
  }
#define XNET_DOUBLE_FIELD(name, expr, help)                                                \
  Field {                                                                                   \
    {name, "", help}, [](const ExperimentConfig& c) { return fmt_double(c.expr); },         \
        [](ExperimentConfig& c, const std::string& v) { c.expr = parse_double(name, v); } \
  }
#define XNET_BOOL_FIELD(name, expr, help)                                                \
  Field {                                                                                 \
    {name, "", help}, [](const ExperimentConfig& c) { return fmt_bool(c.expr); },         \
        [](ExperimentConfig& c, const std::string& v) { c.expr = parse_bool(name, v); } \
  }
#define XNET_STRING_FIELD(name, expr, help)                                  \
  Field {                                                                     \
    {name, "", help}, [](const ExperimentConfig& c) { return c.expr; },       \
        [](ExperimentConfig& c, const std::string& v) { c.expr = v; }         \
  }

std::vector<Field> make_fields() {
  std::vector<Field> f = {
      XNET_STRING_FIELD("data_root", data_root, "directory holding trainA/ and trainB/"),
      XNET_STRING_FIELD("synth_task", synth_task, "generate data in memory: invert|stripes|shapes"),
      XNET_SIZE_FIELD("synth_count", synth_count, "images per synthetic domain"),
      XNET_SIZE_FIELD("synth_seed", synth_seed, "synthetic data seed"),
      XNET_SIZE_FIELD("epochs", train.epochs, "training epochs"),
      XNET_SIZE_FIELD("batch_size", train.batch_size, "images per domain per step"),
      XNET_SIZE_FIELD("image_side", train.image_side, "square training resolution, multiple of 4"),
      XNET_SIZE_FIELD("seed", train.seed, "initialization and sampling seed"),
      XNET_SIZE_FIELD("max_steps", train.max_steps, "stop after this many steps (0 = no cap)"),
      XNET_DOUBLE_FIELD("lambda_gan", train.weights.gan, "adversarial weight"),
      XNET_DOUBLE_FIELD("lambda_id", train.weights.id, "identity weight"),
      XNET_DOUBLE_FIELD("lambda_ctc", train.weights.ctc, "cross-translation consistency weight"),
      XNET_DOUBLE_FIELD("lambda_zid", train.weights.zid, "latent cross-identity weight"),
      XNET_DOUBLE_FIELD("lambda_zcyc", train.weights.zcyc, "latent cycle weight"),
      XNET_BOOL_FIELD("use_gan", train.terms.gan, "enable adversarial terms"),
      XNET_BOOL_FIELD("use_id", train.terms.id, "enable identity term"),
      XNET_BOOL_FIELD("use_ctc", train.terms.ctc, "enable cross-translation consistency"),
      XNET_BOOL_FIELD("use_zid", train.terms.zid, "enable latent cross-identity"),
      XNET_BOOL_FIELD("use_zcyc", train.terms.zcyc, "enable latent cycle"),
      XNET_DOUBLE_FIELD("lr", train.adam.lr, "Adam learning rate"),
      XNET_DOUBLE_FIELD("beta1", train.adam.beta1, "Adam first-moment decay"),
      XNET_DOUBLE_FIELD("beta2", train.adam.beta2, "Adam second-moment decay"),
      XNET_DOUBLE_FIELD("adam_eps", train.adam.eps, "Adam denominator epsilon"),
      Field{{"decay_start_epoch", "", "epoch where linear lr decay starts (empty = epochs/2)"},
            [](const ExperimentConfig& c) {
              return c.train.decay_start_epoch ? std::to_string(*c.train.decay_start_epoch)
                                               : std::string();
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v.empty()) {
                c.train.decay_start_epoch.reset();
              } else {
                c.train.decay_start_epoch = parse_uint<std::size_t>("decay_start_epoch", v);
              }
            }},
      XNET_SIZE_FIELD("history_capacity", train.history_capacity, "discriminator image pool size"),
      XNET_SIZE_FIELD("checkpoint_every", train.checkpoint_every, "epochs between checkpoints (0 = final only)"),
      XNET_SIZE_FIELD("in_channels", train.network.generator.in_channels, "image channels"),
      XNET_SIZE_FIELD("base_width", train.network.generator.base_width, "generator stem width"),
      XNET_SIZE_FIELD("latent_channels", train.network.generator.latent_channels, "latent channels C_z"),
      XNET_SIZE_FIELD("res_blocks", train.network.generator.n_res_blocks, "encoder residual blocks"),
      XNET_SIZE_FIELD("translator_res_blocks", train.network.translator.n_res_blocks, "translator residual blocks"),
      XNET_SIZE_FIELD("disc_base_width", train.network.discriminator.base_width, "discriminator stem width"),
      XNET_SIZE_FIELD("disc_downsample", train.network.discriminator.n_downsample, "discriminator stride-2 stages"),
  };
  const ExperimentConfig defaults;
  for (auto& field : f) field.key.default_value = field.get(defaults);
  return f;
}

#undef XNET_SIZE_FIELD
#undef XNET_DOUBLE_FIELD
#undef XNET_BOOL_FIELD
#undef XNET_STRING_FIELD

const std::vector<Field>& fields() {
  static const std::vector<Field> f = make_fields();
  return f;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  if (!synth_task.empty()) {
    try {
      parse_synth_task(synth_task);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (synth_count == 0) throw ConfigError("synth_count must be positive");
  } else if (data_root.empty()) {
    throw ConfigError("one of data_root or synth_task must be set");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(cfg) + "\n";
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  return find_field(key).get(cfg);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  for (const auto& f : fields()) {
    if (f.get(a) != f.get(b)) return false;
  }
  return true;
}

std::pair<DomainDataset, DomainDataset> load_datasets(const ExperimentConfig& cfg) {
  if (!cfg.synth_task.empty()) {
    SyntheticSpec spec;
    spec.task = parse_synth_task(cfg.synth_task);
    spec.image_side = cfg.train.image_side;
    spec.count = cfg.synth_count;
    spec.seed = cfg.synth_seed;
    SyntheticData data = synth_generate(spec);
    return {std::move(data.a), std::move(data.b)};
  }
  return {load_domain(cfg.data_root, Domain::kA, cfg.train.image_side),
          load_domain(cfg.data_root, Domain::kB, cfg.train.image_side)};
}

}  // namespace xnet
