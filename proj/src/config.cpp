#include "smpcl/config.hpp"

#include <algorithm>
#include <climits>
#include <cstdint>
#include <functional>
#include <sstream>
#include <vector>

#include "smpcl/error.hpp"
#include "smpcl/io.hpp"

namespace smpcl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ValidationError(key + ": '" + v + "' is not an integer");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < INT_MIN || x > INT_MAX) throw ValidationError(key + ": " + v + " is out of range");
  return static_cast<int>(x);
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ValidationError(key + ": '" + v + "' is not a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": '" + v + "' is not a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(to_int(key, trim(item)));
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string real_text(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

struct Key {
  const char* name;
  const char* help;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<Key> table = {
      {"dataset", "dataset directory (empty: synthesize)",
       [](C& c, S, S v) { c.dataset = v; }, [](const C& c) { return c.dataset; }},
      {"resize", "resample loaded cases to NxN (0: keep)",
       [](C& c, S k, S v) { c.resize = to_int(k, v); },
       [](const C& c) { return std::to_string(c.resize); }},
      {"train_count", "leading cases used for training",
       [](C& c, S k, S v) { c.train_count = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train_count); }},
      {"val_count", "cases after the training ones used for validation",
       [](C& c, S k, S v) { c.val_count = to_int(k, v); },
       [](const C& c) { return std::to_string(c.val_count); }},
      {"output", "output directory for checkpoint and logs",
       [](C& c, S, S v) { c.output = v; }, [](const C& c) { return c.output; }},
      {"synth.seed", "synthetic dataset seed",
       [](C& c, S k, S v) { c.synth.seed = static_cast<std::uint64_t>(to_integer(k, v)); },
       [](const C& c) { return std::to_string(c.synth.seed); }},
      {"synth.count", "synthetic case count",
       [](C& c, S k, S v) { c.synth.count = to_int(k, v); },
       [](const C& c) { return std::to_string(c.synth.count); }},
      {"synth.size", "synthetic image side",
       [](C& c, S k, S v) { c.synth.size = to_int(k, v); },
       [](const C& c) { return std::to_string(c.synth.size); }},
      {"synth.classes", "synthetic class count (2-4)",
       [](C& c, S k, S v) { c.synth.num_classes = to_int(k, v); },
       [](const C& c) { return std::to_string(c.synth.num_classes); }},
      {"synth.noise", "synthetic intensity noise std",
       [](C& c, S k, S v) { c.synth.noise = to_real(k, v); },
       [](const C& c) { return real_text(c.synth.noise); }},
      {"net.classes", "number of classes K",
       [](C& c, S k, S v) { c.train.net.num_classes = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.net.num_classes); }},
      {"net.widths", "encoder widths, comma separated",
       [](C& c, S k, S v) { c.train.net.widths = to_int_list(k, v); },
       [](const C& c) { return join(c.train.net.widths); }},
      {"net.size", "input side (height = width)",
       [](C& c, S k, S v) { c.train.net.height = c.train.net.width = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.net.height); }},
      {"net.state_size", "S6 state size N",
       [](C& c, S k, S v) { c.train.net.state_size = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.net.state_size); }},
      {"net.skip_step", "sparse scan skip step p",
       [](C& c, S k, S v) { c.train.net.skip_step = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.net.skip_step); }},
      {"net.conv1d_kernel", "SMB causal conv1d kernel",
       [](C& c, S k, S v) { c.train.net.conv1d_kernel = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.net.conv1d_kernel); }},
      {"net.scan_mode", "sparse | dense",
       [](C& c, S k, S v) {
         if (v != "sparse" && v != "dense") throw ValidationError(k + ": expected sparse or dense");
         c.train.net.scan_mode = v == "dense" ? ScanMode::kDense : ScanMode::kSparse;
       },
       [](const C& c) {
         return std::string(c.train.net.scan_mode == ScanMode::kDense ? "dense" : "sparse");
       }},
      {"spobe.enabled", "train on enriched scribbles",
       [](C& c, S k, S v) { c.train.use_spobe = to_bool(k, v); },
       [](const C& c) { return std::string(c.train.use_spobe ? "true" : "false"); }},
      {"spobe.schedule", "increasing odd dilation sizes",
       [](C& c, S k, S v) { c.train.spobe.schedule = to_int_list(k, v); },
       [](const C& c) { return join(c.train.spobe.schedule); }},
      {"spobe.thresholds", "per-class gate thresholds (empty: 2k)",
       [](C& c, S k, S v) { c.train.spobe.class_thresholds = v.empty() ? std::vector<int>{} : to_int_list(k, v); },
       [](const C& c) { return join(c.train.spobe.class_thresholds); }},
      {"guide", "synthetic_oracle | identity",
       [](C& c, S, S v) { c.train.guide = parse_guide_kind(v); },
       [](const C& c) { return to_string(c.train.guide); }},
      {"guide.patch", "guide encoder stride",
       [](C& c, S k, S v) { c.train.guide_patch = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.guide_patch); }},
      {"lambda", "Dice weight in L1",
       [](C& c, S k, S v) { c.train.pcl.lambda = to_real(k, v); },
       [](const C& c) { return real_text(c.train.pcl.lambda); }},
      {"lambda_rampup", "fraction of max_iter over which lambda ramps up",
       [](C& c, S k, S v) { c.train.lambda_rampup = to_real(k, v); },
       [](const C& c) { return real_text(c.train.lambda_rampup); }},
      {"box_threshold", "probability threshold for predicted box regions",
       [](C& c, S k, S v) { c.train.pcl.box_threshold = to_real(k, v); },
       [](const C& c) { return real_text(c.train.pcl.box_threshold); }},
      {"lr", "base learning rate",
       [](C& c, S k, S v) { c.train.lr = to_real(k, v); },
       [](const C& c) { return real_text(c.train.lr); }},
      {"momentum", "SGD momentum",
       [](C& c, S k, S v) { c.train.pcl.momentum = to_real(k, v); },
       [](const C& c) { return real_text(c.train.pcl.momentum); }},
      {"weight_decay", "SGD weight decay",
       [](C& c, S k, S v) { c.train.pcl.weight_decay = to_real(k, v); },
       [](const C& c) { return real_text(c.train.pcl.weight_decay); }},
      {"poly_power", "poly schedule exponent",
       [](C& c, S k, S v) { c.train.poly_power = to_real(k, v); },
       [](const C& c) { return real_text(c.train.poly_power); }},
      {"max_iter", "training iterations",
       [](C& c, S k, S v) { c.train.max_iter = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.max_iter); }},
      {"batch_size", "cases per step",
       [](C& c, S k, S v) { c.train.batch_size = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.batch_size); }},
      {"eval_interval", "iterations between validation passes",
       [](C& c, S k, S v) { c.train.eval_interval = to_int(k, v); },
       [](const C& c) { return std::to_string(c.train.eval_interval); }},
      {"seed", "training seed (SMPCL_SEED overrides)",
       [](C& c, S k, S v) { c.train.seed = static_cast<std::uint64_t>(to_integer(k, v)); },
       [](const C& c) { return std::to_string(c.train.seed); }},
      {"augment", "random flips, quarter turns and noise",
       [](C& c, S k, S v) { c.train.augment = to_bool(k, v); },
       [](const C& c) { return std::string(c.train.augment ? "true" : "false"); }},
      {"noise_std", "augmentation noise std",
       [](C& c, S k, S v) { c.train.noise_std = to_real(k, v); },
       [](const C& c) { return real_text(c.train.noise_std); }},
      {"prefetch", "batches prepared ahead of the trainer",
       [](C& c, S k, S v) { c.train.prefetch = static_cast<std::size_t>(std::max(1, to_int(k, v))); },
       [](const C& c) { return std::to_string(c.train.prefetch); }},
  };
  return table;
}

}  // namespace

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(config, key, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig config;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

void ExperimentConfig::validate() const {
  if (!dataset.empty() && !std::filesystem::is_directory(dataset)) {
    throw ValidationError("dataset directory " + dataset + " does not exist");
  }
  if (train_count < 1) throw ValidationError("train_count must be >= 1");
  if (val_count < 0) throw ValidationError("val_count must be >= 0");
  if (resize < 0) throw ValidationError("resize must be >= 0");
  if (output.empty()) throw ValidationError("output must be set");
  train.validate();
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

std::string config_keys_help() {
  std::ostringstream out;
  for (const auto& k : keys()) out << "  " << k.name << ": " << k.help << "\n";
  return out.str();
}

std::pair<Dataset, Dataset> experiment_data(const ExperimentConfig& config) {
  config.validate();
  Dataset all = config.dataset.empty() ? synth_dataset(config.synth)
                                       : load_dataset(config.dataset, config.resize);
  const auto need = static_cast<std::size_t>(config.train_count + config.val_count);
  if (all.cases.size() < need) {
    throw ValidationError("dataset has " + std::to_string(all.cases.size()) + " cases, config needs " +
                          std::to_string(need));
  }
  const auto t = static_cast<std::size_t>(config.train_count);
  return {all.slice(0, t), all.slice(t, need)};
}

}  // namespace smpcl
