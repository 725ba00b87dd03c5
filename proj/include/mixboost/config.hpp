// Experiment configuration: a flat `key = value` file with `#` comments.
// Unknown keys are hard errors (a silent typo would invalidate a grid study).
// The canonical serialization (schema order, defaults applied) is hashed to
// content-address experiment directories.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mixboost/augment.hpp"
#include "mixboost/common.hpp"
#include "mixboost/interaction.hpp"
#include "mixboost/metrics.hpp"
#include "mixboost/train.hpp"

namespace mixboost {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs";

  // dataset
  std::string dataset_kind = "synth";  // synth | cifar10
  std::string dataset_path;            // cifar10 binary file(s), comma separated
  bool synth_fallback = true;          // fall back to synth when cifar10 path is unset/missing
  int train_count = 2000;
  int test_count = 500;
  int num_classes = 10;

  // augmentation + training
  AugmentSpec aug;
  double r1 = 0.7;
  double lambda = 1.0;
  int epochs = 30;
  int batch_size = 100;
  double lr0 = 0.05;
  double momentum = 0.9;
  int mask_rows = 8;
  int mask_cols = 8;

  // interaction estimation
  int players_rows = 4;
  int players_cols = 4;
  int profile_images = 8;
  int profile_pairs = 6;
  int profile_contexts = 8;

  // evaluation
  int corrupt_count = 250;
  int corrupt_severities = 3;
  int perturb_count = 50;
  int perturb_frames = 6;
  int ood_count = 250;
  int pgd_count = 200;
  PgdConfig pgd;
  int calibration_bins = 10;

  // grid search
  std::vector<double> grid_r1;
  std::vector<double> grid_lambda;

  TrainConfig train_config() const {
    TrainConfig t;
    t.r1 = r1;
    t.lambda = lambda;
    t.aug = aug;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr0 = lr0;
    t.momentum = momentum;
    t.num_classes = num_classes;
    t.mask_rows = mask_rows;
    t.mask_cols = mask_cols;
    t.seed = seed;
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

inline std::string format_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + s + "'");
}

inline long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  }
}

inline double parse_num(const std::string& s, const std::string& key) {
  try {
    return parse_double(s);
  } catch (const Error&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
  }
}

}  // namespace detail

// Schema-ordered list of (key, getter, setter). Single source of truth for
// parsing, serialization, and the documented key list.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed", "out", "dataset.kind", "dataset.path", "dataset.synth_fallback",
      "dataset.train_count", "dataset.test_count", "dataset.classes", "aug.op",
      "aug.cutout_hole", "aug.mixup_alpha", "aug.cutmix_alpha", "aug.pixmix_k_max",
      "aug.pixmix_beta", "train.r1", "train.lambda", "train.epochs", "train.batch",
      "train.lr0", "train.momentum", "mask.rows", "mask.cols", "interaction.rows",
      "interaction.cols", "interaction.images", "interaction.pairs", "interaction.contexts",
      "corrupt.count", "corrupt.severities", "perturb.count", "perturb.frames", "ood.count",
      "pgd.count", "pgd.epsilon", "pgd.step", "pgd.steps", "pgd.random_start",
      "calibration.bins", "grid.r1", "grid.lambda"};
  return keys;
}

inline std::string config_get(const ExperimentConfig& c, const std::string& key) {
  if (key == "seed") return std::to_string(c.seed);
  if (key == "out") return c.out_dir;
  if (key == "dataset.kind") return c.dataset_kind;
  if (key == "dataset.path") return c.dataset_path;
  if (key == "dataset.synth_fallback") return c.synth_fallback ? "true" : "false";
  if (key == "dataset.train_count") return std::to_string(c.train_count);
  if (key == "dataset.test_count") return std::to_string(c.test_count);
  if (key == "dataset.classes") return std::to_string(c.num_classes);
  if (key == "aug.op") return augment_name(c.aug.op);
  if (key == "aug.cutout_hole") return std::to_string(c.aug.cutout_hole);
  if (key == "aug.mixup_alpha") return format_double(c.aug.mixup_alpha);
  if (key == "aug.cutmix_alpha") return format_double(c.aug.cutmix_alpha);
  if (key == "aug.pixmix_k_max") return std::to_string(c.aug.pixmix_k_max);
  if (key == "aug.pixmix_beta") return format_double(c.aug.pixmix_beta);
  if (key == "train.r1") return format_double(c.r1);
  if (key == "train.lambda") return format_double(c.lambda);
  if (key == "train.epochs") return std::to_string(c.epochs);
  if (key == "train.batch") return std::to_string(c.batch_size);
  if (key == "train.lr0") return format_double(c.lr0);
  if (key == "train.momentum") return format_double(c.momentum);
  if (key == "mask.rows") return std::to_string(c.mask_rows);
  if (key == "mask.cols") return std::to_string(c.mask_cols);
  if (key == "interaction.rows") return std::to_string(c.players_rows);
  if (key == "interaction.cols") return std::to_string(c.players_cols);
  if (key == "interaction.images") return std::to_string(c.profile_images);
  if (key == "interaction.pairs") return std::to_string(c.profile_pairs);
  if (key == "interaction.contexts") return std::to_string(c.profile_contexts);
  if (key == "corrupt.count") return std::to_string(c.corrupt_count);
  if (key == "corrupt.severities") return std::to_string(c.corrupt_severities);
  if (key == "perturb.count") return std::to_string(c.perturb_count);
  if (key == "perturb.frames") return std::to_string(c.perturb_frames);
  if (key == "ood.count") return std::to_string(c.ood_count);
  if (key == "pgd.count") return std::to_string(c.pgd_count);
  if (key == "pgd.epsilon") return format_double(c.pgd.epsilon);
  if (key == "pgd.step") return format_double(c.pgd.step_size);
  if (key == "pgd.steps") return std::to_string(c.pgd.num_steps);
  if (key == "pgd.random_start") return c.pgd.random_start ? "true" : "false";
  if (key == "calibration.bins") return std::to_string(c.calibration_bins);
  if (key == "grid.r1") return detail::format_double_list(c.grid_r1);
  if (key == "grid.lambda") return detail::format_double_list(c.grid_lambda);
  throw ConfigError("unknown config key: '" + key + "'");
}

inline void config_set(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_num;
  if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(value, key));
  } else if (key == "out") {
    c.out_dir = value;
  } else if (key == "dataset.kind") {
    if (value != "synth" && value != "cifar10") {
      throw ConfigError("dataset.kind must be synth or cifar10, got '" + value + "'");
    }
    c.dataset_kind = value;
  } else if (key == "dataset.path") {
    c.dataset_path = value;
  } else if (key == "dataset.synth_fallback") {
    c.synth_fallback = parse_bool(value, key);
  } else if (key == "dataset.train_count") {
    c.train_count = static_cast<int>(parse_int(value, key));
  } else if (key == "dataset.test_count") {
    c.test_count = static_cast<int>(parse_int(value, key));
  } else if (key == "dataset.classes") {
    c.num_classes = static_cast<int>(parse_int(value, key));
  } else if (key == "aug.op") {
    c.aug.op = parse_augment(value);
  } else if (key == "aug.cutout_hole") {
    c.aug.cutout_hole = static_cast<int>(parse_int(value, key));
  } else if (key == "aug.mixup_alpha") {
    c.aug.mixup_alpha = parse_num(value, key);
  } else if (key == "aug.cutmix_alpha") {
    c.aug.cutmix_alpha = parse_num(value, key);
  } else if (key == "aug.pixmix_k_max") {
    c.aug.pixmix_k_max = static_cast<int>(parse_int(value, key));
  } else if (key == "aug.pixmix_beta") {
    c.aug.pixmix_beta = parse_num(value, key);
  } else if (key == "train.r1") {
    c.r1 = parse_num(value, key);
  } else if (key == "train.lambda") {
    c.lambda = parse_num(value, key);
  } else if (key == "train.epochs") {
    c.epochs = static_cast<int>(parse_int(value, key));
  } else if (key == "train.batch") {
    c.batch_size = static_cast<int>(parse_int(value, key));
  } else if (key == "train.lr0") {
    c.lr0 = parse_num(value, key);
  } else if (key == "train.momentum") {
    c.momentum = parse_num(value, key);
  } else if (key == "mask.rows") {
    c.mask_rows = static_cast<int>(parse_int(value, key));
  } else if (key == "mask.cols") {
    c.mask_cols = static_cast<int>(parse_int(value, key));
  } else if (key == "interaction.rows") {
    c.players_rows = static_cast<int>(parse_int(value, key));
  } else if (key == "interaction.cols") {
    c.players_cols = static_cast<int>(parse_int(value, key));
  } else if (key == "interaction.images") {
    c.profile_images = static_cast<int>(parse_int(value, key));
  } else if (key == "interaction.pairs") {
    c.profile_pairs = static_cast<int>(parse_int(value, key));
  } else if (key == "interaction.contexts") {
    c.profile_contexts = static_cast<int>(parse_int(value, key));
  } else if (key == "corrupt.count") {
    c.corrupt_count = static_cast<int>(parse_int(value, key));
  } else if (key == "corrupt.severities") {
    c.corrupt_severities = static_cast<int>(parse_int(value, key));
  } else if (key == "perturb.count") {
    c.perturb_count = static_cast<int>(parse_int(value, key));
  } else if (key == "perturb.frames") {
    c.perturb_frames = static_cast<int>(parse_int(value, key));
  } else if (key == "ood.count") {
    c.ood_count = static_cast<int>(parse_int(value, key));
  } else if (key == "pgd.count") {
    c.pgd_count = static_cast<int>(parse_int(value, key));
  } else if (key == "pgd.epsilon") {
    c.pgd.epsilon = parse_num(value, key);
  } else if (key == "pgd.step") {
    c.pgd.step_size = parse_num(value, key);
  } else if (key == "pgd.steps") {
    c.pgd.num_steps = static_cast<int>(parse_int(value, key));
  } else if (key == "pgd.random_start") {
    c.pgd.random_start = parse_bool(value, key);
  } else if (key == "calibration.bins") {
    c.calibration_bins = static_cast<int>(parse_int(value, key));
  } else if (key == "grid.r1") {
    c.grid_r1 = detail::parse_double_list(value);
  } else if (key == "grid.lambda") {
    c.grid_lambda = detail::parse_double_list(value);
  } else {
    throw ConfigError("unknown config key: '" + key + "'");
  }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::vector<std::string> unknown;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      config_set(c, key, value);
    } catch (const ConfigError& e) {
      if (std::string(e.what()).rfind("unknown config key", 0) == 0) {
        unknown.push_back(key);
      } else {
        throw;
      }
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const std::string& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

// Canonical form: every key in schema order, defaults applied.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  for (const std::string& key : config_keys()) {
    out += key + " = " + config_get(c, key) + "\n";
  }
  return out;
}

// Identity of an experiment. The output directory is excluded: the same
// experiment written to a different location is the same experiment.
inline std::string config_hash(const ExperimentConfig& c) {
  std::string canonical;
  for (const std::string& key : config_keys()) {
    if (key == "out") continue;
    canonical += key + "=" + config_get(c, key) + "\n";
  }
  return hex64(fnv1a64(canonical));
}

}  // namespace mixboost
