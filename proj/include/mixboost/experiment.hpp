// Experiment orchestration: dataset resolution, evaluation-set construction,
// content-addressed experiment directories, and the train / eval /
// interactions / proxy / grid / correlate pipelines the CLI exposes.
//
// Every pipeline is a pure function of (config, force flag): rerunning a
// command with the same config reproduces every emitted byte.
#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mixboost/config.hpp"
#include "mixboost/corruption.hpp"
#include "mixboost/dataset.hpp"
#include "mixboost/interaction.hpp"
#include "mixboost/metrics.hpp"
#include "mixboost/report.hpp"
#include "mixboost/train.hpp"

namespace mixboost {

namespace fs = std::filesystem;

struct DatasetSplits {
  ImageBatch train_images;
  LabelBatch train_labels;
  ImageBatch test_images;
  LabelBatch test_labels;
  std::string manifest;  // human-readable provenance line
};

namespace detail {

inline std::vector<std::string> split_paths(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::pair<ImageBatch, LabelBatch> take(const std::pair<ImageBatch, LabelBatch>& data,
                                              std::size_t start, std::size_t count,
                                              const char* what) {
  if (start + count > data.first.size()) {
    throw DataError(std::string("dataset too small for requested ") + what + " split");
  }
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
  return {slice(data.first, idx), slice(data.second, idx)};
}

}  // namespace detail

// Resolves the configured dataset. CIFAR-10 files are concatenated and split
// train-first/test-second (disjoint by construction); a missing path falls
// back to the synthetic set when dataset.synth_fallback allows it.
inline DatasetSplits load_dataset(const ExperimentConfig& cfg) {
  DatasetSplits out;
  const auto train_n = static_cast<std::size_t>(cfg.train_count);
  const auto test_n = static_cast<std::size_t>(cfg.test_count);
  if (cfg.train_count < 1 || cfg.test_count < 1) {
    throw ConfigError("dataset.train_count and dataset.test_count must be positive");
  }

  bool use_cifar = cfg.dataset_kind == "cifar10";
  if (use_cifar) {
    const std::vector<std::string> paths = detail::split_paths(cfg.dataset_path);
    bool available = !paths.empty();
    for (const std::string& p : paths) {
      if (!fs::exists(p)) available = false;
    }
    if (!available) {
      if (!cfg.synth_fallback) {
        throw DataError("dataset.kind = cifar10 but dataset.path is unset or missing, and "
                        "dataset.synth_fallback is disabled");
      }
      use_cifar = false;
    }
  }

  if (use_cifar) {
    std::vector<unsigned char> bytes;
    for (const std::string& p : detail::split_paths(cfg.dataset_path)) {
      std::ifstream f(p, std::ios::binary);
      if (!f) throw DataError("cannot open CIFAR-10 file: " + p);
      bytes.insert(bytes.end(), std::istreambuf_iterator<char>(f),
                   std::istreambuf_iterator<char>());
    }
    const auto data = parse_cifar10_bytes(bytes, "cifar");
    if (data.second.num_classes != cfg.num_classes) {
      throw ConfigError("dataset.classes must be 10 for cifar10");
    }
    auto train = detail::take(data, 0, train_n, "train");
    auto test = detail::take(data, train_n, test_n, "test");
    out.train_images = std::move(train.first);
    out.train_labels = std::move(train.second);
    out.test_images = std::move(test.first);
    out.test_labels = std::move(test.second);
    out.manifest = "cifar10(train=" + std::to_string(train_n) + ",test=" + std::to_string(test_n) +
                   ",path=" + cfg.dataset_path + ")";
    return out;
  }

  const int per_class_train =
      static_cast<int>((train_n + static_cast<std::size_t>(cfg.num_classes) - 1) /
                       static_cast<std::size_t>(cfg.num_classes));
  const int per_class_test =
      static_cast<int>((test_n + static_cast<std::size_t>(cfg.num_classes) - 1) /
                       static_cast<std::size_t>(cfg.num_classes));
  auto train = synth_dataset(cfg.num_classes, per_class_train, derive_seed(cfg.seed, "train-data"),
                             "train");
  auto test =
      synth_dataset(cfg.num_classes, per_class_test, derive_seed(cfg.seed, "test-data"), "test");
  std::vector<std::size_t> idx(train_n);
  for (std::size_t i = 0; i < train_n; ++i) idx[i] = i;
  out.train_images = slice(train.first, idx);
  out.train_labels = slice(train.second, idx);
  idx.resize(test_n);
  out.test_images = slice(test.first, idx);
  out.test_labels = slice(test.second, idx);
  out.manifest = "synth(classes=" + std::to_string(cfg.num_classes) +
                 ",train=" + std::to_string(train_n) + ",test=" + std::to_string(test_n) +
                 ",seed=" + std::to_string(cfg.seed) + ")";
  return out;
}

inline EvalBundle make_eval_bundle(const ExperimentConfig& cfg, const DatasetSplits& data) {
  EvalBundle b;
  b.test_images = data.test_images;
  b.test_labels = data.test_labels;
  b.seed = cfg.seed;
  b.calibration_bins = cfg.calibration_bins;
  b.pgd = cfg.pgd;

  const std::size_t corrupt_n =
      std::min(static_cast<std::size_t>(cfg.corrupt_count), data.test_images.size());
  std::vector<std::size_t> idx(corrupt_n);
  for (std::size_t i = 0; i < corrupt_n; ++i) idx[i] = i;
  const ImageBatch base = slice(data.test_images, idx);
  b.corruption_labels = slice(data.test_labels, idx);
  b.corruptions =
      make_corruption_suite(base, cfg.corrupt_severities, derive_seed(cfg.seed, "corrupt"));

  b.sequences = make_perturbation_suite(data.test_images,
                                        static_cast<std::size_t>(cfg.perturb_count),
                                        cfg.perturb_frames, derive_seed(cfg.seed, "perturb"));
  b.ood = synth_ood(cfg.ood_count, derive_seed(cfg.seed, "ood"));

  const std::size_t pgd_n =
      std::min(static_cast<std::size_t>(cfg.pgd_count), data.test_images.size());
  idx.resize(pgd_n);
  b.pgd_images = slice(data.test_images, idx);
  b.pgd_labels = slice(data.test_labels, idx);
  return b;
}

// Persist generated corruption sets in the CIFAR record format plus a JSON
// manifest (kind, severity, seed) so they can be reloaded elsewhere.
inline void persist_corruption_sets(const fs::path& dir, const std::vector<CorruptionSet>& sets,
                                    const LabelBatch& labels, std::uint64_t seed) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["schema"] = "eval-sets/1";
  manifest["seed"] = seed;
  manifest["sets"] = nlohmann::ordered_json::array();
  for (const CorruptionSet& s : sets) {
    const std::string file =
        std::string(corruption_name(s.kind)) + "_s" + std::to_string(s.severity) + ".bin";
    write_cifar10((dir / file).string(), s.images, labels);
    nlohmann::ordered_json entry;
    entry["file"] = file;
    entry["kind"] = corruption_name(s.kind);
    entry["severity"] = s.severity;
    entry["count"] = s.images.size();
    manifest["sets"].push_back(entry);
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  f << manifest.dump(2) << "\n";
}

inline std::vector<CorruptionSet> load_corruption_sets(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::ordered_json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  std::vector<CorruptionSet> out;
  for (const auto& entry : manifest.at("sets")) {
    CorruptionSet s;
    s.kind = parse_corruption(entry.at("kind").get<std::string>());
    s.severity = entry.at("severity").get<int>();
    auto parsed = parse_cifar10((dir / entry.at("file").get<std::string>()).string());
    s.images = std::move(parsed.first);
    out.push_back(std::move(s));
  }
  return out;
}

// --- Experiment directories -----------------------------------------------------

inline fs::path experiment_dir(const ExperimentConfig& cfg) {
  return fs::path(cfg.out_dir) / config_hash(cfg);
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write: " + path.string());
  f << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void refuse_existing(const fs::path& path, bool force, const char* what) {
  if (!force && fs::exists(path)) {
    throw DataError(std::string(what) + " already exists: " + path.string() +
                    " (pass --force to overwrite)");
  }
}

}  // namespace detail

// train: checkpoint + JSON-lines log under out/<config-hash>/.
inline fs::path run_train(const ExperimentConfig& cfg, bool force) {
  const fs::path dir = experiment_dir(cfg);
  detail::refuse_existing(dir / "checkpoint.bin", force, "checkpoint");
  const DatasetSplits data = load_dataset(cfg);
  const TrainResult result = train(cfg.train_config(), data.train_images, data.train_labels);

  fs::create_directories(dir);
  detail::write_text(dir / "config.cfg", serialize_config(cfg));
  std::string log;
  for (const EpochRecord& rec : result.log) {
    nlohmann::ordered_json line;
    line["epoch"] = rec.epoch;
    line["lr"] = rec.lr;
    line["loss"] = rec.loss;
    line["ce"] = rec.ce;
    line["l_boost"] = rec.l_boost;
    line["train_acc"] = rec.train_acc;
    log += line.dump() + "\n";
  }
  detail::write_text(dir / "train_log.jsonl", log);

  nlohmann::ordered_json meta;
  meta["config_hash"] = config_hash(cfg);
  meta["seed"] = cfg.seed;
  meta["epochs"] = cfg.epochs;
  meta["dataset"] = data.manifest;
  save_checkpoint((dir / "checkpoint.bin").string(), result.model, meta);
  return dir;
}

inline TinyCnn load_experiment_model(const ExperimentConfig& cfg, const fs::path& dir) {
  LoadedCheckpoint ck = load_checkpoint((dir / "checkpoint.bin").string());
  if (ck.model.num_classes() != cfg.num_classes) {
    throw DataError("checkpoint was trained with " + std::to_string(ck.model.num_classes()) +
                    " classes but the config expects " + std::to_string(cfg.num_classes));
  }
  return std::move(ck.model);
}

// eval: report.json + report.csv (optionally persisting the generated sets).
inline SafetyReport run_eval(const ExperimentConfig& cfg, bool force, bool save_sets = false) {
  const fs::path dir = experiment_dir(cfg);
  detail::refuse_existing(dir / "report.json", force, "report");
  const TinyCnn model = load_experiment_model(cfg, dir);
  const DatasetSplits data = load_dataset(cfg);
  const EvalBundle bundle = make_eval_bundle(cfg, data);
  SafetyReport report = full_report(model, bundle);
  report.dataset_manifest = data.manifest;
  detail::write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
  detail::write_text(dir / "report.csv", report_csv_header() + report_csv_row(report));
  if (save_sets) {
    persist_corruption_sets(dir / "eval_sets", bundle.corruptions, bundle.corruption_labels,
                            derive_seed(cfg.seed, "corrupt"));
  }
  return report;
}

// interactions: profile.json + profile.svg.
inline InteractionProfile run_interactions(const ExperimentConfig& cfg, bool force) {
  const fs::path dir = experiment_dir(cfg);
  detail::refuse_existing(dir / "profile.json", force, "profile");
  const TinyCnn model = load_experiment_model(cfg, dir);
  const DatasetSplits data = load_dataset(cfg);

  PlayerGrid grid{cfg.players_rows, cfg.players_cols, channel_means(data.train_images)};
  const std::size_t count =
      std::min(static_cast<std::size_t>(cfg.profile_images), data.test_images.size());
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  const ImageBatch images = slice(data.test_images, idx);
  const LabelBatch labels = slice(data.test_labels, idx);

  const InteractionProfile prof =
      profile(model, images, labels, grid, default_order_grid(grid.n()),
              {static_cast<std::size_t>(cfg.profile_pairs),
               static_cast<std::size_t>(cfg.profile_contexts)},
              derive_seed(cfg.seed, "profile"));
  detail::write_text(dir / "profile.json", profile_to_json(prof, config_hash(cfg)).dump(2) + "\n");
  detail::write_text(dir / "profile.svg", profile_svg(prof, "interaction profile " + config_hash(cfg)));
  return prof;
}

// proxy: M(a,b,c) (defaults a=b=0.2, c=0.8) from a stored profile.
inline double run_proxy(const ExperimentConfig& cfg, const ProxyParams& params, bool force) {
  const fs::path dir = experiment_dir(cfg);
  detail::refuse_existing(dir / "proxy.json", force, "proxy value");
  const auto prof = profile_from_json(
      nlohmann::ordered_json::parse(detail::read_text(dir / "profile.json")));
  const double m = proxy_m(prof, params);
  nlohmann::ordered_json out;
  out["schema"] = "proxy/1";
  out["a"] = params.a;
  out["b"] = params.b;
  out["c"] = params.c;
  out["m"] = m;
  detail::write_text(dir / "proxy.json", out.dump(2) + "\n");
  return m;
}

// --- Grid search -------------------------------------------------------------------

struct GridCell {
  double r1 = 0;
  double lambda = 0;
  std::string config_hash;
  std::string error;  // empty on success
  SafetyReport report;
  double m_value = 0;
  bool has_m = false;
};

inline ExperimentConfig cell_config(const ExperimentConfig& base, double r1, double lambda,
                                    const fs::path& grid_dir) {
  ExperimentConfig c = base;
  c.r1 = r1;
  c.lambda = lambda;
  c.grid_r1.clear();
  c.grid_lambda.clear();
  c.out_dir = grid_dir.string();
  return c;
}

// One grid cell end to end: train, eval, interactions, proxy.
inline void run_cell(const ExperimentConfig& cell, bool force) {
  run_train(cell, force);
  run_eval(cell, force);
  run_interactions(cell, force);
  run_proxy(cell, {}, force);
}

inline fs::path grid_dir(const ExperimentConfig& cfg) {
  return fs::path(cfg.out_dir) / ("grid-" + config_hash(cfg));
}

// Runs every (r1, lambda) cell, optionally in parallel worker processes, and
// assembles the table by reading cell artifacts back. Per-cell failures are
// recorded in the row; the grid keeps going.
inline std::vector<GridCell> run_grid(const ExperimentConfig& cfg, bool force, int jobs = 1) {
  if (cfg.grid_r1.empty() || cfg.grid_lambda.empty()) {
    throw ConfigError("grid requires nonempty grid.r1 and grid.lambda lists");
  }
  if (jobs < 1) throw ConfigError("--jobs must be at least 1");
  const fs::path gdir = grid_dir(cfg);
  fs::create_directories(gdir);

  std::vector<ExperimentConfig> cells;
  for (double r1 : cfg.grid_r1) {
    for (double lambda : cfg.grid_lambda) cells.push_back(cell_config(cfg, r1, lambda, gdir));
  }

  auto execute = [&](const ExperimentConfig& cell) {
    const fs::path dir = experiment_dir(cell);
    try {
      run_cell(cell, force);
      std::error_code ec;
      fs::remove(dir / "cell_error.txt", ec);
    } catch (const std::exception& e) {
      fs::create_directories(dir);
      detail::write_text(dir / "cell_error.txt", std::string(e.what()) + "\n");
    }
  };

  if (jobs == 1) {
    for (const ExperimentConfig& cell : cells) execute(cell);
  } else {
    // process pool: each cell writes only to its own directory
    std::vector<pid_t> active;
    auto reap_one = [&]() {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (active[i] == pid) {
          active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
          break;
        }
      }
    };
    for (const ExperimentConfig& cell : cells) {
      while (active.size() >= static_cast<std::size_t>(jobs)) reap_one();
      const pid_t pid = fork();
      if (pid < 0) throw DataError("fork failed");
      if (pid == 0) {
        execute(cell);
        _exit(0);
      }
      active.push_back(pid);
    }
    while (!active.empty()) reap_one();
  }

  // collect
  std::vector<GridCell> table;
  for (const ExperimentConfig& cell : cells) {
    GridCell row;
    row.r1 = cell.r1;
    row.lambda = cell.lambda;
    row.config_hash = config_hash(cell);
    const fs::path dir = experiment_dir(cell);
    if (fs::exists(dir / "cell_error.txt")) {
      row.error = detail::trim(detail::read_text(dir / "cell_error.txt"));
    } else {
      try {
        row.report = report_from_json(
            nlohmann::ordered_json::parse(detail::read_text(dir / "report.json")));
        const auto proxy_json =
            nlohmann::ordered_json::parse(detail::read_text(dir / "proxy.json"));
        row.m_value = proxy_json.at("m").get<double>();
        row.has_m = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
    table.push_back(std::move(row));
  }

  // emit the table
  std::string csv = "r1,lambda,config_hash,error";
  for (const std::string& name : SafetyReport::metric_names()) csv += "," + name;
  csv += ",m\n";
  for (const GridCell& row : table) {
    csv += format_double(row.r1) + "," + format_double(row.lambda) + "," + row.config_hash + "," +
           csv_escape(row.error);
    for (const std::string& name : SafetyReport::metric_names()) {
      csv += ",";
      if (row.error.empty()) {
        const auto v = row.report.metric(name);
        if (v) csv += format_double(*v);
      }
    }
    csv += ",";
    if (row.has_m) csv += format_double(row.m_value);
    csv += "\n";
  }
  detail::write_text(gdir / "grid.csv", csv);
  return table;
}

// --- Correlation across variants ------------------------------------------------

// Scans `dir` for subdirectories holding both report.json and profile.json,
// computes M per variant, and emits the correlation table + scatter charts.
inline std::vector<CorrelationRow> run_correlate(const fs::path& dir,
                                                 const ProxyParams& params = {}) {
  std::vector<VariantSummary> variants;
  std::vector<fs::path> subdirs;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const fs::path& sub : subdirs) {
    if (!fs::exists(sub / "report.json") || !fs::exists(sub / "profile.json")) continue;
    VariantSummary v;
    v.name = sub.filename().string();
    v.report = report_from_json(
        nlohmann::ordered_json::parse(detail::read_text(sub / "report.json")));
    const auto prof = profile_from_json(
        nlohmann::ordered_json::parse(detail::read_text(sub / "profile.json")));
    v.m_value = proxy_m(prof, params);
    variants.push_back(std::move(v));
  }
  if (variants.size() < 3) {
    throw DataError("correlate: found " + std::to_string(variants.size()) +
                    " variants with both report.json and profile.json; need at least 3");
  }
  const std::vector<CorrelationRow> rows = correlate(variants);
  detail::write_text(dir / "correlation.csv", correlation_csv(rows));
  for (const std::string& metric : SafetyReport::metric_names()) {
    detail::write_text(dir / ("scatter_" + metric + ".svg"), scatter_svg(variants, metric));
  }
  // variant table alongside the correlations
  std::string csv = "variant,m";
  for (const std::string& name : SafetyReport::metric_names()) csv += "," + name;
  csv += "\n";
  for (const VariantSummary& v : variants) {
    csv += csv_escape(v.name) + "," + format_double(v.m_value);
    for (const std::string& name : SafetyReport::metric_names()) {
      csv += ",";
      const auto val = v.report.metric(name);
      if (val) csv += format_double(*val);
    }
    csv += "\n";
  }
  detail::write_text(dir / "variants.csv", csv);
  return rows;
}

}  // namespace mixboost
