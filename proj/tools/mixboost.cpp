// mixboost command-line interface.
//
// Verbs: train, eval, interactions, proxy, correlate, grid, report.
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "mixboost/experiment.hpp"

namespace {

using namespace mixboost;

ExperimentConfig load_cli_config(const std::string& config_path, const std::string& out_override,
                                 long long seed_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  return cfg;
}

void print_report(const SafetyReport& r) {
  std::printf("model %s  seed %llu\n", r.model_hash.c_str(),
              static_cast<unsigned long long>(r.seed));
  for (const std::string& name : SafetyReport::metric_names()) {
    const auto v = r.metric(name);
    if (v) {
      std::printf("  %-14s %.6f\n", name.c_str(), *v);
    } else {
      std::printf("  %-14s (unavailable)\n", name.c_str());
    }
  }
  for (const std::string& e : r.errors) std::printf("  error: %s\n", e.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-boosted data augmentation lab: training, game-interaction "
               "profiles, and safety metrics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  long long seed_override = -1;
  bool force = false;
  int jobs = 1;
  bool save_sets = false;
  std::string correlate_dir;
  double proxy_a = 0.2, proxy_b = 0.2, proxy_c = 0.8;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config) {
      cmd->add_option("--config", config_path, "experiment config file")->required();
    }
    cmd->add_option("--out", out_override, "override the output directory");
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_flag("--force", force, "overwrite existing artifacts");
  };

  CLI::App* cmd_train = app.add_subcommand("train", "train a model from a config");
  add_common(cmd_train);

  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint into a safety report");
  add_common(cmd_eval);
  cmd_eval->add_flag("--save-sets", save_sets,
                     "persist generated corruption sets next to the report");

  CLI::App* cmd_inter =
      app.add_subcommand("interactions", "estimate the interaction profile of a checkpoint");
  add_common(cmd_inter);

  CLI::App* cmd_proxy = app.add_subcommand("proxy", "compute M(a,b,c) from a stored profile");
  add_common(cmd_proxy);
  cmd_proxy->add_option("--a", proxy_a, "low-band upper fraction");
  cmd_proxy->add_option("--b", proxy_b, "mid-band lower fraction");
  cmd_proxy->add_option("--c", proxy_c, "mid-band upper fraction");

  CLI::App* cmd_grid = app.add_subcommand("grid", "train/evaluate every (r1, lambda) grid cell");
  add_common(cmd_grid);
  cmd_grid->add_option("--jobs", jobs, "parallel cell processes");

  CLI::App* cmd_corr =
      app.add_subcommand("correlate", "correlate M with metrics across variant directories");
  cmd_corr->add_option("--dir", correlate_dir, "directory of variant experiment subdirectories")
      ->required();
  cmd_corr->add_option("--a", proxy_a, "low-band upper fraction");
  cmd_corr->add_option("--b", proxy_b, "mid-band lower fraction");
  cmd_corr->add_option("--c", proxy_c, "mid-band upper fraction");

  CLI::App* cmd_report = app.add_subcommand("report", "print a stored experiment summary");
  add_common(cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // --help prints and exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // any usage problem is exit code 1
  }

  try {
    if (cmd_train->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const auto dir = run_train(cfg, force);
      std::printf("trained -> %s\n", dir.string().c_str());
    } else if (cmd_eval->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const SafetyReport report = run_eval(cfg, force, save_sets);
      print_report(report);
    } else if (cmd_inter->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const InteractionProfile prof = run_interactions(cfg, force);
      std::printf("profile over %zu orders -> %s\n", prof.orders.size(),
                  (experiment_dir(cfg) / "profile.svg").string().c_str());
    } else if (cmd_proxy->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const double m = run_proxy(cfg, {proxy_a, proxy_b, proxy_c}, force);
      std::printf("M(%g,%g,%g) = %.6f\n", proxy_a, proxy_b, proxy_c, m);
    } else if (cmd_grid->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const auto table = run_grid(cfg, force, jobs);
      std::size_t failed = 0;
      for (const GridCell& row : table) {
        if (!row.error.empty()) ++failed;
      }
      std::printf("grid: %zu cells, %zu failed -> %s\n", table.size(), failed,
                  (grid_dir(cfg) / "grid.csv").string().c_str());
    } else if (cmd_corr->parsed()) {
      const auto rows = run_correlate(correlate_dir, {proxy_a, proxy_b, proxy_c});
      for (const CorrelationRow& row : rows) {
        if (row.r) {
          std::printf("  %-14s r = %+.4f  (%zu variants)\n", row.metric.c_str(), *row.r,
                      row.points);
        } else {
          std::printf("  %-14s r = null   (%zu variants)\n", row.metric.c_str(), row.points);
        }
      }
    } else if (cmd_report->parsed()) {
      const ExperimentConfig cfg = load_cli_config(config_path, out_override, seed_override);
      const auto dir = experiment_dir(cfg);
      const SafetyReport report = report_from_json(nlohmann::ordered_json::parse(
          mixboost::detail::read_text(dir / "report.json")));
      print_report(report);
      if (mixboost::fs::exists(dir / "proxy.json")) {
        const auto proxy_json =
            nlohmann::ordered_json::parse(mixboost::detail::read_text(dir / "proxy.json"));
        std::printf("  %-14s %.6f\n", "proxy_m", proxy_json.at("m").get<double>());
      }
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
