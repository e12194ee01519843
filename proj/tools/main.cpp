#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <sgptd/experiments.hpp>

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  bool landscape = false;
};

void add_common(CLI::App& cmd, CommonArgs& args) {
  cmd.add_option("--config", args.config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  cmd.add_option("--seed", args.seed,
                 "Replace the configured seed list with this single seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
  cmd.add_option("--out", args.out_dir, "Output directory for result files");
  cmd.add_flag("--landscape", args.landscape,
               "Also write the 50x50 value-landscape grid (learn only)");
}

sgptd::ExperimentConfig resolve_config(const CommonArgs& args) {
  sgptd::ExperimentConfig cfg =
      args.config_path.empty()
          ? sgptd::ExperimentConfig{}
          : sgptd::ExperimentConfig::load(args.config_path);
  if (args.seed_given) cfg.seeds = {args.seed};
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.landscape) cfg.landscape = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gaussian-process temporal-difference value estimation: exact, "
      "sparse pseudo-input, and low-rank rejection estimators"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string trajectory_file;

  CLI::App* fit =
      app.add_subcommand("fit", "Fit one estimator to a trajectory file");
  fit->add_option("trajectory", trajectory_file,
                  "Trajectory file (JSON: inputs, rewards, episode_breaks)")
      ->required();
  add_common(*fit, args);

  CLI::App* compare = app.add_subcommand(
      "compare-approx",
      "Sparse-vs-exact log-marginal ratios across support-set sizes");
  add_common(*compare, args);

  CLI::App* retention = app.add_subcommand(
      "retention", "Dictionary retention of the low-rank baseline vs nu");
  add_common(*retention, args);

  CLI::App* learn = app.add_subcommand(
      "learn", "Policy iteration on a simulated task; learning-curve CSV");
  add_common(*learn, args);

  CLI::App* bench = app.add_subcommand(
      "bench", "Fit/predict wall times across data and support sizes");
  add_common(*bench, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const sgptd::ExperimentConfig cfg = resolve_config(args);
    if (fit->parsed()) {
      const sgptd::FitReport report = sgptd::cmd_fit(cfg, trajectory_file);
      std::cout << "log_marginal=" << sgptd::format_double(report.log_marginal)
                << " fit_ms=" << sgptd::format_double(report.fit_ms);
      if (report.retention)
        std::cout << " retention=" << sgptd::format_double(*report.retention);
      std::cout << " model=" << report.model_file.string() << '\n';
    } else if (compare->parsed()) {
      sgptd::cmd_compare_approx(cfg);
      std::cout << "wrote " << (cfg.out_dir / "compare_approx.csv").string()
                << '\n';
    } else if (retention->parsed()) {
      sgptd::cmd_retention(cfg);
      std::cout << "wrote " << (cfg.out_dir / "retention.csv").string()
                << '\n';
    } else if (learn->parsed()) {
      sgptd::cmd_learn(cfg);
      std::cout << "wrote " << (cfg.out_dir / "learn.csv").string() << '\n';
      if (cfg.landscape && cfg.task == sgptd::TaskKind::MountainCar)
        std::cout << "wrote " << (cfg.out_dir / "landscape.csv").string()
                  << '\n';
    } else if (bench->parsed()) {
      sgptd::cmd_bench(cfg);
      std::cout << "wrote " << (cfg.out_dir / "bench.csv").string() << '\n';
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
