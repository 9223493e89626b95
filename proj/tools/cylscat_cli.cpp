#include "cylscat/config.hpp"
#include "cylscat/experiments.hpp"
#include "cylscat/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace {

int cmd_run(const std::string& config_path, int workers, const std::string& out,
            long long seed, bool has_seed) {
  auto cfg = cylscat::config::load_config_file(config_path);
  if (!out.empty()) cfg.outdir = out;
  if (has_seed) cfg.seed = (std::uint64_t)seed;
  const auto manifest = cylscat::experiments::run_experiment(cfg, workers);
  std::cout << cylscat::report::digest_table(manifest, cfg.outdir);
  return cylscat::report::exit_code_for(manifest);
}

int cmd_digest(const std::string& manifest_path) {
  const auto m = cylscat::report::read_manifest(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::cout << cylscat::report::digest_table(m, base.empty() ? "." : base.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch driver for the cylindrical-end scattering laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path;
  int workers = 1;
  long long seed = 0;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file (key-value or JSON)")->required();
  run->add_option("--workers", workers, "worker threads for independent tasks")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (overrides [output] dir)");
  auto* seed_opt = run->add_option("--seed", seed, "seed override for sampled grids");

  auto* digest = app.add_subcommand("digest", "print a one-line-per-task summary of a manifest");
  digest->add_option("manifest", manifest_path, "manifest.json written by run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 3;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, workers, out_dir, seed, seed_opt->count() > 0);
    return cmd_digest(manifest_path);
  } catch (const cylscat::input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
