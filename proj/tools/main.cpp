#include <cstdint>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psgd/expcli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Deterministic simulator for distributed stochastic optimization with "
      "low-rank gradient compression"};
  app.require_subcommand(1);

  std::string config_path;
  std::string sweep_path;
  std::string summary_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;

  CLI::App* run = app.add_subcommand(
      "run", "Run one study (several seeded trials) and write CSVs");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--out-dir", out_dir, "output directory (default: out)");
  run->add_option("--seed", seed, "override master_seed from the config")
      ->each([&seed_set](const std::string&) { seed_set = true; });

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Cross-product sweep over config keys, one study per cell");
  sweep->add_option("--config", config_path, "base JSON config file")
      ->required();
  sweep->add_option("--sweep", sweep_path,
                    "JSON object mapping config keys to value arrays")
      ->required();
  sweep->add_option("--out-dir", out_dir, "output directory (default: out)");
  sweep->add_option("--seed", seed, "override master_seed from the config")
      ->each([&seed_set](const std::string&) { seed_set = true; });

  CLI::App* report = app.add_subcommand(
      "report", "Pretty-print a summary.csv and exit 1 on failed verdicts");
  report->add_option("--summary", summary_path, "summary.csv path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::optional<std::uint64_t> seed_override =
      seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt;

  if (run->parsed()) return psgd::cli_run(config_path, out_dir, seed_override);
  if (sweep->parsed()) {
    return psgd::cli_sweep(config_path, sweep_path, out_dir, seed_override);
  }
  return psgd::cli_report(summary_path);
}
