#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stowave/stowave.hpp"

namespace {

int report(const stowave::ResultTable& t) {
  const auto failed = t.failures();
  for (const auto& r : failed)
    std::cerr << "FAIL " << r.experiment << ' ' << r.case_id << ' ' << r.quantity << " = " << stowave::format_number(r.value) << '\n';
  return failed.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral simulator and verification suite for stochastic wave equations"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::size_t threads = stowave::default_threads();
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--replicas", replicas, "replica count override");
  app.add_option("--threads", threads, "worker pool width")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "run one experiment from an INI config");
  std::string config_path;
  std::optional<std::string> output;
  run->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output, "output directory (default: experiment.output, $STOWAVE_OUTPUT_DIR, results)");

  auto* agg = app.add_subcommand("aggregate", "pool result CSVs and re-derive verdicts");
  std::vector<std::string> inputs;
  std::optional<std::string> merged_path;
  agg->add_option("files", inputs, "result CSV files")->required()->check(CLI::ExistingFile);
  agg->add_option("-o,--output", merged_path, "merged CSV path (default: stdout)");

  auto* list = app.add_subcommand("list-experiments", "print experiment names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = stowave::load_config_file(config_path);
      if (seed) cfg.seed = *seed;
      if (replicas) cfg.replicas = *replicas;
      if (output) cfg.output = *output;
      cfg.validate();
      const auto table = stowave::run_and_write(cfg, threads);
      std::cout << "wrote " << (std::filesystem::path(cfg.output_directory()) / (cfg.name + ".csv")).string() << '\n';
      return report(table);
    }
    if (*agg) {
      std::vector<stowave::ResultTable> tables;
      for (const auto& f : inputs) tables.push_back(stowave::read_csv_file(f));
      auto merged = stowave::merge_tables(tables);
      stowave::evaluate(merged);
      if (merged_path) {
        std::ofstream out(*merged_path, std::ios::binary);
        stowave::write_csv(out, merged);
        if (!out) throw stowave::Error("cannot write " + *merged_path);
      } else {
        stowave::write_csv(std::cout, merged);
      }
      return report(merged);
    }
    if (*list) {
      for (const auto& e : stowave::experiment_catalog()) std::cout << e.name << '\t' << e.summary << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
