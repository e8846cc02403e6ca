#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

#include "plab/runs/config.hpp"
#include "plab/runs/pipeline.hpp"
#include "plab/util/error.hpp"

namespace {

// Overrides are "section.key=value" and take precedence over --config.
plab::runs::RunConfig apply_overrides(const plab::runs::RunConfig& base, const std::vector<std::string>& overrides) {
  std::string text = plab::runs::config_to_key_values(base);
  for (const auto& o : overrides) text += o + "\n";
  return plab::runs::config_from_key_values(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathway-lab: truthfulness pathways in a micro-transformer"};
  std::string config_path, out_dir = "runs", stage = "all";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool resume = false, print_config = false;
  app.add_option("--config", config_path, "JSON or key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "Output root; the run lives in <out-dir>/<run-id>/");
  app.add_option("--stage", stage, "Stage to run, or 'all'");
  app.add_option("--set", overrides, "Config override, section.key=value (repeatable)");
  app.add_flag("--resume", resume, "Skip completed stages whose artifacts are intact");
  app.add_flag("--print-config", print_config, "Print the effective config as key=value and exit");
  CLI11_PARSE(app, argc, argv);

  try {
    plab::runs::RunConfig cfg = config_path.empty() ? plab::runs::RunConfig{} : plab::runs::load_config(config_path);
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    cfg = apply_overrides(cfg, overrides);
    if (print_config) {
      std::cout << plab::runs::config_to_key_values(cfg);
      return 0;
    }
    plab::runs::Runner runner(cfg, {out_dir, resume});
    if (stage == "all") {
      runner.run_all();
    } else {
      runner.run(plab::runs::parse_stage(stage));
    }
    std::cout << runner.run_dir().string() << "\n";
    return 0;
  } catch (const plab::PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return 3;
  } catch (const plab::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const plab::ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
}
