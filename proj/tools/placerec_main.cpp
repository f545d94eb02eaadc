#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "placerec/config.hpp"
#include "placerec/errors.hpp"
#include "placerec/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir_override;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

int run(const std::string& command, const CliOptions& opts) {
  auto config_json = placerec::load_config_json(opts.config_path);
  if (opts.has_seed_override) {
    config_json["seed"] = opts.seed_override;
  }
  if (!opts.out_dir_override.empty()) {
    config_json["out_dir"] = opts.out_dir_override;
  }
  const auto cfg = placerec::parse_run_config(config_json);

  if (command == "generate") {
    placerec::cmd_generate(cfg);
  } else if (command == "train") {
    placerec::cmd_train(cfg, config_json);
  } else if (command == "eval") {
    const auto out = placerec::cmd_eval(cfg);
    std::cout << "auc_raw=" << out.comparison.pr_raw.auc
              << " auc_learned=" << out.comparison.pr_learned.auc
              << " overlap_raw=" << out.comparison.hist_raw.overlap
              << " overlap_learned=" << out.comparison.hist_learned.overlap
              << "\n";
  } else if (command == "slam") {
    const auto report = placerec::cmd_slam(cfg);
    std::cout << "ate_dead_reckoned=" << report.ate_dead_reckoned
              << " ate_optimized=" << report.ate_optimized
              << " closures=" << report.closures.size()
              << " closure_precision=" << report.closure_precision << "\n";
  } else if (command == "pipeline") {
    placerec::cmd_pipeline(cfg, config_json);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised place recognition pipeline"};
  app.require_subcommand(1);

  CliOptions opts;
  for (const auto& name :
       {"generate", "train", "eval", "slam", "pipeline"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config_path, "Run configuration JSON")
        ->required();
    sub->add_option("--out-dir", opts.out_dir_override,
                    "Override the configured output directory");
    sub->add_option("--seed", opts.seed_override, "Override the configured seed")
        ->each([&](const std::string&) { opts.has_seed_override = true; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), opts);
  } catch (const placerec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const placerec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const placerec::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
