#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "evoloco/config.hpp"
#include "evoloco/orchestrator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

struct CliOptions {
  std::string config_path;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool resume = false;
  bool wall_clock_seeds = false;
  bool dump = false;
  int crash_after_claim_slot = -1;
};

void add_common_options(CLI::App* cmd, CliOptions& options) {
  cmd->add_option("--config", options.config_path, "run configuration file");
  cmd->add_option("--preset", options.preset,
                  "configuration preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", options.seed, "master seed")
      ->each([&options](const std::string&) { options.seed_given = true; });
  cmd->add_flag("--resume", options.resume,
                "continue a run from an existing registry");
  cmd->add_flag("--wall-clock-seeds", options.wall_clock_seeds,
                "sample tournaments from the live registry with "
                "non-reproducible seeds (the original asynchronous behavior)");
  cmd->add_flag("--dump-config", options.dump,
                "print the effective configuration and exit");
  cmd->add_option("--crash-after-claim-slot", options.crash_after_claim_slot,
                  "test hook: kill the process after claiming this slot")
      ->group("");  // hidden
}

int build_config(const CliOptions& options, evoloco::RunConfig& config,
                 bool write_command) {
  using namespace evoloco;
  try {
    if (!options.preset.empty()) apply_preset(config, options.preset);
    if (!options.config_path.empty()) {
      load_config_file(config, options.config_path);
    }
    if (options.seed_given) {
      config.seed = options.seed;
      config.seed_set = true;
    }
    if (options.wall_clock_seeds) config.wall_clock_seeds = true;
    config.crash_after_claim_slot = options.crash_after_claim_slot;
    if (const char* out = std::getenv("EVOLOCO_OUT")) {
      if (*out != '\0') config.output_dir = out;
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  if (options.dump) {
    dump_config(config, std::cout);
    return -1;  // handled, exit 0
  }

  const ConfigReport report = validate_config(config);
  for (const std::string& warning : report.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  if (!report.ok()) {
    for (const std::string& error : report.errors) {
      std::cerr << "config error: " << error << "\n";
    }
    return kExitConfigError;
  }
  finalize_config(config);

  if (write_command && !options.resume) {
    const std::filesystem::path log =
        std::filesystem::path(config.output_dir) / "registry.ndjson";
    if (std::filesystem::exists(log)) {
      std::cerr << "config error: " << log.string()
                << " already exists; pass --resume to continue that run\n";
      return kExitConfigError;
    }
  }
  return kExitOk;
}

int guarded(const std::function<void()>& stage) {
  try {
    stage();
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitOk;
}

void print_summary(const evoloco::RunSummary& summary) {
  std::cout << "run complete\n"
            << "  agents:        " << summary.total_agents << " ("
            << summary.trained_agents << " trained)\n"
            << "  best fitness:  " << summary.best_fitness << " (agent "
            << summary.best_agent_id << ")\n"
            << "  stage seconds: init " << summary.init_seconds << ", train "
            << summary.train_seconds << ", evolve " << summary.evolve_seconds
            << ", analyze " << summary.analyze_seconds << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace evoloco;
  CLI::App app{"evolving locomotion agents: population-based morphology "
               "evolution with per-agent PPO training"};
  app.require_subcommand(1);

  CliOptions options;
  CLI::App* cmd_init =
      app.add_subcommand("init", "generate and record the initial population");
  CLI::App* cmd_train =
      app.add_subcommand("train", "train untrained initial-population agents");
  CLI::App* cmd_evolve =
      app.add_subcommand("evolve", "run tournament evolution to the "
                                   "generation cap");
  CLI::App* cmd_analyze =
      app.add_subcommand("analyze", "write mutation-cycle, diversity and "
                                    "learning-curve reports");
  CLI::App* cmd_run =
      app.add_subcommand("run", "all stages: init, train, evolve, analyze");
  for (CLI::App* cmd : {cmd_init, cmd_train, cmd_evolve, cmd_analyze, cmd_run}) {
    add_common_options(cmd, options);
  }

  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  const bool is_writing_fresh = cmd_run->parsed() || cmd_init->parsed();
  const int config_status = build_config(options, config, is_writing_fresh);
  if (config_status == -1) return kExitOk;  // --dump-config
  if (config_status != kExitOk) return config_status;

  try {
    Orchestrator orchestrator(config);
    if (cmd_init->parsed()) {
      return guarded([&] { orchestrator.stage_init(); });
    }
    if (cmd_train->parsed()) {
      return guarded([&] {
        orchestrator.stage_init();
        orchestrator.stage_train();
      });
    }
    if (cmd_evolve->parsed()) {
      if (orchestrator.registry().trained_count() <
          config.evolution.population) {
        std::cerr << "stage failure: initial population is not trained yet "
                     "(run `evoloco train` first)\n";
        return kExitStageFailure;
      }
      return guarded([&] { orchestrator.stage_evolve(); });
    }
    if (cmd_analyze->parsed()) {
      return guarded([&] { orchestrator.stage_analyze(); });
    }
    // run
    int status = kExitOk;
    RunSummary summary;
    status = guarded([&] { summary = orchestrator.run_experiment(); });
    if (status == kExitOk) print_summary(summary);
    return status;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStageFailure;
  }
}
