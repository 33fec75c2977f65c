#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "evoloco/config.hpp"
#include "evoloco/registry.hpp"

namespace evoloco {

struct RunSummary {
  int total_agents = 0;
  int trained_agents = 0;
  double best_fitness = 0.0;
  int best_agent_id = -1;
  double init_seconds = 0.0;
  double train_seconds = 0.0;
  double evolve_seconds = 0.0;
  double analyze_seconds = 0.0;
};

// Stage driver on top of one output directory. Every stage is idempotent
// against the registry, so an interrupted run resumes by re-invoking it.
class Orchestrator {
 public:
  explicit Orchestrator(RunConfig config);

  Registry& registry() { return *registry_; }
  const RunConfig& config() const { return config_; }

  // Generates and records the initial population (skips agents that exist).
  void stage_init();
  // Trains every recorded agent that has no fitness yet and no tournament
  // slot (i.e. the initial population), W agents at a time.
  void stage_train();
  // Runs the tournament slots to the generation cap.
  void stage_evolve();
  // Mutation-cycle, diversity and learning-curve exports.
  void stage_analyze();

  RunSummary run_experiment();

  // Trains one genome with the run's training configuration and writes the
  // policy and report artifacts for the agent.
  TrainedAgent train_and_persist(int agent_id, const MorphologyGenome& genome,
                                 std::uint64_t seed);

  std::filesystem::path out_dir() const { return out_dir_; }

 private:
  RunConfig config_;
  std::filesystem::path out_dir_;
  std::unique_ptr<Registry> registry_;
};

void write_run_summary(const RunSummary& summary,
                       const std::filesystem::path& path);

}  // namespace evoloco
