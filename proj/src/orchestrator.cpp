#include "evoloco/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "evoloco/analysis.hpp"
#include "evoloco/evolution.hpp"

namespace evoloco {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

Orchestrator::Orchestrator(RunConfig config)
    : config_(std::move(config)), out_dir_(config_.output_dir) {
  finalize_config(config_);
  std::filesystem::create_directories(out_dir_);
  registry_ = std::make_unique<Registry>(out_dir_);
}

void Orchestrator::stage_init() {
  const int population = config_.evolution.population;
  if (registry_->agent_count() >= population) return;
  const std::vector<MorphologyGenome> genomes = initialize_population(
      population, derive_seed(config_.seed, 0x696e6974706fULL));
  for (int id = 0; id < population; ++id) {
    if (registry_->has_agent(id)) continue;
    AgentRecord record;
    record.agent_id = id;
    record.genome = genomes[id];
    record.mutation_count = 0;
    record.created_in_generation = 0;
    registry_->append_agent_created(record);
  }
  for (int id = 0; id < population; ++id) {
    std::ofstream xml(out_dir_ / ("agent_" + std::to_string(id) + ".xml"));
    xml << serialize_genome(registry_->agent(id).genome);
  }
}

TrainedAgent Orchestrator::train_and_persist(int agent_id,
                                             const MorphologyGenome& genome,
                                             std::uint64_t seed) {
  using nlohmann::json;
  const auto start = std::chrono::steady_clock::now();
  const TrainOutcome outcome = train_agent(genome, config_.training, seed);

  TrainedAgent result;
  result.fitness = outcome.report.fitness;
  result.diverged = outcome.report.diverged;
  result.duration_seconds = seconds_since(start);

  const std::string stem = "agent_" + std::to_string(agent_id);
  outcome.params.save((out_dir_ / (stem + ".policy")).string());
  {
    std::ofstream xml(out_dir_ / (stem + ".xml"));
    xml << serialize_genome(genome);
  }
  json report;
  report["agent_id"] = agent_id;
  report["fitness"] = outcome.report.diverged ? json(nullptr)
                                              : json(outcome.report.fitness);
  report["diverged"] = outcome.report.diverged;
  report["window_steps"] = outcome.report.window_steps;
  report["total_steps"] = outcome.report.total_steps;
  json curve = json::array();
  for (const CurvePoint& point : outcome.report.curve) {
    curve.push_back({{"iteration", point.iteration},
                     {"mean_reward", point.mean_reward},
                     {"steps", point.steps}});
  }
  report["curve"] = std::move(curve);
  std::ofstream report_out(out_dir_ / (stem + ".report.json"));
  report_out << report.dump(2) << "\n";
  return result;
}

void Orchestrator::stage_train() {
  std::vector<int> pending;
  for (const AgentRecord& agent : registry_->agents()) {
    if (!agent.fitness_set && !agent.slot) pending.push_back(agent.agent_id);
  }
  if (pending.empty()) return;

  std::atomic<std::size_t> cursor{0};
  const int workers =
      std::max(1, std::min<int>(config_.evolution.workers,
                                static_cast<int>(pending.size())));
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> failures(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        while (true) {
          const std::size_t index = cursor.fetch_add(1);
          if (index >= pending.size()) break;
          const int agent_id = pending[index];
          const AgentRecord record = registry_->agent(agent_id);
          const TrainedAgent outcome = train_and_persist(
              agent_id, record.genome,
              derive_seed(config_.seed, 0x696e6974666974ULL,
                          static_cast<std::uint64_t>(agent_id)));
          registry_->append_fitness(agent_id, outcome.fitness,
                                    outcome.diverged,
                                    outcome.duration_seconds);
        }
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
}

void Orchestrator::stage_evolve() {
  WorkerHooks hooks;
  if (config_.crash_after_claim_slot >= 0) {
    const int crash_slot = config_.crash_after_claim_slot;
    hooks.after_claim = [crash_slot](int slot) {
      if (slot == crash_slot) {
        // simulate a worker/host crash: no destructors, no log cleanup
        std::cerr << "injected crash after claiming slot " << slot << "\n";
        ::_exit(137);
      }
    };
  }
  run_evolution(*registry_, config_.evolution,
                [this](int agent_id, const MorphologyGenome& genome,
                       std::uint64_t seed) {
                  return train_and_persist(agent_id, genome, seed);
                },
                hooks);
}

void Orchestrator::stage_analyze() {
  analyze_mutation_cycles(*registry_, out_dir_);
  analyze_diversity(*registry_, config_.evolution.population,
                    config_.evolution.tournaments, out_dir_);
  export_learning_curves(*registry_, out_dir_);
}

RunSummary Orchestrator::run_experiment() {
  RunSummary summary;
  auto timed = [](double& sink, auto&& stage) {
    const auto start = std::chrono::steady_clock::now();
    stage();
    sink = seconds_since(start);
  };
  timed(summary.init_seconds, [this] { stage_init(); });
  timed(summary.train_seconds, [this] { stage_train(); });
  timed(summary.evolve_seconds, [this] { stage_evolve(); });
  timed(summary.analyze_seconds, [this] { stage_analyze(); });

  summary.total_agents = registry_->agent_count();
  summary.trained_agents = registry_->trained_count();
  summary.best_fitness = -std::numeric_limits<double>::infinity();
  for (const AgentRecord& agent : registry_->agents()) {
    if (agent.fitness_set && !agent.diverged &&
        agent.fitness > summary.best_fitness) {
      summary.best_fitness = agent.fitness;
      summary.best_agent_id = agent.agent_id;
    }
  }
  write_run_summary(summary, out_dir_ / "run_summary.json");
  return summary;
}

void write_run_summary(const RunSummary& summary,
                       const std::filesystem::path& path) {
  using nlohmann::json;
  json body;
  body["total_agents"] = summary.total_agents;
  body["trained_agents"] = summary.trained_agents;
  body["best_agent_id"] = summary.best_agent_id;
  body["best_fitness"] = std::isfinite(summary.best_fitness)
                             ? json(summary.best_fitness)
                             : json(nullptr);
  body["stage_seconds"] = {{"init", summary.init_seconds},
                           {"train", summary.train_seconds},
                           {"evolve", summary.evolve_seconds},
                           {"analyze", summary.analyze_seconds}};
  std::ofstream out(path);
  out << body.dump(2) << "\n";
}

}  // namespace evoloco
