#include "evoloco/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace evoloco {

namespace {

constexpr double kLeaseFloorSeconds = 60.0;
constexpr auto kWaitPoll = std::chrono::milliseconds(20);

}  // namespace

int current_generation(long long trained_count, int population,
                       int tournaments) {
  if (trained_count < population) {
    throw std::invalid_argument(
        "initial population incomplete: Q=" + std::to_string(trained_count) +
        " < P=" + std::to_string(population));
  }
  return static_cast<int>((trained_count - population) / tournaments);
}

IdWindow eligible_window(long long trained_count, int population,
                         int tournaments) {
  const int generation =
      current_generation(trained_count, population, tournaments);
  return {tournaments * generation, static_cast<int>(trained_count)};
}

std::vector<int> eligible_pool(const Registry& registry,
                               const EvolutionConfig& config) {
  const IdWindow window = eligible_window(registry.trained_count(),
                                          config.population,
                                          config.tournaments);
  return registry.trained_ids_in(window.lo, window.hi);
}

IdWindow slot_window(int slot, const EvolutionConfig& config) {
  const int generation = slot / config.tournaments;
  const int guaranteed_children = std::max(0, slot - config.workers + 1);
  return {config.tournaments * generation,
          config.population + guaranteed_children};
}

TournamentDraw select_winner(const Registry& registry,
                             const std::vector<int>& pool, int tournament_size,
                             Rng& rng) {
  if (static_cast<int>(pool.size()) < tournament_size) {
    throw std::invalid_argument("eligible pool smaller than tournament size");
  }
  // partial Fisher-Yates for a without-replacement sample
  std::vector<int> shuffled = pool;
  TournamentDraw draw;
  for (int k = 0; k < tournament_size; ++k) {
    const std::size_t j =
        k + rng.uniform_below(shuffled.size() - static_cast<std::size_t>(k));
    std::swap(shuffled[k], shuffled[j]);
    draw.entrants.push_back(shuffled[k]);
  }
  double best_fitness = -std::numeric_limits<double>::infinity();
  int best_id = std::numeric_limits<int>::max();
  for (int id : draw.entrants) {
    const AgentRecord record = registry.agent(id);
    const double fitness = record.diverged
                               ? -std::numeric_limits<double>::infinity()
                               : record.fitness;
    if (fitness > best_fitness ||
        (fitness == best_fitness && id < best_id)) {
      best_fitness = fitness;
      best_id = id;
    }
  }
  draw.winner_id = best_id;
  return draw;
}

int run_tournament_slot(Registry& registry, int slot,
                        const EvolutionConfig& config,
                        const TrainerFn& trainer) {
  const int child_id = config.population + slot;
  const auto start = std::chrono::steady_clock::now();

  if (!registry.has_agent(child_id)) {
    std::vector<int> pool;
    if (config.deterministic) {
      const IdWindow window = slot_window(slot, config);
      pool = registry.trained_ids_in(window.lo, window.hi);
    } else {
      pool = eligible_pool(registry, config);
    }
    Rng rng(derive_seed(config.master_seed, 0x746f7572ULL,
                        static_cast<std::uint64_t>(slot)));
    const TournamentDraw draw =
        select_winner(registry, pool, config.tournament_size, rng);
    const AgentRecord winner = registry.agent(draw.winner_id);

    AgentRecord child;
    child.agent_id = child_id;
    child.genome = mutate(winner.genome,
                          derive_seed(config.master_seed, 0x6d757461ULL,
                                      static_cast<std::uint64_t>(slot)));
    child.parent_id = winner.agent_id;
    child.mutation_count = child.genome.mutation_count;
    child.created_in_generation = slot / config.tournaments;
    child.slot = slot;
    registry.append_agent_created(child);
  }

  const AgentRecord child = registry.agent(child_id);
  if (!child.fitness_set) {
    TrainedAgent outcome;
    try {
      outcome = trainer(child_id, child.genome,
                        derive_seed(config.master_seed, 0x666974ULL,
                                    static_cast<std::uint64_t>(slot)));
    } catch (const std::exception& e) {
      std::cerr << "training agent " << child_id << " failed: " << e.what()
                << "\n";
      outcome.fitness = -std::numeric_limits<double>::infinity();
      outcome.diverged = true;
    }
    registry.append_fitness(child_id, outcome.fitness, outcome.diverged,
                            outcome.duration_seconds);
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  registry.complete_slot(slot, child_id, elapsed);
  return child_id;
}

TournamentScheduler::TournamentScheduler(Registry& registry,
                                         const EvolutionConfig& config)
    : registry_(registry), config_(config) {}

double TournamentScheduler::lease_seconds() const {
  if (config_.lease_seconds > 0.0) return config_.lease_seconds;
  const double median = registry_.median_training_duration();
  return std::max(kLeaseFloorSeconds, 2.0 * median);
}

std::optional<int> TournamentScheduler::claim_next(int worker_id) {
  const int total = config_.total_slots();
  while (true) {
    if (registry_.completed_slot_count() >= total) return std::nullopt;
    for (int slot = 0; slot < total; ++slot) {
      if (registry_.slot_completed(slot)) continue;
      if (registry_.active_claim(slot)) continue;  // in flight elsewhere
      bool ready = true;
      if (config_.deterministic) {
        // window dependencies: children of slots <= slot - W must be trained
        const int barrier = slot - config_.workers + 1;
        ready = barrier <= 0 || registry_.all_completed_below(barrier);
      } else {
        // need at least tournament_size trained agents in the live window
        try {
          ready = static_cast<int>(eligible_pool(registry_, config_).size()) >=
                  config_.tournament_size;
        } catch (const std::invalid_argument&) {
          ready = false;
        }
      }
      if (ready && registry_.try_claim_slot(slot, worker_id, lease_seconds())) {
        return slot;
      }
      // deterministic mode claims strictly in slot order: never jump past
      // the frontier slot while it is blocked
      if (config_.deterministic) break;
    }
    // wait for a completion (or a lease expiry) and rescan
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, kWaitPoll);
  }
}

void TournamentScheduler::notify_completed() { cv_.notify_all(); }

WorkerSummary worker_loop(int worker_id, Registry& registry,
                          TournamentScheduler& scheduler,
                          const EvolutionConfig& config,
                          const TrainerFn& trainer, const WorkerHooks& hooks) {
  WorkerSummary summary;
  summary.worker_id = worker_id;
  if (registry.trained_count() < config.population) {
    throw std::runtime_error("evolution requires a trained initial population");
  }
  while (true) {
    const std::optional<int> slot = scheduler.claim_next(worker_id);
    if (!slot) break;
    if (hooks.after_claim) hooks.after_claim(*slot);
    run_tournament_slot(registry, *slot, config, trainer);
    scheduler.notify_completed();
    ++summary.slots_completed;
  }
  return summary;
}

void run_evolution(Registry& registry, const EvolutionConfig& config,
                   const TrainerFn& trainer, const WorkerHooks& hooks) {
  TournamentScheduler scheduler(registry, config);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> failures(config.workers);
  for (int w = 0; w < config.workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        worker_loop(w, registry, scheduler, config, trainer, hooks);
      } catch (...) {
        failures[w] = std::current_exception();
        scheduler.notify_completed();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
}

}  // namespace evoloco
