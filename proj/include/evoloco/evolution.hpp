#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evoloco/registry.hpp"
#include "evoloco/rng.hpp"

namespace evoloco {

struct EvolutionConfig {
  int population = 8;        // P
  int tournaments = 4;       // T, per generation
  int workers = 2;           // W
  int max_generations = 10;  // G_max
  int tournament_size = 4;
  // Deterministic mode derives tournament randomness and eligibility from
  // the slot index, making runs replayable; wall-clock mode samples from the
  // live registry the way the original asynchronous scheme does.
  bool deterministic = true;
  std::uint64_t master_seed = 0;
  double lease_seconds = 0.0;  // 0 = auto: max(60, 2x median train time)

  int total_slots() const { return tournaments * max_generations; }
};

// G = floor((Q - P) / T); throws std::invalid_argument when Q < P.
int current_generation(long long trained_count, int population,
                       int tournaments);

struct IdWindow {
  int lo = 0;
  int hi = 0;
};

// Live eligibility window [T*G, Q). Agents below T*G are aged out.
IdWindow eligible_window(long long trained_count, int population,
                         int tournaments);

// Trained/failed agents inside the live window; empty result means the
// caller should wait for other workers to finish training.
std::vector<int> eligible_pool(const Registry& registry,
                               const EvolutionConfig& config);

// Deterministic per-slot window: generation floor(slot/T) and only agents
// whose training is guaranteed complete when the slot starts (children of
// slots finished at least `workers` slots earlier).
IdWindow slot_window(int slot, const EvolutionConfig& config);

struct TournamentDraw {
  std::vector<int> entrants;
  int winner_id = -1;
};

// Samples tournament_size distinct entrants uniformly and picks the fitness
// argmax, ties broken by lower agent id.
TournamentDraw select_winner(const Registry& registry,
                             const std::vector<int>& pool, int tournament_size,
                             Rng& rng);

struct TrainedAgent {
  double fitness = 0.0;
  bool diverged = false;
  double duration_seconds = 0.0;
};

// Trains one genome and persists whatever artifacts the caller wants
// (policy file, learning-curve report); returns the fitness outcome.
using TrainerFn =
    std::function<TrainedAgent(int agent_id, const MorphologyGenome& genome,
                               std::uint64_t seed)>;

// Runs one tournament slot end to end: sample entrants, mutate the winner,
// train the child, record it. Returns the child agent id. The child id is
// always population + slot. Safe to re-run for a slot whose child exists but
// was never trained (crash recovery).
int run_tournament_slot(Registry& registry, int slot,
                        const EvolutionConfig& config,
                        const TrainerFn& trainer);

struct WorkerSummary {
  int worker_id = 0;
  int slots_completed = 0;
};

struct WorkerHooks {
  // Invoked right after a slot claim is appended; used by crash tests.
  std::function<void(int slot)> after_claim;
};

// Shared slot dispenser. Deterministic mode hands slots out in order and
// blocks a slot until its window dependencies are complete; wall-clock mode
// hands out any incomplete, unclaimed slot.
class TournamentScheduler {
 public:
  TournamentScheduler(Registry& registry, const EvolutionConfig& config);

  // Blocks until a slot is claimable or all slots are done; nullopt = done.
  std::optional<int> claim_next(int worker_id);
  void notify_completed();

  double lease_seconds() const;

 private:
  Registry& registry_;
  const EvolutionConfig& config_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

WorkerSummary worker_loop(int worker_id, Registry& registry,
                          TournamentScheduler& scheduler,
                          const EvolutionConfig& config,
                          const TrainerFn& trainer,
                          const WorkerHooks& hooks = {});

// Spawns config.workers worker threads and waits for all slots to complete.
void run_evolution(Registry& registry, const EvolutionConfig& config,
                   const TrainerFn& trainer, const WorkerHooks& hooks = {});

}  // namespace evoloco
