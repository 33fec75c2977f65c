#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evoloco/morphology.hpp"

namespace evoloco {

enum class AgentStatus { kTraining, kTrained, kFailed };

std::string to_string(AgentStatus status);

struct AgentRecord {
  int agent_id = 0;
  MorphologyGenome genome;
  std::optional<int> parent_id;
  double fitness = 0.0;  // valid only when fitness_set
  bool fitness_set = false;
  bool diverged = false;
  int mutation_count = 0;
  int created_in_generation = 0;
  AgentStatus status = AgentStatus::kTraining;
  std::optional<int> slot;  // tournament slot that produced this agent
};

struct SlotClaim {
  int slot = 0;
  int worker = 0;
  std::int64_t expires_at = 0;
};

// Append-only, checksummed NDJSON event log plus the in-memory state it
// replays to. All mutation goes through the log so recovery from disk
// reproduces identical state. Thread-safe; the log file has a single writer
// (this object).
class Registry {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit Registry(const std::filesystem::path& directory,
                    Clock clock = nullptr);

  const std::filesystem::path& directory() const { return directory_; }
  std::filesystem::path log_path() const {
    return directory_ / "registry.ndjson";
  }

  // --- agent state ---
  void append_agent_created(const AgentRecord& record);
  void append_fitness(int agent_id, double fitness, bool diverged,
                      double duration_seconds);

  bool has_agent(int agent_id) const;
  AgentRecord agent(int agent_id) const;
  std::vector<AgentRecord> agents() const;  // ordered by agent_id
  int agent_count() const;
  // Q: agents whose individual learning has concluded (trained or failed).
  int trained_count() const;
  // trained/failed agent ids in [lo, hi)
  std::vector<int> trained_ids_in(int lo, int hi) const;
  int max_agent_id() const;

  // --- tournament slots ---
  bool slot_completed(int slot) const;
  int completed_slot_count() const;
  bool all_completed_below(int slot) const;
  // Claims the slot unless it is completed or under an unexpired claim.
  bool try_claim_slot(int slot, int worker, double lease_seconds);
  void complete_slot(int slot, int agent_id, double duration_seconds);
  void release_slot(int slot, const std::string& reason);
  std::optional<SlotClaim> active_claim(int slot) const;

  double median_training_duration() const;

  // Canonical dump of the replayable agent state (ids, genomes, lineage,
  // fitness); used to compare runs for resume equivalence.
  std::string state_fingerprint() const;

  std::int64_t now() const { return clock_(); }

 private:
  struct LogRecord;
  void append_locked(class RecordBuilder& builder);
  void replay();

  std::filesystem::path directory_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<int, AgentRecord> agents_;
  std::map<int, SlotClaim> claims_;
  std::map<int, bool> completed_slots_;
  std::vector<double> durations_;
  long long next_seq_ = 0;
};

}  // namespace evoloco
