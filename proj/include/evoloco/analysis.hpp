#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evoloco/registry.hpp"

namespace evoloco {

// Initial-population ancestor of every agent (an initial agent is its own
// founder).
std::map<int, int> founder_ids(const std::vector<AgentRecord>& agents);

struct MutationCycleRow {
  int cycle = 0;                  // mutation_count bucket
  double mean_fitness = 0.0;      // over finite fitnesses in the bucket
  bool mean_fitness_valid = false;
  // mean percentage fitness change from each agent's founder to the agent;
  // undefined for cycle 0 and when no valid founder pair exists
  std::optional<double> mean_pct_improvement;
  int agents = 0;
};

struct DiversityRow {
  int generation = 0;
  int distinct_founders = 0;
  int eligible_agents = 0;
};

struct LineageStats {
  std::map<int, int> founders;            // agent_id -> founder_id
  std::vector<MutationCycleRow> cycles;   // ordered by cycle
  std::vector<DiversityRow> diversity;    // ordered by generation
};

// Groups agents by mutation cycle: mean fitness, mean founder-to-agent
// percentage improvement and bucket sizes. Writes mutation_cycles.csv.
LineageStats analyze_mutation_cycles(const Registry& registry,
                                     const std::filesystem::path& out_dir);

// Per-generation distinct-founder counts over each generation's eligibility
// window; writes diversity.csv and lineages.svg.
LineageStats analyze_diversity(const Registry& registry, int population,
                               int tournaments,
                               const std::filesystem::path& out_dir);

// One learning-curve CSV per agent (from the persisted training reports)
// plus the aggregate fitness_summary.csv. Returns the number of agents whose
// report was missing (flagged on stderr, not fatal).
int export_learning_curves(const Registry& registry,
                           const std::filesystem::path& out_dir);

// CSV rendering helpers shared by the analysis ops (two-panel test hook).
std::string render_mutation_cycles_csv(const std::vector<MutationCycleRow>& rows);
std::string render_diversity_csv(const std::vector<DiversityRow>& rows);

std::vector<MutationCycleRow> mutation_cycle_rows(
    const std::vector<AgentRecord>& agents);
std::vector<DiversityRow> diversity_rows(const std::vector<AgentRecord>& agents,
                                         int population, int tournaments);

std::string render_lineages_svg(const std::vector<AgentRecord>& agents,
                                const std::map<int, int>& founders);

}  // namespace evoloco
