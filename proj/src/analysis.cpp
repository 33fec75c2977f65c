#include "evoloco/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace evoloco {

namespace {

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

std::string format_double(double value) {
  std::ostringstream out;
  out.precision(12);
  out << value;
  return out.str();
}

}  // namespace

std::map<int, int> founder_ids(const std::vector<AgentRecord>& agents) {
  std::map<int, std::optional<int>> parents;
  for (const AgentRecord& agent : agents) {
    parents[agent.agent_id] = agent.parent_id;
  }
  std::map<int, int> founders;
  for (const AgentRecord& agent : agents) {
    int cursor = agent.agent_id;
    while (parents.at(cursor)) cursor = *parents.at(cursor);
    founders[agent.agent_id] = cursor;
  }
  return founders;
}

std::vector<MutationCycleRow> mutation_cycle_rows(
    const std::vector<AgentRecord>& agents) {
  const std::map<int, int> founders = founder_ids(agents);
  std::map<int, double> fitness_by_id;
  for (const AgentRecord& agent : agents) {
    fitness_by_id[agent.agent_id] = agent.fitness_set && !agent.diverged
                                        ? agent.fitness
                                        : std::nan("");
  }

  std::map<int, MutationCycleRow> buckets;
  std::map<int, std::pair<double, int>> fitness_sums;      // cycle -> (sum, n)
  std::map<int, std::pair<double, int>> improvement_sums;  // cycle -> (sum, n)
  for (const AgentRecord& agent : agents) {
    const int cycle = agent.mutation_count;
    MutationCycleRow& row = buckets[cycle];
    row.cycle = cycle;
    row.agents += 1;
    const double fitness = fitness_by_id.at(agent.agent_id);
    if (std::isfinite(fitness)) {
      fitness_sums[cycle].first += fitness;
      fitness_sums[cycle].second += 1;
    }
    if (cycle >= 1) {
      const double founder_fitness = fitness_by_id.at(founders.at(agent.agent_id));
      if (std::isfinite(fitness) && std::isfinite(founder_fitness) &&
          founder_fitness != 0.0) {
        improvement_sums[cycle].first +=
            100.0 * (fitness - founder_fitness) / std::abs(founder_fitness);
        improvement_sums[cycle].second += 1;
      }
    }
  }

  std::vector<MutationCycleRow> rows;
  for (auto& [cycle, row] : buckets) {
    if (auto it = fitness_sums.find(cycle);
        it != fitness_sums.end() && it->second.second > 0) {
      row.mean_fitness = it->second.first / it->second.second;
      row.mean_fitness_valid = true;
    }
    if (auto it = improvement_sums.find(cycle);
        it != improvement_sums.end() && it->second.second > 0) {
      row.mean_pct_improvement = it->second.first / it->second.second;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<DiversityRow> diversity_rows(const std::vector<AgentRecord>& agents,
                                         int population, int tournaments) {
  const std::map<int, int> founders = founder_ids(agents);
  int trained = 0;
  for (const AgentRecord& agent : agents) {
    if (agent.fitness_set) ++trained;
  }
  if (trained < population) return {};
  const int last_generation = (trained - population) / tournaments;

  std::vector<DiversityRow> rows;
  for (int g = 0; g <= last_generation; ++g) {
    const int lo = tournaments * g;
    const int hi = std::min(trained, population + tournaments * (g + 1));
    DiversityRow row;
    row.generation = g;
    std::set<int> distinct;
    for (const AgentRecord& agent : agents) {
      if (agent.agent_id >= lo && agent.agent_id < hi && agent.fitness_set) {
        distinct.insert(founders.at(agent.agent_id));
        row.eligible_agents += 1;
      }
    }
    row.distinct_founders = static_cast<int>(distinct.size());
    if (row.eligible_agents == 0) break;
    rows.push_back(row);
  }
  return rows;
}

std::string render_mutation_cycles_csv(
    const std::vector<MutationCycleRow>& rows) {
  std::string csv = "cycle,mean_fitness,mean_pct_improvement,agents\n";
  for (const MutationCycleRow& row : rows) {
    csv += std::to_string(row.cycle) + ",";
    csv += row.mean_fitness_valid ? format_double(row.mean_fitness) : "";
    csv += ",";
    csv += row.mean_pct_improvement ? format_double(*row.mean_pct_improvement)
                                    : "";
    csv += "," + std::to_string(row.agents) + "\n";
  }
  return csv;
}

std::string render_diversity_csv(const std::vector<DiversityRow>& rows) {
  std::string csv = "generation,distinct_founders,eligible_agents\n";
  for (const DiversityRow& row : rows) {
    csv += std::to_string(row.generation) + "," +
           std::to_string(row.distinct_founders) + "," +
           std::to_string(row.eligible_agents) + "\n";
  }
  return csv;
}

std::string render_lineages_svg(const std::vector<AgentRecord>& agents,
                                const std::map<int, int>& founders) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                   "#bcbd22", "#17becf"};
  constexpr int kWidth = 800, kHeight = 480, kMargin = 50;

  std::map<int, std::vector<const AgentRecord*>> lineages;
  double min_fit = 0.0, max_fit = 0.0;
  int max_id = 1;
  bool any = false;
  for (const AgentRecord& agent : agents) {
    if (!agent.fitness_set || agent.diverged || !std::isfinite(agent.fitness)) {
      continue;
    }
    lineages[founders.at(agent.agent_id)].push_back(&agent);
    if (!any) {
      min_fit = max_fit = agent.fitness;
      any = true;
    }
    min_fit = std::min(min_fit, agent.fitness);
    max_fit = std::max(max_fit, agent.fitness);
    max_id = std::max(max_id, agent.agent_id);
  }
  if (max_fit == min_fit) max_fit = min_fit + 1.0;

  auto x_of = [&](int id) {
    return kMargin + (kWidth - 2.0 * kMargin) * id / std::max(1, max_id);
  };
  auto y_of = [&](double fitness) {
    return kHeight - kMargin -
           (kHeight - 2.0 * kMargin) * (fitness - min_fit) / (max_fit - min_fit);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "  <line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin
      << "\" x2=\"" << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\""
      << kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">agent id</text>\n";
  svg << "  <text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 "
         "16 "
      << kHeight / 2 << ")\">fitness</text>\n";

  int color = 0;
  for (auto& [founder, members] : lineages) {
    std::sort(members.begin(), members.end(),
              [](const AgentRecord* a, const AgentRecord* b) {
                return a->agent_id < b->agent_id;
              });
    svg << "  <polyline fill=\"none\" stroke=\""
        << kPalette[color % (sizeof(kPalette) / sizeof(kPalette[0]))]
        << "\" stroke-width=\"1.5\" points=\"";
    for (const AgentRecord* agent : members) {
      svg << x_of(agent->agent_id) << "," << y_of(agent->fitness) << " ";
    }
    svg << "\"/>\n";
    for (const AgentRecord* agent : members) {
      svg << "  <circle cx=\"" << x_of(agent->agent_id) << "\" cy=\""
          << y_of(agent->fitness) << "\" r=\"2.5\" fill=\""
          << kPalette[color % (sizeof(kPalette) / sizeof(kPalette[0]))]
          << "\"/>\n";
    }
    ++color;
  }
  svg << "</svg>\n";
  return svg.str();
}

LineageStats analyze_mutation_cycles(const Registry& registry,
                                     const std::filesystem::path& out_dir) {
  const std::vector<AgentRecord> agents = registry.agents();
  LineageStats stats;
  stats.founders = founder_ids(agents);
  stats.cycles = mutation_cycle_rows(agents);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "mutation_cycles.csv",
             render_mutation_cycles_csv(stats.cycles));
  return stats;
}

LineageStats analyze_diversity(const Registry& registry, int population,
                               int tournaments,
                               const std::filesystem::path& out_dir) {
  const std::vector<AgentRecord> agents = registry.agents();
  LineageStats stats;
  stats.founders = founder_ids(agents);
  stats.diversity = diversity_rows(agents, population, tournaments);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "diversity.csv", render_diversity_csv(stats.diversity));
  write_file(out_dir / "lineages.svg",
             render_lineages_svg(agents, stats.founders));
  return stats;
}

int export_learning_curves(const Registry& registry,
                           const std::filesystem::path& out_dir) {
  using nlohmann::json;
  const std::vector<AgentRecord> agents = registry.agents();
  const std::map<int, int> founders = founder_ids(agents);
  std::filesystem::create_directories(out_dir);

  int missing = 0;
  std::string summary = "agent_id,fitness,mutation_count,parent_id,founder_id\n";
  for (const AgentRecord& agent : agents) {
    summary += std::to_string(agent.agent_id) + ",";
    if (agent.fitness_set) {
      summary += agent.diverged ? "-inf" : format_double(agent.fitness);
    }
    summary += "," + std::to_string(agent.mutation_count) + ",";
    summary += agent.parent_id ? std::to_string(*agent.parent_id) : "";
    summary += "," + std::to_string(founders.at(agent.agent_id)) + "\n";

    const std::filesystem::path report_path =
        registry.directory() /
        ("agent_" + std::to_string(agent.agent_id) + ".report.json");
    std::ifstream in(report_path);
    if (!in) {
      std::cerr << "warning: no training report for agent " << agent.agent_id
                << " (" << report_path.string() << ")\n";
      ++missing;
      continue;
    }
    json report;
    try {
      in >> report;
    } catch (const std::exception& e) {
      std::cerr << "warning: unreadable training report for agent "
                << agent.agent_id << ": " << e.what() << "\n";
      ++missing;
      continue;
    }
    std::string csv = "iteration,mean_reward,steps\n";
    for (const json& point : report.value("curve", json::array())) {
      csv += std::to_string(point.at("iteration").get<int>()) + "," +
             format_double(point.at("mean_reward").get<double>()) + "," +
             std::to_string(point.at("steps").get<long long>()) + "\n";
    }
    write_file(out_dir /
                   ("agent_" + std::to_string(agent.agent_id) + "_curve.csv"),
               csv);
  }
  write_file(out_dir / "fitness_summary.csv", summary);
  return missing;
}

}  // namespace evoloco
