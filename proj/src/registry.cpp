#include "evoloco/registry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace evoloco {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::int64_t default_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json fitness_to_json(double fitness, bool diverged) {
  if (diverged || !std::isfinite(fitness)) return nullptr;
  return fitness;
}

}  // namespace

std::string to_string(AgentStatus status) {
  switch (status) {
    case AgentStatus::kTraining: return "training";
    case AgentStatus::kTrained: return "trained";
    case AgentStatus::kFailed: return "failed";
  }
  return "unknown";
}

// Serializes one event, computing the checksum over the record body without
// the checksum field itself.
class RecordBuilder {
 public:
  explicit RecordBuilder(json body) : body_(std::move(body)) {}

  std::string line(long long seq) {
    body_["seq"] = seq;
    const std::string payload = body_.dump();
    body_["checksum"] = hex64(fnv1a64(payload));
    return body_.dump();
  }

 private:
  json body_;
};

Registry::Registry(const std::filesystem::path& directory, Clock clock)
    : directory_(directory), clock_(clock ? std::move(clock) : default_now) {
  std::filesystem::create_directories(directory_);
  replay();
}

void Registry::append_locked(RecordBuilder& builder) {
  const std::string line = builder.line(next_seq_);
  std::ofstream out(log_path(), std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot append to " + log_path().string());
  }
  out << line << '\n';
  out.flush();
  if (!out) {
    throw std::runtime_error("failed writing " + log_path().string());
  }
  ++next_seq_;
}

void Registry::replay() {
  std::ifstream in(log_path());
  if (!in) return;  // fresh registry
  std::string line;
  long long line_no = 0;
  std::streampos good_end = 0;
  bool truncated_tail = false;
  while (std::getline(in, line)) {
    json record;
    try {
      record = json::parse(line);
      const std::string checksum = record.at("checksum").get<std::string>();
      record.erase("checksum");
      if (hex64(fnv1a64(record.dump())) != checksum) {
        throw std::runtime_error("checksum mismatch");
      }
      if (record.at("seq").get<long long>() != line_no) {
        throw std::runtime_error("sequence gap");
      }
    } catch (const std::exception& e) {
      // A malformed final line is an interrupted write; drop it. Anything
      // earlier is corruption.
      if (in.peek() == EOF) {
        truncated_tail = true;
        break;
      }
      throw std::runtime_error("corrupt registry log at line " +
                               std::to_string(line_no + 1) + ": " + e.what());
    }

    const std::string type = record.at("type").get<std::string>();
    if (type == "agent_created") {
      AgentRecord agent;
      agent.agent_id = record.at("agent_id").get<int>();
      agent.genome = deserialize_genome(record.at("genome").get<std::string>());
      if (record.contains("parent_id") && !record["parent_id"].is_null()) {
        agent.parent_id = record["parent_id"].get<int>();
      }
      agent.mutation_count = record.at("mutation_count").get<int>();
      agent.created_in_generation = record.at("generation").get<int>();
      if (record.contains("slot") && !record["slot"].is_null()) {
        agent.slot = record["slot"].get<int>();
      }
      agent.status = AgentStatus::kTraining;
      if (!agents_.emplace(agent.agent_id, std::move(agent)).second) {
        throw std::runtime_error("duplicate agent_created for agent " +
                                 std::to_string(record.at("agent_id").get<int>()));
      }
    } else if (type == "fitness_set") {
      const int id = record.at("agent_id").get<int>();
      auto it = agents_.find(id);
      if (it == agents_.end()) {
        throw std::runtime_error("fitness_set for unknown agent " +
                                 std::to_string(id));
      }
      if (it->second.fitness_set) {
        throw std::runtime_error("fitness_set twice for agent " +
                                 std::to_string(id));
      }
      it->second.fitness_set = true;
      it->second.diverged = record.at("diverged").get<bool>();
      it->second.fitness = it->second.diverged
                               ? -std::numeric_limits<double>::infinity()
                               : record.at("fitness").get<double>();
      it->second.status = it->second.diverged ? AgentStatus::kFailed
                                              : AgentStatus::kTrained;
      durations_.push_back(record.at("duration_s").get<double>());
    } else if (type == "slot_claimed") {
      SlotClaim claim;
      claim.slot = record.at("slot").get<int>();
      claim.worker = record.at("worker").get<int>();
      claim.expires_at = record.at("expires_at").get<std::int64_t>();
      claims_[claim.slot] = claim;
    } else if (type == "slot_completed") {
      const int slot = record.at("slot").get<int>();
      completed_slots_[slot] = true;
      claims_.erase(slot);
    } else if (type == "slot_released") {
      claims_.erase(record.at("slot").get<int>());
    } else {
      throw std::runtime_error("unknown record type: " + type);
    }
    ++line_no;
    good_end = in.tellg();
  }
  next_seq_ = line_no;
  if (truncated_tail) {
    std::filesystem::resize_file(log_path(),
                                 static_cast<std::uintmax_t>(good_end));
  }
}

void Registry::append_agent_created(const AgentRecord& record) {
  std::lock_guard lock(mutex_);
  if (agents_.count(record.agent_id)) {
    throw std::runtime_error("agent " + std::to_string(record.agent_id) +
                             " already exists");
  }
  json body;
  body["type"] = "agent_created";
  body["agent_id"] = record.agent_id;
  body["genome"] = serialize_genome(record.genome);
  body["parent_id"] =
      record.parent_id ? json(*record.parent_id) : json(nullptr);
  body["mutation_count"] = record.mutation_count;
  body["generation"] = record.created_in_generation;
  body["slot"] = record.slot ? json(*record.slot) : json(nullptr);
  RecordBuilder builder(std::move(body));
  append_locked(builder);
  AgentRecord stored = record;
  stored.status = AgentStatus::kTraining;
  stored.fitness_set = false;
  agents_.emplace(stored.agent_id, std::move(stored));
}

void Registry::append_fitness(int agent_id, double fitness, bool diverged,
                              double duration_seconds) {
  std::lock_guard lock(mutex_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) {
    throw std::runtime_error("fitness for unknown agent " +
                             std::to_string(agent_id));
  }
  if (it->second.fitness_set) {
    throw std::runtime_error("fitness already set for agent " +
                             std::to_string(agent_id));
  }
  const bool failed = diverged || !std::isfinite(fitness);
  json body;
  body["type"] = "fitness_set";
  body["agent_id"] = agent_id;
  body["fitness"] = fitness_to_json(fitness, failed);
  body["diverged"] = failed;
  body["duration_s"] = duration_seconds;
  RecordBuilder builder(std::move(body));
  append_locked(builder);
  it->second.fitness_set = true;
  it->second.diverged = failed;
  it->second.fitness =
      failed ? -std::numeric_limits<double>::infinity() : fitness;
  it->second.status = failed ? AgentStatus::kFailed : AgentStatus::kTrained;
  durations_.push_back(duration_seconds);
}

bool Registry::has_agent(int agent_id) const {
  std::lock_guard lock(mutex_);
  return agents_.count(agent_id) > 0;
}

AgentRecord Registry::agent(int agent_id) const {
  std::lock_guard lock(mutex_);
  return agents_.at(agent_id);
}

std::vector<AgentRecord> Registry::agents() const {
  std::lock_guard lock(mutex_);
  std::vector<AgentRecord> out;
  out.reserve(agents_.size());
  for (const auto& [id, record] : agents_) out.push_back(record);
  return out;
}

int Registry::agent_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(agents_.size());
}

int Registry::trained_count() const {
  std::lock_guard lock(mutex_);
  int count = 0;
  for (const auto& [id, record] : agents_) {
    if (record.fitness_set) ++count;
  }
  return count;
}

std::vector<int> Registry::trained_ids_in(int lo, int hi) const {
  std::lock_guard lock(mutex_);
  std::vector<int> out;
  for (const auto& [id, record] : agents_) {
    if (id >= lo && id < hi && record.fitness_set) out.push_back(id);
  }
  return out;
}

int Registry::max_agent_id() const {
  std::lock_guard lock(mutex_);
  return agents_.empty() ? -1 : agents_.rbegin()->first;
}

bool Registry::slot_completed(int slot) const {
  std::lock_guard lock(mutex_);
  return completed_slots_.count(slot) > 0;
}

int Registry::completed_slot_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(completed_slots_.size());
}

bool Registry::all_completed_below(int slot) const {
  std::lock_guard lock(mutex_);
  for (int s = 0; s < slot; ++s) {
    if (!completed_slots_.count(s)) return false;
  }
  return true;
}

bool Registry::try_claim_slot(int slot, int worker, double lease_seconds) {
  std::lock_guard lock(mutex_);
  if (completed_slots_.count(slot)) return false;
  auto it = claims_.find(slot);
  if (it != claims_.end()) {
    if (it->second.expires_at > clock_()) return false;
    json released;
    released["type"] = "slot_released";
    released["slot"] = slot;
    released["reason"] = "lease expired";
    RecordBuilder builder(std::move(released));
    append_locked(builder);
    claims_.erase(it);
  }
  SlotClaim claim;
  claim.slot = slot;
  claim.worker = worker;
  claim.expires_at = clock_() + static_cast<std::int64_t>(lease_seconds);
  json body;
  body["type"] = "slot_claimed";
  body["slot"] = slot;
  body["worker"] = worker;
  body["expires_at"] = claim.expires_at;
  RecordBuilder builder(std::move(body));
  append_locked(builder);
  claims_[slot] = claim;
  return true;
}

void Registry::complete_slot(int slot, int agent_id, double duration_seconds) {
  std::lock_guard lock(mutex_);
  json body;
  body["type"] = "slot_completed";
  body["slot"] = slot;
  body["agent_id"] = agent_id;
  body["duration_s"] = duration_seconds;
  RecordBuilder builder(std::move(body));
  append_locked(builder);
  completed_slots_[slot] = true;
  claims_.erase(slot);
}

void Registry::release_slot(int slot, const std::string& reason) {
  std::lock_guard lock(mutex_);
  json body;
  body["type"] = "slot_released";
  body["slot"] = slot;
  body["reason"] = reason;
  RecordBuilder builder(std::move(body));
  append_locked(builder);
  claims_.erase(slot);
}

std::optional<SlotClaim> Registry::active_claim(int slot) const {
  std::lock_guard lock(mutex_);
  auto it = claims_.find(slot);
  if (it == claims_.end() || it->second.expires_at <= clock_()) {
    return std::nullopt;
  }
  return it->second;
}

double Registry::median_training_duration() const {
  std::lock_guard lock(mutex_);
  if (durations_.empty()) return 0.0;
  std::vector<double> sorted = durations_;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[mid];
  return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

std::string Registry::state_fingerprint() const {
  std::lock_guard lock(mutex_);
  json state = json::array();
  for (const auto& [id, record] : agents_) {
    json entry;
    entry["agent_id"] = id;
    entry["genome"] = serialize_genome(record.genome);
    entry["parent_id"] =
        record.parent_id ? json(*record.parent_id) : json(nullptr);
    entry["mutation_count"] = record.mutation_count;
    entry["generation"] = record.created_in_generation;
    entry["status"] = to_string(record.status);
    entry["fitness"] = fitness_to_json(record.fitness, record.diverged);
    state.push_back(std::move(entry));
  }
  return state.dump(2);
}

}  // namespace evoloco
