#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evoloco/rng.hpp"

namespace evoloco {

// Parameter ranges for limb genes. Chosen so the smallest agent is
// simulable at dt = 1/60 s without contact instability.
inline constexpr double kMinLimbLength = 0.1;
inline constexpr double kMaxLimbLength = 0.8;
inline constexpr double kMinLimbRadius = 0.02;
inline constexpr double kMaxLimbRadius = 0.08;
inline constexpr double kMinLimbDensity = 500.0;
inline constexpr double kMaxLimbDensity = 3000.0;
inline constexpr double kJointLimitBound = 2.0;  // |joint limit| <= 2 rad
inline constexpr double kMinJointGap = 0.2;      // generated hi - lo >= this
inline constexpr int kMaxLimbs = 10;
inline constexpr double kPi = 3.14159265358979323846;

// Quantization bins used by the topological signature.
inline constexpr double kSigLengthBin = 0.05;
inline constexpr double kSigAngleBin = kPi / 16.0;
inline constexpr double kSigDensityBin = 250.0;

struct LimbGene {
  int limb_id = 0;
  std::optional<int> parent_id;  // absent only for the root
  double attach_angle = 0.0;     // limb axis relative to parent axis [-pi, pi]
  double length = 0.0;           // m
  double radius = 0.0;           // m, capsule half-width
  double density = 0.0;          // kg/m^3
  double joint_limit_lo = 0.0;   // rad
  double joint_limit_hi = 0.0;   // rad
  double torque_limit = 0.0;     // N*m
  bool is_foot = false;

  bool operator==(const LimbGene&) const = default;
};

// Acyclic tree of limb genes; the heritable unit mutated across generations.
struct MorphologyGenome {
  std::map<int, LimbGene> limbs;  // keyed by limb_id
  int root_id = 0;
  int mutation_count = 0;

  bool operator==(const MorphologyGenome&) const = default;

  std::size_t limb_count() const { return limbs.size(); }
  std::vector<int> children_of(int limb_id) const;
  std::vector<int> leaf_ids() const;
};

struct TopologicalSignature {
  std::array<std::uint8_t, 16> digest{};

  bool operator==(const TopologicalSignature&) const = default;
  bool operator<(const TopologicalSignature& o) const {
    return digest < o.digest;
  }
  std::string hex() const;
};

// Raised by deserialize_genome and validate_genome; carries the limb id the
// violation was detected on (-1 when no specific limb applies).
class GenomeError : public std::runtime_error {
 public:
  GenomeError(std::string message, int limb_id = -1)
      : std::runtime_error(std::move(message)), limb_id_(limb_id) {}
  int limb_id() const { return limb_id_; }

 private:
  int limb_id_;
};

enum class MutationOp {
  kAddLimb,
  kDeleteLimb,
  kChangeLength,
  kChangeAngle,
  kChangeDensity,
};
inline constexpr int kNumMutationOps = 5;

// Throws GenomeError on the first violated invariant.
void validate_genome(const MorphologyGenome& genome);
bool genome_is_valid(const MorphologyGenome& genome);

// Rounds to 6 significant decimal digits, the precision of the XML dialect.
// All generated/mutated parameters are canonicalized through this so a
// genome round-trips bit-exactly through its serialized form.
double round_sig6(double value);

MorphologyGenome generate_random(std::uint64_t rng_seed);

// Generates 10*P candidates, dedupes by signature and tops up until P unique
// genomes exist. Throws std::runtime_error after 100*P candidates.
std::vector<MorphologyGenome> initialize_population(int population_size,
                                                    std::uint64_t rng_seed);

MorphologyGenome mutate(const MorphologyGenome& genome, std::uint64_t rng_seed);

// Applies one specific operator; returns nullopt when it is inapplicable
// (add at the limb cap, delete on a root-only genome).
std::optional<MorphologyGenome> apply_mutation(const MorphologyGenome& genome,
                                               MutationOp op, Rng& rng);

TopologicalSignature topological_signature(const MorphologyGenome& genome);

std::string serialize_genome(const MorphologyGenome& genome);
MorphologyGenome deserialize_genome(const std::string& xml);

}  // namespace evoloco
