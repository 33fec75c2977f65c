#include "evoloco/morphology.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

namespace evoloco {

namespace {

constexpr double kGravityForTorqueScale = 9.81;

std::uint64_t fold(std::uint64_t h, std::uint64_t x) {
  return mix64(h ^ (x * 0x9e3779b97f4a7c15ULL));
}

struct Digest128 {
  std::uint64_t a = 0x243f6a8885a308d3ULL;
  std::uint64_t b = 0x13198a2e03707344ULL;

  void add(std::uint64_t x) {
    a = fold(a, x);
    b = fold(b, mix64(x) + 1);
  }
  bool operator<(const Digest128& o) const {
    return a != o.a ? a < o.a : b < o.b;
  }
};

std::int64_t quantize(double value, double bin) {
  return static_cast<std::int64_t>(std::floor(value / bin));
}

double limb_mass(const LimbGene& gene) {
  const double area =
      gene.length * 2.0 * gene.radius + kPi * gene.radius * gene.radius;
  return gene.density * area;
}

void recompute_feet(MorphologyGenome& genome) {
  for (auto& [id, gene] : genome.limbs) {
    gene.is_foot = genome.children_of(id).empty();
  }
}

std::vector<int> sorted_ids(const MorphologyGenome& genome) {
  std::vector<int> ids;
  ids.reserve(genome.limbs.size());
  for (const auto& [id, gene] : genome.limbs) ids.push_back(id);
  return ids;  // std::map iterates in key order
}

LimbGene random_gene(Rng& rng, int limb_id, std::optional<int> parent_id) {
  LimbGene gene;
  gene.limb_id = limb_id;
  gene.parent_id = parent_id;
  gene.attach_angle = round_sig6(rng.uniform(-kPi, kPi));
  gene.length = round_sig6(rng.uniform(kMinLimbLength, kMaxLimbLength));
  gene.radius = round_sig6(rng.uniform(kMinLimbRadius, kMaxLimbRadius));
  gene.density = round_sig6(rng.uniform(kMinLimbDensity, kMaxLimbDensity));
  gene.joint_limit_lo =
      round_sig6(rng.uniform(-kJointLimitBound, kJointLimitBound - kMinJointGap));
  gene.joint_limit_hi = round_sig6(
      rng.uniform(gene.joint_limit_lo + kMinJointGap, kJointLimitBound));
  // Torque limits scale with the limb's own gravity load so that generated
  // agents are controllable without being over-actuated.
  const double gravity_torque =
      limb_mass(gene) * kGravityForTorqueScale * gene.length * 0.5;
  gene.torque_limit = round_sig6(
      std::clamp(rng.uniform(1.5, 4.0) * gravity_torque, 2.0, 250.0));
  gene.is_foot = false;
  return gene;
}

void append_attr(std::string& out, const char* name, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), " %s=\"%.6g\"", name, value);
  out += buf;
}

}  // namespace

std::vector<int> MorphologyGenome::children_of(int limb_id) const {
  std::vector<int> result;
  for (const auto& [id, gene] : limbs) {
    if (gene.parent_id && *gene.parent_id == limb_id) result.push_back(id);
  }
  return result;
}

std::vector<int> MorphologyGenome::leaf_ids() const {
  std::vector<int> result;
  for (const auto& [id, gene] : limbs) {
    if (children_of(id).empty()) result.push_back(id);
  }
  return result;
}

std::string TopologicalSignature::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(32);
  for (std::uint8_t byte : digest) {
    out += digits[byte >> 4];
    out += digits[byte & 0xf];
  }
  return out;
}

double round_sig6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return std::strtod(buf, nullptr);
}

void validate_genome(const MorphologyGenome& genome) {
  if (genome.limbs.empty()) {
    throw GenomeError("genome has no limbs");
  }
  if (genome.limbs.size() > static_cast<std::size_t>(kMaxLimbs)) {
    throw GenomeError("limb count " + std::to_string(genome.limbs.size()) +
                      " exceeds the limit of " + std::to_string(kMaxLimbs));
  }
  if (genome.mutation_count < 0) {
    throw GenomeError("negative mutation_count");
  }
  auto root_it = genome.limbs.find(genome.root_id);
  if (root_it == genome.limbs.end()) {
    throw GenomeError("root_id " + std::to_string(genome.root_id) +
                      " is not a limb", genome.root_id);
  }
  for (const auto& [id, gene] : genome.limbs) {
    if (gene.limb_id != id) {
      throw GenomeError("limb keyed under " + std::to_string(id) +
                        " carries limb_id " + std::to_string(gene.limb_id), id);
    }
    if (id == genome.root_id) {
      if (gene.parent_id) {
        throw GenomeError("root limb has a parent", id);
      }
    } else if (!gene.parent_id) {
      throw GenomeError("non-root limb " + std::to_string(id) +
                        " has no parent", id);
    }
    if (gene.parent_id) {
      if (*gene.parent_id == id) {
        throw GenomeError("cycle: limb " + std::to_string(id) +
                          " is its own parent", id);
      }
      if (!genome.limbs.count(*gene.parent_id)) {
        throw GenomeError("limb " + std::to_string(id) +
                          " references unknown parent " +
                          std::to_string(*gene.parent_id), id);
      }
    }
    if (!(gene.length >= kMinLimbLength && gene.length <= kMaxLimbLength)) {
      throw GenomeError("limb " + std::to_string(id) + " length out of range",
                        id);
    }
    if (!(gene.radius >= kMinLimbRadius && gene.radius <= kMaxLimbRadius)) {
      throw GenomeError("limb " + std::to_string(id) + " radius out of range",
                        id);
    }
    if (!(gene.density >= kMinLimbDensity && gene.density <= kMaxLimbDensity)) {
      throw GenomeError("limb " + std::to_string(id) + " density out of range",
                        id);
    }
    if (!(gene.attach_angle >= -kPi && gene.attach_angle <= kPi)) {
      throw GenomeError("limb " + std::to_string(id) +
                        " attach_angle out of range", id);
    }
    if (!(gene.joint_limit_lo < gene.joint_limit_hi)) {
      throw GenomeError("limb " + std::to_string(id) +
                        " joint limits not ordered", id);
    }
    if (gene.joint_limit_lo < -kJointLimitBound ||
        gene.joint_limit_hi > kJointLimitBound) {
      throw GenomeError("limb " + std::to_string(id) +
                        " joint limits out of range", id);
    }
    if (!(gene.torque_limit > 0.0)) {
      throw GenomeError("limb " + std::to_string(id) +
                        " torque_limit must be positive", id);
    }
  }
  // Walking up from every limb must reach the root without revisiting.
  for (const auto& [id, gene] : genome.limbs) {
    int cursor = id;
    std::size_t hops = 0;
    while (cursor != genome.root_id) {
      const auto& parent = genome.limbs.at(cursor).parent_id;
      cursor = *parent;
      if (++hops > genome.limbs.size()) {
        throw GenomeError("cycle reachable from limb " + std::to_string(id),
                          id);
      }
    }
  }
  for (const auto& [id, gene] : genome.limbs) {
    const bool leaf = genome.children_of(id).empty();
    if (leaf && !gene.is_foot) {
      throw GenomeError("leaf limb " + std::to_string(id) +
                        " is not marked as a foot", id);
    }
    if (!leaf && gene.is_foot) {
      throw GenomeError("internal limb " + std::to_string(id) +
                        " is marked as a foot", id);
    }
  }
}

bool genome_is_valid(const MorphologyGenome& genome) {
  try {
    validate_genome(genome);
    return true;
  } catch (const GenomeError&) {
    return false;
  }
}

MorphologyGenome generate_random(std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    MorphologyGenome genome;
    genome.root_id = 0;
    genome.mutation_count = 0;
    genome.limbs[0] = random_gene(rng, 0, std::nullopt);
    const int grows = rng.uniform_int(1, 6);
    int next_id = 1;
    for (int g = 0; g < grows && genome.limbs.size() < kMaxLimbs; ++g) {
      const std::vector<int> ids = sorted_ids(genome);
      const int parent = ids[rng.uniform_below(ids.size())];
      genome.limbs[next_id] = random_gene(rng, next_id, parent);
      ++next_id;
    }
    recompute_feet(genome);
    if (genome_is_valid(genome)) return genome;
  }
  throw std::runtime_error("generate_random failed to build a valid genome");
}

std::vector<MorphologyGenome> initialize_population(int population_size,
                                                    std::uint64_t rng_seed) {
  if (population_size < 1) {
    throw std::invalid_argument("population size must be >= 1");
  }
  const std::size_t wanted = static_cast<std::size_t>(population_size);
  std::vector<MorphologyGenome> unique;
  std::set<TopologicalSignature> seen;
  std::uint64_t candidate = 0;
  const std::uint64_t initial_pool = 10ULL * wanted;
  const std::uint64_t budget = 100ULL * wanted;
  while (candidate < initial_pool || (unique.size() < wanted && candidate < budget)) {
    MorphologyGenome genome =
        generate_random(derive_seed(rng_seed, 0x706f70ULL, candidate));
    ++candidate;
    if (seen.insert(topological_signature(genome)).second) {
      unique.push_back(std::move(genome));
    }
  }
  if (unique.size() < wanted) {
    throw std::runtime_error(
        "design space exhausted: only " + std::to_string(unique.size()) +
        " unique morphologies after " + std::to_string(candidate) +
        " candidates");
  }
  unique.resize(wanted);
  return unique;
}

std::optional<MorphologyGenome> apply_mutation(const MorphologyGenome& genome,
                                               MutationOp op, Rng& rng) {
  MorphologyGenome child = genome;
  const std::vector<int> ids = sorted_ids(genome);
  switch (op) {
    case MutationOp::kAddLimb: {
      if (child.limbs.size() >= static_cast<std::size_t>(kMaxLimbs)) {
        return std::nullopt;
      }
      const int parent = ids[rng.uniform_below(ids.size())];
      const int new_id = ids.back() + 1;
      child.limbs[new_id] = random_gene(rng, new_id, parent);
      recompute_feet(child);
      return child;
    }
    case MutationOp::kDeleteLimb: {
      std::vector<int> leaves = child.leaf_ids();
      std::erase(leaves, child.root_id);
      if (leaves.empty()) return std::nullopt;
      child.limbs.erase(leaves[rng.uniform_below(leaves.size())]);
      recompute_feet(child);
      return child;
    }
    case MutationOp::kChangeLength: {
      LimbGene& gene = child.limbs.at(ids[rng.uniform_below(ids.size())]);
      double value = gene.length;
      while (value == gene.length) {
        value = round_sig6(rng.uniform(kMinLimbLength, kMaxLimbLength));
      }
      gene.length = value;
      return child;
    }
    case MutationOp::kChangeAngle: {
      LimbGene& gene = child.limbs.at(ids[rng.uniform_below(ids.size())]);
      double value = gene.attach_angle;
      while (value == gene.attach_angle) {
        value = round_sig6(rng.uniform(-kPi, kPi));
      }
      gene.attach_angle = value;
      return child;
    }
    case MutationOp::kChangeDensity: {
      LimbGene& gene = child.limbs.at(ids[rng.uniform_below(ids.size())]);
      double value = gene.density;
      while (value == gene.density) {
        value = round_sig6(rng.uniform(kMinLimbDensity, kMaxLimbDensity));
      }
      gene.density = value;
      return child;
    }
  }
  return std::nullopt;
}

MorphologyGenome mutate(const MorphologyGenome& genome,
                        std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  while (true) {
    const auto op = static_cast<MutationOp>(rng.uniform_below(kNumMutationOps));
    std::optional<MorphologyGenome> child = apply_mutation(genome, op, rng);
    if (child) {
      child->mutation_count = genome.mutation_count + 1;
      return *child;
    }
  }
}

namespace {

Digest128 subtree_digest(const MorphologyGenome& genome, int limb_id) {
  const LimbGene& gene = genome.limbs.at(limb_id);
  Digest128 digest;
  digest.add(static_cast<std::uint64_t>(quantize(gene.length, kSigLengthBin)));
  digest.add(
      static_cast<std::uint64_t>(quantize(gene.attach_angle, kSigAngleBin)));
  digest.add(
      static_cast<std::uint64_t>(quantize(gene.density, kSigDensityBin)));
  std::vector<Digest128> child_digests;
  for (int child : genome.children_of(limb_id)) {
    child_digests.push_back(subtree_digest(genome, child));
  }
  std::sort(child_digests.begin(), child_digests.end());
  digest.add(child_digests.size());
  for (const Digest128& cd : child_digests) {
    digest.add(cd.a);
    digest.add(cd.b);
  }
  return digest;
}

}  // namespace

TopologicalSignature topological_signature(const MorphologyGenome& genome) {
  const Digest128 digest = subtree_digest(genome, genome.root_id);
  TopologicalSignature sig;
  for (int i = 0; i < 8; ++i) {
    sig.digest[i] = static_cast<std::uint8_t>(digest.a >> (8 * i));
    sig.digest[8 + i] = static_cast<std::uint8_t>(digest.b >> (8 * i));
  }
  return sig;
}

std::string serialize_genome(const MorphologyGenome& genome) {
  std::string out = "<morphology version=\"1\"";
  if (genome.mutation_count != 0) {
    out += " mutations=\"" + std::to_string(genome.mutation_count) + "\"";
  }
  out += ">\n";
  for (const auto& [id, gene] : genome.limbs) {
    out += "  <limb id=\"" + std::to_string(id) + "\"";
    if (gene.parent_id) {
      out += " parent=\"" + std::to_string(*gene.parent_id) + "\"";
    }
    append_attr(out, "attach_angle", gene.attach_angle);
    append_attr(out, "length", gene.length);
    append_attr(out, "radius", gene.radius);
    append_attr(out, "density", gene.density);
    append_attr(out, "joint_lo", gene.joint_limit_lo);
    append_attr(out, "joint_hi", gene.joint_limit_hi);
    append_attr(out, "torque_limit", gene.torque_limit);
    out += " foot=\"";
    out += gene.is_foot ? '1' : '0';
    out += "\"/>\n";
  }
  out += "</morphology>\n";
  return out;
}

namespace {

// Minimal strict parser for the genome XML dialect: one root element, flat
// self-closing <limb/> children, double-quoted attributes, no text content.
class XmlCursor {
 public:
  explicit XmlCursor(const std::string& text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool consume(const std::string& token) {
    if (text_.compare(pos_, token.size(), token) == 0) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  std::string read_name() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a name");
    return text_.substr(start, pos_ - start);
  }

  std::string read_quoted() {
    if (peek() != '"') fail("expected '\"'");
    ++pos_;
    std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') ++pos_;
    if (pos_ >= text_.size()) fail("unterminated attribute value");
    std::string value = text_.substr(start, pos_ - start);
    ++pos_;
    return value;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw GenomeError("malformed XML at offset " + std::to_string(pos_) +
                      ": " + what);
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> read_attrs(XmlCursor& cur) {
  std::map<std::string, std::string> attrs;
  while (true) {
    cur.skip_space();
    char c = cur.peek();
    if (c == '>' || c == '/' || c == '?') return attrs;
    std::string name = cur.read_name();
    cur.skip_space();
    if (!cur.consume("=")) cur.fail("expected '=' after attribute name");
    cur.skip_space();
    if (!attrs.emplace(name, cur.read_quoted()).second) {
      cur.fail("duplicate attribute " + name);
    }
  }
}

double attr_double(const std::map<std::string, std::string>& attrs,
                   const std::string& name, int limb_id) {
  auto it = attrs.find(name);
  if (it == attrs.end()) {
    throw GenomeError("limb " + std::to_string(limb_id) +
                      " is missing attribute " + name, limb_id);
  }
  const char* begin = it->second.c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw GenomeError("limb " + std::to_string(limb_id) + " attribute " +
                      name + " is not a number", limb_id);
  }
  return value;
}

long attr_long(const std::map<std::string, std::string>& attrs,
               const std::string& name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) {
    throw GenomeError("missing attribute " + name);
  }
  const char* begin = it->second.c_str();
  char* end = nullptr;
  long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw GenomeError("attribute " + name + " is not an integer");
  }
  return value;
}

}  // namespace

MorphologyGenome deserialize_genome(const std::string& xml) {
  XmlCursor cur(xml);
  cur.skip_space();
  if (cur.consume("<?xml")) {
    read_attrs(cur);
    cur.skip_space();
    if (!cur.consume("?>")) cur.fail("unterminated XML declaration");
    cur.skip_space();
  }
  if (!cur.consume("<morphology")) cur.fail("expected <morphology>");
  auto root_attrs = read_attrs(cur);
  if (!cur.consume(">")) cur.fail("expected '>' after <morphology ...");
  auto version = root_attrs.find("version");
  if (version == root_attrs.end() || version->second != "1") {
    throw GenomeError("unsupported or missing morphology version");
  }

  MorphologyGenome genome;
  genome.mutation_count =
      root_attrs.count("mutations")
          ? static_cast<int>(attr_long(root_attrs, "mutations"))
          : 0;

  bool have_root = false;
  while (true) {
    cur.skip_space();
    if (cur.consume("</morphology")) {
      cur.skip_space();
      if (!cur.consume(">")) cur.fail("unterminated </morphology>");
      break;
    }
    if (!cur.consume("<limb")) cur.fail("expected <limb .../>");
    auto attrs = read_attrs(cur);
    if (!cur.consume("/>")) cur.fail("expected '/>' to close <limb>");

    LimbGene gene;
    gene.limb_id = static_cast<int>(attr_long(attrs, "id"));
    const int id = gene.limb_id;
    if (attrs.count("parent")) {
      gene.parent_id = static_cast<int>(attr_long(attrs, "parent"));
    } else {
      if (have_root) {
        throw GenomeError("limb " + std::to_string(id) +
                          " is a second parentless root", id);
      }
      have_root = true;
      genome.root_id = id;
    }
    gene.attach_angle = attr_double(attrs, "attach_angle", id);
    gene.length = attr_double(attrs, "length", id);
    gene.radius = attr_double(attrs, "radius", id);
    gene.density = attr_double(attrs, "density", id);
    gene.joint_limit_lo = attr_double(attrs, "joint_lo", id);
    gene.joint_limit_hi = attr_double(attrs, "joint_hi", id);
    gene.torque_limit = attr_double(attrs, "torque_limit", id);
    auto foot = attrs.find("foot");
    if (foot == attrs.end() || (foot->second != "0" && foot->second != "1")) {
      throw GenomeError("limb " + std::to_string(id) +
                        " has a missing or non-boolean foot flag", id);
    }
    gene.is_foot = foot->second == "1";
    if (!genome.limbs.emplace(id, gene).second) {
      throw GenomeError("duplicate limb id " + std::to_string(id), id);
    }
  }
  cur.skip_space();
  if (!cur.at_end()) cur.fail("trailing content after </morphology>");
  if (!have_root) {
    throw GenomeError("no root limb (every limb has a parent)");
  }
  validate_genome(genome);
  return genome;
}

}  // namespace evoloco
