#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "evoloco/morphology.hpp"
#include "evoloco/physics.hpp"
#include "evoloco/rng.hpp"

using namespace evoloco;

namespace {

MorphologyGenome single_limb(double length, double radius, double density,
                             double attach = 0.0) {
  MorphologyGenome genome;
  genome.root_id = 0;
  LimbGene root;
  root.limb_id = 0;
  root.attach_angle = attach;
  root.length = length;
  root.radius = radius;
  root.density = density;
  root.joint_limit_lo = -1.0;
  root.joint_limit_hi = 1.0;
  root.torque_limit = 50.0;
  root.is_foot = true;
  genome.limbs[0] = root;
  return genome;
}

void lift(ArticulatedBody& body, double height) {
  for (RigidBodyState& state : body.bodies) state.position.y += height;
}

Vec2 total_momentum(const ArticulatedBody& body) {
  Vec2 p;
  for (const RigidBodyState& state : body.bodies) {
    p += state.linear_velocity * state.mass;
  }
  return p;
}

void randomize_airborne(ArticulatedBody& body, Rng& rng, double vel_scale,
                        double spin_scale) {
  lift(body, 10.0 + rng.uniform(0.0, 5.0));
  for (RigidBodyState& state : body.bodies) {
    state.linear_velocity = {rng.uniform(-vel_scale, vel_scale),
                             rng.uniform(-vel_scale, vel_scale)};
    state.angular_velocity = rng.uniform(-spin_scale, spin_scale);
  }
}

bool states_identical(const ArticulatedBody& a, const ArticulatedBody& b) {
  if (a.bodies.size() != b.bodies.size()) return false;
  for (std::size_t i = 0; i < a.bodies.size(); ++i) {
    if (std::memcmp(&a.bodies[i], &b.bodies[i], sizeof(RigidBodyState)) != 0) {
      return false;
    }
  }
  for (std::size_t j = 0; j < a.joints.size(); ++j) {
    if (a.joints[j].angle != b.joints[j].angle ||
        a.joints[j].velocity != b.joints[j].velocity) {
      return false;
    }
  }
  return true;
}

std::vector<double> random_actions(const ArticulatedBody& body, Rng& rng) {
  std::vector<double> torques(body.joint_count());
  for (std::size_t j = 0; j < torques.size(); ++j) {
    torques[j] = rng.uniform(-1.0, 1.0) * body.joints[j].torque_limit;
  }
  return torques;
}

}  // namespace

TEST_CASE("instantiate matches the closed-form capsule mass oracle") {
  // independent oracle: rectangle plus two half-circle caps, unit depth
  const double length = 0.4, radius = 0.05, density = 1000.0;
  const double oracle_area = length * (2.0 * radius) + 3.14159265358979323846 *
                                                           radius * radius;
  const double oracle_mass = density * oracle_area;  // ~47.85 kg

  const WorldConfig world;
  const ArticulatedBody body =
      instantiate(single_limb(length, radius, density), world);
  REQUIRE(body.bodies.size() == 1);
  CHECK(body.bodies[0].mass == doctest::Approx(oracle_mass).epsilon(1e-12));
  CHECK(body.bodies[0].mass == doctest::Approx(47.853981).epsilon(1e-4));
  CHECK(body.total_mass() == doctest::Approx(oracle_mass));
  // rod inertia
  CHECK(body.bodies[0].inertia ==
        doctest::Approx(oracle_mass * length * length / 12.0));
}

TEST_CASE("instantiate: joint count, determinism, resting placement") {
  const WorldConfig world;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const MorphologyGenome genome = generate_random(seed);
    const ArticulatedBody a = instantiate(genome, world);
    const ArticulatedBody b = instantiate(genome, world);
    CHECK(a.joint_count() == static_cast<int>(genome.limb_count()) - 1);
    CHECK(states_identical(a, b));
    CHECK(a.foot_count() == static_cast<int>(genome.leaf_ids().size()));

    double lowest = 1e30;
    for (std::size_t i = 0; i < a.bodies.size(); ++i) {
      const double half = a.geometry[i].length * 0.5;
      const double c = std::cos(a.bodies[i].angle);
      const double s = std::sin(a.bodies[i].angle);
      const Vec2 axis{-s, c};
      const Vec2 top = a.bodies[i].position + axis * half;
      const Vec2 bottom = a.bodies[i].position - axis * half;
      lowest = std::min(lowest, std::min(top.y, bottom.y) - a.geometry[i].radius);
    }
    CHECK(lowest == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(a.bodies[0].position.x == doctest::Approx(0.0));
    // joints start at their limit midpoints, anchors coincident
    for (const JointState& joint : a.joints) {
      CHECK(joint.angle ==
            doctest::Approx(0.5 * (joint.limit_lo + joint.limit_hi)));
    }
    CHECK(max_anchor_separation(a) < 1e-9);
  }
}

TEST_CASE("free fall: velocity change is exactly gravity * dt") {
  const WorldConfig world;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ArticulatedBody body = instantiate(generate_random(seed), world);
    lift(body, 10.0);
    std::vector<double> before_vy;
    for (const RigidBodyState& state : body.bodies) {
      before_vy.push_back(state.linear_velocity.y);
    }
    const std::vector<double> zero(body.joint_count(), 0.0);
    const StepResult result = step(body, zero, world);
    CHECK(!result.diverged);
    for (std::size_t i = 0; i < body.bodies.size(); ++i) {
      const double expected = before_vy[i] - world.gravity * world.dt;
      CHECK(body.bodies[i].linear_velocity.y == expected);
    }
    for (const ContactReading& reading : result.foot_contacts) {
      CHECK(reading.normal_force == 0.0);
      CHECK(reading.tangential_force == 0.0);
    }
  }
}

TEST_CASE("no-contact momentum identity within 1e-9 relative") {
  const WorldConfig world;
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    ArticulatedBody body =
        instantiate(generate_random(1000 + trial % 40), world);
    randomize_airborne(body, rng, 3.0, 2.0);
    const double mass = body.total_mass();
    const Vec2 before = total_momentum(body);
    const std::vector<double> zero(body.joint_count(), 0.0);
    step(body, zero, world);
    const Vec2 after = total_momentum(body);
    const double expected_dy = -mass * world.gravity * world.dt;
    CHECK(std::abs(after.x - before.x) <= 1e-9 * std::abs(expected_dy));
    CHECK(std::abs((after.y - before.y) - expected_dy) <=
          1e-9 * std::abs(expected_dy));
  }
}

TEST_CASE("energy never increases without torques or contact") {
  const WorldConfig world;
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    ArticulatedBody body = instantiate(generate_random(trial % 60), world);
    randomize_airborne(body, rng, 2.0, 1.0);
    const double before = mechanical_energy(body, world);
    const std::vector<double> zero(body.joint_count(), 0.0);
    const StepResult result = step(body, zero, world);
    for (const ContactReading& reading : result.foot_contacts) {
      REQUIRE(reading.normal_force == 0.0);  // genuinely airborne
    }
    const double after = mechanical_energy(body, world);
    CHECK(after - before <= 1e-6 * std::abs(before));
  }
}

TEST_CASE("resting body drifts less than 1 mm per step") {
  const WorldConfig world;
  for (std::uint64_t seed : {0ULL, 3ULL, 11ULL, 29ULL}) {
    ArticulatedBody body = instantiate(generate_random(seed), world);
    const std::vector<double> zero(body.joint_count(), 0.0);
    for (int t = 0; t < 1200; ++t) step(body, zero, world);
    std::vector<Vec2> before;
    for (const RigidBodyState& state : body.bodies) {
      before.push_back(state.position);
    }
    step(body, zero, world);
    for (std::size_t i = 0; i < body.bodies.size(); ++i) {
      CHECK(std::abs(body.bodies[i].position.y - before[i].y) < 1e-3);
    }
  }
}

TEST_CASE("stepping is bit-deterministic") {
  const WorldConfig world;
  Rng rng(5150);
  for (int trial = 0; trial < 1000; ++trial) {
    ArticulatedBody body = instantiate(generate_random(trial % 50), world);
    if (trial % 2 == 0) randomize_airborne(body, rng, 4.0, 3.0);
    const std::vector<double> torques = random_actions(body, rng);
    ArticulatedBody copy = body;
    const StepResult ra = step(body, torques, world);
    const StepResult rb = step(copy, torques, world);
    REQUIRE(states_identical(body, copy));
    REQUIRE(ra.foot_contacts.size() == rb.foot_contacts.size());
    for (std::size_t f = 0; f < ra.foot_contacts.size(); ++f) {
      CHECK(ra.foot_contacts[f].normal_force ==
            rb.foot_contacts[f].normal_force);
      CHECK(ra.foot_contacts[f].tangential_force ==
            rb.foot_contacts[f].tangential_force);
    }
  }
}

TEST_CASE("joint anchors stay within 1e-3 m under fuzzed rollouts") {
  const WorldConfig world;
  Rng rng(31337);
  for (std::uint64_t seed : {2ULL, 5ULL, 8ULL, 13ULL, 21ULL, 34ULL}) {
    ArticulatedBody body = instantiate(generate_random(seed), world);
    if (body.joint_count() == 0) continue;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const std::vector<double> torques = random_actions(body, rng);
      const StepResult result = step(body, torques, world);
      REQUIRE(!result.diverged);
      worst = std::max(worst, max_anchor_separation(body));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("joint angles are clamped into their limits after every step") {
  const WorldConfig world;
  for (std::uint64_t seed : {1ULL, 4ULL, 9ULL, 16ULL}) {
    ArticulatedBody body = instantiate(generate_random(seed), world);
    for (int t = 0; t < 500; ++t) {
      // saturated torques slam the joints into their limits
      std::vector<double> torques(body.joint_count());
      for (std::size_t j = 0; j < torques.size(); ++j) {
        torques[j] = (t / 100 % 2 == 0 ? 1.0 : -1.0) *
                     body.joints[j].torque_limit;
      }
      step(body, torques, world);
      for (const JointState& joint : body.joints) {
        CHECK(joint.angle >= joint.limit_lo - 1e-9);
        CHECK(joint.angle <= joint.limit_hi + 1e-9);
      }
    }
  }
}

TEST_CASE("contact readings: nonnegative normals, zero above clearance") {
  const WorldConfig world;
  Rng rng(808);
  for (std::uint64_t seed : {0ULL, 7ULL, 15ULL}) {
    ArticulatedBody body = instantiate(generate_random(seed), world);
    for (int t = 0; t < 400; ++t) {
      const std::vector<double> torques = random_actions(body, rng);
      const StepResult result = step(body, torques, world);
      for (const ContactReading& reading : result.foot_contacts) {
        CHECK(reading.normal_force >= 0.0);
      }
    }
    ArticulatedBody airborne = instantiate(generate_random(seed), world);
    lift(airborne, 2.0);
    const std::vector<double> zero(airborne.joint_count(), 0.0);
    const StepResult result = step(airborne, zero, world);
    for (const ContactReading& reading : result.foot_contacts) {
      CHECK(reading.normal_force == 0.0);
    }
  }
}

TEST_CASE("head_pose reads the root limb") {
  const WorldConfig world;
  SUBCASE("upright root: up projection 1") {
    const ArticulatedBody body =
        instantiate(single_limb(0.4, 0.05, 1000.0, 0.0), world);
    const HeadPose pose = head_pose(body);
    CHECK(pose.up_projection == doctest::Approx(1.0));
    CHECK(pose.velocity.x == 0.0);
    CHECK(pose.velocity.y == 0.0);
    CHECK(pose.angular_velocity == 0.0);
    CHECK(pose.height > 0.0);
  }
  SUBCASE("root at pi/2: up projection 0") {
    const ArticulatedBody body = instantiate(
        single_limb(0.4, 0.05, 1000.0, 1.5707963267948966), world);
    CHECK(head_pose(body).up_projection ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("divergence is reported, not propagated silently") {
  WorldConfig world;
  ArticulatedBody body = instantiate(single_limb(0.4, 0.05, 1000.0), world);
  body.bodies[0].position.x = std::numeric_limits<double>::quiet_NaN();
  const StepResult result = step(body, {}, world);
  CHECK(result.diverged);
}

TEST_CASE("arena boundary flag") {
  WorldConfig world;
  world.arena_radius = 2.0;
  ArticulatedBody body = instantiate(single_limb(0.4, 0.05, 1000.0), world);
  body.bodies[0].position.x = 2.5;
  const StepResult result = step(body, {}, world);
  CHECK(result.boundary_crossed);
}
