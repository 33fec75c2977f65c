#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "evoloco/morphology.hpp"

namespace evoloco {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct RigidBodyState {
  Vec2 position;  // center of mass, world frame
  double angle = 0.0;  // 0 = limb axis along world up
  Vec2 linear_velocity;
  double angular_velocity = 0.0;
  double mass = 0.0;
  double inertia = 0.0;
};

struct JointState {
  int parent_index = 0;
  int child_index = 0;
  Vec2 parent_anchor_local;  // parent body frame
  Vec2 child_anchor_local;   // child body frame
  double attach_angle = 0.0;
  double limit_lo = 0.0;
  double limit_hi = 0.0;
  double torque_limit = 0.0;
  double angle = 0.0;     // q, kept in [limit_lo, limit_hi]
  double velocity = 0.0;  // qdot
};

struct BodyGeometry {
  int limb_id = 0;
  double length = 0.0;
  double radius = 0.0;
};

// Planar maximal-coordinate realization of a genome. bodies[0] is the root
// (head+torso). Joint i connects bodies in genome-tree order with
// child_index == i + 1.
struct ArticulatedBody {
  std::vector<RigidBodyState> bodies;
  std::vector<JointState> joints;
  std::vector<BodyGeometry> geometry;  // parallel to bodies
  std::vector<int> foot_indices;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int foot_count() const { return static_cast<int>(foot_indices.size()); }
  double total_mass() const;
};

struct ContactReading {
  double normal_force = 0.0;      // N, >= 0
  double tangential_force = 0.0;  // N, signed
};

struct WorldConfig {
  double gravity = 9.81;                // m/s^2, downward
  double dt = 1.0 / 60.0;               // s
  double ground_friction_coeff = 1.0;
  double contact_stiffness = 2.0e4;     // N/m
  double contact_damping = 2.0e2;       // N*s/m
  double arena_radius = 5.0;            // m
};

struct StepResult {
  std::vector<ContactReading> foot_contacts;  // aligned with foot_indices
  bool boundary_crossed = false;
  bool diverged = false;
};

struct HeadPose {
  double height = 0.0;
  Vec2 velocity;
  double angular_velocity = 0.0;
  double up_projection = 0.0;  // cos(root angle) w.r.t. world up
};

// Capsule cross-section area: rectangle plus two half-circle caps.
inline double capsule_area(double length, double radius) {
  return length * 2.0 * radius + kPi * radius * radius;
}

ArticulatedBody instantiate(const MorphologyGenome& genome,
                            const WorldConfig& world);

// One semi-implicit Euler step with penalty ground contact, joint motor and
// limit handling, and anchor constraint correction. torques.size() must be
// joint_count(); each entry is clamped to the joint's torque_limit.
StepResult step(ArticulatedBody& body, std::span<const double> torques,
                const WorldConfig& world);

HeadPose head_pose(const ArticulatedBody& body);

// Total mechanical energy (kinetic + gravitational potential); exposed for
// diagnostics and tests.
double mechanical_energy(const ArticulatedBody& body, const WorldConfig& world);

// Largest world-space separation of any joint's two anchor points.
double max_anchor_separation(const ArticulatedBody& body);

}  // namespace evoloco
