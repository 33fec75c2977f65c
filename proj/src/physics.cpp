#include "evoloco/physics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace evoloco {

namespace {

constexpr int kPositionIterations = 4;
constexpr int kVelocityIterations = 2;
constexpr double kMaxLinearVelocity = 50.0;   // m/s, blow-up backstop
constexpr double kMaxAngularVelocity = 25.0;  // rad/s
constexpr double kPositionBound = 1.0e6;      // beyond this: diverged
// Joint viscous damping, as a fraction of the joint's torque limit.
constexpr double kJointDampingScale = 0.1;
// Inward velocity bias when a joint sits beyond its limit.
constexpr double kLimitRestoreGain = 0.2;      // per-step fraction of overshoot
constexpr double kLimitRestoreMaxVel = 2.0;    // rad/s
constexpr double kRestingClearance = 0.01;     // m, instantiate drop height

Vec2 local_up(double angle) { return {-std::sin(angle), std::cos(angle)}; }

Vec2 world_anchor(const RigidBodyState& body, Vec2 local) {
  return body.position + rotate(local, body.angle);
}

double joint_angle_of(const ArticulatedBody& body, const JointState& joint) {
  return body.bodies[joint.child_index].angle -
         body.bodies[joint.parent_index].angle - joint.attach_angle;
}

double joint_velocity_of(const ArticulatedBody& body,
                         const JointState& joint) {
  return body.bodies[joint.child_index].angular_velocity -
         body.bodies[joint.parent_index].angular_velocity;
}

// Equal-and-opposite angular impulse about a joint axis.
void apply_joint_angular_impulse(ArticulatedBody& body,
                                 const JointState& joint, double impulse) {
  body.bodies[joint.child_index].angular_velocity +=
      impulse / body.bodies[joint.child_index].inertia;
  body.bodies[joint.parent_index].angular_velocity -=
      impulse / body.bodies[joint.parent_index].inertia;
}

double reduced_inertia(const ArticulatedBody& body, const JointState& joint) {
  const double ip = body.bodies[joint.parent_index].inertia;
  const double ic = body.bodies[joint.child_index].inertia;
  return 1.0 / (1.0 / ip + 1.0 / ic);
}

// Removes relative anchor velocity at one joint (sequential impulses).
void solve_joint_velocity(ArticulatedBody& body, const JointState& joint) {
  RigidBodyState& parent = body.bodies[joint.parent_index];
  RigidBodyState& child = body.bodies[joint.child_index];
  const Vec2 rp = rotate(joint.parent_anchor_local, parent.angle);
  const Vec2 rc = rotate(joint.child_anchor_local, child.angle);
  const Vec2 vp = parent.linear_velocity + perp(rp) * parent.angular_velocity;
  const Vec2 vc = child.linear_velocity + perp(rc) * child.angular_velocity;
  const Vec2 v_rel = vc - vp;
  if (v_rel.x == 0.0 && v_rel.y == 0.0) return;

  // 2x2 effective mass matrix K = sum of per-body (1/m I + skew terms).
  const double wp = 1.0 / parent.mass, wc = 1.0 / child.mass;
  const double ip = 1.0 / parent.inertia, ic = 1.0 / child.inertia;
  const double k11 = wp + wc + ip * rp.y * rp.y + ic * rc.y * rc.y;
  const double k12 = -ip * rp.x * rp.y - ic * rc.x * rc.y;
  const double k22 = wp + wc + ip * rp.x * rp.x + ic * rc.x * rc.x;
  const double det = k11 * k22 - k12 * k12;
  if (det == 0.0) return;
  // impulse P on the child such that v_rel + K*P = 0
  const Vec2 impulse = {(-v_rel.x * k22 + v_rel.y * k12) / det,
                        (v_rel.x * k12 - v_rel.y * k11) / det};
  child.linear_velocity += impulse * wc;
  child.angular_velocity += cross(rc, impulse) * ic;
  parent.linear_velocity -= impulse * wp;
  parent.angular_velocity -= cross(rp, impulse) * ip;
}

// Positional projection of one joint's anchor pair (PBD style, preserves
// each pair's combined center of mass).
void project_joint_position(ArticulatedBody& body, const JointState& joint) {
  RigidBodyState& parent = body.bodies[joint.parent_index];
  RigidBodyState& child = body.bodies[joint.child_index];
  const Vec2 rp = rotate(joint.parent_anchor_local, parent.angle);
  const Vec2 rc = rotate(joint.child_anchor_local, child.angle);
  const Vec2 error =
      (child.position + rc) - (parent.position + rp);
  const double c = error.norm();
  if (c < 1.0e-12) return;
  const Vec2 n = error * (1.0 / c);
  const double wp =
      1.0 / parent.mass + cross(rp, n) * cross(rp, n) / parent.inertia;
  const double wc =
      1.0 / child.mass + cross(rc, n) * cross(rc, n) / child.inertia;
  const Vec2 p = n * (c / (wp + wc));
  parent.position += p * (1.0 / parent.mass);
  parent.angle += cross(rp, p) / parent.inertia;
  child.position -= p * (1.0 / child.mass);
  child.angle -= cross(rc, p) / child.inertia;
}

// Rotates a body rigidly about a world-space pivot.
void rotate_about(RigidBodyState& body, Vec2 pivot, double delta) {
  body.angle += delta;
  body.position = pivot + rotate(body.position - pivot, delta);
}

// Hard clamp of the joint angle into [lo, hi], distributed between the two
// bodies by inverse inertia and pivoted at the anchor so the anchors stay
// coincident.
void clamp_joint_angle(ArticulatedBody& body, const JointState& joint) {
  const double q = joint_angle_of(body, joint);
  const double clamped = std::clamp(q, joint.limit_lo, joint.limit_hi);
  if (clamped == q) return;
  RigidBodyState& parent = body.bodies[joint.parent_index];
  RigidBodyState& child = body.bodies[joint.child_index];
  const Vec2 pa = world_anchor(parent, joint.parent_anchor_local);
  const Vec2 ca = world_anchor(child, joint.child_anchor_local);
  const Vec2 pivot = (pa + ca) * 0.5;
  const double wp = 1.0 / parent.inertia;
  const double wc = 1.0 / child.inertia;
  const double delta = clamped - q;
  rotate_about(child, pivot, delta * wc / (wp + wc));
  rotate_about(parent, pivot, -delta * wp / (wp + wc));
}

}  // namespace

double ArticulatedBody::total_mass() const {
  double sum = 0.0;
  for (const RigidBodyState& body : bodies) sum += body.mass;
  return sum;
}

ArticulatedBody instantiate(const MorphologyGenome& genome,
                            const WorldConfig& world) {
  (void)world;
  ArticulatedBody out;
  std::vector<int> order;  // BFS over the genome tree, children by limb id
  std::deque<int> queue{genome.root_id};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    order.push_back(id);
    for (int child : genome.children_of(id)) queue.push_back(child);
  }

  std::map<int, int> body_index;
  for (int id : order) {
    const LimbGene& gene = genome.limbs.at(id);
    RigidBodyState body;
    body.mass = gene.density * capsule_area(gene.length, gene.radius);
    body.inertia = body.mass * gene.length * gene.length / 12.0;
    const int index = static_cast<int>(out.bodies.size());
    body_index[id] = index;
    if (!gene.parent_id) {
      body.angle = gene.attach_angle;  // root orientation, 0 = upright
      body.position = {0.0, 0.0};
    } else {
      const int pidx = body_index.at(*gene.parent_id);
      const RigidBodyState& parent = out.bodies[pidx];
      const BodyGeometry& pgeom = out.geometry[pidx];
      const double rest = 0.5 * (gene.joint_limit_lo + gene.joint_limit_hi);
      body.angle = parent.angle + gene.attach_angle + rest;
      const Vec2 parent_distal =
          parent.position - local_up(parent.angle) * (pgeom.length * 0.5);
      body.position = parent_distal - local_up(body.angle) * (gene.length * 0.5);

      JointState joint;
      joint.parent_index = pidx;
      joint.child_index = index;
      joint.parent_anchor_local = {0.0, -pgeom.length * 0.5};
      joint.child_anchor_local = {0.0, gene.length * 0.5};
      joint.attach_angle = gene.attach_angle;
      joint.limit_lo = gene.joint_limit_lo;
      joint.limit_hi = gene.joint_limit_hi;
      joint.torque_limit = gene.torque_limit;
      joint.angle = rest;
      joint.velocity = 0.0;
      out.joints.push_back(joint);
    }
    out.bodies.push_back(body);
    out.geometry.push_back({id, gene.length, gene.radius});
    if (gene.is_foot) out.foot_indices.push_back(index);
  }

  // Drop the whole assembly so its lowest surface point sits just above
  // ground, with the root center at x = 0.
  double lowest = 1.0e30;
  for (std::size_t i = 0; i < out.bodies.size(); ++i) {
    const Vec2 axis = local_up(out.bodies[i].angle);
    const double half = out.geometry[i].length * 0.5;
    const Vec2 top = out.bodies[i].position + axis * half;
    const Vec2 bottom = out.bodies[i].position - axis * half;
    lowest = std::min(lowest,
                      std::min(top.y, bottom.y) - out.geometry[i].radius);
  }
  const double shift = kRestingClearance - lowest;
  for (RigidBodyState& body : out.bodies) body.position.y += shift;
  return out;
}

StepResult step(ArticulatedBody& body, std::span<const double> torques,
                const WorldConfig& world) {
  StepResult result;
  result.foot_contacts.resize(body.foot_indices.size());
  const double dt = world.dt;
  const std::size_t n = body.bodies.size();

  // gravity is applied as a direct acceleration below; forces holds the
  // accumulated contact forces only
  std::vector<Vec2> forces(n);
  std::vector<double> spins(n, 0.0);

  // motor torques, equal and opposite on child/parent
  for (std::size_t j = 0; j < body.joints.size(); ++j) {
    const JointState& joint = body.joints[j];
    const double commanded = j < torques.size() ? torques[j] : 0.0;
    const double tau =
        std::clamp(commanded, -joint.torque_limit, joint.torque_limit);
    spins[joint.child_index] += tau;
    spins[joint.parent_index] -= tau;
  }

  // penalty ground contact at both capsule end caps
  for (std::size_t i = 0; i < n; ++i) {
    const RigidBodyState& state = body.bodies[i];
    const BodyGeometry& geom = body.geometry[i];
    const Vec2 axis = local_up(state.angle);
    const Vec2 ends[2] = {state.position + axis * (geom.length * 0.5),
                          state.position - axis * (geom.length * 0.5)};
    double normal_sum = 0.0, tangential_sum = 0.0;
    for (const Vec2& end : ends) {
      const double depth = geom.radius - end.y;
      if (depth <= 0.0) continue;
      const Vec2 point = {end.x, end.y - geom.radius};
      const Vec2 lever = point - state.position;
      const Vec2 velocity =
          state.linear_velocity + perp(lever) * state.angular_velocity;
      double normal = world.contact_stiffness * depth -
                      world.contact_damping * velocity.y;
      if (normal < 0.0) normal = 0.0;
      const double friction_cap = world.ground_friction_coeff * normal;
      const double tangential =
          std::clamp(-world.contact_damping * velocity.x, -friction_cap,
                     friction_cap);
      const Vec2 force = {tangential, normal};
      forces[i] += force;
      spins[i] += cross(lever, force);
      normal_sum += normal;
      tangential_sum += tangential;
    }
    for (std::size_t f = 0; f < body.foot_indices.size(); ++f) {
      if (body.foot_indices[f] == static_cast<int>(i)) {
        result.foot_contacts[f].normal_force = normal_sum;
        result.foot_contacts[f].tangential_force = tangential_sum;
      }
    }
  }

  // velocity update (semi-implicit)
  for (std::size_t i = 0; i < n; ++i) {
    RigidBodyState& state = body.bodies[i];
    state.linear_velocity += forces[i] * (dt / state.mass);
    state.linear_velocity.y -= world.gravity * dt;
    state.angular_velocity += spins[i] * dt / state.inertia;
  }

  // joint viscous damping, impulse-clamped so it never reverses qdot
  for (const JointState& joint : body.joints) {
    const double qdot = joint_velocity_of(body, joint);
    const double coeff = std::min(kJointDampingScale * joint.torque_limit * dt,
                                  0.5 * reduced_inertia(body, joint));
    apply_joint_angular_impulse(body, joint, -coeff * qdot);
  }

  // joint limits, velocity level: kill outward motion, bias back inward
  for (const JointState& joint : body.joints) {
    const double q = joint_angle_of(body, joint);
    const double qdot = joint_velocity_of(body, joint);
    double overshoot = 0.0;
    if (q < joint.limit_lo) overshoot = joint.limit_lo - q;  // want qdot > 0
    if (q > joint.limit_hi) overshoot = joint.limit_hi - q;  // want qdot < 0
    if (overshoot == 0.0) continue;
    const double target = std::clamp(kLimitRestoreGain * overshoot / dt,
                                     -kLimitRestoreMaxVel, kLimitRestoreMaxVel);
    double delta = target - qdot;
    // only push toward the valid range
    if (overshoot > 0.0 && delta < 0.0) continue;
    if (overshoot < 0.0 && delta > 0.0) continue;
    apply_joint_angular_impulse(body, joint,
                                delta * reduced_inertia(body, joint));
  }

  // joint velocity constraint solve (alternating sweeps)
  for (int it = 0; it < kVelocityIterations; ++it) {
    if (it % 2 == 0) {
      for (const JointState& joint : body.joints) {
        solve_joint_velocity(body, joint);
      }
    } else {
      for (auto j = body.joints.rbegin(); j != body.joints.rend(); ++j) {
        solve_joint_velocity(body, *j);
      }
    }
  }

  // backstop clamps
  for (RigidBodyState& state : body.bodies) {
    const double speed = state.linear_velocity.norm();
    if (speed > kMaxLinearVelocity) {
      state.linear_velocity = state.linear_velocity * (kMaxLinearVelocity / speed);
    }
    state.angular_velocity = std::clamp(state.angular_velocity,
                                        -kMaxAngularVelocity,
                                        kMaxAngularVelocity);
  }

  // position update
  for (RigidBodyState& state : body.bodies) {
    state.position += state.linear_velocity * dt;
    state.angle += state.angular_velocity * dt;
  }

  // anchor projection (alternating sweeps)
  for (int it = 0; it < kPositionIterations; ++it) {
    if (it % 2 == 0) {
      for (const JointState& joint : body.joints) {
        project_joint_position(body, joint);
      }
    } else {
      for (auto j = body.joints.rbegin(); j != body.joints.rend(); ++j) {
        project_joint_position(body, *j);
      }
    }
  }

  // exact joint-angle clamp, anchors preserved
  for (const JointState& joint : body.joints) {
    clamp_joint_angle(body, joint);
  }

  // refresh stored joint coordinates
  for (JointState& joint : body.joints) {
    joint.angle = joint_angle_of(body, joint);
    joint.velocity = joint_velocity_of(body, joint);
  }

  for (const RigidBodyState& state : body.bodies) {
    if (std::abs(state.position.x) > world.arena_radius) {
      result.boundary_crossed = true;
    }
    const bool finite = std::isfinite(state.position.x) &&
                        std::isfinite(state.position.y) &&
                        std::isfinite(state.angle) &&
                        std::isfinite(state.linear_velocity.x) &&
                        std::isfinite(state.linear_velocity.y) &&
                        std::isfinite(state.angular_velocity);
    if (!finite || std::abs(state.position.x) > kPositionBound ||
        std::abs(state.position.y) > kPositionBound) {
      result.diverged = true;
    }
  }
  return result;
}

HeadPose head_pose(const ArticulatedBody& body) {
  const RigidBodyState& root = body.bodies.front();
  HeadPose pose;
  pose.height = root.position.y;
  pose.velocity = root.linear_velocity;
  pose.angular_velocity = root.angular_velocity;
  pose.up_projection = std::cos(root.angle);
  return pose;
}

double mechanical_energy(const ArticulatedBody& body,
                         const WorldConfig& world) {
  double energy = 0.0;
  for (const RigidBodyState& state : body.bodies) {
    const double v2 = dot(state.linear_velocity, state.linear_velocity);
    energy += 0.5 * state.mass * v2 +
              0.5 * state.inertia * state.angular_velocity *
                  state.angular_velocity +
              state.mass * world.gravity * state.position.y;
  }
  return energy;
}

double max_anchor_separation(const ArticulatedBody& body) {
  double worst = 0.0;
  for (const JointState& joint : body.joints) {
    const Vec2 pa = world_anchor(body.bodies[joint.parent_index],
                                 joint.parent_anchor_local);
    const Vec2 ca = world_anchor(body.bodies[joint.child_index],
                                 joint.child_anchor_local);
    worst = std::max(worst, (ca - pa).norm());
  }
  return worst;
}

}  // namespace evoloco
